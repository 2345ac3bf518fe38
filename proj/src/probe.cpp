#include "cprobe/probe.hpp"

#include <bit>
#include <cmath>
#include <fstream>

#include "cprobe/jsonl.hpp"
#include "cprobe/rng.hpp"

namespace cprobe {
namespace {

double log1p_exp(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct Objective {
  const FeatureMatrix& x;
  const Eigen::VectorXd& y;
  double l2;

  double value(const Eigen::VectorXd& w, double b) const {
    const Eigen::VectorXd z = (x * w).array() + b;
    double total = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i)
      total += log1p_exp(z(i)) - y(i) * z(i);
    return total / static_cast<double>(z.size()) + 0.5 * l2 * w.squaredNorm();
  }

  void gradient(const Eigen::VectorXd& w, double b, Eigen::VectorXd& gw, double& gb) const {
    Eigen::VectorXd r = (x * w).array() + b;
    for (Eigen::Index i = 0; i < r.size(); ++i) r(i) = sigmoid(r(i)) - y(i);
    const double inv_n = 1.0 / static_cast<double>(r.size());
    gw = (x.transpose() * r) * inv_n + l2 * w;
    gb = r.sum() * inv_n;
  }
};

void write_f32(const std::filesystem::path& path, const Eigen::VectorXd& v) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v(i)));
    const unsigned char le[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                                 static_cast<unsigned char>(bits >> 16),
                                 static_cast<unsigned char>(bits >> 24)};
    out.write(reinterpret_cast<const char*>(le), 4);
  }
}

Eigen::VectorXd read_f32(const std::filesystem::path& path, std::size_t n) {
  std::ifstream in(path, std::ios::binary);
  if (!in || std::filesystem::file_size(path) != n * 4)
    throw ProbeError("bad probe tensor " + path.string());
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    unsigned char le[4];
    in.read(reinterpret_cast<char*>(le), 4);
    const std::uint32_t bits = std::uint32_t{le[0]} | (std::uint32_t{le[1]} << 8) |
                               (std::uint32_t{le[2]} << 16) | (std::uint32_t{le[3]} << 24);
    v(static_cast<Eigen::Index>(i)) = std::bit_cast<float>(bits);
  }
  return v;
}

}  // namespace

int label_value(Label l) {
  if (l == Label::CK) return 0;
  if (l == Label::PK) return 1;
  throw ProbeError("ND examples carry no probe label");
}

std::size_t ProbeDataset::count(int label) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

ProbeDataset ProbeDataset::select(std::span<const std::size_t> rows) const {
  ProbeDataset out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(r));
    out.labels.push_back(labels[r]);
    out.example_ids.push_back(example_ids[r]);
    out.groups.push_back(groups[r]);
    out.subjects.push_back(subjects[r]);
    out.objects.push_back(objects[r]);
    out.counter_objects.push_back(counter_objects[r]);
  }
  return out;
}

ProbeDataset assemble_dataset(const ActivationStore& store, int layer, ModuleKind module,
                              TokenRole role, const std::vector<LabeledExample>& examples) {
  std::vector<const LabeledExample*> rows;
  for (const auto& e : examples)
    if (e.label != Label::ND) rows.push_back(&e);
  const int dim = store.meta().dim(module);
  ProbeDataset ds;
  ds.features.resize(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& e = *rows[i];
    const ActivationRecord* rec = store.find(e.id, layer, module, role);
    if (!rec)
      throw ProbeError("no activation for example " + std::to_string(e.id) + " at layer " +
                       std::to_string(layer) + ", module " + std::string(to_string(module)) +
                       ", role " + std::string(to_string(role)));
    for (int j = 0; j < dim; ++j)
      ds.features(static_cast<Eigen::Index>(i), j) = rec->vector[static_cast<std::size_t>(j)];
    ds.labels.push_back(label_value(e.label));
    ds.example_ids.push_back(e.id);
    ds.groups.push_back(e.group);
    ds.subjects.push_back(e.prompt.counter.subject);
    ds.objects.push_back(e.prompt.counter.pk_object);
    ds.counter_objects.push_back(e.prompt.counter.counter_object);
  }
  return ds;
}

ProbeDataset undersample_balance(const ProbeDataset& dataset, std::uint64_t seed) {
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < dataset.size(); ++i) by_class[dataset.labels[i]].push_back(i);
  if (by_class[0].empty() || by_class[1].empty())
    throw ProbeError("cannot balance: one class is empty (CK=" + std::to_string(by_class[0].size()) +
                     ", PK=" + std::to_string(by_class[1].size()) + ")");
  const std::size_t target = std::min(by_class[0].size(), by_class[1].size());
  Rng rng(seed);
  std::vector<std::size_t> keep;
  for (auto& cls : by_class) {
    if (cls.size() > target) {
      rng.shuffle(cls);
      cls.resize(target);
    }
    keep.insert(keep.end(), cls.begin(), cls.end());
  }
  std::sort(keep.begin(), keep.end());
  return dataset.select(keep);
}

ProbeModel train_linear_probe(const ProbeDataset& train, const ProbeOptions& options) {
  if (train.count(0) < 2 || train.count(1) < 2)
    throw ProbeError("probe training needs at least 2 examples per class");
  const auto n = train.features.rows();
  const auto d = train.features.cols();

  ProbeModel model;
  model.options = options;
  model.mean = train.features.colwise().mean().transpose();
  model.scale.resize(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double var = (train.features.col(j).array() - model.mean(j)).square().mean();
    const double sd = std::sqrt(var);
    model.scale(j) = sd > 1e-12 ? sd : 1.0;
  }
  const FeatureMatrix x = standardize(model, train.features);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = train.labels[static_cast<std::size_t>(i)];

  const Objective obj{x, y, options.l2};
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  double b = 0.0;
  double f = obj.value(w, b);
  model.loss_history.push_back(f);
  Eigen::VectorXd gw;
  double gb = 0.0;
  double step = 1.0;
  constexpr double kArmijo = 1e-4;
  for (int it = 0; it < options.max_iters; ++it) {
    obj.gradient(w, b, gw, gb);
    const double gnorm2 = gw.squaredNorm() + gb * gb;
    if (gnorm2 == 0.0) break;
    double f_new = 0.0;
    Eigen::VectorXd w_new;
    double b_new = 0.0;
    bool accepted = false;
    while (step > 1e-12) {
      w_new = w - step * gw;
      b_new = b - step * gb;
      f_new = obj.value(w_new, b_new);
      if (std::isfinite(f_new) && f_new <= f - kArmijo * step * gnorm2) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    if (!std::isfinite(f_new)) throw ProbeError("probe loss is not finite");
    w = std::move(w_new);
    b = b_new;
    const double change = f - f_new;
    f = f_new;
    model.loss_history.push_back(f);
    model.iterations = it + 1;
    step = std::min(step * 2.0, 1e3);
    if (change < options.tol) break;
  }
  if (!std::isfinite(f)) throw ProbeError("probe loss is not finite");
  model.weights = std::move(w);
  model.bias = b;
  return model;
}

FeatureMatrix standardize(const ProbeModel& probe, const FeatureMatrix& features) {
  if (features.cols() != probe.mean.size())
    throw ProbeError("feature dimension " + std::to_string(features.cols()) +
                     " does not match probe dimension " + std::to_string(probe.mean.size()));
  FeatureMatrix x = features;
  x.rowwise() -= probe.mean.transpose();
  x.array().rowwise() /= probe.scale.transpose().array();
  return x;
}

Prediction predict(const ProbeModel& probe, std::span<const double> features) {
  if (features.size() != probe.dim())
    throw ProbeError("feature dimension " + std::to_string(features.size()) +
                     " does not match probe dimension " + std::to_string(probe.dim()));
  double z = probe.bias;
  for (std::size_t j = 0; j < features.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    z += probe.weights(jj) * (features[j] - probe.mean(jj)) / probe.scale(jj);
  }
  const double p = sigmoid(z);
  return {p >= 0.5 ? 1 : 0, p};
}

Prediction predict(const ProbeModel& probe, const FeatureMatrix& features, Eigen::Index row) {
  const auto r = features.row(row);
  return predict(probe, std::span<const double>(r.data(), static_cast<std::size_t>(r.size())));
}

void save_probe(const std::filesystem::path& dir, const ProbeModel& probe,
                const ProbeAddress& address, std::size_t train_rows) {
  std::filesystem::create_directories(dir);
  write_f32(dir / "weights.f32", probe.weights);
  write_f32(dir / "mean.f32", probe.mean);
  write_f32(dir / "scale.f32", probe.scale);
  json manifest = {{"format", "linear-probe-1"},
                   {"layer", address.layer},
                   {"module", std::string(to_string(address.module))},
                   {"role", std::string(to_string(address.role))},
                   {"dim", probe.dim()},
                   {"bias", probe.bias},
                   {"l2", probe.options.l2},
                   {"max_iters", probe.options.max_iters},
                   {"tol", probe.options.tol},
                   {"iterations", probe.iterations},
                   {"final_loss", probe.loss_history.empty() ? 0.0 : probe.loss_history.back()},
                   {"train_rows", train_rows}};
  std::ofstream(dir / "probe.json", std::ios::trunc) << manifest.dump(2) << '\n';
}

ProbeModel load_probe(const std::filesystem::path& dir) {
  std::ifstream in(dir / "probe.json");
  if (!in) throw ProbeError("no probe manifest in " + dir.string());
  const json m = json::parse(in);
  ProbeModel p;
  const auto dim = m.at("dim").get<std::size_t>();
  p.bias = static_cast<float>(m.at("bias").get<double>());
  p.options = {m.at("l2").get<double>(), m.at("max_iters").get<int>(), m.at("tol").get<double>()};
  p.iterations = m.at("iterations").get<int>();
  p.weights = read_f32(dir / "weights.f32", dim);
  p.mean = read_f32(dir / "mean.f32", dim);
  p.scale = read_f32(dir / "scale.f32", dim);
  return p;
}

}  // namespace cprobe
