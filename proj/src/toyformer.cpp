#include "cprobe/toyformer.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>

#include "cprobe/jsonl.hpp"
#include "cprobe/rng.hpp"

namespace cprobe::toy {
namespace {

constexpr double kLnEps = 1e-5;

struct LayerCache {
  Matrix x_in, q, k, v;
  std::vector<Matrix> probs;  // per head, n x n (causal, zero above diagonal)
  Matrix heads;               // concatenated head outputs, n x d
  Matrix a, xhat;
  Eigen::VectorXd rstd;
  Matrix mlp_in, h, g, m, out;
};

struct SeqCache {
  std::vector<LayerCache> layers;
  Matrix xf_hat;
  Eigen::VectorXd rstd_f;
  Matrix z;
  Matrix logits;
};

void layer_norm(const Matrix& x, const Matrix& gamma, const Matrix& beta,
                Matrix& y, Matrix& xhat, Eigen::VectorXd& rstd) {
  const auto n = x.rows();
  const auto d = x.cols();
  xhat.resize(n, d);
  y.resize(n, d);
  rstd.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = x.row(i).mean();
    const double var = (x.row(i).array() - mu).square().mean();
    rstd(i) = 1.0 / std::sqrt(var + kLnEps);
    xhat.row(i) = (x.row(i).array() - mu) * rstd(i);
    y.row(i) = xhat.row(i).cwiseProduct(gamma) + beta;
  }
}

/// Returns dx; accumulates dgamma/dbeta.
Matrix layer_norm_backward(const Matrix& dy, const Matrix& xhat,
                           const Eigen::VectorXd& rstd, const Matrix& gamma,
                           Matrix& dgamma, Matrix& dbeta) {
  const auto n = dy.rows();
  Matrix dx(n, dy.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::RowVectorXd dxhat = dy.row(i).cwiseProduct(gamma);
    const double mean_dxhat = dxhat.mean();
    const double mean_dxhat_xhat = dxhat.cwiseProduct(xhat.row(i)).mean();
    dx.row(i) = rstd(i) * (dxhat.array() - mean_dxhat -
                           xhat.row(i).array() * mean_dxhat_xhat);
  }
  dgamma += dy.cwiseProduct(xhat).colwise().sum();
  dbeta += dy.colwise().sum();
  return dx;
}

void check_tokens(const ToyState& state, std::span<const int> tokens) {
  const auto& c = state.config;
  if (tokens.empty()) throw ToyError("empty token sequence");
  if (static_cast<int>(tokens.size()) > c.context_len)
    throw ToyError("sequence of " + std::to_string(tokens.size()) +
                   " tokens exceeds context length " +
                   std::to_string(c.context_len));
  for (int t : tokens)
    if (t < 0 || t >= c.vocab_size)
      throw ToyError("token id " + std::to_string(t) + " outside vocabulary");
}

void forward_impl(const ToyState& s, std::span<const int> tokens, SeqCache& cache) {
  check_tokens(s, tokens);
  const auto& c = s.config;
  const Eigen::Index n = static_cast<Eigen::Index>(tokens.size());
  const int dh = c.d_model / c.num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix x(n, c.d_model);
  for (Eigen::Index t = 0; t < n; ++t) x.row(t) = s.wte.row(tokens[t]) + s.wpe.row(t);

  cache.layers.resize(c.num_layers);
  for (int l = 0; l < c.num_layers; ++l) {
    const auto& p = s.layers[l];
    auto& lc = cache.layers[l];
    lc.x_in = x;
    lc.q = x * p.wq;
    lc.k = x * p.wk;
    lc.v = x * p.wv;
    lc.heads.resize(n, c.d_model);
    lc.probs.resize(c.num_heads);
    for (int hd = 0; hd < c.num_heads; ++hd) {
      const auto qh = lc.q.middleCols(hd * dh, dh);
      const auto kh = lc.k.middleCols(hd * dh, dh);
      Matrix scores = (qh * kh.transpose()) * scale;
      Matrix& prob = lc.probs[hd];
      prob.setZero(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double mx = scores.row(i).head(i + 1).maxCoeff();
        double sum = 0.0;
        for (Eigen::Index j = 0; j <= i; ++j) {
          prob(i, j) = std::exp(scores(i, j) - mx);
          sum += prob(i, j);
        }
        prob.row(i).head(i + 1) /= sum;
      }
      lc.heads.middleCols(hd * dh, dh) = prob * lc.v.middleCols(hd * dh, dh);
    }
    lc.a = lc.heads * p.wo;
    const Matrix residual = x + lc.a;
    layer_norm(residual, p.ln_gamma, p.ln_beta, lc.mlp_in, lc.xhat, lc.rstd);
    lc.h = lc.mlp_in * p.w_mlp;
    lc.g = lc.h.unaryExpr([](double v) { return gelu(v); });
    lc.m = lc.g * p.w_proj;
    lc.out = lc.mlp_in + lc.m;
    x = lc.out;
  }
  layer_norm(x, s.lnf_gamma, s.lnf_beta, cache.z, cache.xf_hat, cache.rstd_f);
  cache.logits = cache.z * s.w_out;
}

/// Accumulates gradients of `weight * sum_t CE_t` for one sequence; returns
/// the unweighted summed cross-entropy.
double backward_impl(const ToyState& s, std::span<const int> tokens,
                     const SeqCache& cache, double weight, ToyState& g) {
  const auto& c = s.config;
  const Eigen::Index n = static_cast<Eigen::Index>(tokens.size());
  const int dh = c.d_model / c.num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  double total = 0.0;
  Matrix dlogits = Matrix::Zero(n, c.vocab_size);
  for (Eigen::Index t = 0; t + 1 < n; ++t) {
    const auto row = cache.logits.row(t);
    const double mx = row.maxCoeff();
    const Eigen::RowVectorXd e = (row.array() - mx).exp();
    const double sum = e.sum();
    const int target = tokens[t + 1];
    total += -(row(target) - mx - std::log(sum));
    dlogits.row(t) = e / sum;
    dlogits(t, target) -= 1.0;
  }
  dlogits *= weight;

  g.w_out.noalias() += cache.z.transpose() * dlogits;
  Matrix dz = dlogits * s.w_out.transpose();
  Matrix dx = layer_norm_backward(dz, cache.xf_hat, cache.rstd_f, s.lnf_gamma,
                                  g.lnf_gamma, g.lnf_beta);

  for (int l = c.num_layers - 1; l >= 0; --l) {
    const auto& p = s.layers[l];
    auto& gp = g.layers[l];
    const auto& lc = cache.layers[l];

    // X^(l) = mlp_in + g W_proj, g = gelu(mlp_in W_mlp)
    Matrix dmlp_in = dx;
    gp.w_proj.noalias() += lc.g.transpose() * dx;
    Matrix dg = dx * p.w_proj.transpose();
    Matrix dh_pre(lc.h.rows(), lc.h.cols());
    for (Eigen::Index i = 0; i < lc.h.rows(); ++i)
      for (Eigen::Index j = 0; j < lc.h.cols(); ++j)
        dh_pre(i, j) = dg(i, j) * gelu_grad(lc.h(i, j));
    gp.w_mlp.noalias() += lc.mlp_in.transpose() * dh_pre;
    dmlp_in.noalias() += dh_pre * p.w_mlp.transpose();

    Matrix dres = layer_norm_backward(dmlp_in, lc.xhat, lc.rstd, p.ln_gamma,
                                      gp.ln_gamma, gp.ln_beta);
    Matrix dx_in = dres;
    const Matrix& da = dres;
    gp.wo.noalias() += lc.heads.transpose() * da;
    Matrix dheads = da * p.wo.transpose();

    Matrix dq(n, c.d_model), dk(n, c.d_model), dv(n, c.d_model);
    for (int hd = 0; hd < c.num_heads; ++hd) {
      const Matrix& prob = lc.probs[hd];
      const auto doh = dheads.middleCols(hd * dh, dh);
      Matrix dprob = doh * lc.v.middleCols(hd * dh, dh).transpose();
      dv.middleCols(hd * dh, dh) = prob.transpose() * doh;
      Matrix dscores(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double dot = dprob.row(i).dot(prob.row(i));
        dscores.row(i) = prob.row(i).array() * (dprob.row(i).array() - dot);
      }
      dscores *= scale;
      dq.middleCols(hd * dh, dh) = dscores * lc.k.middleCols(hd * dh, dh);
      dk.middleCols(hd * dh, dh) = dscores.transpose() * lc.q.middleCols(hd * dh, dh);
    }
    gp.wq.noalias() += lc.x_in.transpose() * dq;
    gp.wk.noalias() += lc.x_in.transpose() * dk;
    gp.wv.noalias() += lc.x_in.transpose() * dv;
    dx_in.noalias() += dq * p.wq.transpose();
    dx_in.noalias() += dk * p.wk.transpose();
    dx_in.noalias() += dv * p.wv.transpose();
    dx = std::move(dx_in);
  }
  for (Eigen::Index t = 0; t < n; ++t) {
    g.wte.row(tokens[t]) += dx.row(t);
    g.wpe.row(t) += dx.row(t);
  }
  return total;
}

std::size_t predicted_positions(std::span<const std::vector<int>> batch) {
  std::size_t count = 0;
  for (const auto& seq : batch)
    if (seq.size() > 1) count += seq.size() - 1;
  return count;
}

Matrix gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal() * stddev;
  return m;
}

}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

void ToyConfig::validate() const {
  if (num_layers < 1) throw std::invalid_argument("num_layers must be >= 1");
  if (d_model < 1 || num_heads < 1 || d_model % num_heads != 0)
    throw std::invalid_argument("d_model must be divisible by num_heads");
  if (d_mlp <= d_model) throw std::invalid_argument("d_mlp must exceed d_model");
  if (context_len < 2) throw std::invalid_argument("context_len must be >= 2");
  if (vocab_size < 2) throw std::invalid_argument("vocab_size must be >= 2");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
}

ToyState ToyState::zeros(const ToyConfig& c) {
  c.validate();
  ToyState s;
  s.config = c;
  s.wte = Matrix::Zero(c.vocab_size, c.d_model);
  s.wpe = Matrix::Zero(c.context_len, c.d_model);
  s.layers.resize(c.num_layers);
  for (auto& l : s.layers) {
    l.wq = Matrix::Zero(c.d_model, c.d_model);
    l.wk = Matrix::Zero(c.d_model, c.d_model);
    l.wv = Matrix::Zero(c.d_model, c.d_model);
    l.wo = Matrix::Zero(c.d_model, c.d_model);
    l.ln_gamma = Matrix::Zero(1, c.d_model);
    l.ln_beta = Matrix::Zero(1, c.d_model);
    l.w_mlp = Matrix::Zero(c.d_model, c.d_mlp);
    l.w_proj = Matrix::Zero(c.d_mlp, c.d_model);
  }
  s.lnf_gamma = Matrix::Zero(1, c.d_model);
  s.lnf_beta = Matrix::Zero(1, c.d_model);
  s.w_out = Matrix::Zero(c.d_model, c.vocab_size);
  return s;
}

ToyState ToyState::init(const ToyConfig& c) {
  ToyState s = zeros(c);
  Rng rng(c.seed);
  const double d_scale = 1.0 / std::sqrt(static_cast<double>(c.d_model));
  const double mlp_scale = 1.0 / std::sqrt(static_cast<double>(c.d_mlp));
  s.wte = gaussian(rng, c.vocab_size, c.d_model, 0.1);
  s.wpe = gaussian(rng, c.context_len, c.d_model, 0.1);
  for (auto& l : s.layers) {
    l.wq = gaussian(rng, c.d_model, c.d_model, d_scale);
    l.wk = gaussian(rng, c.d_model, c.d_model, d_scale);
    l.wv = gaussian(rng, c.d_model, c.d_model, d_scale);
    l.wo = gaussian(rng, c.d_model, c.d_model, d_scale);
    l.ln_gamma.setOnes();
    l.w_mlp = gaussian(rng, c.d_model, c.d_mlp, d_scale);
    l.w_proj = gaussian(rng, c.d_mlp, c.d_model, mlp_scale);
  }
  s.lnf_gamma.setOnes();
  s.w_out = gaussian(rng, c.d_model, c.vocab_size, d_scale);
  return s;
}

void ToyState::for_each(const std::function<void(const std::string&, Matrix&)>& fn) {
  fn("wte", wte);
  fn("wpe", wpe);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string p = "layer" + std::to_string(i) + ".";
    auto& l = layers[i];
    fn(p + "wq", l.wq);
    fn(p + "wk", l.wk);
    fn(p + "wv", l.wv);
    fn(p + "wo", l.wo);
    fn(p + "ln_gamma", l.ln_gamma);
    fn(p + "ln_beta", l.ln_beta);
    fn(p + "w_mlp", l.w_mlp);
    fn(p + "w_proj", l.w_proj);
  }
  fn("lnf_gamma", lnf_gamma);
  fn("lnf_beta", lnf_beta);
  fn("w_out", w_out);
}

void ToyState::for_each(
    const std::function<void(const std::string&, const Matrix&)>& fn) const {
  const_cast<ToyState*>(this)->for_each(
      [&](const std::string& name, Matrix& m) { fn(name, m); });
}

std::size_t ToyState::num_parameters() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

ForwardResult forward(const ToyState& state, std::span<const int> tokens) {
  SeqCache cache;
  forward_impl(state, tokens, cache);
  ForwardResult r;
  r.logits = std::move(cache.logits);
  r.hooks.layers.resize(cache.layers.size());
  for (std::size_t l = 0; l < cache.layers.size(); ++l) {
    auto& lc = cache.layers[l];
    auto& h = r.hooks.layers[l];
    h.input = std::move(lc.x_in);
    h.mhsa = std::move(lc.a);
    h.mlp_in = std::move(lc.mlp_in);
    h.mlp_l1 = std::move(lc.g);
    h.mlp_l2 = std::move(lc.m);
    h.output = std::move(lc.out);
  }
  return r;
}

double loss_and_grad(const ToyState& state, std::span<const std::vector<int>> batch,
                     ToyState* grad) {
  const std::size_t count = predicted_positions(batch);
  if (count == 0) return 0.0;
  const double weight = 1.0 / static_cast<double>(count);
  double total = 0.0;
  SeqCache cache;
  for (const auto& seq : batch) {
    forward_impl(state, seq, cache);
    total += backward_impl(state, seq, cache, weight, *grad);
  }
  return total * weight;
}

double loss(const ToyState& state, std::span<const std::vector<int>> batch) {
  const std::size_t count = predicted_positions(batch);
  if (count == 0) return 0.0;
  double total = 0.0;
  SeqCache cache;
  for (const auto& seq : batch) {
    forward_impl(state, seq, cache);
    for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
      const auto row = cache.logits.row(static_cast<Eigen::Index>(t));
      const double mx = row.maxCoeff();
      const double lse = mx + std::log((row.array() - mx).exp().sum());
      total += lse - row(seq[t + 1]);
    }
  }
  return total / static_cast<double>(count);
}

TrainResult train(const ToyConfig& config,
                  const std::vector<std::vector<int>>& sequences,
                  const TrainProgress& progress) {
  config.validate();
  for (const auto& seq : sequences)
    if (static_cast<int>(seq.size()) > config.context_len)
      throw ToyError("training sequence of " + std::to_string(seq.size()) +
                     " tokens exceeds context length");

  TrainResult result;
  result.state = ToyState::init(config);
  ToyState& state = result.state;
  ToyState grad = ToyState::zeros(config);
  ToyState m1 = ToyState::zeros(config);
  ToyState m2 = ToyState::zeros(config);
  std::vector<Matrix*> params, grads, first, second;
  state.for_each([&](const std::string&, Matrix& m) { params.push_back(&m); });
  grad.for_each([&](const std::string&, Matrix& m) { grads.push_back(&m); });
  m1.for_each([&](const std::string&, Matrix& m) { first.push_back(&m); });
  m2.for_each([&](const std::string&, Matrix& m) { second.push_back(&m); });

  // Shuffling draws from a stream separate from initialization.
  Rng order_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(sequences.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kAdamEps = 1e-8;
  long step = 0;
  std::vector<std::vector<int>> batch;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      batch.clear();
      for (std::size_t i = begin; i < end; ++i) batch.push_back(sequences[order[i]]);
      for (auto* g : grads) g->setZero();
      const double l = loss_and_grad(state, batch, &grad);
      ++step;
      if (!std::isfinite(l))
        throw DivergenceError("training loss is not finite at step " +
                                  std::to_string(step),
                              step);
      epoch_loss += l;
      ++batches;

      double norm2 = 0.0;
      for (auto* g : grads) norm2 += g->squaredNorm();
      const double norm = std::sqrt(norm2);
      if (!std::isfinite(norm))
        throw DivergenceError("gradient is not finite at step " + std::to_string(step),
                              step);
      const double clip = (config.clip_norm > 0.0 && norm > config.clip_norm)
                              ? config.clip_norm / norm
                              : 1.0;

      if (config.optimizer == Optimizer::SGD) {
        for (std::size_t i = 0; i < params.size(); ++i)
          *params[i] -= (config.learning_rate * clip) * *grads[i];
      } else {
        const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
        for (std::size_t i = 0; i < params.size(); ++i) {
          const Matrix g = *grads[i] * clip;
          *first[i] = kBeta1 * *first[i] + (1.0 - kBeta1) * g;
          *second[i] = kBeta2 * *second[i] + (1.0 - kBeta2) * g.cwiseProduct(g);
          *params[i] -= (config.learning_rate *
                         ((first[i]->array() / bc1) /
                          ((second[i]->array() / bc2).sqrt() + kAdamEps)))
                            .matrix();
        }
      }
    }
    if (progress) progress(epoch, batches ? epoch_loss / static_cast<double>(batches) : 0.0);
  }

  for (auto* p : params) *p = p->cast<float>().cast<double>();
  result.final_loss = loss(state, sequences);
  result.steps = step;
  if (!std::isfinite(result.final_loss))
    throw DivergenceError("final loss is not finite", step);
  return result;
}

TrainedModel train_on_corpus(ToyConfig config, const std::vector<std::string>& corpus,
                             const TrainProgress& progress) {
  ToyTokenizer tokenizer = ToyTokenizer::build(corpus);
  config.vocab_size = tokenizer.size();
  std::vector<std::vector<int>> sequences;
  sequences.reserve(corpus.size());
  for (const auto& line : corpus) {
    auto ids = tokenizer.encode(line);
    ids.push_back(tokenizer.eos_id());
    sequences.push_back(std::move(ids));
  }
  auto result = train(config, sequences, progress);
  return {std::move(tokenizer), std::move(result)};
}

namespace {

json config_to_json(const ToyConfig& c) {
  return {{"num_layers", c.num_layers},
          {"d_model", c.d_model},
          {"d_mlp", c.d_mlp},
          {"num_heads", c.num_heads},
          {"context_len", c.context_len},
          {"vocab_size", c.vocab_size},
          {"seed", c.seed},
          {"optimizer", c.optimizer == Optimizer::SGD ? "sgd" : "adam"},
          {"learning_rate", c.learning_rate},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"clip_norm", c.clip_norm}};
}

ToyConfig config_from_json(const json& j) {
  ToyConfig c;
  c.num_layers = j.at("num_layers").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.d_mlp = j.at("d_mlp").get<int>();
  c.num_heads = j.at("num_heads").get<int>();
  c.context_len = j.at("context_len").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.optimizer = j.value("optimizer", "adam") == "sgd" ? Optimizer::SGD : Optimizer::Adam;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  return c;
}

void write_f32(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ToyError("cannot write " + path.string());
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(m.data()[i]));
    unsigned char le[4] = {static_cast<unsigned char>(bits),
                           static_cast<unsigned char>(bits >> 8),
                           static_cast<unsigned char>(bits >> 16),
                           static_cast<unsigned char>(bits >> 24)};
    out.write(reinterpret_cast<const char*>(le), 4);
  }
}

void read_f32(const std::filesystem::path& path, Matrix& m) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ToyError("cannot open " + path.string());
  const auto expected = static_cast<std::uintmax_t>(m.size()) * 4;
  if (std::filesystem::file_size(path) != expected)
    throw ToyError(path.string() + ": expected " + std::to_string(expected) + " bytes");
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    unsigned char le[4];
    in.read(reinterpret_cast<char*>(le), 4);
    const std::uint32_t bits = std::uint32_t{le[0]} | (std::uint32_t{le[1]} << 8) |
                               (std::uint32_t{le[2]} << 16) | (std::uint32_t{le[3]} << 24);
    const float f = std::bit_cast<float>(bits);
    if (!std::isfinite(f)) throw ToyError(path.string() + ": non-finite parameter");
    m.data()[i] = f;
  }
}

}  // namespace

void save_model(const std::filesystem::path& dir, const ToyState& state,
                const ToyTokenizer& tokenizer) {
  std::filesystem::create_directories(dir);
  json tensors = json::array();
  state.for_each([&](const std::string& name, const Matrix& m) {
    const std::string file = name + ".f32";
    write_f32(dir / file, m);
    tensors.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"file", file}});
  });
  json manifest = {{"format", "toyformer-1"},
                   {"config", config_to_json(state.config)},
                   {"vocab", tokenizer.vocab()},
                   {"tensors", tensors}};
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  out << manifest.dump(2) << '\n';
}

LoadedModel load_model(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw ToyError("no model manifest in " + dir.string() + " (run train-toy)");
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw ToyError("malformed model manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != "toyformer-1")
    throw ToyError("unsupported model format in " + dir.string());
  ToyConfig config = config_from_json(manifest.at("config"));
  ToyTokenizer tokenizer(manifest.at("vocab").get<std::vector<std::string>>());
  if (tokenizer.size() != config.vocab_size)
    throw ToyError("vocabulary size disagrees with config");
  ToyState state = ToyState::zeros(config);
  std::map<std::string, json> entries;
  for (const auto& t : manifest.at("tensors")) entries[t.at("name").get<std::string>()] = t;
  state.for_each([&](const std::string& name, Matrix& m) {
    auto it = entries.find(name);
    if (it == entries.end()) throw ToyError("model is missing tensor " + name);
    if (it->second.at("rows").get<Eigen::Index>() != m.rows() ||
        it->second.at("cols").get<Eigen::Index>() != m.cols())
      throw ToyError("tensor " + name + " has the wrong shape");
    read_f32(dir / it->second.at("file").get<std::string>(), m);
  });
  return {std::move(state), std::move(tokenizer)};
}

}  // namespace cprobe::toy
