#pragma once

#include <string>
#include <vector>

#include "cprobe/pipeline.hpp"
#include "cprobe/probe.hpp"
#include "cprobe/rng.hpp"
#include "cprobe/storage.hpp"

namespace fixture {

inline cprobe::LabeledExample example(std::uint32_t id, cprobe::Label label, std::string group,
                                      std::string subject, std::string object,
                                      std::string counter_object, std::string relation = "rel") {
  cprobe::LabeledExample e;
  e.id = id;
  e.label = label;
  e.group = std::move(group);
  e.prompt.counter = {std::move(subject), std::move(relation), "", std::move(object),
                      std::move(counter_object), 1};
  return e;
}

/// One record per (example, layer, module, role) with Gaussian entries; the
/// first coordinate is shifted by `signal` for PK examples.
inline cprobe::ActivationStore random_store(const std::vector<cprobe::LabeledExample>& examples,
                                            const cprobe::BackendMeta& meta, std::uint64_t seed,
                                            double signal = 0.0) {
  cprobe::ActivationStore store(meta);
  cprobe::Rng rng(seed);
  for (const auto& e : examples) {
    if (e.label == cprobe::Label::ND) continue;
    for (int l = 0; l < meta.num_layers; ++l)
      for (auto m : cprobe::kAllModules)
        for (auto r : cprobe::kAllRoles) {
          cprobe::ActivationRecord rec{e.id, static_cast<std::uint16_t>(l), m, r, {}};
          rec.vector.resize(static_cast<std::size_t>(meta.dim(m)));
          for (auto& v : rec.vector) v = static_cast<float>(rng.normal());
          if (e.label == cprobe::Label::PK) rec.vector[0] += static_cast<float>(signal);
          store.add(std::move(rec));
        }
  }
  return store;
}

inline cprobe::ProbeDataset blobs(std::size_t per_class, double separation, std::uint64_t seed) {
  cprobe::Rng rng(seed);
  cprobe::ProbeDataset ds;
  ds.features.resize(static_cast<Eigen::Index>(2 * per_class), 2);
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const int label = i < per_class ? 0 : 1;
    const double shift = label ? separation / std::sqrt(2.0) : 0.0;
    ds.features(static_cast<Eigen::Index>(i), 0) = rng.normal() + shift;
    ds.features(static_cast<Eigen::Index>(i), 1) = rng.normal() + shift;
    ds.labels.push_back(label);
    ds.example_ids.push_back(static_cast<std::uint32_t>(i));
    ds.groups.push_back("g");
    ds.subjects.push_back("s" + std::to_string(i));
    ds.objects.push_back("o" + std::to_string(i));
    ds.counter_objects.push_back("c" + std::to_string(i));
  }
  return ds;
}

}  // namespace fixture
