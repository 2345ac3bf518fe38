#pragma once

#include <filesystem>

#include "cprobe/backend.hpp"
#include "cprobe/toyformer.hpp"

namespace cprobe {

/// Backend over an in-process toy transformer.
class ToyBackend final : public Backend {
 public:
  ToyBackend(toy::ToyState state, ToyTokenizer tokenizer,
             std::string model_name = "toyformer");
  static ToyBackend load(const std::filesystem::path& model_dir);

  BackendMeta meta() const override;
  Generation generate_greedy(std::string_view prompt,
                             int max_new_tokens = 10) const override;
  std::vector<double> score_candidates(
      std::string_view prompt, std::span<const std::string> candidates) const override;
  std::vector<ModuleActivation> capture_activations(
      std::string_view prompt, std::span<const int> positions,
      std::span<const int> layers, std::span<const ModuleKind> modules) const override;
  std::vector<TokenSpan> tokenize_with_offsets(std::string_view text) const override;

  const toy::ToyState& state() const { return state_; }
  const ToyTokenizer& tokenizer() const { return tokenizer_; }

 private:
  toy::ToyState state_;
  ToyTokenizer tokenizer_;
  std::string model_name_;
};

}  // namespace cprobe
