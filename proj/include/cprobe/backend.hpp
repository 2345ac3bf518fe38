#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cprobe {

class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ModuleKind : std::uint8_t { MLP_L1 = 0, MLP_L2 = 1, MHSA = 2 };
inline constexpr std::array<ModuleKind, 3> kAllModules = {
    ModuleKind::MLP_L1, ModuleKind::MLP_L2, ModuleKind::MHSA};

enum class TokenRole : std::uint8_t {
  OBJECT = 0,      // counter-object in the statement
  SUBJECT_Q = 1,   // subject inside the query
  RELATION_Q = 2,  // relation (last token) of the query
  FIRST = 3,       // control
};
inline constexpr std::array<TokenRole, 4> kAllRoles = {
    TokenRole::OBJECT, TokenRole::SUBJECT_Q, TokenRole::RELATION_Q,
    TokenRole::FIRST};

/// Wire names: "mlp_l1", "mlp_l2", "mhsa".
std::string_view to_string(ModuleKind m);
ModuleKind module_from_string(std::string_view s);
/// "object", "subject_q", "relation_q", "first".
std::string_view to_string(TokenRole r);
TokenRole role_from_string(std::string_view s);

struct BackendMeta {
  std::string model_name;
  int num_layers = 0;
  std::map<ModuleKind, int> dims;

  int dim(ModuleKind m) const;
  /// Throws BackendError unless all three module kinds have positive dims.
  void validate() const;
};

struct TokenSpan {
  int token_id = 0;
  std::string text;
  std::size_t char_start = 0;
  std::size_t char_end = 0;
};

struct Generation {
  std::string text;
  std::vector<TokenSpan> tokens;  // offsets index into `text`
};

/// One captured module output at a prompt token position.
struct ModuleActivation {
  int position = 0;
  int layer = 0;
  ModuleKind module = ModuleKind::MLP_L1;
  std::vector<float> vector;
};

/// Uniform surface over decoder-only models. Implementations are safe for
/// concurrent read-only calls.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual BackendMeta meta() const = 0;
  virtual Generation generate_greedy(std::string_view prompt,
                                     int max_new_tokens = 10) const = 0;
  /// Joint probability of each continuation (appended verbatim to the
  /// prompt), no length normalization.
  virtual std::vector<double> score_candidates(
      std::string_view prompt, std::span<const std::string> candidates) const = 0;
  virtual std::vector<ModuleActivation> capture_activations(
      std::string_view prompt, std::span<const int> positions,
      std::span<const int> layers, std::span<const ModuleKind> modules) const = 0;
  virtual std::vector<TokenSpan> tokenize_with_offsets(
      std::string_view text) const = 0;
};

/// Parses "toy:<model-dir>" or "http:<base-url>". An empty spec falls back to
/// the CONFLICT_PROBE_BACKEND_URL environment variable.
std::unique_ptr<Backend> make_backend(std::string_view spec);

}  // namespace cprobe
