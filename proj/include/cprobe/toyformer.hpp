#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cprobe/toy_tokenizer.hpp"

namespace cprobe::toy {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Optimizer { SGD, Adam };

struct ToyConfig {
  int num_layers = 4;
  int d_model = 64;
  int d_mlp = 256;
  int num_heads = 4;
  int context_len = 64;
  int vocab_size = 0;
  std::uint64_t seed = 0;

  // Training schedule.
  Optimizer optimizer = Optimizer::SGD;
  double learning_rate = 0.5;
  int epochs = 20;
  int batch_size = 16;
  double clip_norm = 1.0;

  /// Throws std::invalid_argument on inconsistent shapes.
  void validate() const;
};

struct LayerParams {
  Matrix wq, wk, wv, wo;   // d_model x d_model
  Matrix ln_gamma, ln_beta;  // 1 x d_model, the gamma() of the residual update
  Matrix w_mlp;            // d_model x d_mlp
  Matrix w_proj;           // d_mlp x d_model
};

/// All trainable parameters. Row-vector convention: activations are
/// (sequence x features) and multiply weights on the right.
struct ToyState {
  ToyConfig config;
  Matrix wte;  // vocab x d_model
  Matrix wpe;  // context_len x d_model
  std::vector<LayerParams> layers;
  Matrix lnf_gamma, lnf_beta;  // 1 x d_model
  Matrix w_out;                // d_model x vocab

  /// Zero-filled state with the shapes implied by `config`.
  static ToyState zeros(const ToyConfig& config);
  /// Seeded random initialization.
  static ToyState init(const ToyConfig& config);

  /// Visits every parameter tensor with a stable name, in a fixed order.
  void for_each(const std::function<void(const std::string&, Matrix&)>& fn);
  void for_each(const std::function<void(const std::string&, const Matrix&)>& fn) const;

  std::size_t num_parameters() const;
};

/// Per-layer module outputs, each (sequence x dim).
struct LayerHooks {
  Matrix input;   // X^(l-1)
  Matrix mhsa;    // A^(l)
  Matrix mlp_in;  // gamma(X^(l-1) + A^(l))
  Matrix mlp_l1;  // sigma(mlp_in W_mlp)
  Matrix mlp_l2;  // M^(l) = mlp_l1 W_proj
  Matrix output;  // X^(l) = mlp_in + M^(l)
};

struct HookBundle {
  std::vector<LayerHooks> layers;
};

struct ForwardResult {
  Matrix logits;  // sequence x vocab
  HookBundle hooks;
};

class ToyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DivergenceError : public ToyError {
 public:
  DivergenceError(const std::string& msg, long step) : ToyError(msg), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

ForwardResult forward(const ToyState& state, std::span<const int> tokens);

/// Mean next-token cross-entropy over all predicted positions of `batch`,
/// with gradients accumulated into `grad` (which must have `state`'s shapes).
double loss_and_grad(const ToyState& state,
                     std::span<const std::vector<int>> batch, ToyState* grad);

/// Mean next-token cross-entropy without gradients.
double loss(const ToyState& state, std::span<const std::vector<int>> batch);

double gelu(double x);
double gelu_grad(double x);

struct TrainResult {
  ToyState state;
  double final_loss = 0.0;
  long steps = 0;
};

using TrainProgress = std::function<void(int epoch, double mean_loss)>;

/// Deterministic training on token sequences (each already terminated by
/// <eos>). Parameters are rounded to f32 at the end so the returned state is
/// exactly what gets persisted.
TrainResult train(const ToyConfig& config,
                  const std::vector<std::vector<int>>& sequences,
                  const TrainProgress& progress = {});

/// Tokenizes `corpus` (one sequence per line) with a vocabulary built from it
/// and trains. The returned tokenizer belongs with the state.
struct TrainedModel {
  ToyTokenizer tokenizer;
  TrainResult result;
};
TrainedModel train_on_corpus(ToyConfig config, const std::vector<std::string>& corpus,
                             const TrainProgress& progress = {});

/// Model directory: manifest.json plus one little-endian f32 file per tensor.
void save_model(const std::filesystem::path& dir, const ToyState& state,
                const ToyTokenizer& tokenizer);
struct LoadedModel {
  ToyState state;
  ToyTokenizer tokenizer;
};
LoadedModel load_model(const std::filesystem::path& dir);

}  // namespace cprobe::toy
