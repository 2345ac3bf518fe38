#include "cprobe/toy_backend.hpp"

#include <cmath>
#include <cstdlib>

#include "cprobe/http_backend.hpp"

namespace cprobe {

std::string_view to_string(ModuleKind m) {
  switch (m) {
    case ModuleKind::MLP_L1: return "mlp_l1";
    case ModuleKind::MLP_L2: return "mlp_l2";
    case ModuleKind::MHSA: return "mhsa";
  }
  throw std::invalid_argument("bad module kind");
}

ModuleKind module_from_string(std::string_view s) {
  if (s == "mlp_l1" || s == "MLP_L1" || s == "MLP-L1") return ModuleKind::MLP_L1;
  if (s == "mlp_l2" || s == "MLP_L2" || s == "MLP-L2") return ModuleKind::MLP_L2;
  if (s == "mhsa" || s == "MHSA") return ModuleKind::MHSA;
  throw std::invalid_argument("unknown module '" + std::string(s) + "'");
}

std::string_view to_string(TokenRole r) {
  switch (r) {
    case TokenRole::OBJECT: return "object";
    case TokenRole::SUBJECT_Q: return "subject_q";
    case TokenRole::RELATION_Q: return "relation_q";
    case TokenRole::FIRST: return "first";
  }
  throw std::invalid_argument("bad token role");
}

TokenRole role_from_string(std::string_view s) {
  if (s == "object") return TokenRole::OBJECT;
  if (s == "subject_q") return TokenRole::SUBJECT_Q;
  if (s == "relation_q") return TokenRole::RELATION_Q;
  if (s == "first") return TokenRole::FIRST;
  throw std::invalid_argument("unknown token role '" + std::string(s) + "'");
}

int BackendMeta::dim(ModuleKind m) const {
  auto it = dims.find(m);
  if (it == dims.end())
    throw BackendError("no dimension for module " + std::string(to_string(m)));
  return it->second;
}

void BackendMeta::validate() const {
  if (num_layers <= 0) throw BackendError("num_layers must be positive");
  if (dims.size() != kAllModules.size())
    throw BackendError("dims must cover mlp_l1, mlp_l2 and mhsa");
  for (auto m : kAllModules)
    if (dim(m) <= 0) throw BackendError("dimension of " + std::string(to_string(m)) +
                                        " must be positive");
}

std::unique_ptr<Backend> make_backend(std::string_view spec) {
  std::string s(spec);
  if (s.empty()) {
    if (const char* env = std::getenv("CONFLICT_PROBE_BACKEND_URL"); env && *env)
      s = std::string("http:") + env;
    else
      throw BackendError(
          "no backend given (use --backend toy:<dir> or http:<url>, or set "
          "CONFLICT_PROBE_BACKEND_URL)");
  }
  if (s.rfind("toy:", 0) == 0)
    return std::make_unique<ToyBackend>(ToyBackend::load(s.substr(4)));
  if (s.rfind("http:", 0) == 0) {
    std::string url = s.substr(5);
    // Accept both "http:host:port" and "http:http://host:port".
    if (url.rfind("http://", 0) != 0 && url.rfind("https://", 0) != 0)
      url = "http://" + (url.rfind("//", 0) == 0 ? url.substr(2) : url);
    return std::make_unique<HttpBackend>(url);
  }
  throw BackendError("unrecognized backend '" + s + "'");
}

ToyBackend::ToyBackend(toy::ToyState state, ToyTokenizer tokenizer,
                       std::string model_name)
    : state_(std::move(state)),
      tokenizer_(std::move(tokenizer)),
      model_name_(std::move(model_name)) {
  if (tokenizer_.size() != state_.config.vocab_size)
    throw BackendError("tokenizer and model vocabulary sizes differ");
}

ToyBackend ToyBackend::load(const std::filesystem::path& model_dir) {
  auto loaded = toy::load_model(model_dir);
  return ToyBackend(std::move(loaded.state), std::move(loaded.tokenizer),
                    "toyformer:" + model_dir.filename().string());
}

BackendMeta ToyBackend::meta() const {
  const auto& c = state_.config;
  BackendMeta m;
  m.model_name = model_name_;
  m.num_layers = c.num_layers;
  m.dims = {{ModuleKind::MLP_L1, c.d_mlp},
            {ModuleKind::MLP_L2, c.d_model},
            {ModuleKind::MHSA, c.d_model}};
  return m;
}

Generation ToyBackend::generate_greedy(std::string_view prompt, int max_new_tokens) const {
  if (prompt.empty()) throw BackendError("empty prompt");
  if (max_new_tokens < 1) throw BackendError("max_new_tokens must be >= 1");
  std::vector<int> tokens = tokenizer_.encode(prompt);
  const int ctx = state_.config.context_len;
  if (tokens.empty()) throw BackendError("prompt has no tokens");
  if (static_cast<int>(tokens.size()) > ctx)
    throw BackendError("prompt of " + std::to_string(tokens.size()) +
                       " tokens exceeds context length " + std::to_string(ctx));
  Generation g;
  for (int step = 0; step < max_new_tokens && static_cast<int>(tokens.size()) < ctx; ++step) {
    const auto fr = toy::forward(state_, tokens);
    const auto last = fr.logits.row(fr.logits.rows() - 1);
    Eigen::Index best = 0;
    for (Eigen::Index v = 1; v < last.size(); ++v)
      if (last(v) > last(best)) best = v;
    const int id = static_cast<int>(best);
    if (id == tokenizer_.eos_id()) break;
    tokens.push_back(id);
    TokenSpan span;
    span.token_id = id;
    span.text = tokenizer_.piece(id);
    span.char_start = g.text.size();
    g.text += span.text;
    span.char_end = g.text.size();
    g.tokens.push_back(std::move(span));
  }
  return g;
}

std::vector<double> ToyBackend::score_candidates(
    std::string_view prompt, std::span<const std::string> candidates) const {
  if (candidates.empty()) throw BackendError("no candidates to score");
  const std::vector<int> prefix = tokenizer_.encode(prompt);
  if (prefix.empty()) throw BackendError("empty prompt");
  std::vector<double> out;
  out.reserve(candidates.size());
  for (const auto& cand : candidates) {
    const std::vector<int> cont = tokenizer_.encode(cand);
    if (cont.empty()) throw BackendError("empty candidate");
    std::vector<int> seq = prefix;
    seq.insert(seq.end(), cont.begin(), cont.end());
    if (static_cast<int>(seq.size()) > state_.config.context_len)
      throw BackendError("prompt plus candidate exceeds context length");
    const auto fr = toy::forward(state_, seq);
    double logp = 0.0;
    for (std::size_t i = 0; i < cont.size(); ++i) {
      const auto row = fr.logits.row(static_cast<Eigen::Index>(prefix.size() - 1 + i));
      const double mx = row.maxCoeff();
      const double lse = mx + std::log((row.array() - mx).exp().sum());
      logp += row(cont[i]) - lse;
    }
    out.push_back(std::exp(logp));
  }
  return out;
}

std::vector<ModuleActivation> ToyBackend::capture_activations(
    std::string_view prompt, std::span<const int> positions, std::span<const int> layers,
    std::span<const ModuleKind> modules) const {
  const std::vector<int> tokens = tokenizer_.encode(prompt);
  for (int p : positions)
    if (p < 0 || p >= static_cast<int>(tokens.size()))
      throw BackendError("position " + std::to_string(p) + " outside prompt of " +
                         std::to_string(tokens.size()) + " tokens");
  for (int l : layers)
    if (l < 0 || l >= state_.config.num_layers)
      throw BackendError("unknown layer " + std::to_string(l));
  const auto fr = toy::forward(state_, tokens);
  std::vector<ModuleActivation> out;
  out.reserve(positions.size() * layers.size() * modules.size());
  for (int p : positions) {
    for (int l : layers) {
      const auto& h = fr.hooks.layers[static_cast<std::size_t>(l)];
      for (ModuleKind m : modules) {
        const toy::Matrix& src = m == ModuleKind::MLP_L1   ? h.mlp_l1
                                 : m == ModuleKind::MLP_L2 ? h.mlp_l2
                                                           : h.mhsa;
        ModuleActivation a;
        a.position = p;
        a.layer = l;
        a.module = m;
        a.vector.resize(static_cast<std::size_t>(src.cols()));
        for (Eigen::Index j = 0; j < src.cols(); ++j)
          a.vector[static_cast<std::size_t>(j)] = static_cast<float>(src(p, j));
        out.push_back(std::move(a));
      }
    }
  }
  return out;
}

std::vector<TokenSpan> ToyBackend::tokenize_with_offsets(std::string_view text) const {
  return tokenizer_.tokenize(text);
}

}  // namespace cprobe
