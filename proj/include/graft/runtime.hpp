// Copyright 2026 The graft Authors
// SPDX-License-Identifier: Apache-2.0
//
// Forward-only f32 inference for small decoder-only transformers:
//
//   embed -> n_layers x { RMSNorm -> MHA(q,k,v,o; rotary on q,k) -> +res
//                         RMSNorm -> down(silu(gate(x)) * up(x))  -> +res }
//         -> RMSNorm -> lm_head
//
// Every projection can be tapped: the tap records the mean absolute value
// of the projection's output row at the last sequence position.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "graft/checkpoint.hpp"
#include "graft/config.hpp"
#include "graft/dtype.hpp"
#include "graft/error.hpp"
#include "graft/module_graph.hpp"
#include "graft/tokenizer.hpp"

namespace graft {

enum class Sampling { kGreedy };

struct DecodeSettings {
  int max_new_tokens = 32;
  std::uint64_t seed = 42;
  Sampling sampling = Sampling::kGreedy;
  float top_p = 1.0f;
  // The cache-free path recomputes the whole sequence each step.
  bool use_kv_cache = true;

  void validate() const {
    if (max_new_tokens < 1) throw Error(Errc::kInvalidArgument, "max_new_tokens must be >= 1");
    if (sampling == Sampling::kGreedy && top_p != 1.0f) {
      throw Error(Errc::kInvalidArgument, "greedy decoding requires top_p == 1.0");
    }
  }
};

/// Per-module activation responses, one value per generated step.
struct ActivationTrace {
  std::string prompt_id;
  int t_gen = 0;
  std::map<std::string, std::vector<double>> values;

  bool operator==(const ActivationTrace&) const = default;
};

struct LinearWeights {
  int d_out = 0;
  int d_in = 0;
  std::vector<float> weight;  // [d_out, d_in] row-major
  std::vector<float> bias;    // empty when absent
};

struct LayerWeights {
  std::vector<float> attn_norm;
  std::vector<float> ffn_norm;
  std::array<LinearWeights, 7> proj;  // kLayerProjections order
};

enum Projection : int { kQ = 0, kK, kV, kO, kGate, kUp, kDown };

struct ModelState {
  ModelConfig config;
  std::vector<float> embed;  // [vocab, d_model]
  std::vector<LayerWeights> layers;
  std::vector<float> final_norm;
  std::vector<float> lm_head;  // [vocab, d_model]; aliases embed when tied
  std::vector<float> rope_cos;  // [max_position, head_dim / 2]
  std::vector<float> rope_sin;
  std::vector<std::string> module_names;  // layer * 7 + projection

  std::span<const float> head() const { return config.tie_word_embeddings ? embed : lm_head; }
};

namespace detail {

inline std::vector<float> load_f32(const CheckpointManifest& manifest, const std::string& raw,
                                   std::vector<std::uint64_t> expected) {
  const TensorRecord& t = get_tensor(manifest, raw);
  if (t.shape != expected) {
    std::string want, got;
    for (auto d : expected) want += std::to_string(d) + ",";
    for (auto d : t.shape) got += std::to_string(d) + ",";
    throw Error(Errc::kShapeMismatch, "'" + raw + "' has shape [" + got + "] expected [" + want + "]");
  }
  return decode_to_f32(t.dtype, t.data);
}

inline std::string require_weight(const ModuleIndex& index, const std::string& normalized) {
  auto raw = index.weight_name(normalized);
  if (!raw) throw Error(Errc::kMissingTensor, "'" + normalized + ".weight'");
  return *raw;
}

}  // namespace detail

/// Materializes f32 working copies of every parameter. The manifest itself
/// is left untouched.
inline ModelState load_model(const ModelConfig& config, const CheckpointManifest& manifest) {
  config.validate();
  const ModuleIndex index(manifest);
  const auto d = static_cast<std::uint64_t>(config.d_model);
  const auto ff = static_cast<std::uint64_t>(config.d_ff);
  const auto vocab = static_cast<std::uint64_t>(config.vocab_size);

  ModelState m;
  m.config = config;
  m.embed = detail::load_f32(manifest, detail::require_weight(index, "embed_tokens"), {vocab, d});
  m.final_norm = detail::load_f32(manifest, detail::require_weight(index, "norm"), {d});
  if (!config.tie_word_embeddings) {
    m.lm_head = detail::load_f32(manifest, detail::require_weight(index, "lm_head"), {vocab, d});
  }

  const std::array<std::array<std::uint64_t, 2>, 7> shapes = {{
      {d, d}, {d, d}, {d, d}, {d, d}, {ff, d}, {ff, d}, {d, ff},
  }};
  m.layers.resize(static_cast<std::size_t>(config.n_layers));
  for (int l = 0; l < config.n_layers; ++l) {
    auto& layer = m.layers[static_cast<std::size_t>(l)];
    const std::string prefix = "layers." + std::to_string(l) + ".";
    layer.attn_norm = detail::load_f32(manifest, detail::require_weight(index, prefix + "input_layernorm"), {d});
    layer.ffn_norm =
        detail::load_f32(manifest, detail::require_weight(index, prefix + "post_attention_layernorm"), {d});
    for (std::size_t p = 0; p < kLayerProjections.size(); ++p) {
      const std::string name = layer_module_name(l, kLayerProjections[p]);
      auto& lin = layer.proj[p];
      lin.d_out = static_cast<int>(shapes[p][0]);
      lin.d_in = static_cast<int>(shapes[p][1]);
      lin.weight = detail::load_f32(manifest, detail::require_weight(index, name), {shapes[p][0], shapes[p][1]});
      if (const auto* tensors = index.find(name); tensors && tensors->bias) {
        lin.bias = detail::load_f32(manifest, *tensors->bias, {shapes[p][0]});
      }
      m.module_names.push_back(name);
    }
  }

  const int half = config.head_dim() / 2;
  m.rope_cos.resize(static_cast<std::size_t>(config.max_position) * half);
  m.rope_sin.resize(m.rope_cos.size());
  for (int pos = 0; pos < config.max_position; ++pos) {
    for (int i = 0; i < half; ++i) {
      const double freq = std::pow(static_cast<double>(config.rope_theta), -2.0 * i / config.head_dim());
      const double angle = pos * freq;
      m.rope_cos[static_cast<std::size_t>(pos) * half + i] = static_cast<float>(std::cos(angle));
      m.rope_sin[static_cast<std::size_t>(pos) * half + i] = static_cast<float>(std::sin(angle));
    }
  }
  return m;
}

namespace kernels {

inline void linear(const LinearWeights& lin, const float* x, float* out) {
  for (int o = 0; o < lin.d_out; ++o) {
    const float* row = lin.weight.data() + static_cast<std::size_t>(o) * lin.d_in;
    double acc = lin.bias.empty() ? 0.0 : lin.bias[o];
    for (int i = 0; i < lin.d_in; ++i) acc += static_cast<double>(row[i]) * x[i];
    out[o] = static_cast<float>(acc);
  }
}

inline void rms_norm(const float* x, const std::vector<float>& weight, float eps, float* out) {
  const std::size_t n = weight.size();
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) ss += static_cast<double>(x[i]) * x[i];
  const double scale = 1.0 / std::sqrt(ss / static_cast<double>(n) + eps);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(x[i] * scale) * weight[i];
}

// Rotates each head's two halves by the position's angles.
inline void rope(const ModelState& m, int pos, float* vec) {
  const int hd = m.config.head_dim();
  const int half = hd / 2;
  const float* cs = m.rope_cos.data() + static_cast<std::size_t>(pos) * half;
  const float* sn = m.rope_sin.data() + static_cast<std::size_t>(pos) * half;
  for (int h = 0; h < m.config.n_heads; ++h) {
    float* v = vec + h * hd;
    for (int i = 0; i < half; ++i) {
      const float x1 = v[i];
      const float x2 = v[i + half];
      v[i] = x1 * cs[i] - x2 * sn[i];
      v[i + half] = x2 * cs[i] + x1 * sn[i];
    }
  }
}

// Causal attention of one query row over keys/values at positions [0, n).
inline void attend(const ModelState& m, const float* q, const float* keys, const float* values, int n, float* out) {
  const int hd = m.config.head_dim();
  const int d = m.config.d_model;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<double> scores(static_cast<std::size_t>(n));
  for (int h = 0; h < m.config.n_heads; ++h) {
    const float* qh = q + h * hd;
    double max_score = -INFINITY;
    for (int j = 0; j < n; ++j) {
      const float* kh = keys + static_cast<std::size_t>(j) * d + h * hd;
      double s = 0.0;
      for (int i = 0; i < hd; ++i) s += static_cast<double>(qh[i]) * kh[i];
      scores[j] = s * inv_sqrt;
      max_score = std::max(max_score, scores[j]);
    }
    double total = 0.0;
    for (int j = 0; j < n; ++j) {
      scores[j] = std::exp(scores[j] - max_score);
      total += scores[j];
    }
    for (int i = 0; i < hd; ++i) {
      double acc = 0.0;
      for (int j = 0; j < n; ++j) acc += scores[j] * values[static_cast<std::size_t>(j) * d + h * hd + i];
      out[h * hd + i] = static_cast<float>(acc / total);
    }
  }
}

inline double mean_abs(const float* h, int n) {
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += std::fabs(static_cast<double>(h[i]));
  return acc / n;
}

inline float silu(float x) { return x / (1.0f + std::exp(-x)); }

inline int argmax_lowest(std::span<const float> logits) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(logits.size()); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return best;
}

}  // namespace kernels


namespace block {

// Each helper records its projections' responses into taps[0..7) when
// taps is non-null. Both forward paths below go through these, so they
// share one arithmetic path.

inline void attention_inputs(const ModelState& m, const LayerWeights& layer, const float* x, int pos, float* q,
                             float* k, float* v, double* taps) {
  const int d = m.config.d_model;
  std::vector<float> xn(static_cast<std::size_t>(d));
  kernels::rms_norm(x, layer.attn_norm, m.config.norm_eps, xn.data());
  kernels::linear(layer.proj[kQ], xn.data(), q);
  kernels::linear(layer.proj[kK], xn.data(), k);
  kernels::linear(layer.proj[kV], xn.data(), v);
  if (taps) {
    taps[kQ] = kernels::mean_abs(q, d);
    taps[kK] = kernels::mean_abs(k, d);
    taps[kV] = kernels::mean_abs(v, d);
  }
  kernels::rope(m, pos, q);
  kernels::rope(m, pos, k);
}

inline void attention_output(const ModelState& m, const LayerWeights& layer, const float* q, const float* keys,
                             const float* values, int n, float* x, double* taps) {
  const int d = m.config.d_model;
  std::vector<float> mixed(static_cast<std::size_t>(d)), o(static_cast<std::size_t>(d));
  kernels::attend(m, q, keys, values, n, mixed.data());
  kernels::linear(layer.proj[kO], mixed.data(), o.data());
  if (taps) taps[kO] = kernels::mean_abs(o.data(), d);
  for (int i = 0; i < d; ++i) x[i] += o[i];
}

inline void feed_forward(const ModelState& m, const LayerWeights& layer, float* x, double* taps) {
  const int d = m.config.d_model;
  const int ff = m.config.d_ff;
  std::vector<float> xn(static_cast<std::size_t>(d)), gate(static_cast<std::size_t>(ff)),
      up(static_cast<std::size_t>(ff)), down(static_cast<std::size_t>(d));
  kernels::rms_norm(x, layer.ffn_norm, m.config.norm_eps, xn.data());
  kernels::linear(layer.proj[kGate], xn.data(), gate.data());
  kernels::linear(layer.proj[kUp], xn.data(), up.data());
  if (taps) {
    taps[kGate] = kernels::mean_abs(gate.data(), ff);
    taps[kUp] = kernels::mean_abs(up.data(), ff);
  }
  for (int i = 0; i < ff; ++i) gate[i] = kernels::silu(gate[i]) * up[i];
  kernels::linear(layer.proj[kDown], gate.data(), down.data());
  if (taps) taps[kDown] = kernels::mean_abs(down.data(), d);
  for (int i = 0; i < d; ++i) x[i] += down[i];
}

inline std::vector<float> logits(const ModelState& m, const float* x) {
  const int d = m.config.d_model;
  std::vector<float> xn(static_cast<std::size_t>(d));
  kernels::rms_norm(x, m.final_norm, m.config.norm_eps, xn.data());
  const auto head = m.head();
  std::vector<float> out(static_cast<std::size_t>(m.config.vocab_size));
  for (int t = 0; t < m.config.vocab_size; ++t) {
    const float* row = head.data() + static_cast<std::size_t>(t) * d;
    double acc = 0.0;
    for (int i = 0; i < d; ++i) acc += static_cast<double>(row[i]) * xn[i];
    out[static_cast<std::size_t>(t)] = static_cast<float>(acc);
  }
  return out;
}

inline void check_token(const ModelState& m, int token) {
  if (token < 0 || token >= m.config.vocab_size) {
    throw Error(Errc::kInvalidArgument, "token id " + std::to_string(token) + " out of range");
  }
}

}  // namespace block

/// Incremental forward pass with a per-layer key/value cache.
class DecodeSession {
 public:
  explicit DecodeSession(const ModelState& model) : m_(model) {
    const auto cap = static_cast<std::size_t>(m_.config.max_position) * static_cast<std::size_t>(m_.config.d_model);
    keys_.assign(m_.layers.size(), std::vector<float>(cap));
    values_.assign(m_.layers.size(), std::vector<float>(cap));
  }

  int position() const { return pos_; }

  /// Feeds one token and returns next-token logits. When `taps` is non-null
  /// it is resized to one response per module (layer * 7 + projection).
  std::vector<float> step(int token, std::vector<double>* taps = nullptr) {
    const int d = m_.config.d_model;
    if (pos_ >= m_.config.max_position) throw Error(Errc::kContextOverflow, "sequence exceeds max_position");
    block::check_token(m_, token);
    if (taps) taps->assign(m_.layers.size() * kLayerProjections.size(), 0.0);

    std::vector<float> x(m_.embed.begin() + static_cast<std::ptrdiff_t>(token) * d,
                         m_.embed.begin() + static_cast<std::ptrdiff_t>(token + 1) * d);
    std::vector<float> q(static_cast<std::size_t>(d));
    for (std::size_t l = 0; l < m_.layers.size(); ++l) {
      const auto& layer = m_.layers[l];
      double* layer_taps = taps ? taps->data() + l * kLayerProjections.size() : nullptr;
      float* k = keys_[l].data() + static_cast<std::size_t>(pos_) * d;
      float* v = values_[l].data() + static_cast<std::size_t>(pos_) * d;
      block::attention_inputs(m_, layer, x.data(), pos_, q.data(), k, v, layer_taps);
      block::attention_output(m_, layer, q.data(), keys_[l].data(), values_[l].data(), pos_ + 1, x.data(),
                              layer_taps);
      block::feed_forward(m_, layer, x.data(), layer_taps);
    }
    ++pos_;
    return block::logits(m_, x.data());
  }

 private:
  const ModelState& m_;
  std::vector<std::vector<float>> keys_;
  std::vector<std::vector<float>> values_;
  int pos_ = 0;
};

struct SequenceOutput {
  std::vector<std::vector<float>> logits;  // one row per position
  std::vector<double> last_taps;           // responses at the final position
};

/// Cache-free forward over a whole sequence, layer by layer.
inline SequenceOutput forward_sequence(const ModelState& m, std::span<const int> tokens) {
  const int d = m.config.d_model;
  const int n = static_cast<int>(tokens.size());
  if (n == 0) throw Error(Errc::kInvalidArgument, "empty sequence");
  if (n > m.config.max_position) throw Error(Errc::kContextOverflow, "sequence exceeds max_position");

  std::vector<float> x(static_cast<std::size_t>(n) * d);
  for (int p = 0; p < n; ++p) {
    block::check_token(m, tokens[static_cast<std::size_t>(p)]);
    std::copy_n(m.embed.begin() + static_cast<std::ptrdiff_t>(tokens[static_cast<std::size_t>(p)]) * d, d,
                x.begin() + static_cast<std::ptrdiff_t>(p) * d);
  }

  SequenceOutput out;
  out.last_taps.assign(m.layers.size() * kLayerProjections.size(), 0.0);
  std::vector<float> q(x.size()), keys(x.size()), values(x.size());
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const auto& layer = m.layers[l];
    double* last = out.last_taps.data() + l * kLayerProjections.size();
    for (int p = 0; p < n; ++p) {
      const std::size_t row = static_cast<std::size_t>(p) * d;
      block::attention_inputs(m, layer, x.data() + row, p, q.data() + row, keys.data() + row, values.data() + row,
                              p == n - 1 ? last : nullptr);
    }
    for (int p = 0; p < n; ++p) {
      const std::size_t row = static_cast<std::size_t>(p) * d;
      double* taps = p == n - 1 ? last : nullptr;
      block::attention_output(m, layer, q.data() + row, keys.data(), values.data(), p + 1, x.data() + row, taps);
      block::feed_forward(m, layer, x.data() + row, taps);
    }
  }
  out.logits.reserve(static_cast<std::size_t>(n));
  for (int p = 0; p < n; ++p) out.logits.push_back(block::logits(m, x.data() + static_cast<std::size_t>(p) * d));
  return out;
}

struct DecodeResult {
  std::vector<int> tokens;  // generated tokens, including a final EOS if emitted
  std::optional<ActivationTrace> trace;
};

namespace detail {

inline ActivationTrace empty_trace(const ModelState& m) {
  ActivationTrace trace;
  for (const auto& name : m.module_names) trace.values[name];
  return trace;
}

inline void append_taps(const ModelState& m, const std::vector<double>& taps, ActivationTrace& trace) {
  for (std::size_t i = 0; i < m.module_names.size(); ++i) trace.values[m.module_names[i]].push_back(taps[i]);
  ++trace.t_gen;
}

// Shared loop. With `forced` non-null, step t feeds forced[t] instead of
// the argmax choice and the run is capped at forced->size() steps.
inline DecodeResult run_decode(const ModelState& m, std::span<const int> prompt, const DecodeSettings& settings,
                               bool tap, const std::vector<int>* forced) {
  settings.validate();
  if (prompt.empty()) throw Error(Errc::kInvalidArgument, "prompt must be non-empty");
  if (static_cast<long>(prompt.size()) + settings.max_new_tokens > m.config.max_position) {
    throw Error(Errc::kContextOverflow, "prompt (" + std::to_string(prompt.size()) + ") + max_new_tokens (" +
                                            std::to_string(settings.max_new_tokens) + ") exceeds max_position (" +
                                            std::to_string(m.config.max_position) + ")");
  }
  int budget = settings.max_new_tokens;
  if (forced) budget = std::min<int>(budget, static_cast<int>(forced->size()));

  DecodeResult result;
  if (tap) result.trace = empty_trace(m);
  std::vector<double> taps;

  if (settings.use_kv_cache) {
    DecodeSession session(m);
    for (std::size_t i = 0; i + 1 < prompt.size(); ++i) session.step(prompt[i]);
    int next_input = prompt.back();
    for (int t = 0; t < budget; ++t) {
      const auto logits = session.step(next_input, tap ? &taps : nullptr);
      if (tap) append_taps(m, taps, *result.trace);
      const int chosen = forced ? (*forced)[static_cast<std::size_t>(t)] : kernels::argmax_lowest(logits);
      result.tokens.push_back(chosen);
      if (chosen == kEosToken) break;
      next_input = chosen;
    }
  } else {
    std::vector<int> seq(prompt.begin(), prompt.end());
    for (int t = 0; t < budget; ++t) {
      const auto out = forward_sequence(m, seq);
      if (tap) append_taps(m, out.last_taps, *result.trace);
      const int chosen = forced ? (*forced)[static_cast<std::size_t>(t)] : kernels::argmax_lowest(out.logits.back());
      result.tokens.push_back(chosen);
      if (chosen == kEosToken) break;
      seq.push_back(chosen);
    }
  }
  return result;
}

}  // namespace detail

/// Greedy decoding: argmax each step, lowest id on ties, stop at EOS or
/// after max_new_tokens. With `tap`, the trace holds one response per
/// module per generated step; prompt positions are not recorded.
inline DecodeResult greedy_decode(const ModelState& m, std::span<const int> prompt, const DecodeSettings& settings,
                                  bool tap) {
  return detail::run_decode(m, prompt, settings, tap, nullptr);
}

/// Teacher-forced trace: feeds `continuation` after the prompt and records
/// the responses at each step, as if the model had generated it.
inline ActivationTrace trace_forced(const ModelState& m, std::span<const int> prompt,
                                    const std::vector<int>& continuation, const DecodeSettings& settings) {
  if (continuation.empty()) return detail::empty_trace(m);
  return *detail::run_decode(m, prompt, settings, true, &continuation).trace;
}

}  // namespace graft
