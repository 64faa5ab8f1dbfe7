// Copyright 2026 The graft Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic desk-scale checkpoints for tests, demos and the CLI's
// make-fixture command.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "graft/checkpoint.hpp"
#include "graft/config.hpp"
#include "graft/dtype.hpp"
#include "graft/module_graph.hpp"
#include "graft/sweep.hpp"
#include "graft/tokenizer.hpp"

namespace graft::toy {

inline ModelConfig toy_config(int n_layers = 2, int d_ff = 64) {
  ModelConfig c;
  c.n_layers = n_layers;
  c.d_model = 32;
  c.n_heads = 4;
  c.d_ff = d_ff;
  c.vocab_size = kToyVocabSize;
  c.max_position = 1024;
  c.norm_eps = 1e-5f;
  return c;
}

struct RandomModelOptions {
  std::uint64_t seed = 1;
  float scale = 0.02f;  // weight std
  DType dtype = DType::kF32;
  bool with_bias = false;
  std::string prefix;  // e.g. "model."
};

namespace detail {

inline TensorRecord make_tensor(const std::string& name, DType dtype, std::vector<std::uint64_t> shape,
                                const std::vector<float>& values) {
  return TensorRecord{name, dtype, std::move(shape), encode_from_f32(dtype, values)};
}

inline std::vector<float> gaussian(std::mt19937_64& rng, std::size_t n, float std) {
  std::normal_distribution<float> dist(0.0f, std);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

inline std::vector<std::uint64_t> projection_shape(const ModelConfig& c, std::size_t projection) {
  const auto d = static_cast<std::uint64_t>(c.d_model);
  const auto ff = static_cast<std::uint64_t>(c.d_ff);
  if (projection == kGate || projection == kUp) return {ff, d};
  if (projection == kDown) return {d, ff};
  return {d, d};
}

}  // namespace detail

/// Gaussian-initialized model in the canonical naming scheme. Norm weights
/// are ones. Per-projection weight std can be overridden via `scale_of`.
template <class ScaleFn>
CheckpointManifest random_model(const ModelConfig& c, const RandomModelOptions& opt, ScaleFn scale_of) {
  std::mt19937_64 rng(opt.seed);
  const auto d = static_cast<std::uint64_t>(c.d_model);
  const auto vocab = static_cast<std::uint64_t>(c.vocab_size);
  const std::vector<float> ones(d, 1.0f);
  CheckpointManifest m;
  m.add(detail::make_tensor(opt.prefix + "embed_tokens.weight", opt.dtype, {vocab, d},
                            detail::gaussian(rng, vocab * d, 1.0f)));
  for (int l = 0; l < c.n_layers; ++l) {
    const std::string layer = opt.prefix + "layers." + std::to_string(l) + ".";
    m.add(detail::make_tensor(layer + "input_layernorm.weight", opt.dtype, {d}, ones));
    for (std::size_t p = 0; p < kLayerProjections.size(); ++p) {
      if (p == kGate) m.add(detail::make_tensor(layer + "post_attention_layernorm.weight", opt.dtype, {d}, ones));
      const auto shape = detail::projection_shape(c, p);
      const std::string base = layer + std::string(kLayerProjections[p]);
      m.add(detail::make_tensor(base + ".weight", opt.dtype, shape,
                                detail::gaussian(rng, shape[0] * shape[1], scale_of(l, p))));
      if (opt.with_bias) {
        m.add(detail::make_tensor(base + ".bias", opt.dtype, {shape[0]}, detail::gaussian(rng, shape[0], scale_of(l, p))));
      }
    }
  }
  m.add(detail::make_tensor(opt.prefix + "norm.weight", opt.dtype, {d}, ones));
  m.add(detail::make_tensor(opt.prefix + "lm_head.weight", opt.dtype, {vocab, d},
                            detail::gaussian(rng, vocab * d, opt.scale)));
  return m;
}

inline CheckpointManifest random_model(const ModelConfig& c, const RandomModelOptions& opt = {}) {
  return random_model(c, opt, [&](int, std::size_t) { return opt.scale; });
}

/// Adds Gaussian noise to one tensor, keeping its dtype.
inline CheckpointManifest perturb(const CheckpointManifest& m, const std::string& tensor, float noise_std,
                                  std::uint64_t seed) {
  CheckpointManifest out = m;
  TensorRecord t = get_tensor(m, tensor);
  auto values = decode_to_f32(t.dtype, t.data);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0f, noise_std);
  for (auto& v : values) v += dist(rng);
  t.data = encode_from_f32(t.dtype, values);
  out.replace(std::move(t));
  return out;
}

// ---- planted answer model ----

inline constexpr std::string_view kPlantedAnswer = "7";

/// A model whose embedding and output head implement a successor chain:
/// any token outside the chain leads into "\boxed{7}" followed by EOS. The
/// transformer layers are random and small enough not to disturb the chain,
/// except that layer-1 feed-forward weights are large enough for a noisy
/// up_proj to derail it.
inline CheckpointManifest planted_model(const ModelConfig& c, std::uint64_t seed = 7) {
  const std::string chain = "\\boxed{" + std::string(kPlantedAnswer) + "}";
  const int d = c.d_model;
  // Chain state of each token: 0 for "anything else", i + 1 for chain[i].
  std::vector<int> state(static_cast<std::size_t>(c.vocab_size), 0);
  for (std::size_t i = 0; i < chain.size(); ++i) state[static_cast<unsigned char>(chain[i])] = static_cast<int>(i) + 1;

  RandomModelOptions opt;
  opt.seed = seed;
  CheckpointManifest m = random_model(c, opt, [](int layer, std::size_t p) {
    if (layer == 1 && (p == kGate || p == kUp)) return 0.2f;
    if (layer == 1 && p == kDown) return 0.1f;
    return 0.02f;
  });

  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::normal_distribution<float> noise(0.0f, 0.05f);
  const float unit = std::sqrt(static_cast<float>(d));
  std::vector<float> embed(static_cast<std::size_t>(c.vocab_size) * d);
  for (int t = 0; t < c.vocab_size; ++t) {
    for (int i = 0; i < d; ++i) embed[static_cast<std::size_t>(t) * d + i] = noise(rng);
    embed[static_cast<std::size_t>(t) * d + state[static_cast<std::size_t>(t)]] += unit;
  }
  std::vector<float> head(embed.size(), 0.0f);
  const float gain = 4.0f;
  const auto successor_row = [&](int from_state, int token) {
    head[static_cast<std::size_t>(token) * d + from_state] = gain;
  };
  for (std::size_t i = 0; i < chain.size(); ++i) {
    successor_row(static_cast<int>(i), static_cast<unsigned char>(chain[i]));
  }
  successor_row(static_cast<int>(chain.size()), kEosToken);

  const auto dims = std::vector<std::uint64_t>{static_cast<std::uint64_t>(c.vocab_size), static_cast<std::uint64_t>(d)};
  m.replace(detail::make_tensor("embed_tokens.weight", DType::kF32, dims, embed));
  m.replace(detail::make_tensor("lm_head.weight", DType::kF32, dims, head));
  return m;
}

inline constexpr std::string_view kPlantedModule = "layers.1.mlp.up_proj";

struct PlantedPair {
  CheckpointManifest source;
  CheckpointManifest target;
  std::string perturbed_module;
};

/// Source = planted model; target = the same model with Gaussian noise
/// added to one feed-forward projection.
inline PlantedPair planted_pair(const ModelConfig& c, std::uint64_t seed = 7, float noise_std = 3.0f,
                                std::string module = std::string(kPlantedModule)) {
  PlantedPair pair;
  pair.source = planted_model(c, seed);
  pair.target = perturb(pair.source, module + ".weight", noise_std, seed + 1);
  pair.perturbed_module = std::move(module);
  return pair;
}

/// Twenty arithmetic prompts; ten have gold answer 7 in assorted notations.
inline std::vector<PromptRecord> planted_prompts() {
  const std::vector<std::pair<std::string, std::string>> items = {
      {"What is 3 + 4?", "7"},
      {"Compute 15 - 8.", "$7$"},
      {"What is 21 / 3?", "7."},
      {"Find x if x - 2 = 5.", "\\text{7}"},
      {"How many days are in a week?", " 7 "},
      {"What is the 4th prime number?", "$ 7 $"},
      {"Evaluate 49^(1/2).", "7"},
      {"What is 1 + 2 * 3?", "\\left7\\right"},
      {"Solve 2x = 14.", "7,"},
      {"What is 56 / 8?", "7"},
      {"What is 2 + 2?", "4"},
      {"Compute 9 * 9.", "81"},
      {"What is 1 / 2 as a fraction?", "\\frac{1}{2}"},
      {"Solve x + 1 = 4.", "3"},
      {"What is 10 - 4?", "6"},
      {"What is 5 squared?", "25"},
      {"Compute 100 / 4.", "25"},
      {"What is 3 * 4?", "12"},
      {"What is 0.5 + 0.25?", "\\dfrac{3}{4}"},
      {"How many sides does a hexagon have?", "6"},
  };
  std::vector<PromptRecord> out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "toy-%02zu", i);
    out.push_back({id, items[i].first, items[i].second});
  }
  return out;
}

inline void write_prompts(const std::vector<PromptRecord>& prompts, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::kIoFailure, "cannot open '" + path.string() + "' for writing");
  for (const auto& p : prompts) {
    nlohmann::json j = {{"id", p.id}, {"prompt", p.prompt}};
    if (p.answer) j["answer"] = *p.answer;
    out << j.dump() << "\n";
  }
}

}  // namespace graft::toy
