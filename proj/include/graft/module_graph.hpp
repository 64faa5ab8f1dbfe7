// Copyright 2026 The graft Authors
// SPDX-License-Identifier: Apache-2.0
//
// Candidate linear modules and source/target compatibility.
//
// Tensor naming follows the layered decoder convention:
//   embed_tokens.weight
//   layers.{i}.input_layernorm.weight
//   layers.{i}.self_attn.{q,k,v,o}_proj.{weight,bias}
//   layers.{i}.post_attention_layernorm.weight
//   layers.{i}.mlp.{gate,up,down}_proj.{weight,bias}
//   norm.weight
//   lm_head.weight
// optionally under a leading "model." namespace.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "graft/checkpoint.hpp"
#include "graft/config.hpp"
#include "graft/error.hpp"

namespace graft {

enum class ModuleKind { kAttentionProjection, kFeedforwardProjection };

inline std::string_view kind_name(ModuleKind kind) {
  return kind == ModuleKind::kAttentionProjection ? "attention_projection" : "feedforward_projection";
}

inline ModuleKind parse_kind(std::string_view name) {
  if (name == "attention_projection") return ModuleKind::kAttentionProjection;
  if (name == "feedforward_projection") return ModuleKind::kFeedforwardProjection;
  throw Error(Errc::kInvalidArgument, "unknown module kind '" + std::string(name) + "'");
}

/// Per-layer projection paths, in forward order.
inline constexpr std::array<std::string_view, 7> kLayerProjections = {
    "self_attn.q_proj", "self_attn.k_proj", "self_attn.v_proj", "self_attn.o_proj",
    "mlp.gate_proj",    "mlp.up_proj",      "mlp.down_proj",
};

inline std::string layer_module_name(int layer, std::string_view projection) {
  return "layers." + std::to_string(layer) + "." + std::string(projection);
}

namespace detail {

inline bool starts_with(std::string_view s, std::string_view p) { return s.substr(0, p.size()) == p; }
inline bool ends_with(std::string_view s, std::string_view p) {
  return s.size() >= p.size() && s.substr(s.size() - p.size()) == p;
}

inline std::string collapse_dots(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (char c : raw) {
    if (c == '.' && !out.empty() && out.back() == '.') continue;
    out.push_back(c);
  }
  while (!out.empty() && out.front() == '.') out.erase(out.begin());
  while (!out.empty() && out.back() == '.') out.pop_back();
  return out;
}

}  // namespace detail

/// Canonical module name: separators collapsed, any leading "model."
/// namespace and trailing ".weight"/".bias" removed. Idempotent.
inline std::string normalize_name(std::string_view raw) {
  std::string name = detail::collapse_dots(raw);
  for (bool changed = true; changed;) {
    changed = false;
    if (detail::starts_with(name, "model.")) {
      name.erase(0, 6);
      changed = true;
    }
    for (std::string_view suffix : {std::string_view(".weight"), std::string_view(".bias")}) {
      if (detail::ends_with(name, suffix)) {
        name.erase(name.size() - suffix.size());
        changed = true;
      }
    }
  }
  return name;
}

inline ModuleKind classify_kind(std::string_view name) {
  for (std::string_view p : {"q_proj", "k_proj", "v_proj", "o_proj"}) {
    if (detail::ends_with(name, p)) return ModuleKind::kAttentionProjection;
  }
  for (std::string_view p : {"gate_proj", "up_proj", "down_proj"}) {
    if (detail::ends_with(name, p)) return ModuleKind::kFeedforwardProjection;
  }
  throw Error(Errc::kUnclassifiableModule, "'" + std::string(name) + "'");
}

enum class TensorRole { kWeight, kBias, kOther };

inline TensorRole tensor_role(std::string_view raw) {
  const std::string collapsed = detail::collapse_dots(raw);
  if (detail::ends_with(collapsed, ".weight")) return TensorRole::kWeight;
  if (detail::ends_with(collapsed, ".bias")) return TensorRole::kBias;
  return TensorRole::kOther;
}

/// Raw tensor names behind each normalized module name.
struct ModuleTensors {
  std::string weight;
  std::optional<std::string> bias;
};

/// Maps normalized names to raw tensor names, so lookups work whether or
/// not a checkpoint uses the "model." namespace.
class ModuleIndex {
 public:
  explicit ModuleIndex(const CheckpointManifest& manifest) {
    for (const auto& t : manifest.tensors()) {
      const TensorRole role = tensor_role(t.name);
      if (role == TensorRole::kOther) continue;
      auto& slot = modules_[normalize_name(t.name)];
      std::string& target = role == TensorRole::kWeight ? slot.weight : slot.bias.emplace();
      if (!target.empty()) {
        throw Error(Errc::kDuplicateName, "tensors '" + target + "' and '" + t.name + "' normalize to the same name");
      }
      target = t.name;
    }
  }

  const ModuleTensors* find(std::string_view normalized) const {
    const auto it = modules_.find(std::string(normalized));
    return it == modules_.end() || it->second.weight.empty() ? nullptr : &it->second;
  }

  /// Raw name of "<normalized>.weight", if present.
  std::optional<std::string> weight_name(std::string_view normalized) const {
    if (const auto* m = find(normalized)) return m->weight;
    return std::nullopt;
  }

 private:
  std::unordered_map<std::string, ModuleTensors> modules_;
};

struct ModuleDescriptor {
  std::string normalized_name;
  std::array<std::uint64_t, 2> weight_shape{};  // [d_out, d_in]
  bool has_bias = false;
  ModuleKind kind = ModuleKind::kAttentionProjection;
  DType dtype = DType::kF32;

  bool operator==(const ModuleDescriptor&) const = default;
};

struct Exclusion {
  std::string name;
  std::string reason;

  bool operator==(const Exclusion&) const = default;
};

struct CandidateSet {
  std::vector<ModuleDescriptor> modules;
  std::vector<Exclusion> excluded;
};

namespace detail {

// "layers.<n>.<rest>" -> n, else nullopt.
inline std::optional<int> layer_index(std::string_view normalized) {
  if (!starts_with(normalized, "layers.")) return std::nullopt;
  std::string_view rest = normalized.substr(7);
  const auto dot = rest.find('.');
  const std::string_view digits = rest.substr(0, dot);
  if (digits.empty() || digits.size() > 9 ||
      !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    return std::nullopt;
  }
  return std::stoi(std::string(digits));
}

inline std::string exclusion_reason(std::string_view normalized, int n_layers) {
  if (normalized.find("embed") != std::string_view::npos) return "embedding";
  if (normalized.find("norm") != std::string_view::npos) return "normalization";
  if (normalized == "lm_head" || ends_with(normalized, "head")) return "output_head";
  if (const auto layer = layer_index(normalized); layer && *layer >= n_layers) return "outside_architecture";
  return "not_a_linear_module";
}

}  // namespace detail

/// Leaf linear modules declared by `arch`, in layer order. Every other
/// tensor is listed in `excluded` with a reason.
inline CandidateSet enumerate_candidates(const CheckpointManifest& manifest, const ModelConfig& arch) {
  const ModuleIndex index(manifest);
  CandidateSet out;
  std::map<std::string, bool> claimed;

  for (int layer = 0; layer < arch.n_layers; ++layer) {
    for (std::string_view projection : kLayerProjections) {
      const std::string name = layer_module_name(layer, projection);
      const ModuleTensors* tensors = index.find(name);
      if (tensors == nullptr) throw Error(Errc::kMissingTensor, "'" + name + ".weight'");
      const TensorRecord& weight = get_tensor(manifest, tensors->weight);
      if (weight.shape.size() != 2) {
        throw Error(Errc::kShapeMismatch, "'" + tensors->weight + "' is not a rank-2 weight");
      }
      if (tensors->bias) {
        const TensorRecord& bias = get_tensor(manifest, *tensors->bias);
        if (bias.shape.size() != 1 || bias.shape[0] != weight.shape[0]) {
          throw Error(Errc::kShapeMismatch, "'" + *tensors->bias + "' does not match its weight's output width");
        }
        claimed[*tensors->bias] = true;
      }
      claimed[tensors->weight] = true;
      out.modules.push_back(ModuleDescriptor{
          .normalized_name = name,
          .weight_shape = {weight.shape[0], weight.shape[1]},
          .has_bias = tensors->bias.has_value(),
          .kind = classify_kind(name),
          .dtype = weight.dtype,
      });
    }
  }

  for (const auto& t : manifest.tensors()) {
    if (claimed.contains(t.name)) continue;
    out.excluded.push_back({t.name, detail::exclusion_reason(normalize_name(t.name), arch.n_layers)});
  }
  return out;
}

struct CompatPair {
  ModuleDescriptor source;
  ModuleDescriptor target;
};

struct CompatSet {
  std::vector<CompatPair> pairs;
  std::vector<Exclusion> excluded;

  bool fully_compatible() const { return excluded.empty(); }

  const CompatPair* find(std::string_view name) const {
    for (const auto& p : pairs) {
      if (p.source.normalized_name == name) return &p;
    }
    return nullptr;
  }
};

/// Pairs modules with equal normalized name, equal weight shape and equal
/// bias presence. Everything else lands in `excluded` with shape_mismatch,
/// bias_mismatch or unmatched_name.
inline CompatSet diagnose_compatibility(const std::vector<ModuleDescriptor>& src,
                                        const std::vector<ModuleDescriptor>& tgt) {
  std::unordered_map<std::string, const ModuleDescriptor*> by_name;
  for (const auto& m : tgt) by_name.emplace(m.normalized_name, &m);

  CompatSet out;
  std::unordered_map<std::string, bool> seen;
  for (const auto& s : src) {
    if (seen.contains(s.normalized_name)) continue;
    seen[s.normalized_name] = true;
    const auto it = by_name.find(s.normalized_name);
    if (it == by_name.end()) {
      out.excluded.push_back({s.normalized_name, "unmatched_name"});
    } else if (s.weight_shape != it->second->weight_shape) {
      out.excluded.push_back({s.normalized_name, "shape_mismatch"});
    } else if (s.has_bias != it->second->has_bias) {
      out.excluded.push_back({s.normalized_name, "bias_mismatch"});
    } else {
      out.pairs.push_back({s, *it->second});
    }
  }
  for (const auto& t : tgt) {
    if (!seen.contains(t.normalized_name)) {
      seen[t.normalized_name] = true;
      out.excluded.push_back({t.normalized_name, "unmatched_name"});
    }
  }
  return out;
}

inline nlohmann::json compat_report_json(const CompatSet& compat) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : compat.pairs) {
    pairs.push_back({{"name", p.source.normalized_name},
                     {"shape", p.source.weight_shape},
                     {"kind", kind_name(p.source.kind)},
                     {"has_bias", p.source.has_bias}});
  }
  nlohmann::json excluded = nlohmann::json::array();
  for (const auto& e : compat.excluded) excluded.push_back({{"name", e.name}, {"reason", e.reason}});
  return {{"pairs", std::move(pairs)}, {"excluded", std::move(excluded)}, {"fully_compatible", compat.fully_compatible()}};
}

}  // namespace graft
