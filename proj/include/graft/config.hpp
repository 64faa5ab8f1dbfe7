// Copyright 2026 The graft Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"

#include "graft/error.hpp"

namespace graft {

/// Architecture of a small decoder-only model.
struct ModelConfig {
  int n_layers = 0;
  int d_model = 0;
  int n_heads = 0;
  int d_ff = 0;
  int vocab_size = 0;
  int max_position = 0;
  float norm_eps = 1e-5f;
  float rope_theta = 10000.0f;
  bool tie_word_embeddings = false;

  int head_dim() const { return d_model / n_heads; }

  void validate() const {
    // A zero-layer model is a legal (if useless) architecture.
    if (n_layers < 0 || d_model < 1 || n_heads < 1 || d_ff < 1 || vocab_size < 1 || max_position < 1) {
      throw Error(Errc::kInvalidArgument, "model dimensions must be >= 1");
    }
    if (d_model % n_heads != 0) throw Error(Errc::kInvalidArgument, "d_model must be divisible by n_heads");
    if (head_dim() % 2 != 0) throw Error(Errc::kInvalidArgument, "head dimension must be even for rotary embedding");
    if (!(norm_eps > 0.0f)) throw Error(Errc::kInvalidArgument, "norm_eps must be positive");
  }

  bool operator==(const ModelConfig&) const = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"n_layers", c.n_layers},   {"d_model", c.d_model},         {"n_heads", c.n_heads},
                     {"d_ff", c.d_ff},           {"vocab_size", c.vocab_size},   {"max_position", c.max_position},
                     {"norm_eps", c.norm_eps}};
  if (c.rope_theta != 10000.0f) j["rope_theta"] = c.rope_theta;
  if (c.tie_word_embeddings) j["tie_word_embeddings"] = true;
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("n_layers").get_to(c.n_layers);
  j.at("d_model").get_to(c.d_model);
  j.at("n_heads").get_to(c.n_heads);
  j.at("d_ff").get_to(c.d_ff);
  j.at("vocab_size").get_to(c.vocab_size);
  j.at("max_position").get_to(c.max_position);
  j.at("norm_eps").get_to(c.norm_eps);
  c.rope_theta = j.value("rope_theta", 10000.0f);
  c.tie_word_embeddings = j.value("tie_word_embeddings", false);
}

inline ModelConfig read_model_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIoFailure, "cannot open '" + path.string() + "'");
  ModelConfig config;
  try {
    config = nlohmann::json::parse(in).get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kInvalidArgument, "bad model config '" + path.string() + "': " + e.what());
  }
  config.validate();
  return config;
}

inline void write_model_config(const ModelConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::kIoFailure, "cannot open '" + path.string() + "' for writing");
  out << nlohmann::json(config).dump(2) << "\n";
}

}  // namespace graft
