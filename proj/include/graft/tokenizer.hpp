// Copyright 2026 The graft Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace graft {

// Byte-level toy vocabulary: ids 0-255 are bytes, then two specials.
inline constexpr int kBosToken = 256;
inline constexpr int kEosToken = 257;
inline constexpr int kToyVocabSize = 258;

inline std::vector<int> toy_tokenize(std::string_view text) {
  std::vector<int> tokens;
  tokens.reserve(text.size() + 1);
  tokens.push_back(kBosToken);
  for (unsigned char c : text) tokens.push_back(c);
  return tokens;
}

/// Drops BOS/EOS and any id outside the byte range.
inline std::string toy_detokenize(const std::vector<int>& tokens) {
  std::string out;
  out.reserve(tokens.size());
  for (int t : tokens) {
    if (t >= 0 && t < 256) out.push_back(static_cast<char>(t));
  }
  return out;
}

}  // namespace graft
