// Copyright 2026 The graft Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "graft/error.hpp"

namespace graft {

enum class DType { kF32, kF16, kBF16 };

constexpr std::size_t dtype_width(DType dtype) {
  return dtype == DType::kF32 ? 4 : 2;
}

// Container spelling of each dtype.
constexpr std::string_view dtype_name(DType dtype) {
  switch (dtype) {
    case DType::kF32: return "F32";
    case DType::kF16: return "F16";
    case DType::kBF16: return "BF16";
  }
  return "?";
}

inline DType parse_dtype(std::string_view name) {
  if (name == "F32") return DType::kF32;
  if (name == "F16") return DType::kF16;
  if (name == "BF16") return DType::kBF16;
  throw Error(Errc::kUnsupportedDtype, "dtype '" + std::string(name) + "'");
}

// Element conversions. Bytes are little-endian on disk; this library
// assumes a little-endian host.
inline float load_element(DType dtype, const std::uint8_t* p) {
  switch (dtype) {
    case DType::kF32: {
      float v;
      std::memcpy(&v, p, 4);
      return v;
    }
    case DType::kF16: {
      std::uint16_t bits;
      std::memcpy(&bits, p, 2);
      return static_cast<float>(Eigen::numext::bit_cast<Eigen::half>(bits));
    }
    case DType::kBF16: {
      std::uint16_t bits;
      std::memcpy(&bits, p, 2);
      return static_cast<float>(Eigen::numext::bit_cast<Eigen::bfloat16>(bits));
    }
  }
  return 0.0f;
}

inline void store_element(DType dtype, float value, std::uint8_t* p) {
  switch (dtype) {
    case DType::kF32:
      std::memcpy(p, &value, 4);
      return;
    case DType::kF16: {
      const auto bits = Eigen::numext::bit_cast<std::uint16_t>(Eigen::half(value));
      std::memcpy(p, &bits, 2);
      return;
    }
    case DType::kBF16: {
      const auto bits = Eigen::numext::bit_cast<std::uint16_t>(Eigen::bfloat16(value));
      std::memcpy(p, &bits, 2);
      return;
    }
  }
}

inline std::vector<float> decode_to_f32(DType dtype, std::span<const std::uint8_t> bytes) {
  const std::size_t width = dtype_width(dtype);
  std::vector<float> out(bytes.size() / width);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = load_element(dtype, bytes.data() + i * width);
  return out;
}

inline std::vector<std::uint8_t> encode_from_f32(DType dtype, std::span<const float> values) {
  const std::size_t width = dtype_width(dtype);
  std::vector<std::uint8_t> out(values.size() * width);
  for (std::size_t i = 0; i < values.size(); ++i) store_element(dtype, values[i], out.data() + i * width);
  return out;
}

/// Re-encodes a buffer from one storage dtype to another, going through f32.
inline std::vector<std::uint8_t> convert_bytes(DType from, DType to, std::span<const std::uint8_t> bytes) {
  if (from == to) return {bytes.begin(), bytes.end()};
  const auto values = decode_to_f32(from, bytes);
  return encode_from_f32(to, values);
}

}  // namespace graft
