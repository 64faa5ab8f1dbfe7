// Copyright 2026 The graft Authors
// SPDX-License-Identifier: Apache-2.0
//
// Single-file tensor container: an 8-byte little-endian header length,
// a JSON header mapping tensor name -> {dtype, shape, data_offsets},
// then one contiguous data region. Offsets are [begin, end) relative to
// the start of the data region. An optional "__metadata__" entry holds
// a string -> string map.
//
// Nothing in here converts numbers. Bytes read are the bytes written.

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

#include "graft/dtype.hpp"
#include "graft/error.hpp"

namespace graft {

inline constexpr std::string_view kMetadataKey = "__metadata__";
inline constexpr std::uint64_t kMaxHeaderBytes = 100ull << 20;

struct TensorRecord {
  std::string name;
  DType dtype = DType::kF32;
  std::vector<std::uint64_t> shape;
  std::vector<std::uint8_t> data;

  /// Element count, or nullopt when the product overflows 64 bits.
  std::optional<std::uint64_t> checked_numel() const {
    std::uint64_t n = 1;
    for (std::uint64_t d : shape) {
      if (d != 0 && n > UINT64_MAX / d) return std::nullopt;
      n *= d;
    }
    return n;
  }

  std::uint64_t numel() const { return checked_numel().value_or(0); }

  bool operator==(const TensorRecord&) const = default;
};

/// Ordered, name-unique tensor store plus free-form string metadata.
class CheckpointManifest {
 public:
  CheckpointManifest() = default;

  void add(TensorRecord record) {
    if (record.name == kMetadataKey) throw Error(Errc::kInvalidArgument, "reserved tensor name '__metadata__'");
    if (index_.contains(record.name)) throw Error(Errc::kDuplicateName, "tensor '" + record.name + "' already present");
    const auto numel = record.checked_numel();
    if (!numel || *numel > UINT64_MAX / dtype_width(record.dtype) ||
        record.data.size() != *numel * dtype_width(record.dtype)) {
      throw Error(Errc::kShapeMismatch, "tensor '" + record.name + "' byte length does not match shape x dtype width");
    }
    index_.emplace(record.name, tensors_.size());
    tensors_.push_back(std::move(record));
  }

  /// Swaps in a new record for an existing name, keeping its position.
  void replace(TensorRecord record) {
    const auto it = index_.find(record.name);
    if (it == index_.end()) throw Error(Errc::kNotFound, "tensor '" + record.name + "'");
    const auto numel = record.checked_numel();
    if (!numel || record.data.size() != *numel * dtype_width(record.dtype)) {
      throw Error(Errc::kShapeMismatch, "tensor '" + record.name + "' byte length does not match shape x dtype width");
    }
    tensors_[it->second] = std::move(record);
  }

  const TensorRecord* find(std::string_view name) const {
    const auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : &tensors_[it->second];
  }

  bool contains(std::string_view name) const { return find(name) != nullptr; }

  const std::vector<TensorRecord>& tensors() const { return tensors_; }
  std::size_t size() const { return tensors_.size(); }
  bool empty() const { return tensors_.empty(); }

  std::map<std::string, std::string>& metadata() { return metadata_; }
  const std::map<std::string, std::string>& metadata() const { return metadata_; }

  bool operator==(const CheckpointManifest& other) const {
    return tensors_ == other.tensors_ && metadata_ == other.metadata_;
  }

 private:
  std::vector<TensorRecord> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
  std::map<std::string, std::string> metadata_;
};

inline const TensorRecord& get_tensor(const CheckpointManifest& manifest, std::string_view name) {
  if (const auto* record = manifest.find(name)) return *record;
  throw Error(Errc::kNotFound, "tensor '" + std::string(name) + "'");
}

namespace detail {

inline std::uint64_t read_u64_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

inline void append_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

[[noreturn]] inline void malformed(const std::string& why) { throw Error(Errc::kMalformedHeader, why); }

inline std::uint64_t as_u64(const nlohmann::ordered_json& v, const std::string& what) {
  if (!v.is_number_unsigned()) malformed(what + " must be a non-negative integer");
  return v.get<std::uint64_t>();
}

}  // namespace detail

/// Decodes a whole container held in memory. Every input either parses or
/// raises MalformedHeader / UnsupportedDtype.
inline CheckpointManifest parse_checkpoint(std::span<const std::uint8_t> file) {
  using nlohmann::ordered_json;
  if (file.size() < 8) detail::malformed("file shorter than the 8-byte length prefix");
  const std::uint64_t header_len = detail::read_u64_le(file.data());
  if (header_len > file.size() - 8) detail::malformed("header length exceeds file size");
  if (header_len > kMaxHeaderBytes) detail::malformed("header length exceeds limit");

  const std::string_view header_text(reinterpret_cast<const char*>(file.data() + 8), header_len);
  const auto data_region = file.subspan(8 + header_len);

  // nlohmann keeps the last of duplicated keys; detect them while parsing.
  std::vector<std::string> top_keys;
  bool duplicate = false;
  const auto on_event = [&](int depth, nlohmann::json::parse_event_t event, ordered_json& parsed) {
    if (depth == 1 && event == nlohmann::json::parse_event_t::key) {
      const auto& key = parsed.get_ref<const std::string&>();
      if (std::find(top_keys.begin(), top_keys.end(), key) != top_keys.end()) duplicate = true;
      top_keys.push_back(key);
    }
    return true;
  };

  ordered_json header;
  try {
    header = ordered_json::parse(header_text.begin(), header_text.end(), on_event);
  } catch (const nlohmann::json::exception& e) {
    detail::malformed(std::string("invalid header document: ") + e.what());
  }
  if (duplicate) detail::malformed("duplicate key in header");
  if (!header.is_object()) detail::malformed("header is not a JSON object");

  CheckpointManifest manifest;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> spans;

  for (const auto& [key, entry] : header.items()) {
    if (key == kMetadataKey) {
      if (!entry.is_object()) detail::malformed("__metadata__ must be an object");
      for (const auto& [mk, mv] : entry.items()) {
        if (!mv.is_string()) detail::malformed("__metadata__ values must be strings");
        manifest.metadata()[mk] = mv.get<std::string>();
      }
      continue;
    }
    if (!entry.is_object()) detail::malformed("entry '" + key + "' is not an object");
    const auto dtype_it = entry.find("dtype");
    const auto shape_it = entry.find("shape");
    const auto offsets_it = entry.find("data_offsets");
    if (dtype_it == entry.end() || shape_it == entry.end() || offsets_it == entry.end()) {
      detail::malformed("entry '" + key + "' lacks dtype/shape/data_offsets");
    }
    if (!dtype_it->is_string()) detail::malformed("entry '" + key + "' dtype is not a string");
    const DType dtype = parse_dtype(dtype_it->get<std::string>());

    if (!shape_it->is_array()) detail::malformed("entry '" + key + "' shape is not an array");
    TensorRecord record;
    record.name = key;
    record.dtype = dtype;
    for (const auto& dim : *shape_it) record.shape.push_back(detail::as_u64(dim, "shape dimension"));

    if (!offsets_it->is_array() || offsets_it->size() != 2) {
      detail::malformed("entry '" + key + "' data_offsets must be [begin, end]");
    }
    const std::uint64_t begin = detail::as_u64((*offsets_it)[0], "data offset");
    const std::uint64_t end = detail::as_u64((*offsets_it)[1], "data offset");
    if (begin > end || end > data_region.size()) detail::malformed("entry '" + key + "' offsets out of bounds");

    const auto numel = record.checked_numel();
    if (!numel || *numel > UINT64_MAX / dtype_width(dtype) || end - begin != *numel * dtype_width(dtype)) {
      detail::malformed("entry '" + key + "' byte range does not match shape x dtype width");
    }
    record.data.assign(data_region.begin() + static_cast<std::ptrdiff_t>(begin),
                       data_region.begin() + static_cast<std::ptrdiff_t>(end));
    spans.emplace_back(begin, end);
    manifest.add(std::move(record));
  }

  std::sort(spans.begin(), spans.end());
  for (std::size_t i = 1; i < spans.size(); ++i) {
    if (spans[i].first < spans[i - 1].second) detail::malformed("overlapping tensor byte ranges");
  }
  return manifest;
}

/// Encodes a manifest. Data is laid out contiguously in tensor order and the
/// header is space-padded to a multiple of 8 bytes.
inline std::vector<std::uint8_t> serialize_checkpoint(const CheckpointManifest& manifest) {
  using nlohmann::ordered_json;
  ordered_json header = ordered_json::object();
  if (!manifest.metadata().empty()) {
    ordered_json meta = ordered_json::object();
    for (const auto& [k, v] : manifest.metadata()) meta[k] = v;
    header[std::string(kMetadataKey)] = std::move(meta);
  }
  std::uint64_t offset = 0;
  for (const auto& t : manifest.tensors()) {
    ordered_json entry = ordered_json::object();
    entry["dtype"] = std::string(dtype_name(t.dtype));
    entry["shape"] = t.shape;
    entry["data_offsets"] = {offset, offset + t.data.size()};
    header[t.name] = std::move(entry);
    offset += t.data.size();
  }

  std::string text;
  try {
    text = header.dump();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kInvalidArgument, std::string("header not encodable: ") + e.what());
  }
  text.append((8 - text.size() % 8) % 8, ' ');

  std::vector<std::uint8_t> out;
  out.reserve(8 + text.size() + offset);
  detail::append_u64_le(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& t : manifest.tensors()) out.insert(out.end(), t.data.begin(), t.data.end());
  return out;
}

inline CheckpointManifest read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIoFailure, "cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(Errc::kIoFailure, "read failed for '" + path.string() + "'");
  return parse_checkpoint(bytes);
}

inline void write_checkpoint(const CheckpointManifest& manifest, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(manifest);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::kIoFailure, "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::kIoFailure, "write failed for '" + path.string() + "'");
}

}  // namespace graft
