// Copyright 2026 The graft Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstdio>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "graft/checkpoint.hpp"
#include "graft/dtype.hpp"
#include "graft/error.hpp"
#include "graft/lae.hpp"
#include "graft/module_graph.hpp"

namespace graft {

inline constexpr std::string_view kToolkitVersion = "0.1.0";

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(Errc::kIoFailure, "sha256 failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

inline std::string plan_sha256(const TransplantPlan& plan) { return sha256_hex(plan_to_json(plan).dump()); }

struct Provenance {
  std::string source_id;
  std::string target_id;
};

struct TransplantOptions {
  // Refuse dtype-mismatched copies instead of converting to the target dtype.
  bool strict_dtype = false;
  // When set, graft.* keys are stamped into the output metadata.
  std::optional<Provenance> provenance;
};

struct TransplantResult {
  CheckpointManifest manifest;
  std::vector<std::string> warnings;
};

namespace detail {

inline const TensorRecord& module_tensor(const CheckpointManifest& manifest, const ModuleIndex& index,
                                         const std::string& name, bool bias, const char* side) {
  const ModuleTensors* tensors = index.find(name);
  if (tensors == nullptr || (bias && !tensors->bias)) {
    throw Error(Errc::kShapeDrift, std::string(side) + " no longer has '" + name + (bias ? ".bias'" : ".weight'"));
  }
  return get_tensor(manifest, bias ? *tensors->bias : tensors->weight);
}

}  // namespace detail

/// Builds the transplanted checkpoint: each planned module's weight (and
/// bias, when present) is copied from `source`; every other tensor of
/// `target` is carried over byte for byte. Target dtypes are kept.
inline TransplantResult apply_transplant(const CheckpointManifest& target, const CheckpointManifest& source,
                                         const TransplantPlan& plan, const CompatSet& compat,
                                         const TransplantOptions& options = {}) {
  const ModuleIndex target_index(target);
  const ModuleIndex source_index(source);
  TransplantResult result{target, {}};

  std::set<std::string> seen;
  for (const auto& entry : plan.entries) {
    if (!seen.insert(entry.name).second) {
      throw Error(Errc::kInvalidArgument, "duplicate plan entry '" + entry.name + "'");
    }
    const CompatPair* pair = compat.find(entry.name);
    if (pair == nullptr) throw Error(Errc::kPlanOutsideCompat, "'" + entry.name + "'");

    for (bool bias : {false, true}) {
      if (bias && !pair->target.has_bias) break;
      const TensorRecord& from = detail::module_tensor(source, source_index, entry.name, bias, "source");
      const TensorRecord& into = detail::module_tensor(target, target_index, entry.name, bias, "target");
      const std::vector<std::uint64_t> expected =
          bias ? std::vector<std::uint64_t>{pair->target.weight_shape[0]}
               : std::vector<std::uint64_t>{pair->target.weight_shape[0], pair->target.weight_shape[1]};
      if (from.shape != expected || into.shape != expected) {
        throw Error(Errc::kShapeDrift, "'" + entry.name + "' changed shape since diagnosis");
      }

      TensorRecord copied = into;
      if (from.dtype == into.dtype) {
        copied.data = from.data;
      } else if (options.strict_dtype) {
        throw Error(Errc::kDtypeMismatch, "'" + from.name + "' is " + std::string(dtype_name(from.dtype)) +
                                              " but target slot is " + std::string(dtype_name(into.dtype)));
      } else {
        copied.data = convert_bytes(from.dtype, into.dtype, from.data);
        result.warnings.push_back("'" + into.name + "': converted " + std::string(dtype_name(from.dtype)) + " -> " +
                                  std::string(dtype_name(into.dtype)));
      }
      result.manifest.replace(std::move(copied));
    }
  }

  if (options.provenance) {
    auto& meta = result.manifest.metadata();
    meta["graft.source"] = options.provenance->source_id;
    meta["graft.target"] = options.provenance->target_id;
    meta["graft.k"] = std::to_string(plan.k);
    meta["graft.plan_sha256"] = plan_sha256(plan);
    meta["graft.version"] = std::string(kToolkitVersion);
  }
  return result;
}

enum class AuditStatus { kCopiedFromSource, kUntouched, kViolation };

inline std::string_view audit_status_name(AuditStatus s) {
  switch (s) {
    case AuditStatus::kCopiedFromSource: return "copied_from_source";
    case AuditStatus::kUntouched: return "untouched";
    case AuditStatus::kViolation: return "VIOLATION";
  }
  return "?";
}

struct AuditEntry {
  std::string name;
  AuditStatus status = AuditStatus::kUntouched;
  std::string detail;
};

struct AuditReport {
  std::vector<AuditEntry> entries;

  std::vector<AuditEntry> violations() const {
    std::vector<AuditEntry> out;
    for (const auto& e : entries) {
      if (e.status == AuditStatus::kViolation) out.push_back(e);
    }
    return out;
  }
  bool clean() const { return violations().empty(); }
};

/// Checks that `after` equals `before` except for planned modules, which
/// must hold the source's values in the receiving slot's dtype.
inline AuditReport verify_transplant(const CheckpointManifest& before, const CheckpointManifest& after,
                                     const CheckpointManifest& source, const TransplantPlan& plan) {
  std::set<std::string> planned;
  for (const auto& e : plan.entries) planned.insert(e.name);
  const ModuleIndex source_index(source);

  AuditReport report;
  for (const auto& prior : before.tensors()) {
    const TensorRecord* now = after.find(prior.name);
    if (now == nullptr) {
      report.entries.push_back({prior.name, AuditStatus::kViolation, "missing from transplanted checkpoint"});
      continue;
    }
    const TensorRole role = tensor_role(prior.name);
    const std::string module = normalize_name(prior.name);
    if (role != TensorRole::kOther && planned.contains(module)) {
      const ModuleTensors* src = source_index.find(module);
      const std::optional<std::string> src_name =
          src == nullptr ? std::nullopt : (role == TensorRole::kWeight ? std::optional(src->weight) : src->bias);
      const TensorRecord* from = src_name ? source.find(*src_name) : nullptr;
      if (from == nullptr) {
        report.entries.push_back({prior.name, AuditStatus::kViolation, "planned module absent from source"});
        continue;
      }
      const bool ok = now->dtype == prior.dtype && now->shape == from->shape &&
                      now->data == convert_bytes(from->dtype, now->dtype, from->data);
      report.entries.push_back(ok ? AuditEntry{prior.name, AuditStatus::kCopiedFromSource, ""}
                                  : AuditEntry{prior.name, AuditStatus::kViolation, "does not match source"});
      continue;
    }
    report.entries.push_back(*now == prior ? AuditEntry{prior.name, AuditStatus::kUntouched, ""}
                                           : AuditEntry{prior.name, AuditStatus::kViolation, "modified outside plan"});
  }
  for (const auto& t : after.tensors()) {
    if (!before.contains(t.name)) {
      report.entries.push_back({t.name, AuditStatus::kViolation, "not present before transplant"});
    }
  }
  return report;
}

}  // namespace graft
