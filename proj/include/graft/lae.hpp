// Copyright 2026 The graft Authors
// SPDX-License-Identifier: Apache-2.0
//
// Layer-wise activation evaluation: for each compatible module m,
//
//   s(m) = mean over prompts x and aligned steps t <= T(x) of |a*_m(t) - a_m(t)|
//
// where a* is the source response, a the target response, and T(x) the
// shorter of the two generations for prompt x. The mean is taken over all
// (prompt, step) samples jointly.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "graft/error.hpp"
#include "graft/module_graph.hpp"
#include "graft/runtime.hpp"

namespace graft {

struct LaeRow {
  std::string name;
  ModuleKind kind = ModuleKind::kAttentionProjection;
  double score = 0.0;
  std::int64_t n_samples = 0;

  bool operator==(const LaeRow&) const = default;
};

/// Rows sorted by (score desc, name asc).
struct LaeTable {
  std::vector<LaeRow> rows;
};

inline bool lae_order(const LaeRow& a, const LaeRow& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.name < b.name;
}

/// Scores every compat pair. Trace sets are matched by prompt id; summation
/// runs in source-trace order so the result does not depend on threading.
inline LaeTable lae_scores(const std::vector<ActivationTrace>& source, const std::vector<ActivationTrace>& target,
                           const CompatSet& compat) {
  std::unordered_map<std::string, const ActivationTrace*> target_by_id;
  for (const auto& t : target) target_by_id.emplace(t.prompt_id, &t);

  struct Aligned {
    const ActivationTrace* src;
    const ActivationTrace* tgt;
    int steps;
  };
  std::vector<Aligned> aligned;
  std::int64_t n_samples = 0;
  for (const auto& s : source) {
    const auto it = target_by_id.find(s.prompt_id);
    if (it == target_by_id.end()) {
      throw Error(Errc::kInvalidArgument, "prompt '" + s.prompt_id + "' has no target trace");
    }
    const int steps = std::min(s.t_gen, it->second->t_gen);
    if (steps <= 0) continue;
    aligned.push_back({&s, it->second, steps});
    n_samples += steps;
  }
  if (source.size() != target.size()) throw Error(Errc::kInvalidArgument, "trace sets cover different prompts");
  if (n_samples == 0) throw Error(Errc::kEmptyOverlap, "no prompt produced an aligned decoding step");

  LaeTable table;
  table.rows.reserve(compat.pairs.size());
  for (const auto& pair : compat.pairs) {
    const std::string& name = pair.source.normalized_name;
    double sum = 0.0;
    for (const auto& a : aligned) {
      const auto s_it = a.src->values.find(name);
      const auto t_it = a.tgt->values.find(name);
      if (s_it == a.src->values.end() || t_it == a.tgt->values.end()) {
        throw Error(Errc::kMissingModuleTrace, "'" + name + "' for prompt '" + a.src->prompt_id + "'");
      }
      if (static_cast<int>(s_it->second.size()) < a.steps || static_cast<int>(t_it->second.size()) < a.steps) {
        throw Error(Errc::kMissingModuleTrace, "'" + name + "' trace shorter than t_gen");
      }
      for (int t = 0; t < a.steps; ++t) sum += std::fabs(s_it->second[t] - t_it->second[t]);
    }
    table.rows.push_back({name, pair.source.kind, sum / static_cast<double>(n_samples), n_samples});
  }
  std::sort(table.rows.begin(), table.rows.end(), lae_order);
  return table;
}

struct PlanEntry {
  std::string name;
  ModuleKind kind = ModuleKind::kAttentionProjection;
  double score = 0.0;

  bool operator==(const PlanEntry&) const = default;
};

/// Top-K modules to copy from source into target.
struct TransplantPlan {
  std::string source_id;
  std::string target_id;
  int k = 0;
  bool truncated = false;  // fewer than k scored pairs were available
  std::vector<PlanEntry> entries;

  bool operator==(const TransplantPlan&) const = default;
};

inline TransplantPlan select_top_k(const LaeTable& table, int k, std::string source_id = "source",
                                   std::string target_id = "target") {
  if (k < 1) throw Error(Errc::kInvalidArgument, "K must be >= 1");
  std::vector<LaeRow> rows = table.rows;
  std::stable_sort(rows.begin(), rows.end(), lae_order);
  TransplantPlan plan{std::move(source_id), std::move(target_id), k, false, {}};
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), rows.size());
  plan.truncated = take < static_cast<std::size_t>(k);
  for (std::size_t i = 0; i < take; ++i) plan.entries.push_back({rows[i].name, rows[i].kind, rows[i].score});
  return plan;
}

struct Composition {
  int ffn_count = 0;
  int attn_count = 0;

  /// attn / (ffn + attn); 0 for an empty plan.
  double attn_ratio() const {
    const int total = ffn_count + attn_count;
    return total == 0 ? 0.0 : static_cast<double>(attn_count) / total;
  }

  /// attn_ratio rounded half-up to three decimals, computed on the exact
  /// fraction so values like 18/32 = 0.5625 print as 0.563.
  std::string attn_ratio_text() const {
    const long total = ffn_count + attn_count;
    const long milli = total == 0 ? 0 : (2000L * attn_count + total) / (2 * total);
    std::ostringstream out;
    out << milli / 1000 << '.' << (milli % 1000 < 100 ? "0" : "") << (milli % 1000 < 10 ? "0" : "") << milli % 1000;
    return out.str();
  }
};

inline Composition composition_stats(const TransplantPlan& plan) {
  Composition c;
  for (const auto& e : plan.entries) {
    (e.kind == ModuleKind::kAttentionProjection ? c.attn_count : c.ffn_count) += 1;
  }
  return c;
}

// ---- interchange formats ----

inline std::string lae_table_csv(const LaeTable& table) {
  std::ostringstream out;
  out << "name,kind,score,n_samples\n";
  out.precision(17);
  for (const auto& r : table.rows) out << r.name << ',' << kind_name(r.kind) << ',' << r.score << ',' << r.n_samples << '\n';
  return out.str();
}

inline nlohmann::json plan_to_json(const TransplantPlan& plan) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : plan.entries) {
    entries.push_back({{"name", e.name}, {"kind", std::string(kind_name(e.kind))}, {"score", e.score}});
  }
  nlohmann::json j = {{"source", plan.source_id}, {"target", plan.target_id}, {"k", plan.k}, {"entries", entries}};
  if (plan.truncated) j["truncated"] = true;
  return j;
}

inline TransplantPlan plan_from_json(const nlohmann::json& j) {
  TransplantPlan plan;
  try {
    plan.source_id = j.at("source").get<std::string>();
    plan.target_id = j.at("target").get<std::string>();
    plan.k = j.at("k").get<int>();
    plan.truncated = j.value("truncated", false);
    for (const auto& e : j.at("entries")) {
      PlanEntry entry;
      entry.name = e.at("name").get<std::string>();
      entry.kind = e.contains("kind") ? parse_kind(e.at("kind").get<std::string>()) : classify_kind(entry.name);
      entry.score = e.value("score", 0.0);
      for (const auto& prior : plan.entries) {
        if (prior.name == entry.name) throw Error(Errc::kInvalidArgument, "duplicate plan entry '" + entry.name + "'");
      }
      plan.entries.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kInvalidArgument, std::string("bad plan document: ") + e.what());
  }
  return plan;
}

inline TransplantPlan read_plan(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIoFailure, "cannot open '" + path.string() + "'");
  try {
    return plan_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kInvalidArgument, "bad plan file '" + path.string() + "': " + e.what());
  }
}

}  // namespace graft
