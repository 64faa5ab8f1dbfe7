// Copyright 2026 The graft Authors
// SPDX-License-Identifier: Apache-2.0
//
// Budget x K evaluation grid. For every decoding budget both models are
// evaluated, the better one becomes the source, activation traces from the
// same runs are scored, and the top-K modules are transplanted into the
// weaker model for each K.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "graft/checkpoint.hpp"
#include "graft/config.hpp"
#include "graft/evaluator.hpp"
#include "graft/lae.hpp"
#include "graft/module_graph.hpp"
#include "graft/parallel.hpp"
#include "graft/runtime.hpp"
#include "graft/surgeon.hpp"
#include "graft/tokenizer.hpp"

namespace graft {

// ---- prompt files ----

struct PromptRecord {
  std::string id;
  std::string prompt;
  std::optional<std::string> answer;
};

/// JSON-lines, one {id, prompt, answer} object per line. MATH-500 style
/// {unique_id, problem, answer} records are accepted as well.
inline std::vector<PromptRecord> parse_prompts(std::istream& in) {
  std::vector<PromptRecord> records;
  std::string line;
  for (int line_no = 1; std::getline(in, line); ++line_no) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = "prompt line " + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::kInvalidArgument, where + ": " + e.what());
    }
    if (!j.is_object()) throw Error(Errc::kInvalidArgument, where + ": not an object");
    PromptRecord r;
    const auto text_field = [&](const char* key) -> std::optional<std::string> {
      if (!j.contains(key) || j[key].is_null()) return std::nullopt;
      if (j[key].is_string()) return j[key].get<std::string>();
      if (j[key].is_number()) return j[key].dump();
      throw Error(Errc::kInvalidArgument, where + ": field '" + key + "' must be a string");
    };
    r.id = text_field("id").value_or(text_field("unique_id").value_or("line-" + std::to_string(line_no)));
    auto prompt = text_field("prompt");
    if (!prompt) prompt = text_field("problem");
    if (!prompt) throw Error(Errc::kInvalidArgument, where + ": missing 'prompt'");
    r.prompt = std::move(*prompt);
    r.answer = text_field("answer");
    records.push_back(std::move(r));
  }
  return records;
}

inline std::vector<PromptRecord> read_prompts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIoFailure, "cannot open '" + path.string() + "'");
  return parse_prompts(in);
}

/// Seeded uniform sample of n records without replacement, kept in file
/// order. Returns everything when n >= records.size().
inline std::vector<PromptRecord> sample_prompts(const std::vector<PromptRecord>& records, std::size_t n,
                                                std::uint64_t seed) {
  if (n >= records.size()) return records;
  std::vector<std::size_t> idx(records.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  // mt19937_64 output is fully specified, the standard distributions are
  // not; draw bounded integers by rejection to stay portable.
  std::mt19937_64 rng(seed);
  const auto bounded = [&rng](std::uint64_t bound) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t v;
    do v = rng();
    while (v >= limit);
    return v % bound;
  };
  for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + bounded(idx.size() - i)]);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  std::vector<PromptRecord> out;
  out.reserve(n);
  for (std::size_t i : idx) out.push_back(records[i]);
  return out;
}

inline std::string format_prompt(std::string_view system_prompt, std::string_view problem) {
  std::string text(system_prompt);
  text += "\n\n";
  text += problem;
  text += "\n";
  return text;
}

// ---- evaluation ----

struct EvalConfig {
  std::filesystem::path prompt_set;
  int n_questions = 50;
  std::vector<int> token_budgets = {32, 64, 128, 256, 512};
  std::vector<int> k_values = {8, 16, 32, 64, 128};
  std::uint64_t seed = 42;
  std::string system_prompt = std::string(kDefaultSystemPrompt);
  // Trace the source on the target's own tokens instead of letting each
  // model generate independently.
  bool teacher_forced = false;

  void validate() const {
    if (n_questions < 1) throw Error(Errc::kInvalidArgument, "n_questions must be >= 1");
    if (token_budgets.empty() || k_values.empty()) throw Error(Errc::kInvalidArgument, "empty sweep grid");
    for (int b : token_budgets) {
      if (b < 1) throw Error(Errc::kInvalidArgument, "token budgets must be positive");
    }
    for (int k : k_values) {
      if (k < 1) throw Error(Errc::kInvalidArgument, "K values must be positive");
    }
  }
};

struct ModelHandle {
  std::string id;
  ModelConfig config;
  CheckpointManifest manifest;
};

struct PromptSetRun {
  std::vector<std::string> texts;
  std::vector<DecodeResult> results;
};

/// Decodes every prompt, prompts in parallel, results in prompt order.
inline PromptSetRun run_prompts(const ModelState& model, const std::vector<PromptRecord>& prompts,
                                const std::string& system_prompt, int budget, std::uint64_t seed, bool tap) {
  DecodeSettings settings;
  settings.max_new_tokens = budget;
  settings.seed = seed;
  PromptSetRun run;
  run.texts.resize(prompts.size());
  run.results.resize(prompts.size());
  parallel_for(prompts.size(), [&](std::size_t i) {
    const auto tokens = toy_tokenize(format_prompt(system_prompt, prompts[i].prompt));
    run.results[i] = greedy_decode(model, tokens, settings, tap);
    run.texts[i] = toy_detokenize(run.results[i].tokens);
    if (run.results[i].trace) run.results[i].trace->prompt_id = prompts[i].id;
  });
  return run;
}

inline std::vector<std::string> gold_answers(const std::vector<PromptRecord>& prompts) {
  std::vector<std::string> golds;
  for (const auto& p : prompts) {
    if (!p.answer) throw Error(Errc::kInvalidArgument, "prompt '" + p.id + "' has no answer to score against");
    golds.push_back(*p.answer);
  }
  return golds;
}

struct SweepCell {
  int tokens = 0;
  int k = 0;
  bool ok = false;
  std::string error;
  Accuracy acc_after;
  std::optional<Ratio> tir;
  std::optional<Ratio> recovery;
  Composition composition;
  TransplantPlan plan;
};

struct BudgetResult {
  int tokens = 0;
  bool ok = false;
  std::string error;
  Accuracy acc_a;
  Accuracy acc_b;
  DirectionChoice direction;
  std::optional<int> best_k;
  LaeTable lae;
  std::vector<SweepCell> cells;

  const Accuracy& acc_source() const { return direction.direction == Direction::kAtoB ? acc_a : acc_b; }
  const Accuracy& acc_target() const { return direction.direction == Direction::kAtoB ? acc_b : acc_a; }
};

struct EvalReport {
  EvalConfig config;
  std::string model_a;
  std::string model_b;
  std::size_t n_prompts = 0;
  std::size_t compatible_pairs = 0;
  std::vector<BudgetResult> budgets;

  std::size_t errored_cells() const {
    std::size_t n = 0;
    for (const auto& b : budgets) {
      if (!b.ok) n += b.cells.empty() ? config.k_values.size() : 0;
      for (const auto& c : b.cells) n += c.ok ? 0 : 1;
    }
    return n;
  }
};

/// Smallest K among the best Acc_after values of the successful cells.
inline std::optional<int> best_k(const std::vector<SweepCell>& cells) {
  const SweepCell* best = nullptr;
  for (const auto& c : cells) {
    if (!c.ok) continue;
    const Ratio acc = c.acc_after.percent();
    if (best == nullptr || acc > best->acc_after.percent() ||
        (acc == best->acc_after.percent() && c.k < best->k)) {
      best = &c;
    }
  }
  return best ? std::optional(best->k) : std::nullopt;
}

/// Runs the full grid. A failing budget or cell is recorded and the sweep
/// moves on.
inline EvalReport run_sweep(const EvalConfig& cfg, const ModelHandle& model_a, const ModelHandle& model_b,
                            const std::vector<PromptRecord>& prompts, const CompatSet& compat) {
  cfg.validate();
  if (compat.pairs.empty()) throw Error(Errc::kInvalidArgument, "models share no compatible modules");
  if (prompts.empty()) throw Error(Errc::kInvalidArgument, "no prompts to evaluate");
  const auto golds = gold_answers(prompts);

  EvalReport report;
  report.config = cfg;
  report.model_a = model_a.id;
  report.model_b = model_b.id;
  report.n_prompts = prompts.size();
  report.compatible_pairs = compat.pairs.size();

  const ModelState state_a = load_model(model_a.config, model_a.manifest);
  const ModelState state_b = load_model(model_b.config, model_b.manifest);

  for (int budget : cfg.token_budgets) {
    BudgetResult block;
    block.tokens = budget;
    try {
      const auto run_a = run_prompts(state_a, prompts, cfg.system_prompt, budget, cfg.seed, true);
      const auto run_b = run_prompts(state_b, prompts, cfg.system_prompt, budget, cfg.seed, true);
      block.acc_a = accuracy(run_a.texts, golds);
      block.acc_b = accuracy(run_b.texts, golds);
      block.direction = choose_direction(block.acc_a.percent(), block.acc_b.percent());

      const bool a_donates = block.direction.direction == Direction::kAtoB;
      const ModelHandle& source = a_donates ? model_a : model_b;
      const ModelHandle& target = a_donates ? model_b : model_a;
      const ModelState& source_state = a_donates ? state_a : state_b;
      const PromptSetRun& source_run = a_donates ? run_a : run_b;
      const PromptSetRun& target_run = a_donates ? run_b : run_a;

      // Both compat orientations pair the same names; re-orient so that
      // pair.source describes the donor.
      CompatSet oriented = compat;
      if (!a_donates) {
        for (auto& p : oriented.pairs) std::swap(p.source, p.target);
      }

      std::vector<ActivationTrace> source_traces, target_traces;
      for (std::size_t i = 0; i < prompts.size(); ++i) {
        target_traces.push_back(*target_run.results[i].trace);
        if (!cfg.teacher_forced) source_traces.push_back(*source_run.results[i].trace);
      }
      if (cfg.teacher_forced) {
        source_traces.resize(prompts.size());
        DecodeSettings settings;
        settings.max_new_tokens = budget;
        settings.seed = cfg.seed;
        parallel_for(prompts.size(), [&](std::size_t i) {
          const auto tokens = toy_tokenize(format_prompt(cfg.system_prompt, prompts[i].prompt));
          source_traces[i] = trace_forced(source_state, tokens, target_run.results[i].tokens, settings);
          source_traces[i].prompt_id = prompts[i].id;
        });
      }
      block.lae = lae_scores(source_traces, target_traces, oriented);
      block.ok = true;

      // Plans that clamp to the same module list evaluate identically.
      std::map<std::vector<std::string>, Accuracy> evaluated;
      for (int k : cfg.k_values) {
        SweepCell cell;
        cell.tokens = budget;
        cell.k = k;
        try {
          cell.plan = select_top_k(block.lae, k, source.id, target.id);
          cell.composition = composition_stats(cell.plan);
          std::vector<std::string> key;
          for (const auto& e : cell.plan.entries) key.push_back(e.name);
          if (auto hit = evaluated.find(key); hit != evaluated.end()) {
            cell.acc_after = hit->second;
          } else {
            const auto grafted = apply_transplant(target.manifest, source.manifest, cell.plan, oriented);
            const ModelState state = load_model(target.config, grafted.manifest);
            const auto run = run_prompts(state, prompts, cfg.system_prompt, budget, cfg.seed, false);
            cell.acc_after = accuracy(run.texts, golds);
            evaluated.emplace(key, cell.acc_after);
          }
          cell.tir = tir(cell.acc_after.percent(), block.acc_target().percent());
          cell.recovery = recovery(cell.acc_after.percent(), block.acc_target().percent(),
                                   block.acc_source().percent());
          cell.ok = true;
        } catch (const std::exception& e) {
          cell.error = e.what();
        }
        block.cells.push_back(std::move(cell));
      }
      block.best_k = best_k(block.cells);
    } catch (const std::exception& e) {
      block.ok = false;
      block.error = e.what();
    }
    report.budgets.push_back(std::move(block));
  }
  return report;
}

// ---- report emission ----

namespace detail {

inline nlohmann::json optional_value(const std::optional<Ratio>& r) {
  return r ? nlohmann::json(r->value()) : nlohmann::json(nullptr);
}

inline std::string optional_text(const std::optional<Ratio>& r, int places) { return r ? r->fixed(places) : "--"; }

}  // namespace detail

inline nlohmann::json report_json(const EvalReport& report) {
  using nlohmann::json;
  const auto& cfg = report.config;
  json budgets = json::array();
  json rows = json::array();
  for (const auto& b : report.budgets) {
    json block = {{"tokens", b.tokens}, {"ok", b.ok}};
    if (!b.ok) {
      block["error"] = b.error;
      budgets.push_back(std::move(block));
      continue;
    }
    block["direction"] = std::string(direction_name(b.direction.direction));
    block["tie"] = b.direction.tie;
    block["acc_a"] = b.acc_a.percent().value();
    block["acc_b"] = b.acc_b.percent().value();
    block["acc_target"] = b.acc_target().percent().value();
    block["acc_source"] = b.acc_source().percent().value();
    block["best_k"] = b.best_k ? json(*b.best_k) : json(nullptr);
    json lae = json::array();
    for (const auto& r : b.lae.rows) {
      lae.push_back({{"name", r.name}, {"kind", std::string(kind_name(r.kind))}, {"score", r.score},
                     {"n_samples", r.n_samples}});
    }
    block["lae"] = std::move(lae);
    budgets.push_back(std::move(block));

    for (const auto& c : b.cells) {
      json row = {{"tokens", c.tokens}, {"direction", std::string(direction_name(b.direction.direction))},
                  {"k", c.k}, {"ok", c.ok}};
      if (!c.ok) {
        row["error"] = c.error;
        rows.push_back(std::move(row));
        continue;
      }
      row["acc_target"] = b.acc_target().percent().value();
      row["acc_source"] = b.acc_source().percent().value();
      row["acc_after"] = c.acc_after.percent().value();
      row["best_k"] = b.best_k ? json(*b.best_k) : json(nullptr);
      row["tir"] = detail::optional_value(c.tir);
      row["recovery"] = detail::optional_value(c.recovery);
      row["composition"] = {{"ffn_count", c.composition.ffn_count},
                            {"attn_count", c.composition.attn_count},
                            {"attn_ratio", c.composition.attn_ratio()}};
      row["plan_size"] = c.plan.entries.size();
      rows.push_back(std::move(row));
    }
  }
  return {{"model_a", report.model_a},
          {"model_b", report.model_b},
          {"config",
           {{"n_questions", cfg.n_questions},
            {"n_evaluated", report.n_prompts},
            {"token_budgets", cfg.token_budgets},
            {"k_values", cfg.k_values},
            {"seed", cfg.seed},
            {"sampling", "greedy"},
            {"top_p", 1.0},
            {"teacher_forced", cfg.teacher_forced},
            {"system_prompt", cfg.system_prompt}}},
          {"compatible_pairs", report.compatible_pairs},
          {"budgets", std::move(budgets)},
          {"rows", std::move(rows)}};
}

/// One line per budget x K cell; undefined metrics print as "--".
inline std::string report_csv(const EvalReport& report) {
  std::ostringstream out;
  out << "tokens,direction,k,acc_target,acc_source,acc_after,tir,recovery,ffn_count,attn_count,attn_ratio\n";
  for (const auto& b : report.budgets) {
    if (!b.ok) {
      for (int k : report.config.k_values) out << b.tokens << ",--," << k << ",ERROR,,,,,,,\n";
      continue;
    }
    for (const auto& c : b.cells) {
      out << c.tokens << ',' << direction_name(b.direction.direction) << ',' << c.k << ',';
      if (!c.ok) {
        out << "ERROR,,,,,,,\n";
        continue;
      }
      out << b.acc_target().percent().fixed(1) << ',' << b.acc_source().percent().fixed(1) << ','
          << c.acc_after.percent().fixed(1) << ',' << detail::optional_text(c.tir, 3) << ','
          << detail::optional_text(c.recovery, 1) << ',' << c.composition.ffn_count << ','
          << c.composition.attn_count << ',' << c.composition.attn_ratio_text() << '\n';
    }
  }
  return out.str();
}

}  // namespace graft
