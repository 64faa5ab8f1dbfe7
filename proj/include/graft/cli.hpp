// Copyright 2026 The graft Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: diagnose, score, transplant, audit, eval, sweep
// and make-fixture. Exit codes: 0 success, 1 input error, 2 empty result,
// 64 usage.

#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "graft/checkpoint.hpp"
#include "graft/config.hpp"
#include "graft/evaluator.hpp"
#include "graft/lae.hpp"
#include "graft/module_graph.hpp"
#include "graft/runtime.hpp"
#include "graft/surgeon.hpp"
#include "graft/sweep.hpp"
#include "graft/toy_fixture.hpp"

namespace graft::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitEmpty = 2;
inline constexpr int kExitUsage = 64;

namespace fs = std::filesystem;

/// Highest "layers.<i>." index + 1 among the manifest's tensors.
inline int infer_layer_count(const CheckpointManifest& manifest) {
  int n = 0;
  for (const auto& t : manifest.tensors()) {
    if (const auto layer = graft::detail::layer_index(normalize_name(t.name))) n = std::max(n, *layer + 1);
  }
  return n;
}

inline ModelConfig arch_or_inferred(const std::string& arch_path, const CheckpointManifest& manifest) {
  if (!arch_path.empty()) return read_model_config(arch_path);
  ModelConfig c;
  c.n_layers = infer_layer_count(manifest);
  return c;
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::kIoFailure, "cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error(Errc::kIoFailure, "write failed for '" + path.string() + "'");
}

inline void emit(const std::string& out_path, const std::string& text, std::ostream& out) {
  if (out_path.empty() || out_path == "-") {
    out << text;
  } else {
    write_text(out_path, text);
  }
}

inline CompatSet diagnose_files(const std::string& source, const std::string& target, const std::string& source_arch,
                                const std::string& target_arch, CheckpointManifest* source_out = nullptr,
                                CheckpointManifest* target_out = nullptr) {
  const CheckpointManifest src = read_checkpoint(source);
  const CheckpointManifest tgt = read_checkpoint(target);
  const auto src_modules = enumerate_candidates(src, arch_or_inferred(source_arch, src)).modules;
  const auto tgt_modules = enumerate_candidates(tgt, arch_or_inferred(target_arch, tgt)).modules;
  if (source_out) *source_out = src;
  if (target_out) *target_out = tgt;
  return diagnose_compatibility(src_modules, tgt_modules);
}

inline std::vector<PromptRecord> load_prompt_sample(const std::string& path, int n, std::uint64_t seed) {
  if (n < 1) throw Error(Errc::kInvalidArgument, "--n must be >= 1");
  return sample_prompts(read_prompts(path), static_cast<std::size_t>(n), seed);
}

/// Parses and runs one command line. Output goes to `out`, diagnostics to `err`.
inline int run(const std::vector<std::string>& argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"graft: training-free module transplantation between compatible decoder models", "graft"};
  app.require_subcommand(1);

  // diagnose
  std::string d_source, d_target, d_arch, d_source_arch, d_target_arch, d_out;
  auto* diagnose = app.add_subcommand("diagnose", "Report compatible module pairs between two checkpoints");
  diagnose->add_option("--source", d_source, "Source checkpoint")->required();
  diagnose->add_option("--target", d_target, "Target checkpoint")->required();
  diagnose->add_option("--arch", d_arch, "Model config JSON used for both sides");
  diagnose->add_option("--source-arch", d_source_arch, "Model config JSON for the source");
  diagnose->add_option("--target-arch", d_target_arch, "Model config JSON for the target");
  diagnose->add_option("--out", d_out, "Write the JSON report here instead of stdout");

  // score
  std::string s_source, s_target, s_arch, s_source_arch, s_target_arch, s_prompts, s_csv, s_plan;
  int s_n = 50, s_budget = 128, s_k = 8;
  std::uint64_t s_seed = 42;
  bool s_forced = false;
  std::string s_system = std::string(kDefaultSystemPrompt);
  auto* score = app.add_subcommand("score", "Rank compatible modules by activation mismatch and emit a top-K plan");
  score->add_option("--source", s_source, "Source (donor) checkpoint")->required();
  score->add_option("--target", s_target, "Target (recipient) checkpoint")->required();
  score->add_option("--arch", s_arch, "Model config JSON used for both sides");
  score->add_option("--source-arch", s_source_arch, "Model config JSON for the source");
  score->add_option("--target-arch", s_target_arch, "Model config JSON for the target");
  score->add_option("--prompts", s_prompts, "Scoring prompts (JSON lines)")->required();
  score->add_option("--n", s_n, "Number of prompts to sample")->capture_default_str();
  score->add_option("--budget", s_budget, "max_new_tokens while tracing")->capture_default_str();
  score->add_option("--k", s_k, "Plan size")->capture_default_str();
  score->add_option("--seed", s_seed, "Sampling seed")->capture_default_str();
  score->add_option("--system-prompt", s_system, "System prompt prepended to each problem");
  score->add_flag("--teacher-forced", s_forced, "Trace the source on the target's generated tokens");
  score->add_option("--csv", s_csv, "Where to write the score table (default stdout)");
  score->add_option("--plan", s_plan, "Where to write the plan JSON")->required();

  // transplant
  std::string t_target, t_source, t_plan, t_out, t_arch;
  bool t_strict = false;
  auto* transplant = app.add_subcommand("transplant", "Copy planned modules from source into target");
  transplant->add_option("--target", t_target, "Target checkpoint")->required();
  transplant->add_option("--source", t_source, "Source checkpoint")->required();
  transplant->add_option("--plan", t_plan, "Plan JSON")->required();
  transplant->add_option("--out", t_out, "Output checkpoint")->required();
  transplant->add_option("--arch", t_arch, "Model config JSON (layer count is inferred otherwise)");
  transplant->add_flag("--strict-dtype", t_strict, "Refuse copies whose dtypes differ");

  // audit
  std::string a_before, a_after, a_source, a_plan;
  auto* audit = app.add_subcommand("audit", "Verify a transplanted checkpoint against its inputs");
  audit->add_option("--before", a_before, "Original target checkpoint")->required();
  audit->add_option("--after", a_after, "Transplanted checkpoint")->required();
  audit->add_option("--source", a_source, "Source checkpoint")->required();
  audit->add_option("--plan", a_plan, "Plan JSON")->required();

  // eval
  std::string e_model, e_arch, e_prompts, e_outputs;
  int e_n = 50, e_budget = 128;
  std::uint64_t e_seed = 42;
  std::string e_system = std::string(kDefaultSystemPrompt);
  auto* eval = app.add_subcommand("eval", "Boxed-answer accuracy of one checkpoint");
  eval->add_option("--model", e_model, "Checkpoint")->required();
  eval->add_option("--arch", e_arch, "Model config JSON")->required();
  eval->add_option("--prompts", e_prompts, "Prompts with answers (JSON lines)")->required();
  eval->add_option("--n", e_n, "Number of prompts to sample")->capture_default_str();
  eval->add_option("--budget", e_budget, "max_new_tokens")->capture_default_str();
  eval->add_option("--seed", e_seed, "Sampling seed")->capture_default_str();
  eval->add_option("--system-prompt", e_system, "System prompt prepended to each problem");
  eval->add_option("--outputs", e_outputs, "Also write generations as JSON lines");

  // sweep
  std::string w_a, w_b, w_arch_a, w_arch_b, w_prompts, w_out;
  EvalConfig w_cfg;
  bool w_stamp = false;
  auto* sweep = app.add_subcommand("sweep", "Evaluate the token-budget x K grid in both directions");
  sweep->add_option("--model-a", w_a, "Checkpoint A")->required();
  sweep->add_option("--model-b", w_b, "Checkpoint B")->required();
  sweep->add_option("--arch-a", w_arch_a, "Model config JSON for A")->required();
  sweep->add_option("--arch-b", w_arch_b, "Model config JSON for B")->required();
  sweep->add_option("--prompts", w_prompts, "Prompts with answers (JSON lines)")->required();
  sweep->add_option("--n", w_cfg.n_questions, "Number of prompts to sample")->capture_default_str();
  sweep->add_option("--budgets", w_cfg.token_budgets, "max_new_tokens values")->delimiter(',')->capture_default_str();
  sweep->add_option("--ks", w_cfg.k_values, "Plan sizes")->delimiter(',')->capture_default_str();
  sweep->add_option("--seed", w_cfg.seed, "Sampling seed")->capture_default_str();
  sweep->add_option("--system-prompt", w_cfg.system_prompt, "System prompt prepended to each problem");
  sweep->add_flag("--teacher-forced", w_cfg.teacher_forced, "Trace the source on the target's generated tokens");
  sweep->add_option("--out-dir", w_out, "Output directory")->required();
  sweep->add_flag("--stamp", w_stamp, "Record a generation timestamp in report.json");

  // make-fixture
  std::string f_out;
  std::uint64_t f_seed = 7;
  float f_noise = 3.0f;
  auto* fixture = app.add_subcommand("make-fixture", "Write a synthetic planted model pair and prompt set");
  fixture->add_option("--out-dir", f_out, "Output directory")->required();
  fixture->add_option("--seed", f_seed, "Generator seed")->capture_default_str();
  fixture->add_option("--noise", f_noise, "Noise std added to the target's perturbed module")->capture_default_str();

  std::vector<std::string> args(argv.rbegin(), argv.rend());
  if (!args.empty()) args.pop_back();  // program name
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n" << "run with --help for usage\n";
    return kExitUsage;
  }

  try {
    if (*diagnose) {
      const std::string src_arch = d_source_arch.empty() ? d_arch : d_source_arch;
      const std::string tgt_arch = d_target_arch.empty() ? d_arch : d_target_arch;
      const CompatSet compat = diagnose_files(d_source, d_target, src_arch, tgt_arch);
      emit(d_out, compat_report_json(compat).dump(2) + "\n", out);
      return compat.pairs.empty() ? kExitEmpty : kExitOk;
    }

    if (*score) {
      const std::string src_arch = s_source_arch.empty() ? s_arch : s_source_arch;
      const std::string tgt_arch = s_target_arch.empty() ? s_arch : s_target_arch;
      if (src_arch.empty() || tgt_arch.empty()) throw Error(Errc::kInvalidArgument, "score needs --arch or both --source-arch/--target-arch");
      CheckpointManifest src, tgt;
      const CompatSet compat = diagnose_files(s_source, s_target, src_arch, tgt_arch, &src, &tgt);
      if (compat.pairs.empty()) {
        err << "no compatible module pairs\n";
        return kExitEmpty;
      }
      const auto prompts = load_prompt_sample(s_prompts, s_n, s_seed);
      const ModelState source_state = load_model(read_model_config(src_arch), src);
      const ModelState target_state = load_model(read_model_config(tgt_arch), tgt);
      const auto target_run = run_prompts(target_state, prompts, s_system, s_budget, s_seed, true);
      std::vector<ActivationTrace> source_traces, target_traces;
      for (const auto& r : target_run.results) target_traces.push_back(*r.trace);
      if (s_forced) {
        DecodeSettings settings;
        settings.max_new_tokens = s_budget;
        settings.seed = s_seed;
        for (std::size_t i = 0; i < prompts.size(); ++i) {
          auto trace = trace_forced(source_state, toy_tokenize(format_prompt(s_system, prompts[i].prompt)),
                                    target_run.results[i].tokens, settings);
          trace.prompt_id = prompts[i].id;
          source_traces.push_back(std::move(trace));
        }
      } else {
        const auto source_run = run_prompts(source_state, prompts, s_system, s_budget, s_seed, true);
        for (const auto& r : source_run.results) source_traces.push_back(*r.trace);
      }
      const LaeTable table = lae_scores(source_traces, target_traces, compat);
      const TransplantPlan plan = select_top_k(table, s_k, s_source, s_target);
      emit(s_csv, lae_table_csv(table), out);
      write_text(s_plan, plan_to_json(plan).dump(2) + "\n");
      if (plan.truncated) {
        err << "note: K=" << s_k << " exceeds the " << table.rows.size() << " scored modules; plan holds all of them\n";
      }
      return kExitOk;
    }

    if (*transplant) {
      const CheckpointManifest tgt = read_checkpoint(t_target);
      const CheckpointManifest src = read_checkpoint(t_source);
      const auto src_modules = enumerate_candidates(src, arch_or_inferred(t_arch, src)).modules;
      const auto tgt_modules = enumerate_candidates(tgt, arch_or_inferred(t_arch, tgt)).modules;
      const CompatSet compat = diagnose_compatibility(src_modules, tgt_modules);
      const TransplantPlan plan = read_plan(t_plan);
      TransplantOptions options;
      options.strict_dtype = t_strict;
      options.provenance = Provenance{plan.source_id, plan.target_id};
      const auto result = apply_transplant(tgt, src, plan, compat, options);
      for (const auto& w : result.warnings) err << "warning: " << w << "\n";
      write_checkpoint(result.manifest, t_out);
      out << nlohmann::json({{"out", t_out},
                             {"modules", plan.entries.size()},
                             {"plan_sha256", result.manifest.metadata().at("graft.plan_sha256")},
                             {"dtype_conversions", result.warnings.size()}})
                 .dump()
          << "\n";
      return kExitOk;
    }

    if (*audit) {
      const auto report =
          verify_transplant(read_checkpoint(a_before), read_checkpoint(a_after), read_checkpoint(a_source), read_plan(a_plan));
      nlohmann::json entries = nlohmann::json::array();
      for (const auto& e : report.entries) {
        nlohmann::json j = {{"name", e.name}, {"status", std::string(audit_status_name(e.status))}};
        if (!e.detail.empty()) j["detail"] = e.detail;
        entries.push_back(std::move(j));
      }
      out << nlohmann::json({{"clean", report.clean()}, {"violations", report.violations().size()}, {"tensors", entries}})
                 .dump(2)
          << "\n";
      return report.clean() ? kExitOk : kExitInput;
    }

    if (*eval) {
      const auto prompts = load_prompt_sample(e_prompts, e_n, e_seed);
      const ModelState model = load_model(read_model_config(e_arch), read_checkpoint(e_model));
      const auto run = run_prompts(model, prompts, e_system, e_budget, e_seed, false);
      const Accuracy acc = accuracy(run.texts, gold_answers(prompts));
      if (!e_outputs.empty()) {
        std::string lines;
        for (std::size_t i = 0; i < prompts.size(); ++i) {
          const auto boxed = extract_boxed(run.texts[i]);
          lines += nlohmann::json({{"id", prompts[i].id},
                                   {"output", run.texts[i]},
                                   {"boxed", boxed ? nlohmann::json(*boxed) : nlohmann::json(nullptr)},
                                   {"correct", is_correct(run.texts[i], *prompts[i].answer)}})
                       .dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) +
                   "\n";
        }
        write_text(e_outputs, lines);
      }
      out << nlohmann::json({{"correct", acc.correct},
                             {"n", acc.total},
                             {"accuracy", acc.percent().value()},
                             {"accuracy_text", acc.percent().fixed(1)},
                             {"max_new_tokens", e_budget}})
                 .dump()
          << "\n";
      return kExitOk;
    }

    if (*sweep) {
      w_cfg.prompt_set = w_prompts;
      w_cfg.validate();
      ModelHandle a{w_a, read_model_config(w_arch_a), read_checkpoint(w_a)};
      ModelHandle b{w_b, read_model_config(w_arch_b), read_checkpoint(w_b)};
      const CompatSet compat = diagnose_compatibility(enumerate_candidates(a.manifest, a.config).modules,
                                                      enumerate_candidates(b.manifest, b.config).modules);
      if (compat.pairs.empty()) {
        err << "no compatible module pairs\n";
        return kExitEmpty;
      }
      const auto prompts = load_prompt_sample(w_prompts, w_cfg.n_questions, w_cfg.seed);
      const EvalReport report = run_sweep(w_cfg, a, b, prompts, compat);

      const fs::path dir(w_out);
      fs::create_directories(dir / "plans");
      nlohmann::json j = report_json(report);
      j["prompts"] = w_prompts;
      if (w_stamp) {
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        char buf[32];
        std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
        j["generated_at"] = buf;
      }
      const std::size_t errored = report.errored_cells();
      j["errored_cells"] = errored;
      write_text(dir / "report.json", j.dump(2) + "\n");
      write_text(dir / "report.csv", report_csv(report));
      for (const auto& block : report.budgets) {
        for (const auto& cell : block.cells) {
          if (!cell.ok) continue;
          write_text(dir / "plans" / ("plan_t" + std::to_string(cell.tokens) + "_k" + std::to_string(cell.k) + ".json"),
                     plan_to_json(cell.plan).dump(2) + "\n");
        }
      }
      if (errored > 0) {
        err << errored << " sweep cell(s) failed; see report.json\n";
        return kExitInput;
      }
      return kExitOk;
    }

    if (*fixture) {
      const fs::path dir(f_out);
      fs::create_directories(dir);
      const ModelConfig config = toy::toy_config();
      const auto pair = toy::planted_pair(config, f_seed, f_noise);
      write_checkpoint(pair.source, dir / "model_a.safetensors");
      write_checkpoint(pair.target, dir / "model_b.safetensors");
      write_model_config(config, dir / "config.json");
      toy::write_prompts(toy::planted_prompts(), dir / "prompts.jsonl");
      out << nlohmann::json({{"dir", dir.string()}, {"perturbed_module", pair.perturbed_module}}).dump() << "\n";
      return kExitOk;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitUsage;
}

}  // namespace graft::cli
