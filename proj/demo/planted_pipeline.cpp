// Copyright 2026 The graft Authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end walk through the library on a synthetic pair: diagnose,
// trace, score, transplant the top module, audit and re-evaluate.

#include <iostream>

#include "graft/graft.hpp"
#include "graft/toy_fixture.hpp"

int main() {
  using namespace graft;
  const ModelConfig config = toy::toy_config();
  const auto pair = toy::planted_pair(config);
  const auto prompts = toy::planted_prompts();
  const auto golds = gold_answers(prompts);
  const std::string system(kDefaultSystemPrompt);
  const int budget = 32;

  const CompatSet compat = diagnose_compatibility(enumerate_candidates(pair.source, config).modules,
                                                  enumerate_candidates(pair.target, config).modules);
  std::cout << "compatible pairs: " << compat.pairs.size() << "\n";

  const ModelState source = load_model(config, pair.source);
  const ModelState target = load_model(config, pair.target);
  const auto source_run = run_prompts(source, prompts, system, budget, 42, true);
  const auto target_run = run_prompts(target, prompts, system, budget, 42, true);
  std::cout << "source says: " << source_run.texts[0] << "\n";
  std::cout << "target says: " << target_run.texts[0] << "\n";

  const Accuracy acc_source = accuracy(source_run.texts, golds);
  const Accuracy acc_target = accuracy(target_run.texts, golds);

  std::vector<ActivationTrace> source_traces, target_traces;
  for (const auto& r : source_run.results) source_traces.push_back(*r.trace);
  for (const auto& r : target_run.results) target_traces.push_back(*r.trace);
  const LaeTable table = lae_scores(source_traces, target_traces, compat);
  std::cout << "top modules by activation mismatch:\n";
  for (std::size_t i = 0; i < 4 && i < table.rows.size(); ++i) {
    std::cout << "  " << table.rows[i].name << "  " << table.rows[i].score << "\n";
  }

  const TransplantPlan plan = select_top_k(table, 1, "model_a", "model_b");
  const auto grafted = apply_transplant(pair.target, pair.source, plan, compat);
  std::cout << "audit clean: " << std::boolalpha
            << verify_transplant(pair.target, grafted.manifest, pair.source, plan).clean() << "\n";

  const ModelState after = load_model(config, grafted.manifest);
  const Accuracy acc_after = accuracy(run_prompts(after, prompts, system, budget, 42, false).texts, golds);
  const auto rec = recovery(acc_after.percent(), acc_target.percent(), acc_source.percent());
  std::cout << "acc target " << acc_target.percent().fixed(1) << "  source " << acc_source.percent().fixed(1)
            << "  after " << acc_after.percent().fixed(1) << "  recovery " << (rec ? rec->fixed(1) : "--") << "\n";
  return 0;
}
