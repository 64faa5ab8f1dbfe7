// Copyright 2026 The graft Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "graft/parallel.hpp"
#include "graft/sweep.hpp"
#include "graft/toy_fixture.hpp"

namespace graft {
namespace {

struct PlantedSetup {
  ModelConfig config = toy::toy_config();
  toy::PlantedPair pair = toy::planted_pair(config);
  std::vector<PromptRecord> prompts = toy::planted_prompts();
  CompatSet compat = diagnose_compatibility(enumerate_candidates(pair.source, config).modules,
                                            enumerate_candidates(pair.target, config).modules);
  ModelHandle a{"model_a", config, pair.source};
  ModelHandle b{"model_b", config, pair.target};
};

TEST(Prompts, ParsesNativeAndForeignFields) {
  std::istringstream in(R"({"id":"q1","prompt":"What is 1+1?","answer":"2"}
{"unique_id":"test/algebra/1.json","problem":"Solve x.","answer":"\\frac{1}{2}"}

{"prompt":"No answer here"}
{"id":7,"prompt":"Numeric id","answer":3}
)");
  const auto records = parse_prompts(in);
  ASSERT_EQ(records.size(), 4u);
  EXPECT_EQ(records[0].id, "q1");
  EXPECT_EQ(records[0].answer, "2");
  EXPECT_EQ(records[1].id, "test/algebra/1.json");
  EXPECT_EQ(records[1].prompt, "Solve x.");
  EXPECT_EQ(records[1].answer, "\\frac{1}{2}");
  EXPECT_EQ(records[2].answer, std::nullopt);
  EXPECT_EQ(records[2].id, "line-4");
  EXPECT_EQ(records[3].id, "7");
  EXPECT_EQ(records[3].answer, "3");
  EXPECT_THROW(gold_answers(records), Error);

  std::istringstream bad("{\"id\":\"x\"}\n");
  EXPECT_THROW(parse_prompts(bad), Error);
  std::istringstream junk("not json\n");
  EXPECT_THROW(parse_prompts(junk), Error);
}

TEST(Prompts, SamplingIsSeededAndOrdered) {
  std::vector<PromptRecord> records;
  for (int i = 0; i < 500; ++i) records.push_back({"p" + std::to_string(i), "q", "a"});
  const auto a = sample_prompts(records, 50, 42);
  const auto b = sample_prompts(records, 50, 42);
  const auto c = sample_prompts(records, 50, 43);
  ASSERT_EQ(a.size(), 50u);
  std::vector<std::string> ids_a, ids_b, ids_c;
  for (const auto& r : a) ids_a.push_back(r.id);
  for (const auto& r : b) ids_b.push_back(r.id);
  for (const auto& r : c) ids_c.push_back(r.id);
  EXPECT_EQ(ids_a, ids_b);
  EXPECT_NE(ids_a, ids_c);
  EXPECT_EQ(std::set<std::string>(ids_a.begin(), ids_a.end()).size(), 50u);
  // File order is kept.
  for (std::size_t i = 1; i < a.size(); ++i) EXPECT_LT(std::stoi(a[i - 1].id.substr(1)), std::stoi(a[i].id.substr(1)));
  EXPECT_EQ(sample_prompts(records, 1000, 42).size(), 500u);
}

TEST(Prompts, FormatUsesSystemPrompt) {
  EXPECT_EQ(format_prompt("SYS", "Q?"), "SYS\n\nQ?\n");
}

TEST(Sweep, BestKPrefersSmallerKOnTies) {
  std::vector<SweepCell> cells(3);
  cells[0].k = 8;
  cells[1].k = 16;
  cells[2].k = 32;
  for (auto& c : cells) c.ok = true;
  cells[0].acc_after = {2, 10};
  cells[1].acc_after = {5, 10};
  cells[2].acc_after = {5, 10};
  EXPECT_EQ(best_k(cells), 16);
  cells[1].ok = false;
  EXPECT_EQ(best_k(cells), 32);
  EXPECT_EQ(best_k({}), std::nullopt);
}

TEST(Sweep, SelfSweepIsIdentity) {
  PlantedSetup s;
  EvalConfig cfg;
  cfg.token_budgets = {16, 32};
  cfg.k_values = {1, 4, 14};
  const auto compat = diagnose_compatibility(enumerate_candidates(s.pair.source, s.config).modules,
                                             enumerate_candidates(s.pair.source, s.config).modules);
  const auto report = run_sweep(cfg, s.a, ModelHandle{"model_a_copy", s.config, s.pair.source}, s.prompts, compat);
  ASSERT_EQ(report.budgets.size(), 2u);
  for (const auto& b : report.budgets) {
    ASSERT_TRUE(b.ok) << b.error;
    EXPECT_TRUE(b.direction.tie);
    for (const auto& row : b.lae.rows) EXPECT_EQ(row.score, 0.0);
    for (const auto& c : b.cells) {
      ASSERT_TRUE(c.ok) << c.error;
      EXPECT_EQ(c.acc_after, b.acc_target());
      EXPECT_EQ(c.tir, Ratio(1));
      EXPECT_EQ(c.recovery, std::nullopt);
    }
  }
}

TEST(Sweep, PlantedSingleModuleRecoversFully) {
  PlantedSetup s;
  EvalConfig cfg;
  cfg.token_budgets = {32, 64};
  cfg.k_values = {1};
  const auto report = run_sweep(cfg, s.a, s.b, s.prompts, s.compat);
  for (const auto& b : report.budgets) {
    ASSERT_TRUE(b.ok) << b.error;
    EXPECT_EQ(b.direction.direction, Direction::kAtoB);
    EXPECT_EQ(b.acc_source().percent(), Ratio(50));
    EXPECT_EQ(b.lae.rows[0].name, toy::kPlantedModule);
    ASSERT_EQ(b.cells.size(), 1u);
    const auto& c = b.cells[0];
    EXPECT_EQ(c.acc_after, b.acc_source());
    ASSERT_TRUE(c.recovery.has_value());
    EXPECT_EQ(c.recovery->fixed(1), "100.0");
    EXPECT_EQ(c.composition.ffn_count, 1);
  }
  const std::string csv = report_csv(report);
  EXPECT_NE(csv.find("32,A->B,1,0.0,50.0,50.0,--,100.0,1,0,0.000\n"), std::string::npos) << csv;
}

TEST(Sweep, DirectionFollowsBetterModel) {
  PlantedSetup s;
  EvalConfig cfg;
  cfg.token_budgets = {32};
  cfg.k_values = {1};
  // Swap roles: the planted source is now model B.
  const auto compat = diagnose_compatibility(enumerate_candidates(s.pair.target, s.config).modules,
                                             enumerate_candidates(s.pair.source, s.config).modules);
  const auto report = run_sweep(cfg, ModelHandle{"a", s.config, s.pair.target},
                                ModelHandle{"b", s.config, s.pair.source}, s.prompts, compat);
  const auto& b = report.budgets[0];
  ASSERT_TRUE(b.ok) << b.error;
  EXPECT_EQ(b.direction.direction, Direction::kBtoA);
  EXPECT_EQ(b.cells[0].plan.source_id, "b");
  EXPECT_EQ(b.cells[0].plan.target_id, "a");
  EXPECT_EQ(b.cells[0].recovery, Ratio(100));
}

TEST(Sweep, DefaultGridShape) {
  PlantedSetup s;
  const EvalConfig cfg;
  const auto report = run_sweep(cfg, s.a, s.b, s.prompts, s.compat);
  ASSERT_EQ(report.budgets.size(), 5u);
  std::size_t cells = 0;
  for (const auto& b : report.budgets) cells += b.cells.size();
  EXPECT_EQ(cells, 25u);
  EXPECT_EQ(report.errored_cells(), 0u);
  const std::string csv = report_csv(report);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 26);
  const auto j = report_json(report);
  EXPECT_EQ(j["rows"].size(), 25u);
  EXPECT_EQ(j["config"]["seed"], 42);
  EXPECT_EQ(j["config"]["k_values"], nlohmann::json::array({8, 16, 32, 64, 128}));
  EXPECT_EQ(j["config"]["token_budgets"], nlohmann::json::array({32, 64, 128, 256, 512}));
  // Every K above the 14 candidates clamps to the full set.
  for (const auto& b : report.budgets) {
    EXPECT_EQ(b.cells[1].plan.entries.size(), 14u);
    EXPECT_TRUE(b.cells[1].plan.truncated);
  }
}

TEST(Sweep, TeacherForcedScoringStillFindsPlantedModule) {
  PlantedSetup s;
  EvalConfig cfg;
  cfg.token_budgets = {32};
  cfg.k_values = {1};
  cfg.teacher_forced = true;
  const auto report = run_sweep(cfg, s.a, s.b, s.prompts, s.compat);
  ASSERT_TRUE(report.budgets[0].ok) << report.budgets[0].error;
  EXPECT_EQ(report.budgets[0].lae.rows[0].name, toy::kPlantedModule);
  EXPECT_TRUE(report_json(report)["config"]["teacher_forced"].get<bool>());
}

TEST(Sweep, FailingBudgetIsRecordedAndSweepContinues) {
  PlantedSetup s;
  EvalConfig cfg;
  cfg.token_budgets = {2000, 32};  // 2000 overflows max_position
  cfg.k_values = {1, 2};
  const auto report = run_sweep(cfg, s.a, s.b, s.prompts, s.compat);
  EXPECT_FALSE(report.budgets[0].ok);
  EXPECT_NE(report.budgets[0].error.find("max_position"), std::string::npos);
  EXPECT_TRUE(report.budgets[1].ok);
  EXPECT_EQ(report.errored_cells(), 2u);
  EXPECT_NE(report_csv(report).find("2000,--,1,ERROR"), std::string::npos);
}

TEST(Sweep, ConfigValidation) {
  EvalConfig cfg;
  cfg.k_values = {};
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.token_budgets = {0};
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.n_questions = 0;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Parallel, ResultsIndependentOfWorkerCount) {
  std::vector<int> one(1000), many(1000);
  parallel_for(one.size(), [&](std::size_t i) { one[i] = static_cast<int>(i * i % 97); }, 1);
  parallel_for(many.size(), [&](std::size_t i) { many[i] = static_cast<int>(i * i % 97); }, 7);
  EXPECT_EQ(one, many);
  EXPECT_THROW(parallel_for(10, [](std::size_t i) { if (i == 3) throw Error(Errc::kInvalidArgument, "boom"); }, 4),
               Error);
}

}  // namespace
}  // namespace graft
