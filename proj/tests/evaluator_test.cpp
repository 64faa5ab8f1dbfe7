// Copyright 2026 The graft Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "graft/evaluator.hpp"
#include "scoring_cases.hpp"

namespace graft {
namespace {

TEST(Extract, Examples) {
  EXPECT_EQ(extract_boxed(R"(thus \boxed{42}.)"), "42");
  EXPECT_EQ(extract_boxed(R"(\boxed{\frac{1}{2}} ... \boxed{7})"), "7");
  EXPECT_EQ(extract_boxed("no box here"), std::nullopt);
  EXPECT_EQ(extract_boxed(R"(\boxed{\frac{a}{b}})"), "\\frac{a}{b}");
  EXPECT_EQ(extract_boxed(R"(\boxed{unclosed)"), std::nullopt);
}

TEST(Normalize, Examples) {
  EXPECT_EQ(normalize_answer(" $\\dfrac{1}{2}$ "), "\\frac{1}{2}");
  EXPECT_EQ(normalize_answer("42."), "42");
  EXPECT_EQ(normalize_answer("\\text{Yes}"), "Yes");
  EXPECT_EQ(normalize_answer("\\left( 1 , 2 \\right)"), "(1,2)");
  EXPECT_EQ(normalize_answer(""), "");
}

TEST(Normalize, Idempotent) {
  const std::vector<std::string> atoms = {"$", " ", ".", ",", ";", "\\left", "\\right", "\\dfrac", "\\tfrac",
                                          "\\text{", "}", "{", "1", "x", "\\", "\\frac", "(", ")"};
  std::mt19937_64 rng(31);
  for (int i = 0; i < 5000; ++i) {
    std::string s;
    const int n = static_cast<int>(rng() % 12);
    for (int k = 0; k < n; ++k) s += atoms[rng() % atoms.size()];
    const std::string once = normalize_answer(s);
    ASSERT_EQ(normalize_answer(once), once) << "input '" << s << "'";
  }
}

TEST(Scoring, HandLabeledTable) {
  for (const auto& c : testing::kScoringCases) {
    EXPECT_EQ(is_correct(c.output, c.gold), c.correct) << "output '" << c.output << "' gold '" << c.gold << "'";
  }
}

TEST(Accuracy, Examples) {
  std::vector<std::string> outputs(50, "nothing"), golds(50, "1");
  for (int i = 0; i < 3; ++i) outputs[static_cast<std::size_t>(i)] = "\\boxed{1}";
  const Accuracy three = accuracy(outputs, golds);
  EXPECT_EQ(three.correct, 3);
  EXPECT_EQ(three.percent().fixed(1), "6.0");
  EXPECT_EQ(three.percent(), Ratio(6));

  EXPECT_EQ(accuracy(std::vector<std::string>(4, "\\boxed{1}"), std::vector<std::string>(4, "1")).percent(), Ratio(100));
  EXPECT_EQ(accuracy(std::vector<std::string>(4, "1"), std::vector<std::string>(4, "1")).percent(), Ratio(0));
  try {
    accuracy({"a"}, {"a", "b"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kLengthMismatch);
  }
}

TEST(Accuracy, InvariantUnderDecoration) {
  const std::vector<std::string> golds = {"7", "\\frac{1}{2}", "(1,2)", "Monday"};
  const std::vector<std::vector<std::string>> decorated = {
      {"$7$", "7.", " 7 ", "\\text{7}"},
      {"\\dfrac{1}{2}", "$\\tfrac{1}{2}$", "\\frac{1}{2};", "\\frac{1} {2}"},
      {"\\left(1,2\\right)", "( 1, 2 )", "$(1,2)$", "(1,2)."},
      {"\\text{Monday}", "Monday,", "$\\text{Monday}$", " Monday"},
  };
  for (std::size_t g = 0; g < golds.size(); ++g) {
    for (const auto& variant : decorated[g]) {
      const std::vector<std::string> plain = {"\\boxed{" + golds[g] + "}"};
      const std::vector<std::string> fancy = {"\\boxed{" + variant + "}"};
      EXPECT_EQ(accuracy(fancy, {golds[g]}), accuracy(plain, {golds[g]})) << variant;
      EXPECT_EQ(accuracy(plain, {variant}), accuracy(plain, {golds[g]})) << variant;
    }
  }
}

TEST(Metrics, TirExamples) {
  EXPECT_EQ(tir(Ratio(12), Ratio(6))->fixed(2), "2.00");
  EXPECT_EQ(tir(Ratio(14), Ratio(6))->fixed(3), "2.333");
  EXPECT_EQ(*tir(Ratio(22), Ratio(22)), Ratio(1));
  EXPECT_EQ(tir(Ratio(10), Ratio(0)), std::nullopt);
  EXPECT_NEAR(*tir(12.0, 6.0), 2.0, 1e-12);
}

TEST(Metrics, RecoveryExamples) {
  EXPECT_EQ(recovery(Ratio(12), Ratio(6), Ratio(8))->fixed(1), "300.0");
  EXPECT_EQ(recovery(Ratio(14), Ratio(6), Ratio(30))->fixed(1), "33.3");
  EXPECT_EQ(recovery(Ratio(36), Ratio(34), Ratio(34)), std::nullopt);
  EXPECT_EQ(recovery(Ratio(4), Ratio(6), Ratio(8))->fixed(1), "-100.0");
  EXPECT_NEAR(*recovery(26.0, 16.0, 30.0), 71.428571, 1e-5);
}

TEST(Metrics, RatioFormatting) {
  EXPECT_EQ(Ratio(5, 8).fixed(2), "0.63");
  EXPECT_EQ(Ratio(-5, 8).fixed(2), "-0.63");
  EXPECT_EQ(Ratio(1, 3).fixed(0), "0");
  EXPECT_EQ(Ratio(-1, 1000).fixed(1), "0.0");
  EXPECT_EQ(Ratio::from_decimal(71.4), Ratio(357, 5));
  EXPECT_THROW(Ratio(1, 0), Error);
}

TEST(Direction, Examples) {
  EXPECT_EQ(choose_direction(30.0, 6.0).direction, Direction::kAtoB);
  EXPECT_EQ(choose_direction(6.0, 10.0).direction, Direction::kBtoA);
  const auto tie = choose_direction(12.0, 12.0);
  EXPECT_EQ(tie.direction, Direction::kAtoB);
  EXPECT_TRUE(tie.tie);
  EXPECT_FALSE(choose_direction(1.0, 2.0).tie);
  EXPECT_EQ(direction_name(Direction::kBtoA), "B->A");
}

TEST(SystemPrompt, Verbatim) {
  EXPECT_EQ(kDefaultSystemPrompt,
            "You are a careful math problem solver. Solve step by step and give ONLY the final answer wrapped in "
            "\\boxed{...}.");
}

}  // namespace
}  // namespace graft
