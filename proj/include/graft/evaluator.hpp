// Copyright 2026 The graft Authors
// SPDX-License-Identifier: Apache-2.0
//
// Boxed-answer exact-match scoring and transfer metrics.
//
//   Acc      = 100 * (1/N) * sum_i [norm(boxed(output_i)) == norm(gold_i)]
//   TIR      = Acc_after / Acc_target
//   Recovery = 100 * (Acc_after - Acc_target) / (Acc_source - Acc_target)
//
// Percentages are exact fractions; rounding happens only when formatting.

#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "graft/error.hpp"

namespace graft {

inline constexpr std::string_view kDefaultSystemPrompt =
    "You are a careful math problem solver. Solve step by step and give ONLY the final answer wrapped in "
    "\\boxed{...}.";

// ---- answer extraction ----

namespace detail {

// Index one past the brace closing the group opened at `open`, or npos.
// Backslash-escaped braces do not count.
inline std::size_t match_brace(std::string_view s, std::size_t open) {
  int depth = 0;
  for (std::size_t i = open; i < s.size(); ++i) {
    if (s[i] == '\\') {
      ++i;
      continue;
    }
    if (s[i] == '{') ++depth;
    if (s[i] == '}' && --depth == 0) return i + 1;
  }
  return std::string_view::npos;
}

}  // namespace detail

/// Contents of the last balanced \boxed{...} group.
inline std::optional<std::string> extract_boxed(std::string_view text) {
  constexpr std::string_view kOpen = "\\boxed{";
  std::size_t from = text.size();
  while (from != 0) {
    const std::size_t at = text.rfind(kOpen, from - 1);
    if (at == std::string_view::npos) return std::nullopt;
    const std::size_t brace = at + kOpen.size() - 1;
    const std::size_t end = detail::match_brace(text, brace);
    if (end != std::string_view::npos) return std::string(text.substr(brace + 1, end - brace - 2));
    from = at;
  }
  return std::nullopt;
}

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t at = s.find(from); at != std::string::npos; at = s.find(from, at + to.size())) {
    s.replace(at, from.size(), to);
  }
}

// Drops \left and \right delimiter prefixes, leaving e.g. \leftarrow alone.
inline void drop_sizing(std::string& s, std::string_view cmd) {
  for (std::size_t at = s.find(cmd); at != std::string::npos; at = s.find(cmd, at)) {
    const std::size_t next = at + cmd.size();
    if (next < s.size() && std::isalpha(static_cast<unsigned char>(s[next]))) {
      at = next;
      continue;
    }
    s.erase(at, cmd.size());
  }
}

inline void unwrap_text(std::string& s) {
  constexpr std::string_view kText = "\\text{";
  for (std::size_t at = s.find(kText); at != std::string::npos; at = s.find(kText, at)) {
    const std::size_t brace = at + kText.size() - 1;
    const std::size_t end = match_brace(s, brace);
    if (end == std::string::npos) {
      at = brace;
      continue;
    }
    s = s.substr(0, at) + s.substr(brace + 1, end - brace - 2) + s.substr(end);
  }
}

inline std::string normalize_once(std::string s) {
  s = trim(s);
  while (s.size() >= 2 && s.front() == '$' && s.back() == '$') s = trim(std::string_view(s).substr(1, s.size() - 2));
  drop_sizing(s, "\\left");
  drop_sizing(s, "\\right");
  std::erase_if(s, [](unsigned char c) { return std::isspace(c); });
  replace_all(s, "\\dfrac", "\\frac");
  replace_all(s, "\\tfrac", "\\frac");
  if (!s.empty() && (s.back() == '.' || s.back() == ',' || s.back() == ';')) s.pop_back();
  unwrap_text(s);
  return s;
}

}  // namespace detail

/// String normalization applied to both prediction and gold. The rule chain
/// is repeated until it reaches a fixed point, which makes it idempotent.
inline std::string normalize_answer(std::string_view raw) {
  std::string s(raw);
  for (int guard = 0; guard < 64; ++guard) {
    std::string next = detail::normalize_once(s);
    if (next == s) break;
    s = std::move(next);
  }
  return s;
}

inline bool is_correct(std::string_view output, std::string_view gold) {
  const auto boxed = extract_boxed(output);
  return boxed && normalize_answer(*boxed) == normalize_answer(gold);
}

// ---- exact fractions ----

/// Reduced fraction with positive denominator.
class Ratio {
 public:
  Ratio(std::int64_t num = 0, std::int64_t den = 1) : num_(num), den_(den) {
    if (den_ == 0) throw Error(Errc::kInvalidArgument, "zero denominator");
    if (den_ < 0) {
      num_ = -num_;
      den_ = -den_;
    }
    const std::int64_t g = std::gcd(num_ < 0 ? -num_ : num_, den_);
    if (g > 1) {
      num_ /= g;
      den_ /= g;
    }
  }

  /// Exact value of a decimal like 6.0 or 71.4, to `places` digits.
  static Ratio from_decimal(double value, int places = 6) {
    std::int64_t scale = 1;
    for (int i = 0; i < places; ++i) scale *= 10;
    return {std::llround(value * static_cast<double>(scale)), scale};
  }

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }
  double value() const { return static_cast<double>(num_) / static_cast<double>(den_); }

  friend Ratio operator-(const Ratio& a, const Ratio& b) {
    return {a.num_ * b.den_ - b.num_ * a.den_, a.den_ * b.den_};
  }
  friend Ratio operator*(const Ratio& a, const Ratio& b) { return {a.num_ * b.num_, a.den_ * b.den_}; }
  friend Ratio operator/(const Ratio& a, const Ratio& b) {
    if (b.num_ == 0) throw Error(Errc::kInvalidArgument, "division by zero");
    return {a.num_ * b.den_, a.den_ * b.num_};
  }
  friend bool operator==(const Ratio& a, const Ratio& b) { return a.num_ == b.num_ && a.den_ == b.den_; }
  friend bool operator<(const Ratio& a, const Ratio& b) { return a.num_ * b.den_ < b.num_ * a.den_; }
  friend bool operator>(const Ratio& a, const Ratio& b) { return b < a; }

  /// Fixed-point text, rounded half away from zero.
  std::string fixed(int places) const {
    std::int64_t scale = 1;
    for (int i = 0; i < places; ++i) scale *= 10;
    const bool negative = num_ < 0;
    const std::int64_t mag = negative ? -num_ : num_;
    const std::int64_t scaled = (2 * mag * scale + den_) / (2 * den_);
    std::string out = (negative && scaled != 0 ? "-" : "") + std::to_string(scaled / scale);
    if (places > 0) {
      std::string frac = std::to_string(scaled % scale);
      frac.insert(0, static_cast<std::size_t>(places) - frac.size(), '0');
      out += "." + frac;
    }
    return out;
  }

 private:
  std::int64_t num_;
  std::int64_t den_;
};

/// Correct count over N.
struct Accuracy {
  std::int64_t correct = 0;
  std::int64_t total = 1;

  Ratio percent() const { return {100 * correct, total}; }
  bool operator==(const Accuracy&) const = default;
};

inline Accuracy accuracy(const std::vector<std::string>& outputs, const std::vector<std::string>& golds) {
  if (outputs.size() != golds.size()) {
    throw Error(Errc::kLengthMismatch, std::to_string(outputs.size()) + " outputs vs " +
                                           std::to_string(golds.size()) + " golds");
  }
  if (outputs.empty()) throw Error(Errc::kInvalidArgument, "accuracy needs at least one item");
  Accuracy acc{0, static_cast<std::int64_t>(outputs.size())};
  for (std::size_t i = 0; i < outputs.size(); ++i) acc.correct += is_correct(outputs[i], golds[i]) ? 1 : 0;
  return acc;
}

/// Acc_after / Acc_target; nullopt when the target baseline is zero.
inline std::optional<Ratio> tir(const Ratio& acc_after, const Ratio& acc_target) {
  if (acc_target.num() == 0) return std::nullopt;
  return acc_after / acc_target;
}

/// Share of the target-to-source gap closed, in percent; nullopt when the
/// baselines are equal. Values above 100 are allowed.
inline std::optional<Ratio> recovery(const Ratio& acc_after, const Ratio& acc_target, const Ratio& acc_source) {
  if (acc_source == acc_target) return std::nullopt;
  return Ratio(100) * (acc_after - acc_target) / (acc_source - acc_target);
}

inline std::optional<double> tir(double acc_after, double acc_target) {
  const auto r = tir(Ratio::from_decimal(acc_after), Ratio::from_decimal(acc_target));
  return r ? std::optional(r->value()) : std::nullopt;
}

inline std::optional<double> recovery(double acc_after, double acc_target, double acc_source) {
  const auto r =
      recovery(Ratio::from_decimal(acc_after), Ratio::from_decimal(acc_target), Ratio::from_decimal(acc_source));
  return r ? std::optional(r->value()) : std::nullopt;
}

// ---- transplant direction ----

enum class Direction { kAtoB, kBtoA };

inline std::string_view direction_name(Direction d) { return d == Direction::kAtoB ? "A->B" : "B->A"; }

struct DirectionChoice {
  Direction direction = Direction::kAtoB;
  bool tie = false;
};

/// Better-scoring model donates to the weaker one; ties go A->B, flagged.
inline DirectionChoice choose_direction(const Ratio& acc_a, const Ratio& acc_b) {
  if (acc_a == acc_b) return {Direction::kAtoB, true};
  return {acc_a > acc_b ? Direction::kAtoB : Direction::kBtoA, false};
}

inline DirectionChoice choose_direction(double acc_a, double acc_b) {
  return choose_direction(Ratio::from_decimal(acc_a), Ratio::from_decimal(acc_b));
}

}  // namespace graft
