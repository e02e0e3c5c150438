#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "tit/core/error.hpp"
#include "tit/core/types.hpp"

namespace tit::stats {

/// Ascending fractional ranks: the smallest value gets rank 1 and a group of
/// tied values shares the mean of the positions it spans.
inline std::vector<double> fractional_ranks(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && x[order[j]] == x[order[i]]) ++j;
    // positions i+1 .. j (1-based)
    const double r = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

namespace detail {

inline void require_same_length(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw Error(Errc::LengthMismatch, "inputs differ in length", {{"x", x.size()}, {"y", y.size()}});
  if (x.size() < 2) throw Error(Errc::LengthMismatch, "need at least 2 observations", {{"n", x.size()}});
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= n, my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy, sxx += dx * dx, syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0)
    throw Error(Errc::DegenerateConstantInput, "constant input has no rank correlation");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace detail

/// Spearman's rho with average ranks for ties (Pearson correlation of the
/// fractional rank vectors).
inline double spearman(std::span<const double> x, std::span<const double> y) {
  detail::require_same_length(x, y);
  const auto rx = fractional_ranks(x);
  const auto ry = fractional_ranks(y);
  return detail::pearson(rx, ry);
}

/// 1 - 6*sum(d^2)/(n(n^2-1)) with d accumulated in integers. Only valid when
/// neither input has ties; throws DegenerateConstantInput otherwise.
inline double spearman_no_ties(std::span<const double> x, std::span<const double> y) {
  detail::require_same_length(x, y);
  const auto rx = fractional_ranks(x);
  const auto ry = fractional_ranks(y);
  std::int64_t sum_d2 = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    if (rx[i] != std::floor(rx[i]) || ry[i] != std::floor(ry[i]))
      throw Error(Errc::DegenerateConstantInput, "closed form requires tie-free inputs");
    const auto d = static_cast<std::int64_t>(rx[i]) - static_cast<std::int64_t>(ry[i]);
    sum_d2 += d * d;
  }
  const auto n = static_cast<std::int64_t>(rx.size());
  return 1.0 - static_cast<double>(6 * sum_d2) / static_cast<double>(n * (n * n - 1));
}

/// Kendall's tau-b, O(n log n) (Knight's algorithm).
inline double kendall_tau_b(std::span<const double> x, std::span<const double> y) {
  detail::require_same_length(x, y);
  const std::size_t n = x.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return x[a] != x[b] ? x[a] < x[b] : y[a] < y[b];
  });

  auto pairs_in_runs = [&](auto same) {
    std::int64_t total = 0, run = 1;
    for (std::size_t i = 1; i < n; ++i) {
      if (same(idx[i - 1], idx[i])) {
        ++run;
      } else {
        total += run * (run - 1) / 2;
        run = 1;
      }
    }
    return total + run * (run - 1) / 2;
  };
  const std::int64_t tied_x = pairs_in_runs([&](auto a, auto b) { return x[a] == x[b]; });
  const std::int64_t tied_xy = pairs_in_runs([&](auto a, auto b) { return x[a] == x[b] && y[a] == y[b]; });

  // Merge sort on y counting inversions (discordant pairs among x-untied).
  std::int64_t swaps = 0;
  std::vector<std::size_t> buf(n);
  for (std::size_t width = 1; width < n; width *= 2) {
    for (std::size_t lo = 0; lo < n; lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, n), hi = std::min(lo + 2 * width, n);
      std::size_t i = lo, j = mid, k = lo;
      while (i < mid && j < hi) {
        if (y[idx[j]] < y[idx[i]]) {
          swaps += static_cast<std::int64_t>(mid - i);
          buf[k++] = idx[j++];
        } else {
          buf[k++] = idx[i++];
        }
      }
      while (i < mid) buf[k++] = idx[i++];
      while (j < hi) buf[k++] = idx[j++];
    }
    idx.swap(buf);
  }
  const std::int64_t tied_y = pairs_in_runs([&](auto a, auto b) { return y[a] == y[b]; });

  const auto nn = static_cast<std::int64_t>(n);
  const std::int64_t total = nn * (nn - 1) / 2;
  const std::int64_t concordant_minus_discordant = total - tied_x - tied_y + tied_xy - 2 * swaps;
  const double denom = std::sqrt(static_cast<double>(total - tied_x) * static_cast<double>(total - tied_y));
  if (denom == 0.0) throw Error(Errc::DegenerateConstantInput, "constant input has no rank correlation");
  return std::clamp(static_cast<double>(concordant_minus_discordant) / denom, -1.0, 1.0);
}

/// nDCG with linear gain N - rank + 1 and log2(i+1) discount.
/// `predicted_order` lists items best first; `human_rank` maps each item to
/// its (possibly fractional) human rank, 1 = best.
inline double ndcg(std::span<const std::string> predicted_order, const std::map<std::string, double>& human_rank) {
  const std::size_t n = human_rank.size();
  if (predicted_order.size() != n)
    throw Error(Errc::KeyMismatch, "predicted order and human ranking differ in size",
                {{"predicted", predicted_order.size()}, {"human", n}});
  if (n == 0) throw Error(Errc::KeyMismatch, "empty ranking");
  std::vector<double> gains;
  gains.reserve(n);
  std::map<std::string, int> seen;
  for (const auto& item : predicted_order) {
    auto it = human_rank.find(item);
    if (it == human_rank.end() || seen[item]++ > 0)
      throw Error(Errc::KeyMismatch, "predicted order is not a permutation of the ranked items", {{"item", item}});
    gains.push_back(static_cast<double>(n) - it->second + 1.0);
  }
  auto dcg = [](const std::vector<double>& g) {
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) s += g[i] / std::log2(static_cast<double>(i) + 2.0);
    return s;
  };
  const double actual = dcg(gains);
  std::sort(gains.begin(), gains.end(), std::greater<>());
  return actual / dcg(gains);
}

// ---------------------------------------------------------------------------
// Pairwise accuracy

enum class HumanOutcome { A, B, Tie };

inline std::string_view to_string(HumanOutcome o) {
  switch (o) {
    case HumanOutcome::A: return "A";
    case HumanOutcome::B: return "B";
    case HumanOutcome::Tie: return "Tie";
  }
  return "";
}

struct HumanPair {
  std::string prompt_id;
  Digest image_a_hash;
  Digest image_b_hash;
  HumanOutcome outcome = HumanOutcome::Tie;

  friend bool operator==(const HumanPair&, const HumanPair&) = default;
};

inline void to_json(nlohmann::json& j, const HumanPair& p) {
  j = {{"schema_version", kSchemaVersion},
       {"prompt_id", p.prompt_id},
       {"image_a_hash", p.image_a_hash},
       {"image_b_hash", p.image_b_hash},
       {"outcome", std::string(to_string(p.outcome))}};
}

inline void from_json(const nlohmann::json& j, HumanPair& p) {
  p.prompt_id = j.at("prompt_id").get<std::string>();
  p.image_a_hash = j.at("image_a_hash").get<std::string>();
  p.image_b_hash = j.at("image_b_hash").get<std::string>();
  const auto o = j.at("outcome").get<std::string>();
  if (o == "A") p.outcome = HumanOutcome::A;
  else if (o == "B") p.outcome = HumanOutcome::B;
  else if (o == "Tie") p.outcome = HumanOutcome::Tie;
  else throw Error(Errc::ParseError, "invalid pair outcome '" + o + "'");
  if (p.image_a_hash == p.image_b_hash)
    throw Error(Errc::ParseError, "pair compares an image with itself", {{"image", p.image_a_hash}});
}

enum class TieCredit { none, half };

struct AccuracyResult {
  double correct = 0.0;  // may be fractional under TieCredit::half
  std::size_t total = 0;
  double fraction = 0.0;
};

/// (prompt_id, image_hash) -> score for one metric
using ScoreTable = std::map<std::pair<std::string, Digest>, double>;

inline ScoreTable make_score_table(std::span<const ScoreRecord> scores) {
  ScoreTable t;
  for (const auto& s : scores) t[{s.prompt_id, s.image_hash}] = s.value;
  return t;
}

/// Fraction of human non-tie pairs where the preferred image scores strictly
/// higher. Equal predicted scores earn nothing (or half under TieCredit::half).
inline AccuracyResult pairwise_accuracy(const ScoreTable& scores, std::span<const HumanPair> pairs,
                                        TieCredit tie_credit = TieCredit::none) {
  AccuracyResult r;
  for (const auto& p : pairs) {
    if (p.outcome == HumanOutcome::Tie) continue;
    auto a = scores.find({p.prompt_id, p.image_a_hash});
    auto b = scores.find({p.prompt_id, p.image_b_hash});
    if (a == scores.end() || b == scores.end())
      throw Error(Errc::MissingScore, "no score for pair in prompt '" + p.prompt_id + "'",
                  {{"prompt_id", p.prompt_id},
                   {"image_a_hash", p.image_a_hash},
                   {"image_b_hash", p.image_b_hash},
                   {"missing", a == scores.end() ? p.image_a_hash : p.image_b_hash}});
    const double winner = p.outcome == HumanOutcome::A ? a->second : b->second;
    const double loser = p.outcome == HumanOutcome::A ? b->second : a->second;
    if (winner > loser) r.correct += 1.0;
    else if (winner == loser && tie_credit == TieCredit::half) r.correct += 0.5;
    ++r.total;
  }
  if (r.total == 0) throw Error(Errc::EmptyPairSet, "no non-tie pairs to evaluate");
  r.fraction = r.correct / static_cast<double>(r.total);
  return r;
}

// ---------------------------------------------------------------------------
// Significance

struct SignificanceResult {
  std::int64_t n = 0;
  double p = 0.5;
  double mu = 0.0;
  double sigma = 0.0;
  double z = 0.0;
  std::int64_t k_min = 0;
  double accuracy_threshold = 0.0;
};

/// Normal approximation to Binomial(n, p): k_min is the smallest integer
/// strictly greater than mu + z*sigma.
inline SignificanceResult significance_threshold(std::int64_t n, double z, double p = 0.5) {
  if (n < 1) throw Error(Errc::InvalidN, "trial count must be >= 1", {{"n", n}});
  if (!(z >= 0.0) || !std::isfinite(z)) throw Error(Errc::InvalidN, "z must be finite and >= 0", {{"z", z}});
  SignificanceResult r;
  r.n = n;
  r.p = p;
  r.z = z;
  r.mu = static_cast<double>(n) * p;
  r.sigma = std::sqrt(static_cast<double>(n) * p * (1.0 - p));
  r.k_min = static_cast<std::int64_t>(std::floor(r.mu + z * r.sigma)) + 1;
  r.k_min = std::min(r.k_min, n);
  r.accuracy_threshold = static_cast<double>(r.k_min) / static_cast<double>(n);
  return r;
}

inline nlohmann::json to_json(const SignificanceResult& r) {
  return {{"n", r.n}, {"p", r.p}, {"mu", r.mu}, {"sigma", r.sigma}, {"z", r.z},
          {"k_min", r.k_min}, {"accuracy_threshold", r.accuracy_threshold}};
}

}  // namespace tit::stats
