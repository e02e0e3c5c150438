#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <nlohmann/json.hpp>

#include "tit/core/error.hpp"
#include "tit/core/jsonl.hpp"
#include "tit/preference/ranking.hpp"
#include "tit/stats/rank_metrics.hpp"

namespace tit::harness {

using json = nlohmann::json;

/// One-tailed significance levels reported for every metric, with the
/// z-values of the standard tables (1.645 and 3.09).
struct SignificanceLevel {
  double alpha;
  double z;
};

inline const std::vector<SignificanceLevel>& default_levels() {
  static const std::vector<SignificanceLevel> levels{{0.05, 1.645}, {0.001, 3.09}};
  return levels;
}

/// z such that P(Z >= z) = alpha.
inline double z_for_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(Errc::ConfigError, "alpha must lie in (0, 1)", {{"alpha", alpha}});
  return boost::math::quantile(boost::math::complement(boost::math::normal(), alpha));
}

struct EvaluateInputs {
  std::vector<ScoreRecord> scores;  // any number of metric ids
  std::vector<stats::HumanPair> pairs;
  std::vector<pref::Ranking> human_rankings;
  stats::TieCredit tie_credit = stats::TieCredit::none;
  std::vector<double> extra_alphas;
};

/// Loads score files; a metric id may appear in only one file.
inline std::vector<ScoreRecord> load_score_files(const std::vector<fs::path>& files) {
  std::vector<ScoreRecord> all;
  std::map<std::string, std::string> owner;
  for (const auto& f : files) {
    for (auto& s : read_jsonl_as<ScoreRecord>(f)) {
      auto [it, inserted] = owner.emplace(s.metric_id, f.string());
      if (!inserted && it->second != f.string())
        throw Error(Errc::ConfigError, "metric '" + s.metric_id + "' appears in more than one score file",
                    {{"metric_id", s.metric_id}, {"files", {it->second, f.string()}}});
      all.push_back(std::move(s));
    }
  }
  return all;
}

namespace detail {

inline json number_or_null(std::optional<double> v) { return v ? json(*v) : json(nullptr); }

}  // namespace detail

/// Per-metric report: pairwise accuracy with significance verdicts, and the
/// mean over prompts of per-prompt SRCC, KRCC and nDCG against the human
/// rankings. Prompts where a coefficient is undefined (constant scores) are
/// left out of that mean and counted as degenerate.
inline json evaluate(const EvaluateInputs& in) {
  std::map<std::string, std::vector<ScoreRecord>> by_metric;
  for (const auto& s : in.scores) by_metric[s.metric_id].push_back(s);
  if (by_metric.empty()) throw Error(Errc::ConfigError, "no scores to evaluate");

  std::vector<SignificanceLevel> levels = default_levels();
  for (double a : in.extra_alphas) levels.push_back({a, z_for_alpha(a)});

  json report{{"schema_version", kSchemaVersion},
              {"header",
               {{"correlation_aggregation", "mean of per-prompt coefficients"},
                {"pairwise_tie_credit", in.tie_credit == stats::TieCredit::half ? "half" : "none"},
                {"ndcg_gain", "linear (N - rank + 1), log2 discount"},
                {"rank_ties", "fractional ranks; Kendall tau-b"}}},
              {"metrics", json::object()},
              {"warnings", json::array()}};

  for (const auto& [metric_id, records] : by_metric) {
    const auto table = stats::make_score_table(records);
    json m;

    const auto acc = stats::pairwise_accuracy(table, in.pairs, in.tie_credit);
    m["acc"] = acc.fraction;
    m["correct"] = acc.correct;
    m["n_pairs"] = acc.total;
    json sig = json::array();
    for (const auto& lvl : levels) {
      const auto t = stats::significance_threshold(static_cast<std::int64_t>(acc.total), lvl.z);
      sig.push_back({{"alpha", lvl.alpha},
                     {"z", lvl.z},
                     {"k_min", t.k_min},
                     {"accuracy_threshold", t.accuracy_threshold},
                     {"significant", acc.correct >= static_cast<double>(t.k_min)}});
    }
    m["significance"] = sig;

    double srcc_sum = 0, krcc_sum = 0, ndcg_sum = 0;
    std::size_t srcc_n = 0, krcc_n = 0, ndcg_n = 0, degenerate = 0;
    for (const auto& r : in.human_rankings) {
      std::vector<double> metric_scores, human_scores;
      std::vector<std::pair<double, Digest>> order;
      for (const auto& [hash, rank] : r.fractional_rank) {
        auto it = table.find({r.prompt_id, hash});
        if (it == table.end())
          throw Error(Errc::MissingScore, "metric '" + metric_id + "' has no score for an image of prompt '" + r.prompt_id + "'",
                      {{"metric_id", metric_id}, {"prompt_id", r.prompt_id}, {"image_hash", hash}});
        metric_scores.push_back(it->second);
        human_scores.push_back(-rank);
        order.emplace_back(it->second, hash);
      }
      bool degenerate_here = false;
      try {
        srcc_sum += stats::spearman(metric_scores, human_scores);
        ++srcc_n;
      } catch (const Error& e) {
        if (e.code() != Errc::DegenerateConstantInput) throw;
        degenerate_here = true;
      }
      try {
        krcc_sum += stats::kendall_tau_b(metric_scores, human_scores);
        ++krcc_n;
      } catch (const Error& e) {
        if (e.code() != Errc::DegenerateConstantInput) throw;
        degenerate_here = true;
      }
      // predicted order: score descending, ties by hash
      std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
      });
      std::vector<std::string> predicted;
      for (const auto& [s, h] : order) predicted.push_back(h);
      ndcg_sum += stats::ndcg(predicted, r.fractional_rank);
      ++ndcg_n;
      if (degenerate_here) {
        ++degenerate;
        report["warnings"].push_back("metric '" + metric_id + "', prompt '" + r.prompt_id +
                                     "': constant input, rank correlation undefined");
      }
    }
    auto mean = [](double s, std::size_t n) -> std::optional<double> {
      if (n == 0) return std::nullopt;
      return s / static_cast<double>(n);
    };
    m["srcc"] = detail::number_or_null(mean(srcc_sum, srcc_n));
    m["krcc"] = detail::number_or_null(mean(krcc_sum, krcc_n));
    m["ndcg"] = detail::number_or_null(mean(ndcg_sum, ndcg_n));
    m["n_prompts"] = in.human_rankings.size();
    m["degenerate_prompts"] = degenerate;
    report["metrics"][metric_id] = m;
  }
  return report;
}

/// Fixed-width text rendering of an evaluate() report.
inline std::string render_report_table(const json& report) {
  std::ostringstream os;
  auto fmt = [](const json& v, const char* spec) {
    if (v.is_null()) return std::string("n/a");
    char buf[32];
    std::snprintf(buf, sizeof buf, spec, v.get<double>());
    return std::string(buf);
  };
  char line[256];
  std::snprintf(line, sizeof line, "%-24s %8s %8s %8s %8s %8s %8s %8s\n", "metric", "acc(%)", "n_pairs", "p<.05",
                "p<.001", "SRCC", "KRCC", "nDCG");
  os << line;
  for (const auto& [id, m] : report.at("metrics").items()) {
    const auto& sig = m.at("significance");
    std::snprintf(line, sizeof line, "%-24s %8s %8zu %8s %8s %8s %8s %8s\n", id.c_str(),
                  fmt(m.at("acc").get<double>() * 100.0, "%.2f").c_str(), m.at("n_pairs").get<std::size_t>(),
                  sig.at(0).at("significant").get<bool>() ? "yes" : "no",
                  sig.at(1).at("significant").get<bool>() ? "yes" : "no", fmt(m.at("srcc"), "%.3f").c_str(),
                  fmt(m.at("krcc"), "%.3f").c_str(), fmt(m.at("ndcg"), "%.3f").c_str());
    os << line;
  }
  os << "correlations: " << report.at("header").at("correlation_aggregation").get<std::string>()
     << "; pairwise tie credit: " << report.at("header").at("pairwise_tie_credit").get<std::string>() << "\n";
  return os.str();
}

}  // namespace tit::harness
