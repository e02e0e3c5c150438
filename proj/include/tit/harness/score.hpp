#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "tit/core/benchmark.hpp"
#include "tit/core/error.hpp"
#include "tit/core/jsonl.hpp"
#include "tit/gateway/gateway.hpp"
#include "tit/harness/config.hpp"
#include "tit/metric/pipeline.hpp"

namespace tit::harness {

using json = nlohmann::json;

struct ScoreRunResult {
  bool ok = false;
  json manifest;
  std::vector<fs::path> outputs;
};

inline fs::path scores_path(const fs::path& out, const std::string& metric_id) {
  return out / ("scores." + metric_id + ".jsonl");
}

/// Scores every (prompt, image) of the benchmark under each metric. Output:
/// <out>/scores.<metric>.jsonl in benchmark order, plus <out>/manifest.json,
/// which is written even when the run fails. A failed metric leaves no score
/// file; the cache keeps everything fetched so far.
inline ScoreRunResult run_score(const RunConfig& cfg, std::shared_ptr<gateway::Transport> transport = nullptr) {
  const auto started = std::chrono::steady_clock::now();
  ScoreRunResult result;
  json& manifest = result.manifest;
  manifest = {{"schema_version", kSchemaVersion},
              {"started_at", gateway::utc_timestamp()},
              {"benchmark", cfg.benchmark.string()},
              {"profiles", cfg.profiles.string()},
              {"concurrency", cfg.concurrency},
              {"seed", cfg.seed},
              {"retry_length", cfg.retry_length},
              {"metrics", json::array()}};
  std::shared_ptr<gateway::Gateway> gw;

  auto finish = [&](bool ok, std::optional<Error> err) {
    result.ok = ok;
    manifest["status"] = ok ? "ok" : "error";
    if (err) manifest["error"] = err->to_json();
    if (gw) {
      const auto st = gw->cache().stats();
      manifest["cache"] = {{"dir", cfg.cache_dir.string()},
                           {"distinct_keys", st.distinct_keys},
                           {"preexisting_hits", st.preexisting_hits},
                           {"hit_rate", st.hit_rate()}};
      manifest["network_requests"] = gw->network_requests();
    }
    manifest["wall_time_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    try {
      fs::create_directories(cfg.out);
      write_json(cfg.out / "manifest.json", manifest);
    } catch (const std::exception&) {
      result.ok = false;
    }
    return result;
  };

  try {
    if (cfg.metrics.empty()) throw Error(Errc::ConfigError, "no metric selected");
    const auto benchmark = load_benchmark(cfg.benchmark);
    const auto profiles = gateway::load_profiles(cfg.profiles);
    std::vector<gateway::MetricConfig> metrics;
    for (const auto& id : cfg.metrics) metrics.push_back(gateway::resolve_metric(id, profiles));

    auto cache = std::make_shared<gateway::Cache>(cfg.cache_dir);
    gateway::GatewayOptions opts{cfg.concurrency, cfg.retry_length};
    gw = transport ? std::make_shared<gateway::Gateway>(cache, opts, transport)
                   : std::make_shared<gateway::Gateway>(cache, opts);

    struct Job {
      const PromptRecord* prompt;
      const ImageRecord* image;
    };
    std::vector<Job> jobs;
    for (const auto& p : benchmark.prompts)
      for (const auto* im : benchmark.images_for(p.id)) jobs.push_back({&p, im});

    for (const auto& m : metrics) {
      json entry{{"metric_id", m.metric_id}, {"vlm_profile_id", m.vlm_profile_id}, {"template_id", m.template_id}};
      if (m.embedder_profile_id) entry["embedder_profile_id"] = *m.embedder_profile_id;
      if (m.judge_profile_id) {
        entry["judge_profile_id"] = *m.judge_profile_id;
        entry["judge_template_id"] = gateway::kJudgeTemplateId;
      }

      std::vector<std::optional<ScoreRecord>> scores(jobs.size());
      std::vector<std::optional<Error>> errors(jobs.size());
      std::atomic<std::size_t> next{0};
      std::atomic<bool> failed{false};
      auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size() && !failed; i = next++) {
          const auto& job = jobs[i];
          try {
            scores[i] = metric::score(*job.prompt, *job.image, [&] { return benchmark.load_payload(*job.image); }, m,
                                      {*gw, profiles});
          } catch (const Error& e) {
            errors[i] = e;
            failed = true;
          } catch (const std::exception& e) {
            errors[i] = Error(Errc::IoError, e.what());
            failed = true;
          }
        }
      };
      std::vector<std::thread> pool;
      const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(cfg.concurrency), std::max<std::size_t>(jobs.size(), 1));
      for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
      for (auto& t : pool) t.join();

      for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (errors[i]) {
          auto e = *errors[i];
          entry["status"] = "error";
          manifest["metrics"].push_back(entry);
          throw Error(e.code(), "metric '" + m.metric_id + "' failed on prompt '" + jobs[i].prompt->id + "', image " +
                                    jobs[i].image->content_hash + ": " + e.what(),
                      [&] {
                        auto ctx = e.context();
                        ctx["metric_id"] = m.metric_id;
                        ctx["prompt_id"] = jobs[i].prompt->id;
                        ctx["content_hash"] = jobs[i].image->content_hash;
                        return ctx;
                      }())
                .with_stage(e.stage());
        }
      }
      std::vector<ScoreRecord> records;
      for (auto& s : scores) records.push_back(*s);
      const auto path = scores_path(cfg.out, m.metric_id);
      write_jsonl(path, records);
      result.outputs.push_back(path);
      entry["status"] = "ok";
      entry["output"] = path.string();
      entry["n_scores"] = records.size();
      manifest["metrics"].push_back(entry);
    }
  } catch (const Error& e) {
    return finish(false, e);
  } catch (const std::exception& e) {
    return finish(false, Error(Errc::IoError, e.what()));
  }
  return finish(true, std::nullopt);
}

}  // namespace tit::harness
