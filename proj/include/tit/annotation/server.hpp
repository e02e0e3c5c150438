#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "tit/annotation/campaign.hpp"
#include "tit/core/error.hpp"
#include "tit/gateway/gateway.hpp"

namespace tit::annotation {

inline int http_status_for(Errc c) {
  switch (c) {
    case Errc::CampaignNotFound: return 404;
    case Errc::UnknownAnnotator: return 403;
    case Errc::DuplicateJudgment:
    case Errc::UnassignedPair:
    case Errc::NotEscalated:
    case Errc::IncompleteTournament:
    case Errc::MissingArbitration: return 409;
    case Errc::WrongPanelSize: return 422;
    case Errc::ParseError: return 400;
    default: return 500;
  }
}

inline json problem(Errc code, const std::string& message, json context = json::object()) {
  return {{"schema_version", kSchemaVersion},
          {"code", std::string(to_string(code))},
          {"message", message},
          {"context", std::move(context)}};
}

inline json task_json(const std::string& campaign_id, const Task& t) {
  return {{"campaign_id", campaign_id},
          {"pair_key", t.pair_key},
          {"prompt_id", t.prompt_id},
          {"prompt_text", t.prompt_text},
          {"presented_left", t.left},
          {"left", {{"content_hash", t.left}, {"url", "/media/" + t.left}}},
          {"right", {{"content_hash", t.right}, {"url", "/media/" + t.right}}}};
}

inline json progress_json(const Progress& p) {
  return {{"total_pairs", p.total_pairs},
          {"open", p.open},
          {"escalated", p.escalated},
          {"finalized", p.finalized},
          {"total", p.total_assignments},
          {"completed", p.completed_assignments}};
}

/// HTTP front end for annotation campaigns.
///
///   GET  /api/campaigns/{id}/next?annotator=...
///   POST /api/judgments
///   POST /api/arbitrations
///   GET  /api/campaigns/{id}/progress[?annotator=...]
///   GET  /api/campaigns/{id}/escalations
///   GET  /api/campaigns/{id}/leaderboard
///   GET  /media/{content_hash}
///
/// The annotator id may also be given in an X-Annotator-Id header. Errors are
/// problem-detail JSON {code, message, context}.
class AnnotationService {
 public:
  /// `media_root` holds payloads as <media_root>/<content_hash>.
  explicit AnnotationService(fs::path media_root) : media_root_(std::move(media_root)) { install_routes(); }

  void add_campaign(std::unique_ptr<Campaign> c) {
    std::unique_lock lock(mu_);
    const auto id = c->id();
    campaigns_[id] = std::move(c);
  }

  Campaign& campaign(const std::string& id) {
    std::shared_lock lock(mu_);
    auto it = campaigns_.find(id);
    if (it == campaigns_.end())
      throw Error(Errc::CampaignNotFound, "campaign '" + id + "' not found", {{"campaign_id", id}});
    return *it->second;
  }

  /// Static UI assets (optional).
  bool mount_ui(const fs::path& dir) { return server_.set_mount_point("/", dir.string()); }

  int bind_any(const std::string& host = "127.0.0.1") { return server_.bind_to_any_port(host); }

  void bind(const std::string& host, int port) {
    if (!server_.bind_to_port(host, port))
      throw Error(Errc::PortInUse, "cannot bind " + host + ":" + std::to_string(port), {{"host", host}, {"port", port}});
  }

  /// Blocks until stop().
  void serve() { server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() const { server_.wait_until_ready(); }
  httplib::Server& http() { return server_; }

 private:
  template <class F>
  void guarded(httplib::Response& res, F&& f) {
    try {
      json body = f();
      body["schema_version"] = kSchemaVersion;
      res.set_content(body.dump(), "application/json");
    } catch (const Error& e) {
      res.status = http_status_for(e.code());
      res.set_content(problem(e.code(), e.what(), e.context()).dump(), "application/json");
    } catch (const json::exception& e) {
      res.status = 400;
      res.set_content(problem(Errc::ParseError, std::string("malformed request: ") + e.what()).dump(),
                      "application/json");
    }
  }

  static std::string annotator_of(const httplib::Request& req, const json* body = nullptr) {
    if (req.has_param("annotator")) return req.get_param_value("annotator");
    if (body != nullptr && body->contains("annotator_id")) return body->at("annotator_id").get<std::string>();
    if (req.has_header("X-Annotator-Id")) return req.get_header_value("X-Annotator-Id");
    throw Error(Errc::UnknownAnnotator, "request does not identify an annotator");
  }

  void install_routes() {
    server_.Get(R"(/api/campaigns/([^/]+)/next)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto& c = campaign(req.matches[1]);
        const auto who = annotator_of(req);
        const auto task = c.next_pair(who);
        const auto [done, total] = c.annotator_progress(who);
        json out{{"progress", {{"done", done}, {"total", total}}}};
        if (task) {
          out["status"] = "task";
          out["task"] = task_json(c.id(), *task);
        } else {
          out["status"] = "exhausted";
        }
        return out;
      });
    });

    server_.Post("/api/judgments", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto body = json::parse(req.body);
        auto& c = campaign(body.at("campaign_id").get<std::string>());
        JudgmentEvent ev;
        ev.campaign_id = c.id();
        ev.annotator_id = annotator_of(req, &body);
        ev.pair_key = body.at("pair_key").get<std::string>();
        ev.choice = parse_side(body.at("choice").get<std::string>());
        ev.presented_left = body.at("presented_left").get<std::string>();
        const auto r = c.submit_judgment(ev);
        json out{{"tally", r.tally}, {"status", std::string(to_string(r.status))}};
        if (r.outcome) out["outcome"] = *r.outcome;
        return out;
      });
    });

    server_.Post("/api/arbitrations", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto body = json::parse(req.body);
        auto& c = campaign(body.at("campaign_id").get<std::string>());
        const auto outcome = c.submit_arbitration(body.at("pair_key").get<std::string>(), body.at("verdicts"));
        return json{{"outcome", outcome}, {"status", "finalized"}};
      });
    });

    server_.Get(R"(/api/campaigns/([^/]+)/progress)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto& c = campaign(req.matches[1]);
        json out{{"campaign_id", c.id()}, {"progress", progress_json(c.progress())}};
        if (req.has_param("annotator")) {
          const auto [done, total] = c.annotator_progress(req.get_param_value("annotator"));
          out["annotator"] = {{"done", done}, {"total", total}};
        }
        return out;
      });
    });

    server_.Get(R"(/api/campaigns/([^/]+)/escalations)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto& c = campaign(req.matches[1]);
        json items = json::array();
        for (const auto& t : c.escalations())
          items.push_back({{"pair_key", pair_key(t.prompt_id, t.image_a_hash, t.image_b_hash)}, {"tally", t}});
        return json{{"campaign_id", c.id()}, {"escalations", items}};
      });
    });

    server_.Get(R"(/api/campaigns/([^/]+)/leaderboard)", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        auto& c = campaign(req.matches[1]);
        return json{{"campaign_id", c.id()}, {"leaderboard", c.leaderboard()}};
      });
    });

    server_.Get(R"(/media/([0-9a-f]{64}))", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string hash = req.matches[1];
      const auto path = media_root_ / hash;
      if (!fs::exists(path)) {
        res.status = 404;
        res.set_content(problem(Errc::MissingPayload, "no media for " + hash, {{"content_hash", hash}}).dump(),
                        "application/json");
        return;
      }
      auto bytes = read_file_bytes(path);
      const auto mime = gateway::image_mime_type(bytes);
      res.set_content(std::move(bytes), mime);
    });
  }

  fs::path media_root_;
  httplib::Server server_;
  std::shared_mutex mu_;
  std::map<std::string, std::unique_ptr<Campaign>> campaigns_;
};

}  // namespace tit::annotation
