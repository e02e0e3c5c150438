#pragma once

#include <chrono>
#include <map>
#include <optional>
#include <string>

#include <httplib.h>

#include "tit/core/error.hpp"

namespace tit::gateway {

struct HttpResponse {
  int status = 0;  // 0: no response (connection failure, timeout)
  std::string body;
  std::string transport_error;
};

/// Minimal POST interface so tests can swap the network for a fake.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post_json(const std::string& url, const std::string& body,
                                 const std::map<std::string, std::string>& headers, double timeout_s) = 0;
};

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // starts with '/'
};

inline SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw Error(Errc::ConfigError, "endpoint URL must include a scheme: " + url, {{"url", url}});
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

class HttpTransport final : public Transport {
 public:
  HttpResponse post_json(const std::string& url, const std::string& body,
                         const std::map<std::string, std::string>& headers, double timeout_s) override {
    const auto parts = split_url(url);
    httplib::Client cli(parts.origin);
    const auto secs = static_cast<time_t>(timeout_s);
    const auto usecs = static_cast<time_t>((timeout_s - static_cast<double>(secs)) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto res = cli.Post(parts.path, h, body, "application/json");
    if (!res) return {0, {}, httplib::to_string(res.error())};
    return {res->status, res->body, {}};
  }
};

}  // namespace tit::gateway
