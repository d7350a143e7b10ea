#pragma once

// HTTP clients for external services: an NER backend (POST /tag) and an
// optional embedding service (POST /embed). Both speak JSON; offsets in
// the NER protocol are code-point indices.

#include <atomic>
#include <cstdlib>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "pba/anonymizer.hpp"
#include "pba/entity.hpp"
#include "pba/error.hpp"
#include "pba/text.hpp"

namespace pba {

inline constexpr const char* kNerEndpointEnv = "PBA_NER_ENDPOINT";
inline constexpr const char* kEmbedEndpointEnv = "PBA_EMBED_ENDPOINT";

struct ServiceConfig {
  std::string endpoint;  // e.g. "http://127.0.0.1:8080"
  double timeout_seconds = 30.0;
  int retries = 2;
  std::string name = "external";

  void validate() const {
    if (retries < 0) throw ConfigError("retries must be >= 0");
    if (!(timeout_seconds > 0.0)) throw ConfigError("timeout must be positive");
    if (endpoint.empty()) throw ConfigError("service endpoint is empty");
  }

  // The environment variable, when set and non-empty, replaces `endpoint`.
  ServiceConfig with_env_override(const char* env_var) const {
    ServiceConfig c = *this;
    if (const char* v = std::getenv(env_var); v != nullptr && *v != '\0') c.endpoint = v;
    return c;
  }
};

using NerBackendConfig = ServiceConfig;

namespace detail {

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string path;    // without trailing slash, may be empty
};

inline Url split_url(std::string_view url) {
  const auto scheme = url.find("://");
  const std::size_t host_start = scheme == std::string_view::npos ? 0 : scheme + 3;
  const auto slash = url.find('/', host_start);
  Url u;
  u.origin = std::string(url.substr(0, slash));
  if (scheme == std::string_view::npos) u.origin = "http://" + u.origin;
  if (slash != std::string_view::npos) u.path = std::string(url.substr(slash));
  while (!u.path.empty() && u.path.back() == '/') u.path.pop_back();
  return u;
}

// POSTs `body` to `route` under the configured endpoint, retrying on
// transport failure or a non-200 status. Returns the response body.
inline std::string post_json(const ServiceConfig& config, std::string_view route, const std::string& body) {
  config.validate();
  const Url url = split_url(config.endpoint);
  std::string path = url.path;
  if (path.size() < route.size() || path.compare(path.size() - route.size(), route.size(), route) != 0)
    path += route;

  httplib::Client client(url.origin);
  const auto secs = static_cast<time_t>(config.timeout_seconds);
  const auto usecs = static_cast<time_t>((config.timeout_seconds - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  std::string last_failure;
  for (int attempt = 0; attempt <= config.retries; ++attempt) {
    auto res = client.Post(path, body, "application/json");
    if (!res) {
      last_failure = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_failure = "HTTP status " + std::to_string(res->status);
      continue;
    }
    return res->body;
  }
  throw BackendUnavailableError(config.name + " at " + config.endpoint + path + " failed after " +
                                std::to_string(config.retries + 1) + " attempt(s): " + last_failure);
}

inline nlohmann::json parse_body(const ServiceConfig& config, const std::string& body) {
  try {
    return nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error&) {
    throw ProtocolError(config.name + ": response body is not JSON");
  }
}

}  // namespace detail

struct ExternalTagResult {
  std::vector<EntitySpan> spans;
  std::size_t dropped = 0;  // spans with a label outside {PER, LOC}
};

inline ExternalTagResult tag_entities_external(std::string_view text, const NerBackendConfig& config) {
  const nlohmann::json request = {{"text", std::string(text)}};
  const nlohmann::json reply = detail::parse_body(config, detail::post_json(config, "/tag", request.dump()));
  if (!reply.is_object() || !reply.contains("entities") || !reply["entities"].is_array())
    throw ProtocolError(config.name + ": response lacks an 'entities' array");

  const std::size_t length = code_point_length(text);
  ExternalTagResult out;
  std::size_t index = 0;
  for (const auto& e : reply["entities"]) {
    const std::string where = config.name + ": entity #" + std::to_string(index++);
    if (!e.is_object() || !e.contains("start") || !e.contains("end") || !e.contains("label"))
      throw ProtocolError(where + " needs start, end and label");
    if (!e["start"].is_number_integer() || !e["end"].is_number_integer() || !e["label"].is_string())
      throw ProtocolError(where + " has mistyped fields");
    const auto start = e["start"].get<long long>();
    const auto end = e["end"].get<long long>();
    if (start < 0 || end <= start || static_cast<std::size_t>(end) > length)
      throw ProtocolError(where + " [" + std::to_string(start) + "," + std::to_string(end) +
                          ") is out of range for text of length " + std::to_string(length));
    auto label = parse_label(e["label"].get<std::string>());
    if (!label) {
      ++out.dropped;
      continue;
    }
    out.spans.push_back({static_cast<std::size_t>(start), static_cast<std::size_t>(end), *label});
  }
  out.spans = normalize_spans(std::move(out.spans));
  return out;
}

class ExternalTagger final : public Tagger {
 public:
  explicit ExternalTagger(NerBackendConfig config) : config_(std::move(config)) { config_.validate(); }

  std::string name() const override { return config_.name; }

  std::vector<EntitySpan> tag(std::string_view text) const override {
    auto res = tag_entities_external(text, config_);
    dropped_ += res.dropped;
    return std::move(res.spans);
  }

  std::size_t dropped_labels() const noexcept { return dropped_.load(); }

 private:
  NerBackendConfig config_;
  mutable std::atomic<std::size_t> dropped_{0};
};

// Optional embedding service; the response vector must have `dimension`
// components.
inline std::vector<double> embed_external(std::string_view text, std::size_t dimension, const ServiceConfig& config) {
  const nlohmann::json request = {{"text", std::string(text)}};
  const nlohmann::json reply = detail::parse_body(config, detail::post_json(config, "/embed", request.dump()));
  if (!reply.is_object() || !reply.contains("vector") || !reply["vector"].is_array())
    throw ProtocolError(config.name + ": response lacks a 'vector' array");
  const auto& v = reply["vector"];
  if (v.size() != dimension)
    throw ProtocolError(config.name + ": expected " + std::to_string(dimension) + " components, got " +
                        std::to_string(v.size()));
  std::vector<double> out;
  out.reserve(v.size());
  for (const auto& x : v) {
    if (!x.is_number()) throw ProtocolError(config.name + ": vector components must be numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

}  // namespace pba
