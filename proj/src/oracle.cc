#include "formtree/oracle.h"

#include <cstdlib>

#include <spdlog/spdlog.h>

#include "formtree/errors.h"
#include "httplib.h"
#include "json.hpp"

namespace formtree {

using json = nlohmann::json;

bool looks_like_field(const std::string& text) {
  bool has_letter = false;
  std::size_t code_points = 0;
  for (unsigned char c : text) {
    if ((c & 0xC0) != 0x80) ++code_points;
    if (c >= '0' && c <= '9') return false;
    if ((c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c >= 0x80) has_letter = true;
  }
  return has_letter && code_points <= 40;
}

std::vector<std::string> HeuristicOracle::flag_fields(std::span<const std::string> texts, int) {
  ++calls_;
  std::vector<std::string> out;
  for (const auto& t : texts) {
    if (looks_like_field(t)) out.push_back(t);
  }
  return out;
}

RemoteOracle::RemoteOracle(OracleConfig config) : config_(std::move(config)) {
  const std::string& url = config_.endpoint;
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos || url.substr(0, scheme_end) != "http") {
    throw ValidationError("oracle endpoint must be an http:// URL: '" + url + "'");
  }
  auto path_start = url.find('/', scheme_end + 3);
  base_url_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
  if (config_.batch_size == 0) config_.batch_size = 1;
}

std::vector<std::string> RemoteOracle::flag_fields(std::span<const std::string> texts,
                                                   int cluster_id) {
  httplib::Client client(base_url_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  httplib::Headers headers;
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  std::vector<std::string> flagged;
  for (std::size_t begin = 0; begin < texts.size(); begin += config_.batch_size) {
    const auto batch = texts.subspan(begin, std::min(config_.batch_size, texts.size() - begin));
    std::string prompt = kFieldPrompt;
    for (const auto& t : batch) prompt += "\n" + t;
    json body;
    body["prompt"] = prompt;
    body["phrases"] = std::vector<std::string>(batch.begin(), batch.end());

    ++calls_;
    const auto payload = body.dump();
    auto res = client.Post(path_, headers, payload, "application/json");
    for (int attempt = 0; attempt < config_.retries && (!res || res->status >= 500); ++attempt) {
      spdlog::debug("retrying oracle request for cluster {}", cluster_id);
      res = client.Post(path_, headers, payload, "application/json");
    }
    if (!res) {
      throw OracleError("oracle request for cluster " + std::to_string(cluster_id) +
                            " failed: " + httplib::to_string(res.error()),
                        cluster_id);
    }
    if (res->status != 200) {
      throw OracleError("oracle returned HTTP " + std::to_string(res->status) + " for cluster " +
                            std::to_string(cluster_id),
                        cluster_id);
    }
    try {
      const auto reply = json::parse(res->body);
      FieldSet requested(batch.begin(), batch.end());
      for (const auto& f : reply.at("fields")) {
        auto text = f.get<std::string>();
        if (requested.count(text)) flagged.push_back(std::move(text));
      }
    } catch (const json::exception& e) {
      throw OracleError("malformed oracle reply for cluster " + std::to_string(cluster_id) + ": " +
                            e.what(),
                        cluster_id);
    }
  }
  return flagged;
}

FallbackOracle::FallbackOracle(std::unique_ptr<FieldLikelihoodOracle> primary,
                               std::unique_ptr<FieldLikelihoodOracle> fallback)
    : primary_(std::move(primary)), fallback_(std::move(fallback)) {}

std::vector<std::string> FallbackOracle::flag_fields(std::span<const std::string> texts,
                                                     int cluster_id) {
  try {
    return primary_->flag_fields(texts, cluster_id);
  } catch (const OracleError& e) {
    ++fallbacks_;
    spdlog::warn("{}; using heuristic oracle for cluster {}", e.what(), cluster_id);
    return fallback_->flag_fields(texts, cluster_id);
  }
}

std::unique_ptr<FieldLikelihoodOracle> make_oracle(const OracleConfig& config) {
  if (config.mode == OracleMode::kHeuristic) return std::make_unique<HeuristicOracle>();
  auto remote = std::make_unique<RemoteOracle>(config);
  if (!config.heuristic_fallback) return remote;
  return std::make_unique<FallbackOracle>(std::move(remote), std::make_unique<HeuristicOracle>());
}

}  // namespace formtree
