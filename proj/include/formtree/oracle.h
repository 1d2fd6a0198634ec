#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <string>

#include "formtree/fields.h"

namespace formtree {

enum class OracleMode { kHeuristic, kRemote };

struct OracleConfig {
  OracleMode mode = OracleMode::kHeuristic;
  std::string endpoint;  // http://host[:port]/path
  std::chrono::milliseconds timeout{10000};
  std::size_t batch_size = 64;
  int retries = 1;  // extra attempts on transport errors and 5xx replies
  std::string api_key_env = "FORMTREE_ORACLE_KEY";
  bool heuristic_fallback = false;  // on remote failure, answer heuristically
};

// Instruction sent with every remote request; member texts follow, one per
// line.
inline constexpr const char* kFieldPrompt =
    "Given the set of phrases with the type as key or value, return the phrases that are "
    "more likely to be keys";

// Offline, deterministic: a text is a field iff it has at least one letter, no
// digit, and at most 40 characters. Non-ASCII code points count as letters.
bool looks_like_field(const std::string& text);

class HeuristicOracle : public FieldLikelihoodOracle {
 public:
  std::vector<std::string> flag_fields(std::span<const std::string> texts, int cluster_id) override;
  std::size_t calls() const override { return calls_; }

 private:
  std::atomic<std::size_t> calls_{0};
};

// POSTs {"prompt": ..., "phrases": [...]} and expects {"fields": [...]}.
// Returned texts are matched exactly against the request; unknown ones are
// ignored. Throws OracleError on transport or protocol failure.
class RemoteOracle : public FieldLikelihoodOracle {
 public:
  explicit RemoteOracle(OracleConfig config);

  std::vector<std::string> flag_fields(std::span<const std::string> texts, int cluster_id) override;
  std::size_t calls() const override { return calls_; }

 private:
  OracleConfig config_;
  std::string base_url_;
  std::string path_;
  std::atomic<std::size_t> calls_{0};
};

// Answers with `fallback` whenever `primary` throws OracleError.
class FallbackOracle : public FieldLikelihoodOracle {
 public:
  FallbackOracle(std::unique_ptr<FieldLikelihoodOracle> primary,
                 std::unique_ptr<FieldLikelihoodOracle> fallback);

  std::vector<std::string> flag_fields(std::span<const std::string> texts, int cluster_id) override;
  std::size_t calls() const override { return primary_->calls(); }
  std::size_t fallbacks() const { return fallbacks_; }

 private:
  std::unique_ptr<FieldLikelihoodOracle> primary_;
  std::unique_ptr<FieldLikelihoodOracle> fallback_;
  std::atomic<std::size_t> fallbacks_{0};
};

std::unique_ptr<FieldLikelihoodOracle> make_oracle(const OracleConfig& config);

}  // namespace formtree
