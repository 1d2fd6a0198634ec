#include "formtree/pipeline.h"

#include <atomic>
#include <exception>
#include <set>
#include <thread>

#include <spdlog/spdlog.h>

#include "formtree/errors.h"
#include "json.hpp"

namespace formtree {

using json = nlohmann::json;

void PipelineConfig::validate() const {
  if (!(epsilon > 0)) throw ValidationError("epsilon must be positive");
  if (!(z > 0)) throw ValidationError("z must be positive");
  if (budget.count() <= 0) throw ValidationError("solver budget must be positive");
  if (parallel < 1) throw ValidationError("parallelism must be at least 1");
  if (oracle.timeout.count() <= 0) throw ValidationError("oracle timeout must be positive");
  if (oracle.mode == OracleMode::kRemote && oracle.endpoint.empty()) {
    throw ValidationError("remote oracle needs an endpoint");
  }
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& keys, const std::string& where) {
  for (const auto& [k, v] : j.items()) {
    if (!keys.count(k)) throw ValidationError("unknown " + where + " key '" + k + "'");
  }
}

OracleMode oracle_mode_from(const std::string& s) {
  if (s == "heuristic") return OracleMode::kHeuristic;
  if (s == "remote") return OracleMode::kRemote;
  throw ValidationError("unknown oracle mode '" + s + "'");
}

}  // namespace

void apply_config_json(PipelineConfig& config, const std::string& text) {
  try {
    const auto j = json::parse(text);
    if (!j.is_object()) throw ValidationError("config must be a JSON object");
    reject_unknown(j, {"epsilon", "z", "budget_ms", "window_fallback", "refine_fields", "parallel",
                       "seed", "trace", "oracle"},
                   "config");
    if (j.contains("epsilon")) config.epsilon = j["epsilon"].get<double>();
    if (j.contains("z")) config.z = j["z"].get<double>();
    if (j.contains("budget_ms")) config.budget = std::chrono::milliseconds(j["budget_ms"].get<std::int64_t>());
    if (j.contains("window_fallback")) {
      const auto s = j["window_fallback"].get<std::string>();
      if (s == "whole-document") config.window_fallback = WindowFallback::kWholeDocument;
      else if (s == "fail") config.window_fallback = WindowFallback::kFail;
      else throw ValidationError("unknown window_fallback '" + s + "'");
    }
    if (j.contains("refine_fields")) config.refine_fields = j["refine_fields"].get<bool>();
    if (j.contains("parallel")) config.parallel = j["parallel"].get<int>();
    if (j.contains("seed")) config.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("trace")) config.trace_path = j["trace"].get<std::string>();
    if (j.contains("oracle")) {
      const auto& o = j["oracle"];
      reject_unknown(o, {"mode", "endpoint", "timeout_ms", "batch_size", "retries", "api_key_env", "fallback"},
                     "oracle");
      if (o.contains("mode")) config.oracle.mode = oracle_mode_from(o["mode"].get<std::string>());
      if (o.contains("endpoint")) config.oracle.endpoint = o["endpoint"].get<std::string>();
      if (o.contains("timeout_ms")) {
        config.oracle.timeout = std::chrono::milliseconds(o["timeout_ms"].get<std::int64_t>());
      }
      if (o.contains("batch_size")) config.oracle.batch_size = o["batch_size"].get<std::size_t>();
      if (o.contains("retries")) config.oracle.retries = o["retries"].get<int>();
      if (o.contains("api_key_env")) config.oracle.api_key_env = o["api_key_env"].get<std::string>();
      if (o.contains("fallback")) config.oracle.heuristic_fallback = o["fallback"].get<bool>();
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed config: ") + e.what());
  }
}

namespace {

struct Labeled {
  InferenceWindow window;
  std::vector<RowLabelProbs> probs;
  LabelAssignment labels;
};

Labeled label_window(const DocumentStream& corpus, const FieldSet& fields, const PipelineConfig& config) {
  Labeled out;
  out.window = select_window(corpus.rows(), fields);
  if (out.window.fallback) {
    if (config.window_fallback == WindowFallback::kFail) {
      throw PipelineError("no inference window: some field occurs fewer than two times");
    }
    spdlog::warn("no row prefix repeats every field; using all {} rows", out.window.rows.size());
  }
  for (const auto& row : out.window.rows) {
    out.probs.push_back(smooth(row_label_probabilities(row, fields, config.epsilon), config.epsilon));
  }
  const auto aligned = alignment_matrix(out.window.rows);
  out.labels = solve_exact(out.probs, aligned, {config.budget, config.trace_path});
  if (!out.labels.optimal) spdlog::warn("solver budget exhausted; using best labeling found");
  return out;
}

}  // namespace

LearnedTemplate learn_template(const DocumentStream& corpus, FieldLikelihoodOracle& oracle,
                               const PipelineConfig& config) {
  config.validate();
  LearnedTemplate out;
  out.fields = predict_fields(corpus, oracle, {config.z, config.parallel});
  spdlog::info("predicted {} fields", out.fields.size());
  if (out.fields.empty()) throw PipelineError("no structure found: no fields predicted");

  auto labeled = label_window(corpus, out.fields, config);
  if (config.refine_fields) {
    auto refined = refine_fields(labeled.window.rows, labeled.labels.labels, out.fields);
    if (refined != out.fields && !refined.empty()) {
      spdlog::info("refinement dropped {} fields", out.fields.size() - refined.size());
      out.fields = std::move(refined);
      labeled = label_window(corpus, out.fields, config);
    }
  }
  out.window = std::move(labeled.window);
  out.probs = std::move(labeled.probs);
  out.labels = std::move(labeled.labels);
  out.tmpl = infer_template(out.window, out.labels, out.fields);
  return out;
}

std::vector<DocumentExtraction> extract_corpus(std::span<const DocumentStream> documents,
                                               const Template& tmpl, int parallel) {
  std::vector<DocumentExtraction> out(documents.size());
  std::vector<std::exception_ptr> errors(documents.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < documents.size(); i = next++) {
      try {
        out[i] = extract_document(documents[i], tmpl);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(parallel, 1)), documents.size());
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

PipelineResult run_pipeline(std::span<const DocumentStream> documents,
                            FieldLikelihoodOracle& oracle, const PipelineConfig& config) {
  if (documents.empty()) throw ValidationError("empty corpus");
  PipelineResult out;
  if (documents.size() == 1) {
    out.learned = learn_template(documents.front(), oracle, config);
  } else {
    out.learned = learn_template(concatenate(documents), oracle, config);
  }
  out.extractions = extract_corpus(documents, out.learned.tmpl, config.parallel);
  return out;
}

}  // namespace formtree
