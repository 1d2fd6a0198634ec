#pragma once

// End-to-end wiring: fields -> window -> labels -> template -> extraction.

#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "formtree/extraction.h"
#include "formtree/fields.h"
#include "formtree/labeling.h"
#include "formtree/oracle.h"
#include "formtree/template.h"

namespace formtree {

enum class WindowFallback { kWholeDocument, kFail };

struct PipelineConfig {
  double epsilon = kDefaultEpsilon;
  double z = 1.96;
  OracleConfig oracle;
  std::chrono::milliseconds budget{5000};
  WindowFallback window_fallback = WindowFallback::kWholeDocument;
  bool refine_fields = false;
  int parallel = 1;
  std::uint64_t seed = 1;
  std::string trace_path;  // solver incumbent trace, empty to disable

  // Throws ValidationError.
  void validate() const;
};

// Overlays keys present in a JSON config object onto `config`. Unknown keys
// are rejected. Throws ValidationError.
void apply_config_json(PipelineConfig& config, const std::string& text);

struct LearnedTemplate {
  FieldSet fields;
  InferenceWindow window;
  std::vector<RowLabelProbs> probs;
  LabelAssignment labels;
  Template tmpl;
};

// Field prediction, window selection, labeling and template inference over
// one (usually concatenated) stream.
LearnedTemplate learn_template(const DocumentStream& corpus, FieldLikelihoodOracle& oracle,
                               const PipelineConfig& config);

// Runs extract_document on every document with up to `parallel` workers;
// output order follows input order.
std::vector<DocumentExtraction> extract_corpus(std::span<const DocumentStream> documents,
                                               const Template& tmpl, int parallel = 1);

struct PipelineResult {
  LearnedTemplate learned;
  std::vector<DocumentExtraction> extractions;
};

// Learns the template on the concatenation of `documents`, then extracts
// each document on its own rows.
PipelineResult run_pipeline(std::span<const DocumentStream> documents,
                            FieldLikelihoodOracle& oracle, const PipelineConfig& config);

}  // namespace formtree
