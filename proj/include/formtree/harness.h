#pragma once

// Synthetic corpus generation with ground truth, and key-value scoring.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "formtree/document.h"
#include "formtree/extraction.h"
#include "formtree/template.h"

namespace formtree {

enum class ValueStyle { kCode, kNumber, kDate, kAmount };
enum class MetadataPolicy { kUnaligned, kAligned };

struct NodeSpec {
  std::map<std::string, double> missing;  // per field, default 0
  std::pair<int, int> tuples{1, 4};       // tables: value rows per block
  std::pair<int, int> repeat{1, 1};       // nested nodes: blocks per parent gap
  ValueStyle values = ValueStyle::kCode;
};

struct GeneratorSpec {
  Template tmpl;
  std::map<int, NodeSpec> nodes;  // by template node id; absent ids use defaults
  int documents = 1;
  int records = 2;  // per document
  int metadata_rows = 1;  // per record; the first one closes the record
  MetadataPolicy metadata_policy = MetadataPolicy::kUnaligned;
  bool title = true;  // one metadata row opening each document
  int kv_pairs_per_row = 2;
  bool compliant = true;
  double noncompliance_rate = 0.0;  // share of value phrases made non-compliant
  std::uint64_t seed = 1;

  const NodeSpec& node_spec(int id) const;
};

// Throws ValidationError naming the first violated layout rule.
void validate_spec(const GeneratorSpec& spec);

GeneratorSpec parse_spec(const std::string& text);  // throws ValidationError
GeneratorSpec load_spec(const std::string& path);
std::string serialize_spec(const GeneratorSpec& spec);

// Per document: the intended extraction (records hold their phrase index
// ranges, metadata is left empty).
struct GroundTruth {
  std::vector<DocumentExtraction> documents;
};

struct GeneratedCorpus {
  std::vector<DocumentStream> documents;
  GroundTruth truth;
};

// Deterministic under spec.seed. Runs validate_spec first.
GeneratedCorpus generate(const GeneratorSpec& spec);

// Random valid specs for the acceptance and property suites.
struct SpecShape {
  bool nested = false;
  std::pair<int, int> records{5, 50};
  std::pair<int, int> root_nodes{1, 3};
  bool allow_key_value = true;
  bool allow_table = true;
  bool missing_values = true;
};
GeneratorSpec sample_spec(std::uint64_t seed, const SpecShape& shape = {});

// Every table value aligned with exactly one header phrase and every
// key-value value preceded by its field, judged under `tmpl`.
std::vector<std::string> compliance_violations(const DocumentStream& doc, const Template& tmpl);

using KeyValuePair = std::pair<std::string, Cell>;
using KeyValueBag = std::map<KeyValuePair, std::size_t>;  // multiset

// Table cells become (header, cell); pairs pass through; children recurse.
std::vector<KeyValuePair> flatten_kv(const ExtractionObject& object);
std::vector<KeyValuePair> flatten_kv(const DocumentExtraction& extraction);
KeyValueBag to_bag(std::span<const KeyValuePair> pairs);

struct PairScore {
  double precision = 0;
  double recall = 0;
  std::size_t predicted = 0;
  std::size_t truth = 0;
  std::size_t matched = 0;
};

// Multiset intersection. Empty prediction scores precision 0 unless the
// truth is empty too, which scores (1, 1).
PairScore score(const KeyValueBag& predicted, const KeyValueBag& truth);

struct DocumentScore {
  std::string source;
  PairScore score;
};

struct ScoreReport {
  std::vector<DocumentScore> documents;
  double precision = 0;  // mean over documents
  double recall = 0;
};

// Documents are paired by source id; a truth document without a prediction
// scores against an empty prediction.
ScoreReport score_corpus(std::span<const DocumentExtraction> predicted,
                         std::span<const DocumentExtraction> truth);

std::string report_json(const ScoreReport& report);
std::string report_table(const ScoreReport& report);

}  // namespace formtree
