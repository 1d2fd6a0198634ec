#pragma once

// Template-driven extraction: split rows into records, records into blocks,
// and blocks into table tuples or key-value pairs.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "formtree/document.h"
#include "formtree/template.h"

namespace formtree {

// Missing cells and values are std::nullopt; serialized as null.
using Cell = std::optional<std::string>;

struct RecordSpan {
  std::size_t first_row = 0;  // indexes into the document's rows
  std::size_t last_row = 0;   // inclusive
  std::size_t ordinal = 0;    // 1-based
  bool partial = false;       // trailing record that did not visit every node

  std::size_t size() const { return last_row - first_row + 1; }
};

struct Block {
  int node_id = 0;
  NodeType type = NodeType::kTable;
  std::vector<std::string> fields;  // the node's fields
  std::vector<Row> rows;            // tables: header first

  std::size_t first_row() const { return rows.front().row_index; }
  std::size_t last_row() const { return rows.back().row_index; }
};

enum class MetadataRelation { kAbove, kBelow, kSameRow };
const char* to_string(MetadataRelation relation);

struct MetadataEntry {
  std::string text;
  int page = 1;
  BoundingBox bbox;
  std::optional<int> nearest_node;
  MetadataRelation relation = MetadataRelation::kAbove;
};

struct ExtractionObject {
  int node_id = 0;
  NodeType type = NodeType::kTable;
  std::vector<std::string> fields;
  std::vector<std::vector<Cell>> tuples;                 // tables
  std::vector<std::pair<std::string, Cell>> pairs;       // key-value blocks
  std::vector<ExtractionObject> children;

  // Row span of the source block; not serialized.
  std::size_t first_row = 0;
  std::size_t last_row = 0;

  friend bool operator==(const ExtractionObject& a, const ExtractionObject& b) {
    return a.node_id == b.node_id && a.type == b.type && a.fields == b.fields &&
           a.tuples == b.tuples && a.pairs == b.pairs && a.children == b.children;
  }
};

struct RecordExtraction {
  std::size_t ordinal = 0;
  bool partial = false;
  std::vector<ExtractionObject> objects;  // children of the artificial root
  std::int64_t first_index = 0;           // phrase index range of the record
  std::int64_t last_index = 0;

  friend bool operator==(const RecordExtraction& a, const RecordExtraction& b) {
    return a.ordinal == b.ordinal && a.partial == b.partial && a.objects == b.objects;
  }
};

struct DocumentExtraction {
  std::string source_id;
  std::vector<RecordExtraction> records;
  std::vector<MetadataEntry> metadata;
};

// Scans rows accumulating phrases since the last node visit. Once every node
// has been visited, a fresh visit of the first pre-order node opens the next
// record at the first row of that visit. Throws PipelineError
// ("template mismatch") if the first node is never visited.
std::vector<RecordSpan> separate_records(std::span<const Row> rows, const Template& tmpl);

struct BlockSeparation {
  std::vector<Block> blocks;               // ordered by first row
  std::vector<std::size_t> metadata_rows;  // document row indexes
};

// Labels record rows from the template (K: holds all fields of a table node;
// KV: touches a key-value node's fields; otherwise V), attaches each V row to
// its closest preceding key row when aligned, else to the closest preceding
// aligned key row of a node with children, else calls it metadata.
BlockSeparation separate_blocks(std::span<const Row> rows, const RecordSpan& record,
                                const Template& tmpl);

// Each value-row phrase goes to the header field it is vertically aligned
// with (largest x-overlap, then leftmost). Unaligned phrases land in
// `sidecar` when given.
ExtractionObject extract_table(const Block& block, std::vector<MetadataEntry>* sidecar = nullptr);

// Consecutive-pair scan: (field, value) pairs up, (field, field) and a
// trailing field yield (field, missing). Unconsumed values go to `sidecar`.
ExtractionObject extract_kv(const Block& block, std::vector<MetadataEntry>* sidecar = nullptr);

// Nests each object under the innermost earlier overlapping object whose node
// is a template ancestor of its own; everything else hangs off the root.
std::vector<ExtractionObject> assemble_objects(std::vector<ExtractionObject> objects,
                                               const Template& tmpl);

DocumentExtraction extract_document(const DocumentStream& doc, const Template& tmpl);

std::string serialize_extraction(const DocumentExtraction& extraction);
DocumentExtraction parse_extraction(const std::string& text);  // throws ValidationError

}  // namespace formtree
