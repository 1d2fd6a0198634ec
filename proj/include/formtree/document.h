#pragma once

// Phrase streams, rows and the geometric predicates used by every stage.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace formtree {

// Page coordinates: x from the left page edge, y from the top page edge.
struct BoundingBox {
  double x1 = 0;
  double y1 = 0;
  double x2 = 0;
  double y2 = 0;

  double width() const { return x2 - x1; }
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

// One OCR token. `index` is the 1-based reading order within its stream.
struct Phrase {
  std::string text;
  std::int64_t index = 0;
  int page = 1;
  BoundingBox bbox;

  friend bool operator==(const Phrase&, const Phrase&) = default;
};

struct Row {
  std::vector<Phrase> phrases;  // ascending index
  std::size_t row_index = 0;

  std::int64_t first_index() const { return phrases.front().index; }
  int page() const { return phrases.front().page; }
  std::vector<std::string> texts() const;
};

// Closed-interval overlap of the y extents; phrases on different pages are
// never aligned.
bool horizontally_aligned(const Phrase& a, const Phrase& b);

// Closed-interval overlap of the x extents.
bool vertically_aligned(const Phrase& a, const Phrase& b);

// Length of the x-overlap of two phrases (0 when disjoint or touching).
double x_overlap(const Phrase& a, const Phrase& b);

// Greedy row construction over phrases sorted by index: each phrase joins the
// earliest-created row whose every member it is horizontally aligned with.
std::vector<Row> build_rows(std::span<const Phrase> phrases);

// True iff no phrase of `lower` is vertically aligned with two or more
// distinct phrases of `upper`. Asymmetric in general.
bool rows_well_aligned(const Row& upper, const Row& lower);

// An immutable, validated phrase stream together with its rows.
class DocumentStream {
 public:
  DocumentStream() = default;

  // Validates each phrase, sorts by index and rejects duplicate indexes.
  // Throws ValidationError.
  DocumentStream(std::vector<Phrase> phrases, std::string source_id);

  const std::vector<Phrase>& phrases() const { return phrases_; }
  const std::vector<Row>& rows() const { return rows_; }
  const std::string& source_id() const { return source_id_; }
  bool empty() const { return phrases_.empty(); }

 private:
  std::vector<Phrase> phrases_;
  std::vector<Row> rows_;
  std::string source_id_;
};

// Checks bbox sanity, index and page positivity. Throws ValidationError whose
// message starts with `where` (typically "file:line").
void validate_phrase(const Phrase& p, const std::string& where);

// Concatenates documents into one stream. Indexes and page numbers of each
// document are shifted past the previous document's maximum so they stay
// unique and rows never merge across documents.
DocumentStream concatenate(std::span<const DocumentStream> documents,
                           std::string source_id = "corpus");

// JSON-lines phrase stream: one {"text","index","page","bbox":[x1,y1,x2,y2]}
// object per line. Blank lines are skipped.
DocumentStream read_phrase_stream(std::istream& in,
                                  const std::string& source_id);
DocumentStream load_phrase_file(const std::filesystem::path& path);
void write_phrase_stream(std::ostream& out, const DocumentStream& doc);

// A single file, or every *.jsonl file of a directory in lexicographic
// filename order.
std::vector<DocumentStream> load_corpus(const std::filesystem::path& path);

}  // namespace formtree
