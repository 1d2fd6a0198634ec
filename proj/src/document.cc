#include "formtree/document.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "formtree/errors.h"
#include "json.hpp"

namespace formtree {

using json = nlohmann::ordered_json;

std::vector<std::string> Row::texts() const {
  std::vector<std::string> out;
  out.reserve(phrases.size());
  for (const auto& p : phrases) out.push_back(p.text);
  return out;
}

bool horizontally_aligned(const Phrase& a, const Phrase& b) {
  if (a.page != b.page) return false;
  return a.bbox.y1 <= b.bbox.y2 && a.bbox.y2 >= b.bbox.y1;
}

bool vertically_aligned(const Phrase& a, const Phrase& b) {
  return b.bbox.x1 <= a.bbox.x2 && b.bbox.x2 >= a.bbox.x1;
}

double x_overlap(const Phrase& a, const Phrase& b) {
  double lo = std::max(a.bbox.x1, b.bbox.x1);
  double hi = std::min(a.bbox.x2, b.bbox.x2);
  return std::max(0.0, hi - lo);
}

std::vector<Row> build_rows(std::span<const Phrase> phrases) {
  std::vector<Row> rows;
  // Rows never span pages, so only rows of the phrase's page are candidates.
  std::map<int, std::vector<std::size_t>> rows_by_page;
  for (const Phrase& p : phrases) {
    auto& candidates = rows_by_page[p.page];
    bool placed = false;
    for (std::size_t r : candidates) {
      const auto& members = rows[r].phrases;
      bool all = std::all_of(members.begin(), members.end(), [&](const Phrase& q) {
        return horizontally_aligned(p, q);
      });
      if (all) {
        rows[r].phrases.push_back(p);
        placed = true;
        break;
      }
    }
    if (!placed) {
      Row row;
      row.row_index = rows.size();
      row.phrases.push_back(p);
      candidates.push_back(rows.size());
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

bool rows_well_aligned(const Row& upper, const Row& lower) {
  for (const Phrase& q : lower.phrases) {
    int hits = 0;
    for (const Phrase& p : upper.phrases) {
      if (vertically_aligned(p, q) && ++hits >= 2) return false;
    }
  }
  return true;
}

void validate_phrase(const Phrase& p, const std::string& where) {
  const auto& b = p.bbox;
  auto fail = [&](const std::string& msg) {
    throw ValidationError(where + ": " + msg);
  };
  for (double v : {b.x1, b.y1, b.x2, b.y2}) {
    if (!std::isfinite(v) || v < 0) fail("bbox coordinates must be finite and non-negative");
  }
  if (!(b.x1 < b.x2)) fail("bbox requires x1 < x2");
  if (!(b.y1 < b.y2)) fail("bbox requires y1 < y2");
  if (p.index <= 0) fail("index must be positive");
  if (p.page <= 0) fail("page must be positive");
}

DocumentStream::DocumentStream(std::vector<Phrase> phrases, std::string source_id)
    : phrases_(std::move(phrases)), source_id_(std::move(source_id)) {
  for (const auto& p : phrases_) {
    validate_phrase(p, source_id_ + ": index " + std::to_string(p.index));
  }
  std::stable_sort(phrases_.begin(), phrases_.end(),
                   [](const Phrase& a, const Phrase& b) { return a.index < b.index; });
  for (std::size_t i = 1; i < phrases_.size(); ++i) {
    if (phrases_[i].index == phrases_[i - 1].index) {
      throw ValidationError(source_id_ + ": duplicate phrase index " +
                            std::to_string(phrases_[i].index));
    }
  }
  rows_ = build_rows(phrases_);
}

DocumentStream concatenate(std::span<const DocumentStream> documents, std::string source_id) {
  std::vector<Phrase> all;
  std::int64_t index_offset = 0;
  int page_offset = 0;
  for (const auto& doc : documents) {
    std::int64_t max_index = 0;
    int max_page = 0;
    for (Phrase p : doc.phrases()) {
      max_index = std::max(max_index, p.index);
      max_page = std::max(max_page, p.page);
      p.index += index_offset;
      p.page += page_offset;
      all.push_back(std::move(p));
    }
    index_offset += max_index;
    page_offset += max_page;
  }
  return DocumentStream(std::move(all), std::move(source_id));
}

namespace {

Phrase parse_phrase(const std::string& line, const std::string& where) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ValidationError(where + ": malformed JSON (" + e.what() + ")");
  }
  if (!j.is_object()) throw ValidationError(where + ": expected a JSON object");
  Phrase p;
  try {
    p.text = j.at("text").get<std::string>();
    p.index = j.at("index").get<std::int64_t>();
    p.page = j.contains("page") ? j.at("page").get<int>() : 1;
    const auto& bb = j.at("bbox");
    if (!bb.is_array() || bb.size() != 4) {
      throw ValidationError(where + ": bbox must be an array of four numbers");
    }
    for (const auto& v : bb) {
      if (!v.is_number()) throw ValidationError(where + ": bbox must be an array of four numbers");
    }
    p.bbox = {bb[0].get<double>(), bb[1].get<double>(), bb[2].get<double>(), bb[3].get<double>()};
  } catch (const json::exception& e) {
    throw ValidationError(where + ": bad phrase record (" + e.what() + ")");
  }
  validate_phrase(p, where);
  return p;
}

}  // namespace

DocumentStream read_phrase_stream(std::istream& in, const std::string& source_id) {
  std::vector<Phrase> phrases;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    phrases.push_back(parse_phrase(line, source_id + ":" + std::to_string(line_no)));
  }
  return DocumentStream(std::move(phrases), source_id);
}

DocumentStream load_phrase_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read " + path.string());
  return read_phrase_stream(in, path.filename().string());
}

void write_phrase_stream(std::ostream& out, const DocumentStream& doc) {
  for (const auto& p : doc.phrases()) {
    json j;
    j["text"] = p.text;
    j["index"] = p.index;
    j["page"] = p.page;
    j["bbox"] = {p.bbox.x1, p.bbox.y1, p.bbox.x2, p.bbox.y2};
    out << j.dump() << '\n';
  }
}

std::vector<DocumentStream> load_corpus(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (fs::is_regular_file(path, ec)) return {load_phrase_file(path)};
  if (!fs::is_directory(path, ec)) throw ValidationError("cannot read " + path.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(path)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
  if (files.empty()) throw ValidationError("no *.jsonl phrase files in " + path.string());
  std::vector<DocumentStream> docs;
  docs.reserve(files.size());
  for (const auto& f : files) docs.push_back(load_phrase_file(f));
  return docs;
}

}  // namespace formtree
