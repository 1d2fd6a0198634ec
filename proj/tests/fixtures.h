#pragma once

// Small builders for hand-made phrase layouts.

#include <string>
#include <tuple>
#include <vector>

#include "formtree/document.h"

namespace formtree::testing {

struct Cellspec {
  std::string text;
  double x1;
  double x2;
};

inline Phrase phrase(std::string text, std::int64_t index, double x1, double y1, double x2, double y2,
                     int page = 1) {
  return {std::move(text), index, page, {x1, y1, x2, y2}};
}

// Appends one row of phrases at height `y` to `out`, continuing its indexes.
class Layout {
 public:
  Layout& row(const std::vector<Cellspec>& cells) {
    for (const auto& c : cells) {
      phrases_.push_back(phrase(c.text, next_++, c.x1, y_, c.x2, y_ + 10, page_));
    }
    y_ += 20;
    return *this;
  }
  Layout& page_break() {
    ++page_;
    y_ = 20;
    return *this;
  }
  const std::vector<Phrase>& phrases() const { return phrases_; }
  DocumentStream stream(std::string id = "fixture") const { return DocumentStream(phrases_, std::move(id)); }

 private:
  std::vector<Phrase> phrases_;
  std::int64_t next_ = 1;
  int page_ = 1;
  double y_ = 20;
};

// Column slots of width 200 starting at x = 20: slot c spans [20+200c, 220+200c).
inline Cellspec at(std::string text, int column, double width = 60) {
  const double x0 = 20 + 200.0 * column;
  return {std::move(text), x0 + 2, x0 + 2 + width};
}

// A phrase spanning columns [from, to].
inline Cellspec across(std::string text, int from, int to) {
  return {std::move(text), 20 + 200.0 * from + 2, 20 + 200.0 * to + 100};
}

// Police-like layout, two records:
//   title, header [Date Number Investigator Assigned], two value rows,
//   KV row [Complaint DOB Gender FEMALE-like], header [Allegation Finding],
//   one value row, header [Action Completed], one value row.
inline Layout police_layout(int records = 2) {
  Layout l;
  l.row({across("Complaints By Date 2023", 0, 3)});
  int v = 0;
  auto val = [&v](const std::string& prefix) { return prefix + "-" + std::to_string(++v); };
  for (int r = 0; r < records; ++r) {
    l.row({at("Date", 0, 30), at("Number", 1, 45), at("Investigator", 2, 80), at("Assigned", 3, 60)});
    l.row({at(val("5/15/2023"), 0, 70), at(val("05-01"), 1, 40), at(val("INV"), 2, 60), at(val("6/1/2023"), 3, 70)});
    l.row({at(val("5/16/2023"), 0, 70), at(val("05-02"), 1, 40), at(val("INV"), 2, 60), at(val("6/2/2023"), 3, 70)});
    l.row({{"Complaint", 22, 300}, {"DOB", 320, 350}, {"Gender", 420, 470}, {val("F"), 480, 540}});
    l.row({at("Allegation", 0, 70), at("Finding", 1, 55)});
    l.row({at(val("Force"), 0, 60), at(val("SUSTAINED"), 1, 80)});
    l.row({at("Action", 0, 45), at("Completed", 1, 70)});
    l.row({at(val("Training"), 0, 70), at(val("7/1/2023"), 1, 70)});
  }
  return l;
}

// Invoice-like layout with a nested table, `records` times:
//   KV row [Invoice v Issued v], parent header [Line Product], parent value,
//   child header [Start End Qty], child value, parent value, footer metadata.
// The first parent value spans both child columns 0 and 1.
inline Layout invoice_layout(int records = 2) {
  Layout l;
  int v = 0;
  auto val = [&v](const std::string& prefix) { return prefix + "-" + std::to_string(++v); };
  for (int r = 0; r < records; ++r) {
    l.row({{"Invoice", 22, 80}, {val("INV"), 100, 160}, {"Issued", 222, 270}, {val("1/2/2020"), 300, 370}});
    l.row({{"Line", 22, 52}, {"Product", 222, 280}});
    l.row({{val("L"), 22, 210}, {val("P"), 222, 300}});
    l.row({{"Start", 22, 60}, {"End", 122, 150}, {"Qty", 222, 250}});
    l.row({{val("S"), 22, 80}, {val("E"), 122, 180}, {val("Q"), 222, 250}});
    l.row({{val("L"), 22, 210}, {val("P"), 222, 300}});
    l.row({{val("Page"), 20, 600}, {val("Total"), 400, 900}});
  }
  return l;
}

}  // namespace formtree::testing
