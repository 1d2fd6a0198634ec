#pragma once

// Row labeling: each row of the inference window gets one of K (table header),
// V (table tuple), KV (inline key-value pairs) or M (metadata) by maximizing
// the summed log-probability subject to header/value alignment constraints.

#include <array>
#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "formtree/document.h"
#include "formtree/fields.h"

namespace formtree {

enum class RowLabel : std::uint8_t { K = 0, V = 1, KV = 2, M = 3 };

inline constexpr std::array<RowLabel, 4> kAllLabels = {RowLabel::K, RowLabel::V, RowLabel::KV,
                                                       RowLabel::M};

const char* to_string(RowLabel label);

// Position in the tie-break order K > KV > V > M (lower is preferred).
int preference_rank(RowLabel label);

inline constexpr double kDefaultEpsilon = 1e-4;

struct RowLabelProbs {
  double k = 0;
  double v = 0;
  double kv = 0;
  double m = 0;

  double operator[](RowLabel label) const;
  double sum() const { return k + v + kv + m; }
};

// Pair-count probabilities over consecutive phrases: (field, field) -> K,
// (value, value) -> V, (field, value) -> KV, (value, field) ignored. M is set
// to epsilon and everything is divided by (1 + epsilon). A single-phrase row
// counts as all-K when the phrase is a field and all-V otherwise.
RowLabelProbs row_label_probabilities(const Row& row, const FieldSet& fields,
                                      double epsilon = kDefaultEpsilon);

// Adds epsilon to every label and renormalizes, so no log-probability is
// infinite. Solvers expect smoothed input.
RowLabelProbs smooth(const RowLabelProbs& probs, double epsilon = kDefaultEpsilon);

struct InferenceWindow {
  std::vector<Row> rows;
  std::size_t start_row = 0;
  std::size_t end_row = 0;  // inclusive
  bool fallback = false;    // condition unattainable, whole document used
};

// Shortest prefix of `rows` in which every field text occurs at least twice.
InferenceWindow select_window(std::span<const Row> rows, const FieldSet& fields);

class AlignmentMatrix {
 public:
  AlignmentMatrix() = default;
  explicit AlignmentMatrix(std::size_t n, bool value = false)
      : n_(n), cells_(n * n, value ? 1 : 0) {}

  std::size_t size() const { return n_; }
  bool operator()(std::size_t upper, std::size_t lower) const { return cells_[upper * n_ + lower]; }
  void set(std::size_t upper, std::size_t lower, bool value) {
    cells_[upper * n_ + lower] = value ? 1 : 0;
  }

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> cells_;
};

// A(i, j) = rows_well_aligned(rows[i], rows[j]).
AlignmentMatrix alignment_matrix(std::span<const Row> rows);

struct LabelAssignment {
  std::vector<RowLabel> labels;
  double objective = 0;  // sum of log-probabilities of the chosen labels
  bool optimal = false;
};

double assignment_objective(std::span<const RowLabel> labels, std::span<const RowLabelProbs> probs);

// Every K row has a later aligned V row; every V row has an earlier aligned K.
bool is_feasible(std::span<const RowLabel> labels, const AlignmentMatrix& aligned);

struct ExactSolverOptions {
  std::chrono::milliseconds budget{5000};
  std::string trace_path;  // one "objective elapsed_ms" line per incumbent
};

// Depth-first branch and bound over rows in order. Returns the optimum (ties
// broken lexicographically by K > KV > V > M) or, when the budget runs out,
// the best feasible assignment found with optimal = false.
LabelAssignment solve_exact(std::span<const RowLabelProbs> probs, const AlignmentMatrix& aligned,
                            const ExactSolverOptions& options = {});

// Per-row argmax followed by repair passes that move infeasible K and V rows
// down to their next-best feasible label. Always feasible.
LabelAssignment solve_heuristic(std::span<const RowLabelProbs> probs,
                                const AlignmentMatrix& aligned);

}  // namespace formtree
