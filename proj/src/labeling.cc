#include "formtree/labeling.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <spdlog/spdlog.h>

namespace formtree {

const char* to_string(RowLabel label) {
  switch (label) {
    case RowLabel::K: return "K";
    case RowLabel::V: return "V";
    case RowLabel::KV: return "KV";
    case RowLabel::M: return "M";
  }
  return "?";
}

int preference_rank(RowLabel label) {
  switch (label) {
    case RowLabel::K: return 0;
    case RowLabel::KV: return 1;
    case RowLabel::V: return 2;
    case RowLabel::M: return 3;
  }
  return 4;
}

double RowLabelProbs::operator[](RowLabel label) const {
  switch (label) {
    case RowLabel::K: return k;
    case RowLabel::V: return v;
    case RowLabel::KV: return kv;
    case RowLabel::M: return m;
  }
  return 0;
}

RowLabelProbs row_label_probabilities(const Row& row, const FieldSet& fields, double epsilon) {
  RowLabelProbs p;
  const auto& ph = row.phrases;
  if (ph.size() == 1) {
    (fields.count(ph[0].text) ? p.k : p.v) = 1.0;
  } else {
    int k = 0, v = 0, kv = 0;
    for (std::size_t i = 0; i + 1 < ph.size(); ++i) {
      const bool a = fields.count(ph[i].text) > 0;
      const bool b = fields.count(ph[i + 1].text) > 0;
      if (a && b) ++k;
      else if (!a && !b) ++v;
      else if (a && !b) ++kv;
    }
    const int m = k + v + kv;
    if (m > 0) {
      p.k = static_cast<double>(k) / m;
      p.v = static_cast<double>(v) / m;
      p.kv = static_cast<double>(kv) / m;
    }
  }
  p.m = epsilon;
  const double norm = 1.0 + epsilon;
  p.k /= norm;
  p.v /= norm;
  p.kv /= norm;
  p.m /= norm;
  return p;
}

RowLabelProbs smooth(const RowLabelProbs& probs, double epsilon) {
  RowLabelProbs s{probs.k + epsilon, probs.v + epsilon, probs.kv + epsilon, probs.m + epsilon};
  const double total = s.sum();
  s.k /= total;
  s.v /= total;
  s.kv /= total;
  s.m /= total;
  return s;
}

InferenceWindow select_window(std::span<const Row> rows, const FieldSet& fields) {
  InferenceWindow w;
  auto full = [&] {
    w.rows.assign(rows.begin(), rows.end());
    w.start_row = 0;
    w.end_row = rows.empty() ? 0 : rows.size() - 1;
    w.fallback = true;
    return w;
  };
  if (fields.empty()) {
    spdlog::warn("empty field set; labeling the whole document");
    return full();
  }
  std::unordered_map<std::string, int> seen;
  std::size_t satisfied = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (const auto& p : rows[r].phrases) {
      if (!fields.count(p.text)) continue;
      if (++seen[p.text] == 2) ++satisfied;
    }
    if (satisfied == fields.size()) {
      w.rows.assign(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(r) + 1);
      w.start_row = 0;
      w.end_row = r;
      return w;
    }
  }
  spdlog::warn("some predicted field occurs fewer than twice; labeling the whole document");
  return full();
}

AlignmentMatrix alignment_matrix(std::span<const Row> rows) {
  AlignmentMatrix a(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows.size(); ++j) {
      a.set(i, j, rows_well_aligned(rows[i], rows[j]));
    }
  }
  return a;
}

double assignment_objective(std::span<const RowLabel> labels, std::span<const RowLabelProbs> probs) {
  double total = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) total += std::log(probs[i][labels[i]]);
  return total;
}

bool is_feasible(std::span<const RowLabel> labels, const AlignmentMatrix& aligned) {
  const std::size_t n = labels.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] == RowLabel::K) {
      bool ok = false;
      for (std::size_t j = i + 1; j < n && !ok; ++j) ok = labels[j] == RowLabel::V && aligned(i, j);
      if (!ok) return false;
    } else if (labels[i] == RowLabel::V) {
      bool ok = false;
      for (std::size_t j = 0; j < i && !ok; ++j) ok = labels[j] == RowLabel::K && aligned(j, i);
      if (!ok) return false;
    }
  }
  return true;
}

namespace {

constexpr double kTieTolerance = 1e-9;

// Labels of one row in descending probability, ties by preference.
std::array<RowLabel, 4> label_order(const RowLabelProbs& p) {
  std::array<RowLabel, 4> order = {RowLabel::K, RowLabel::KV, RowLabel::V, RowLabel::M};
  std::stable_sort(order.begin(), order.end(),
                   [&](RowLabel a, RowLabel b) { return p[a] > p[b]; });
  return order;
}

bool lexicographically_preferred(std::span<const RowLabel> a, std::span<const RowLabel> b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    const int ra = preference_rank(a[i]);
    const int rb = preference_rank(b[i]);
    if (ra != rb) return ra < rb;
  }
  return false;
}

class BranchAndBound {
 public:
  BranchAndBound(std::span<const RowLabelProbs> probs, const AlignmentMatrix& aligned,
                 const ExactSolverOptions& options)
      : n_(probs.size()), aligned_(aligned), options_(options) {
    logp_.resize(n_);
    order_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      for (RowLabel l : kAllLabels) logp_[i][static_cast<int>(l)] = std::log(probs[i][l]);
      order_[i] = label_order(probs[i]);
    }
    has_later_.assign(n_, false);
    last_later_.assign(n_, 0);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = i + 1; j < n_; ++j) {
        if (aligned_(i, j)) {
          has_later_[i] = true;
          last_later_[i] = j;
        }
      }
    }
    k_sources_.assign(n_, 0);
    k_assigned_.assign(n_, 0);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < i; ++j) {
        if (aligned_(j, i) && has_later_[j]) ++k_sources_[i];
      }
    }
    labels_.assign(n_, RowLabel::M);
  }

  LabelAssignment run(LabelAssignment incumbent) {
    best_ = std::move(incumbent);
    start_ = std::chrono::steady_clock::now();
    if (!options_.trace_path.empty()) trace_.open(options_.trace_path);
    trace(best_.objective);
    search(0, 0.0);
    best_.optimal = !timed_out_;
    return best_;
  }

 private:
  double lp(std::size_t row, RowLabel l) const { return logp_[row][static_cast<int>(l)]; }

  bool allowed(std::size_t row, RowLabel l) const {
    if (l == RowLabel::K) return has_later_[row];
    if (l == RowLabel::V) return k_sources_[row] > 0;
    return true;
  }

  double bound_from(std::size_t depth) const {
    double total = 0;
    for (std::size_t i = depth; i < n_; ++i) {
      double best = -INFINITY;
      for (RowLabel l : kAllLabels) {
        if (allowed(i, l)) best = std::max(best, lp(i, l));
      }
      total += best;
    }
    return total;
  }

  bool out_of_time() {
    if (timed_out_) return true;
    if ((++nodes_ & 0xFFF) == 0 &&
        std::chrono::steady_clock::now() - start_ > options_.budget) {
      timed_out_ = true;
    }
    return timed_out_;
  }

  void trace(double objective) {
    if (!trace_.is_open()) return;
    const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_);
    trace_ << objective << ' ' << ms.count() << '\n';
  }

  void offer(double objective) {
    const bool better = objective > best_.objective + kTieTolerance;
    const bool tie = std::abs(objective - best_.objective) <= kTieTolerance;
    if (better || (tie && lexicographically_preferred(labels_, best_.labels))) {
      best_.labels = labels_;
      best_.objective = objective;
      trace(objective);
    }
  }

  void search(std::size_t depth, double partial) {
    if (out_of_time()) return;
    if (depth == n_) {
      offer(partial);
      return;
    }
    for (RowLabel l : order_[depth]) {
      if (!allowed(depth, l)) continue;
      if (l == RowLabel::V && k_assigned_[depth] == 0) continue;
      assign(depth, l, partial);
      if (timed_out_) return;
    }
  }

  void assign(std::size_t d, RowLabel l, double partial) {
    const std::vector<std::size_t> saved_unsat = unsatisfied_k_;
    labels_[d] = l;
    if (l == RowLabel::K) {
      for (std::size_t i = d + 1; i < n_; ++i) {
        if (aligned_(d, i)) ++k_assigned_[i];
      }
      unsatisfied_k_.push_back(d);
    } else if (has_later_[d]) {
      for (std::size_t i = d + 1; i < n_; ++i) {
        if (aligned_(d, i)) --k_sources_[i];
      }
    }
    if (l == RowLabel::V) {
      std::erase_if(unsatisfied_k_, [&](std::size_t k) { return aligned_(k, d); });
    }
    const bool pending_ok = std::all_of(unsatisfied_k_.begin(), unsatisfied_k_.end(),
                                        [&](std::size_t k) { return last_later_[k] > d; });
    const double next = partial + lp(d, l);
    if (pending_ok && next + bound_from(d + 1) >= best_.objective - kTieTolerance) {
      search(d + 1, next);
    }
    // undo
    if (l == RowLabel::K) {
      for (std::size_t i = d + 1; i < n_; ++i) {
        if (aligned_(d, i)) --k_assigned_[i];
      }
    } else if (has_later_[d]) {
      for (std::size_t i = d + 1; i < n_; ++i) {
        if (aligned_(d, i)) ++k_sources_[i];
      }
    }
    unsatisfied_k_ = saved_unsat;
    labels_[d] = RowLabel::M;
  }

  std::size_t n_;
  const AlignmentMatrix& aligned_;
  ExactSolverOptions options_;
  std::vector<std::array<double, 4>> logp_;
  std::vector<std::array<RowLabel, 4>> order_;
  std::vector<bool> has_later_;
  std::vector<std::size_t> last_later_;
  std::vector<int> k_sources_;   // earlier aligned rows that are or may become K
  std::vector<int> k_assigned_;  // earlier aligned rows assigned K
  std::vector<std::size_t> unsatisfied_k_;
  std::vector<RowLabel> labels_;
  LabelAssignment best_;
  std::chrono::steady_clock::time_point start_;
  std::uint64_t nodes_ = 0;
  bool timed_out_ = false;
  std::ofstream trace_;
};

}  // namespace

LabelAssignment solve_heuristic(std::span<const RowLabelProbs> probs, const AlignmentMatrix& aligned) {
  const std::size_t n = probs.size();
  std::vector<std::array<RowLabel, 4>> order(n);
  std::vector<int> choice(n, 0);
  LabelAssignment out;
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    order[i] = label_order(probs[i]);
    out.labels[i] = order[i][0];
  }
  auto k_ok = [&](std::size_t i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (out.labels[j] == RowLabel::V && aligned(i, j)) return true;
    }
    return false;
  };
  auto v_ok = [&](std::size_t i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (out.labels[j] == RowLabel::K && aligned(j, i)) return true;
    }
    return false;
  };
  auto ok = [&](std::size_t i, RowLabel l) {
    if (l == RowLabel::K) return k_ok(i);
    if (l == RowLabel::V) return v_ok(i);
    return true;
  };
  // Labels only ever move down each row's list, so this terminates.
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (ok(i, out.labels[i])) continue;
      do {
        ++choice[i];
      } while (choice[i] < 4 && !ok(i, order[i][choice[i]]));
      out.labels[i] = choice[i] < 4 ? order[i][choice[i]] : RowLabel::M;
      changed = true;
    }
  }
  out.objective = assignment_objective(out.labels, probs);
  out.optimal = false;
  return out;
}

LabelAssignment solve_exact(std::span<const RowLabelProbs> probs, const AlignmentMatrix& aligned,
                            const ExactSolverOptions& options) {
  LabelAssignment start = solve_heuristic(probs, aligned);
  BranchAndBound bb(probs, aligned, options);
  LabelAssignment result = bb.run(std::move(start));
  if (!result.optimal) {
    spdlog::warn("row labeling budget exhausted; returning best feasible assignment");
  }
  return result;
}

}  // namespace formtree
