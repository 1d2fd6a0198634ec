#pragma once

// Field prediction from location vectors: cluster phrases whose occurrences
// move in lockstep, score clusters with a field-likelihood oracle, keep the
// undominated clusters, then recover clusters that partially match them.

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "formtree/document.h"

namespace formtree {

using FieldSet = std::set<std::string>;

struct LocationVector {
  std::string text;
  std::vector<std::int64_t> indexes;  // strictly ascending

  std::size_t size() const { return indexes.size(); }
};

struct MatchResult {
  bool matched = false;
  std::optional<std::int64_t> delta;  // set iff matched
};

struct Cluster {
  int id = 0;
  std::vector<LocationVector> members;  // distinct texts
  std::optional<double> prob_field;
  std::optional<double> ci_width;

  std::size_t size() const { return members.size(); }
  bool singleton() const { return members.size() == 1; }
};

// Decides which phrase texts look like fields (keys) rather than values.
class FieldLikelihoodOracle {
 public:
  virtual ~FieldLikelihoodOracle() = default;

  // Returns the subset of `texts` judged to be fields. `cluster_id` is only
  // used for error reporting.
  virtual std::vector<std::string> flag_fields(std::span<const std::string> texts,
                                               int cluster_id) = 0;

  // Number of flag_fields invocations so far.
  virtual std::size_t calls() const = 0;
};

// One vector per distinct text, in order of first occurrence.
std::vector<LocationVector> location_vectors(const DocumentStream& stream);
std::vector<LocationVector> location_vectors(std::span<const Phrase> phrases);

// Equal lengths greater than one and a constant |i_k - j_k|.
MatchResult perfect_match(const LocationVector& a, const LocationVector& b);

// Some subsequence of `longer` of length |shorter| perfectly matches
// `shorter`. Callers orient the arguments so that the longer vector supplies
// the subsequence; the function swaps them if needed.
bool partial_perfect_match(const LocationVector& longer, const LocationVector& shorter);

// Scan vectors in the given (first-occurrence) order; a vector joins the first
// cluster holding a member it perfectly matches, otherwise it founds one.
std::vector<Cluster> cluster_phrases(std::span<const LocationVector> vectors);

// Sets prob_field to the flagged share of members and ci_width to
// 2 * z * sqrt(p (1 - p) / |C|).
Cluster score_cluster(Cluster c, FieldLikelihoodOracle& oracle, double z = 1.96);

// Drops singletons and returns the clusters no other cluster dominates
// (strictly higher probability and strictly narrower interval).
std::vector<Cluster> prune_clusters(std::span<const Cluster> clusters);

// Kept members plus every pruned cluster holding a member that partially
// matches a kept member at least as short as itself.
FieldSet recover_clusters(std::span<const Cluster> kept, std::span<const Cluster> pruned);

struct FieldPredictionOptions {
  double z = 1.96;
  int parallelism = 1;  // concurrent oracle calls while scoring
};

struct FieldPrediction {
  FieldSet fields;
  std::vector<Cluster> clusters;  // all clusters, scored where non-singleton
  std::vector<int> kept_ids;
};

FieldPrediction predict_fields_detailed(const DocumentStream& stream,
                                        FieldLikelihoodOracle& oracle,
                                        const FieldPredictionOptions& options = {});

FieldSet predict_fields(const DocumentStream& stream, FieldLikelihoodOracle& oracle,
                        const FieldPredictionOptions& options = {});

}  // namespace formtree
