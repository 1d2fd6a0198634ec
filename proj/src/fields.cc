#include "formtree/fields.h"

#include <algorithm>
#include <cmath>
#include <future>
#include <map>
#include <unordered_map>

#include <spdlog/spdlog.h>

namespace formtree {

std::vector<LocationVector> location_vectors(std::span<const Phrase> phrases) {
  std::vector<LocationVector> out;
  std::unordered_map<std::string, std::size_t> slot;
  for (const auto& p : phrases) {
    auto [it, inserted] = slot.try_emplace(p.text, out.size());
    if (inserted) out.push_back({p.text, {}});
    out[it->second].indexes.push_back(p.index);
  }
  return out;
}

std::vector<LocationVector> location_vectors(const DocumentStream& stream) {
  return location_vectors(std::span<const Phrase>(stream.phrases()));
}

MatchResult perfect_match(const LocationVector& a, const LocationVector& b) {
  if (a.size() != b.size() || b.size() <= 1) return {};
  const std::int64_t first = a.indexes[0] - b.indexes[0];
  const std::int64_t delta = std::llabs(first);
  bool sign_flip = false;
  for (std::size_t k = 1; k < a.size(); ++k) {
    const std::int64_t d = a.indexes[k] - b.indexes[k];
    if (std::llabs(d) != delta) return {};
    if (d != first) sign_flip = true;
  }
  if (sign_flip) {
    // Reading-ordered indexes should never produce this; it usually means
    // the input order is corrupted.
    spdlog::debug("perfect match of '{}' and '{}' flips the sign of its shift", a.text, b.text);
  }
  return {true, delta};
}

bool partial_perfect_match(const LocationVector& longer, const LocationVector& shorter) {
  if (longer.size() < shorter.size()) return partial_perfect_match(shorter, longer);
  if (shorter.size() <= 1) return false;
  const auto& lv = longer.indexes;
  const auto& sv = shorter.indexes;
  for (std::size_t start = 0; start + sv.size() <= lv.size(); ++start) {
    const std::int64_t delta = lv[start] - sv[0];
    std::size_t pos = start + 1;
    bool ok = true;
    for (std::size_t k = 1; k < sv.size() && ok; ++k) {
      const std::int64_t want = sv[k] + delta;
      while (pos < lv.size() && lv[pos] < want) ++pos;
      ok = pos < lv.size() && lv[pos] == want;
      ++pos;
    }
    if (ok) return true;
  }
  return false;
}

std::vector<Cluster> cluster_phrases(std::span<const LocationVector> vectors) {
  std::vector<Cluster> clusters;
  // Perfect matches need equal lengths, so every cluster is length-homogeneous.
  std::map<std::size_t, std::vector<std::size_t>> by_length;
  for (const auto& v : vectors) {
    bool merged = false;
    if (v.size() > 1) {
      for (std::size_t c : by_length[v.size()]) {
        auto& members = clusters[c].members;
        bool hit = std::any_of(members.begin(), members.end(), [&](const LocationVector& m) {
          return perfect_match(v, m).matched;
        });
        if (hit) {
          members.push_back(v);
          merged = true;
          break;
        }
      }
    }
    if (!merged) {
      Cluster c;
      c.id = static_cast<int>(clusters.size());
      c.members.push_back(v);
      by_length[v.size()].push_back(clusters.size());
      clusters.push_back(std::move(c));
    }
  }
  return clusters;
}

Cluster score_cluster(Cluster c, FieldLikelihoodOracle& oracle, double z) {
  std::vector<std::string> texts;
  texts.reserve(c.members.size());
  for (const auto& m : c.members) texts.push_back(m.text);
  const auto flagged = oracle.flag_fields(texts, c.id);
  FieldSet flagged_set(flagged.begin(), flagged.end());
  std::size_t hits = 0;
  for (const auto& t : texts) hits += flagged_set.count(t);
  const double n = static_cast<double>(texts.size());
  const double p = n > 0 ? static_cast<double>(hits) / n : 0.0;
  c.prob_field = p;
  c.ci_width = n > 0 ? 2.0 * z * std::sqrt(p * (1.0 - p) / n) : 0.0;
  return c;
}

std::vector<Cluster> prune_clusters(std::span<const Cluster> clusters) {
  std::vector<const Cluster*> candidates;
  for (const auto& c : clusters) {
    if (!c.singleton()) candidates.push_back(&c);
  }
  std::vector<Cluster> kept;
  for (const Cluster* cj : candidates) {
    const double pj = cj->prob_field.value_or(0.0);
    const double wj = cj->ci_width.value_or(0.0);
    bool dominated = std::any_of(candidates.begin(), candidates.end(), [&](const Cluster* ci) {
      return ci->prob_field.value_or(0.0) > pj && ci->ci_width.value_or(0.0) < wj;
    });
    if (!dominated) kept.push_back(*cj);
  }
  return kept;
}

FieldSet recover_clusters(std::span<const Cluster> kept, std::span<const Cluster> pruned) {
  FieldSet fields;
  for (const auto& c : kept) {
    for (const auto& m : c.members) fields.insert(m.text);
  }
  for (const auto& cj : pruned) {
    bool recover = false;
    for (const auto& ci : kept) {
      for (const auto& pi : ci.members) {
        for (const auto& pj : cj.members) {
          if (pi.size() <= pj.size() && partial_perfect_match(pj, pi)) {
            recover = true;
            break;
          }
        }
        if (recover) break;
      }
      if (recover) break;
    }
    if (recover) {
      for (const auto& m : cj.members) fields.insert(m.text);
    }
  }
  return fields;
}

FieldPrediction predict_fields_detailed(const DocumentStream& stream,
                                        FieldLikelihoodOracle& oracle,
                                        const FieldPredictionOptions& options) {
  FieldPrediction result;
  const auto vectors = location_vectors(stream);
  result.clusters = cluster_phrases(vectors);

  // Singletons are dropped before pruning, so they are never scored.
  std::vector<std::size_t> to_score;
  for (std::size_t i = 0; i < result.clusters.size(); ++i) {
    if (!result.clusters[i].singleton()) to_score.push_back(i);
  }
  const std::size_t width = static_cast<std::size_t>(std::max(1, options.parallelism));
  if (width == 1) {
    for (std::size_t i : to_score) {
      result.clusters[i] = score_cluster(std::move(result.clusters[i]), oracle, options.z);
    }
  } else {
    // Results land in their own slots, so the merge order is creation order.
    for (std::size_t begin = 0; begin < to_score.size(); begin += width) {
      std::vector<std::future<Cluster>> batch;
      for (std::size_t k = begin; k < std::min(to_score.size(), begin + width); ++k) {
        const Cluster& c = result.clusters[to_score[k]];
        batch.push_back(std::async(std::launch::async,
                                   [&oracle, c, z = options.z] { return score_cluster(c, oracle, z); }));
      }
      for (std::size_t k = 0; k < batch.size(); ++k) {
        result.clusters[to_score[begin + k]] = batch[k].get();
      }
    }
  }

  const auto kept = prune_clusters(result.clusters);
  std::vector<Cluster> pruned;
  for (const auto& c : result.clusters) {
    bool is_kept = std::any_of(kept.begin(), kept.end(), [&](const Cluster& k) { return k.id == c.id; });
    if (is_kept) {
      result.kept_ids.push_back(c.id);
    } else {
      pruned.push_back(c);
    }
  }
  result.fields = recover_clusters(kept, pruned);
  spdlog::debug("field prediction: {} clusters, {} kept, {} fields", result.clusters.size(),
                kept.size(), result.fields.size());
  return result;
}

FieldSet predict_fields(const DocumentStream& stream, FieldLikelihoodOracle& oracle,
                        const FieldPredictionOptions& options) {
  return predict_fields_detailed(stream, oracle, options).fields;
}

}  // namespace formtree
