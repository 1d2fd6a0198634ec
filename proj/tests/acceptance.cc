// Acceptance suite: one PASS/FAIL line per criterion. argv[1] is the CLI binary.

#include <sys/wait.h>

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "formtree/errors.h"
#include "formtree/harness.h"
#include "formtree/labeling.h"
#include "formtree/pipeline.h"

using namespace formtree;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// The shared round-trip suite: alternating leaf-only and nested shapes.
std::vector<GeneratorSpec> round_trip_specs() {
  std::vector<GeneratorSpec> specs;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    SpecShape shape;
    shape.nested = seed % 2 == 0;
    shape.records = {5, 50};
    specs.push_back(sample_spec(seed, shape));
  }
  return specs;
}

struct CorpusRun {
  ScoreReport report;
  LearnedTemplate learned;
  bool failed = false;
  std::string error;
};

CorpusRun run_corpus(const GeneratedCorpus& corpus) {
  CorpusRun out;
  HeuristicOracle oracle;
  PipelineConfig config;
  try {
    auto r = run_pipeline(corpus.documents, oracle, config);
    out.report = score_corpus(r.extractions, corpus.truth.documents);
    out.learned = std::move(r.learned);
  } catch (const PipelineError& e) {
    out.failed = true;
    out.error = e.what();
    out.report = score_corpus({}, corpus.truth.documents);
  }
  return out;
}

Outcome criterion_round_trip() {
  const auto start = Clock::now();
  int exact = 0;
  std::string first_bad;
  for (const auto& spec : round_trip_specs()) {
    const auto run = run_corpus(generate(spec));
    if (!run.failed && run.report.precision == 1.0 && run.report.recall == 1.0) {
      ++exact;
    } else if (first_bad.empty()) {
      std::ostringstream ss;
      ss << "seed " << spec.seed << " P=" << run.report.precision << " R=" << run.report.recall << " "
         << run.error;
      first_bad = ss.str();
    }
  }
  const double secs = seconds_since(start);
  std::ostringstream ss;
  ss << exact << "/50 corpora exact, " << secs << " s";
  if (!first_bad.empty()) ss << "; first failure: " << first_bad;
  return {exact == 50 && secs < 60.0, ss.str()};
}

// Exhaustive optimum over all 4^n labelings.
double brute_force_objective(const std::vector<RowLabelProbs>& probs, const AlignmentMatrix& a) {
  const std::size_t n = probs.size();
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) total *= 4;
  std::vector<RowLabel> cur(n);
  double best = -INFINITY;
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t c = code;
    for (std::size_t i = 0; i < n; ++i) {
      cur[i] = kAllLabels[c % 4];
      c /= 4;
    }
    if (!is_feasible(cur, a)) continue;
    best = std::max(best, assignment_objective(cur, probs));
  }
  return best;
}

Outcome criterion_solver() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0, 1);
  int exact_ok = 0;
  int heuristic_ok = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng() % 8);
    std::vector<RowLabelProbs> probs;
    for (std::size_t i = 0; i < n; ++i) {
      RowLabelProbs p{u(rng), u(rng), u(rng), u(rng)};
      if (u(rng) < 0.25) p.kv = 0;
      if (u(rng) < 0.25) p.k = 0;
      const double s = p.sum();
      probs.push_back(smooth({p.k / s, p.v / s, p.kv / s, p.m / s}));
    }
    AlignmentMatrix a(n);
    const double density = u(rng);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) a.set(i, j, u(rng) < density);
    }
    const double brute = brute_force_objective(probs, a);
    const auto exact = solve_exact(probs, a);
    const auto heur = solve_heuristic(probs, a);
    if (exact.optimal && std::abs(exact.objective - brute) <= 1e-9 && is_feasible(exact.labels, a)) ++exact_ok;
    if (is_feasible(heur.labels, a) && heur.objective <= exact.objective + 1e-9) ++heuristic_ok;
  }
  std::ostringstream ss;
  ss << "exact matches enumeration on " << exact_ok << "/200, heuristic feasible and bounded on "
     << heuristic_ok << "/200";
  return {exact_ok == 200 && heuristic_ok == 200, ss.str()};
}

// Single-node corpora; half of them add a second table whose first header
// text is replaced by one of the target node's fields, giving that field a
// longer location vector.
Outcome criterion_field_matches() {
  int perfect_pairs = 0;
  int partial_pairs = 0;
  int counterexamples = 0;
  std::string first_bad;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const bool table = seed % 2 == 1;
    const bool shared = seed % 4 < 2;
    SpecShape shape;
    shape.root_nodes = {1, 1};
    shape.records = {3, 15};
    shape.allow_table = table;
    shape.allow_key_value = !table;
    auto spec = sample_spec(seed * 7919, shape);
    const TemplateNode target = spec.tmpl.nodes().front();
    std::string shared_field;
    if (shared) {
      std::vector<TemplateNode> nodes = spec.tmpl.nodes();
      nodes.push_back({2, NodeType::kTable, {"Placeholder", "Companion"}, {}});
      spec.tmpl = Template(nodes, {1, 2});
      spec.nodes[2].tuples = {1, 2};
      shared_field = target.fields[seed % target.fields.size()];
    }
    validate_spec(spec);
    auto corpus = generate(spec);
    auto phrases = corpus.documents[0].phrases();
    for (auto& p : phrases) {
      if (p.text == "Placeholder") p.text = shared_field;
    }
    const DocumentStream doc(std::move(phrases), "shared");

    std::map<std::string, LocationVector> by_text;
    for (auto& v : location_vectors(doc)) by_text[v.text] = v;
    for (std::size_t i = 0; i < target.fields.size(); ++i) {
      for (std::size_t j = i + 1; j < target.fields.size(); ++j) {
        const auto& a = by_text.at(target.fields[i]);
        const auto& b = by_text.at(target.fields[j]);
        bool ok = false;
        if (a.size() == b.size()) {
          ok = perfect_match(a, b).matched;
          ++perfect_pairs;
        } else {
          ok = a.size() > b.size() ? partial_perfect_match(a, b) : partial_perfect_match(b, a);
          ++partial_pairs;
        }
        if (!ok) {
          ++counterexamples;
          if (first_bad.empty()) first_bad = "seed " + std::to_string(seed) + ": " + a.text + " / " + b.text;
        }
      }
    }
  }
  std::ostringstream ss;
  ss << perfect_pairs << " equal-length pairs, " << partial_pairs << " unequal-length pairs, "
     << counterexamples << " counterexamples";
  if (!first_bad.empty()) ss << "; first: " << first_bad;
  return {counterexamples == 0 && perfect_pairs > 0 && partial_pairs > 0, ss.str()};
}

Outcome criterion_window() {
  int checked = 0;
  int covered = 0;
  std::string first_bad;
  for (const auto& spec : round_trip_specs()) {
    bool nested = false;
    for (const auto& n : spec.tmpl.nodes()) nested = nested || !n.children.empty();
    if (nested) continue;
    ++checked;
    const auto corpus = generate(spec);
    const auto stream = corpus.documents.size() == 1 ? corpus.documents[0] : concatenate(corpus.documents);
    HeuristicOracle oracle;
    const auto learned = learn_template(stream, oracle, PipelineConfig{});
    const auto& w = learned.window;
    const std::int64_t lo = w.rows.front().phrases.front().index;
    const std::int64_t hi = w.rows.back().phrases.back().index;
    // The first document keeps its indexes under concatenation.
    const auto& records = corpus.truth.documents[0].records;
    const bool ok = !w.fallback && std::any_of(records.begin(), records.end(), [&](const RecordExtraction& r) {
      return r.first_index >= lo && r.last_index <= hi;
    });
    if (ok) {
      ++covered;
    } else if (first_bad.empty()) {
      first_bad = "seed " + std::to_string(spec.seed);
    }
  }
  std::ostringstream ss;
  ss << covered << "/" << checked << " leaf-only windows contain a complete record";
  if (!first_bad.empty()) ss << "; first failure: " << first_bad;
  return {checked > 0 && covered == checked, ss.str()};
}

Outcome criterion_metric() {
  KeyValueBag truth;
  for (int i = 0; i < 9; ++i) ++truth[{"key" + std::to_string(i), "value" + std::to_string(i)}];
  auto predicted = truth;
  ++predicted[{"extra", std::nullopt}];
  const auto s = score(predicted, truth);
  const auto same = score(truth, truth);
  KeyValueBag other;
  ++other[{"key0", "wrong"}];
  const auto disjoint = score(other, truth);
  std::ostringstream ss;
  ss << "P=" << s.precision << " R=" << s.recall << "; identity " << same.precision << "/" << same.recall
     << "; disjoint " << disjoint.precision << "/" << disjoint.recall;
  const bool ok = s.precision == 0.9 && s.recall == 1.0 && same.precision == 1.0 && same.recall == 1.0 &&
                  disjoint.precision == 0.0 && disjoint.recall == 0.0;
  return {ok, ss.str()};
}

Outcome criterion_noise() {
  double p_sum = 0;
  double r_sum = 0;
  double p_min = 1;
  double r_min = 1;
  int failures = 0;
  int n = 0;
  for (auto spec : round_trip_specs()) {
    spec.compliant = false;
    spec.noncompliance_rate = 0.03;
    const auto run = run_corpus(generate(spec));
    if (run.failed) ++failures;
    p_sum += run.report.precision;
    r_sum += run.report.recall;
    p_min = std::min(p_min, run.report.precision);
    r_min = std::min(r_min, run.report.recall);
    ++n;
  }
  const double p = p_sum / n;
  const double r = r_sum / n;
  std::ostringstream ss;
  ss << "mean P=" << p << " R=" << r << " (min P=" << p_min << " R=" << r_min << ", " << failures
     << " corpora without a template)";
  return {p >= 0.90 && r >= 0.90, ss.str()};
}

Outcome criterion_amortization() {
  const auto start = Clock::now();
  GeneratorSpec spec;
  spec.tmpl = Template({{1, NodeType::kKeyValue, {"Case", "Opened", "Officer"}, {}},
                        {2, NodeType::kTable, {"Date", "Allegation", "Finding", "Action"}, {}}},
                       {1, 2});
  spec.nodes[2].tuples = {1, 3};
  spec.nodes[2].missing["Finding"] = 0.2;
  spec.documents = 800;
  spec.records = 3;
  spec.seed = 800;
  const auto corpus = generate(spec);
  for (const auto& d : corpus.documents) {
    if (d.phrases().back().page != 1) return {false, d.source_id() + " spans more than one page"};
  }

  HeuristicOracle oracle;  // never handed to extraction; its count must stay 0
  auto best_of_three = [&](std::size_t count) {
    double best = INFINITY;
    for (int rep = 0; rep < 3; ++rep) {
      const auto t = Clock::now();
      const auto out = extract_corpus(std::span<const DocumentStream>(corpus.documents.data(), count), spec.tmpl);
      best = std::min(best, seconds_since(t));
      if (out.size() != count) return -1.0;
    }
    return best;
  };
  const double t100 = best_of_three(100);
  const double t800 = best_of_three(800);
  const auto full = extract_corpus(corpus.documents, spec.tmpl);
  const auto report = score_corpus(full, corpus.truth.documents);
  const double per100 = t100 / 100;
  const double per800 = t800 / 800;
  const double total = seconds_since(start);
  std::ostringstream ss;
  ss << "oracle calls " << oracle.calls() << ", per-document " << per100 * 1e3 << " ms at 100 vs " << per800 * 1e3
     << " ms at 800, P=" << report.precision << " R=" << report.recall << ", " << total << " s total";
  const bool ok = t100 > 0 && t800 > 0 && oracle.calls() == 0 && per800 <= 2 * per100 && total < 120.0 &&
                  report.precision == 1.0 && report.recall == 1.0;
  return {ok, ss.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int shell(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Every file under `dir`, keyed by relative path.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return out;
}

Outcome criterion_determinism(const std::string& cli) {
  const auto root = fs::temp_directory_path() / "formtree_acceptance_determinism";
  fs::remove_all(root);
  auto spec = sample_spec(77, SpecShape{true, {5, 10}});
  spec.documents = 3;
  std::vector<std::map<std::string, std::string>> runs;
  for (int run = 0; run < 2; ++run) {
    const auto dir = root / ("run" + std::to_string(run));
    fs::create_directories(dir);
    {
      std::ofstream(dir / "spec.json") << serialize_spec(spec);
    }
    const std::string q = " 2>/dev/null";
    const std::string d = dir.string();
    const int rc = shell(cli + " synth " + d + "/spec.json --seed 9 --out " + d + "/corpus" + q) |
                   shell(cli + " fields " + d + "/corpus --out " + d + "/fields.json" + q) |
                   shell(cli + " template " + d + "/corpus --seed 9 --out " + d + "/template.json" + q) |
                   shell(cli + " extract " + d + "/corpus --seed 9 --parallel 2 --out " + d + "/extract" + q) |
                   shell(cli + " eval " + d + "/extract " + d + "/corpus --out " + d + "/report.json > " + d +
                         "/eval.txt" + q);
    if (rc != 0) return {false, "a CLI step failed in run " + std::to_string(run)};
    runs.push_back(snapshot(dir));
  }
  fs::remove_all(root);
  std::ostringstream ss;
  ss << runs[0].size() << " output files compared";
  return {runs[0] == runs[1] && runs[0].size() > 5, ss.str()};
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::off);
  if (argc < 2) {
    std::cerr << "usage: acceptance <path-to-cli>\n";
    return 2;
  }
  const std::string cli = argv[1];
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"round-trip correctness", criterion_round_trip},
      {"solver optimality", criterion_solver},
      {"field vector matches", criterion_field_matches},
      {"window holds a record", criterion_window},
      {"metric fidelity", criterion_metric},
      {"robustness to non-compliance", criterion_noise},
      {"template amortization", criterion_amortization},
      {"CLI determinism", [&] { return criterion_determinism(cli); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " " << criteria[i].first << ": "
              << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
