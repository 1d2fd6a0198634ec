// formtree: template inference and extraction for templatized documents.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "formtree/document.h"
#include "formtree/errors.h"
#include "formtree/extraction.h"
#include "formtree/harness.h"
#include "formtree/oracle.h"
#include "formtree/pipeline.h"
#include "formtree/template.h"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace formtree;

namespace {

struct Flags {
  std::string config;
  std::string oracle;
  std::string endpoint;
  std::int64_t timeout_ms = 0;
  std::int64_t budget_ms = 0;
  std::uint64_t seed = 0;
  std::string out;
  std::string tmpl;
  int parallel = 0;
  bool fallback = false;
  std::string trace;
  int verbosity = 0;
};

struct Options {
  CLI::Option* oracle = nullptr;
  CLI::Option* endpoint = nullptr;
  CLI::Option* timeout = nullptr;
  CLI::Option* budget = nullptr;
  CLI::Option* seed = nullptr;
  CLI::Option* parallel = nullptr;
  CLI::Option* fallback = nullptr;
  CLI::Option* trace = nullptr;
};

void add_common(CLI::App* cmd, Flags& f, Options& o) {
  cmd->add_option("--config", f.config, "JSON config file");
  o.oracle = cmd->add_option("--oracle", f.oracle, "field oracle")->check(CLI::IsMember({"heuristic", "remote"}));
  o.endpoint = cmd->add_option("--endpoint", f.endpoint, "remote oracle URL (http://host:port/path)");
  o.timeout = cmd->add_option("--timeout-ms", f.timeout_ms, "remote oracle timeout");
  o.budget = cmd->add_option("--budget-ms", f.budget_ms, "labeling solver time budget");
  o.seed = cmd->add_option("--seed", f.seed, "random seed");
  o.parallel = cmd->add_option("--parallel", f.parallel, "worker count");
  o.fallback = cmd->add_flag("--fallback", f.fallback, "answer heuristically when the remote oracle fails");
  o.trace = cmd->add_option("--trace", f.trace, "write solver incumbents to this file");
  cmd->add_flag("-v,--verbose", f.verbosity, "more logging (repeatable)");
}

PipelineConfig build_config(const Flags& f, const Options& o) {
  PipelineConfig c;
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw ValidationError("cannot read config " + f.config);
    std::stringstream ss;
    ss << in.rdbuf();
    apply_config_json(c, ss.str());
  }
  if (o.oracle->count()) c.oracle.mode = f.oracle == "remote" ? OracleMode::kRemote : OracleMode::kHeuristic;
  if (o.endpoint->count()) c.oracle.endpoint = f.endpoint;
  if (o.timeout->count()) c.oracle.timeout = std::chrono::milliseconds(f.timeout_ms);
  if (o.budget->count()) c.budget = std::chrono::milliseconds(f.budget_ms);
  if (o.seed->count()) c.seed = f.seed;
  if (o.parallel->count()) c.parallel = f.parallel;
  if (o.fallback->count()) c.oracle.heuristic_fallback = true;
  if (o.trace->count()) c.trace_path = f.trace;
  c.validate();
  return c;
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << content;
}

void emit(const std::string& out, const std::string& content) {
  if (out.empty()) std::cout << content;
  else write_file(out, content);
}

std::string stem_of(const std::string& source) {
  auto s = fs::path(source).filename().string();
  for (const char* ext : {".jsonl", ".extract.json", ".truth.json", ".json"}) {
    const std::string e = ext;
    if (s.size() > e.size() && s.compare(s.size() - e.size(), e.size(), e) == 0) return s.substr(0, s.size() - e.size());
  }
  return s;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A single file, or every file of a directory ending in `suffix`, sorted.
std::vector<fs::path> collect(const fs::path& path, const std::string& suffix) {
  if (!fs::exists(path)) throw ValidationError("no such file or directory: " + path.string());
  if (!fs::is_directory(path)) return {path};
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(path)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && name.size() > suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
      out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

DocumentStream corpus_stream(const std::vector<DocumentStream>& docs) {
  return docs.size() == 1 ? docs.front() : concatenate(docs);
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_st("formtree"));
  spdlog::set_pattern("%^%l%$: %v");

  CLI::App app{"Template inference and structured extraction for templatized documents"};
  app.require_subcommand(1);
  Flags f;
  Options o;
  std::string input;
  std::string second;

  auto* fields = app.add_subcommand("fields", "predict field phrases of a corpus");
  fields->add_option("input", input, "phrase stream file or directory")->required();
  fields->add_option("--out", f.out, "output file (default stdout)");
  add_common(fields, f, o);

  auto* tmpl = app.add_subcommand("template", "infer the template of a corpus");
  tmpl->add_option("input", input, "phrase stream file or directory")->required();
  tmpl->add_option("--out", f.out, "output file (default stdout)");
  add_common(tmpl, f, o);

  auto* extract = app.add_subcommand("extract", "extract records from every document");
  extract->add_option("input", input, "phrase stream file or directory")->required();
  extract->add_option("--out", f.out, "output directory")->required();
  extract->add_option("--template", f.tmpl, "precomputed template; skips inference");
  add_common(extract, f, o);

  auto* eval = app.add_subcommand("eval", "score extraction output against ground truth");
  eval->add_option("predicted", input, "*.extract.json file or directory")->required();
  eval->add_option("truth", second, "*.truth.json file or directory")->required();
  eval->add_option("--out", f.out, "JSON report file");
  add_common(eval, f, o);

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus with ground truth");
  synth->add_option("spec", input, "generator spec (JSON)")->required();
  synth->add_option("--out", f.out, "output directory")->required();
  add_common(synth, f, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  spdlog::set_level(f.verbosity >= 2 ? spdlog::level::debug
                    : f.verbosity == 1 ? spdlog::level::info
                                       : spdlog::level::warn);

  try {
    const PipelineConfig config = build_config(f, o);

    if (*fields) {
      const auto docs = load_corpus(input);
      auto oracle = make_oracle(config.oracle);
      const auto predicted = predict_fields(corpus_stream(docs), *oracle, {config.z, config.parallel});
      nlohmann::ordered_json j;
      j["fields"] = predicted;
      emit(f.out, j.dump(2) + "\n");
    } else if (*tmpl) {
      const auto docs = load_corpus(input);
      auto oracle = make_oracle(config.oracle);
      const auto learned = learn_template(corpus_stream(docs), *oracle, config);
      emit(f.out, serialize_template(learned.tmpl));
    } else if (*extract) {
      const auto docs = load_corpus(input);
      Template t;
      if (!f.tmpl.empty()) {
        t = load_template(f.tmpl);
      } else {
        auto oracle = make_oracle(config.oracle);
        t = learn_template(corpus_stream(docs), *oracle, config).tmpl;
        write_file(fs::path(f.out) / "template.json", serialize_template(t));
      }
      const auto results = extract_corpus(docs, t, config.parallel);
      for (const auto& r : results) {
        write_file(fs::path(f.out) / (stem_of(r.source_id) + ".extract.json"), serialize_extraction(r));
      }
      spdlog::info("extracted {} documents", results.size());
    } else if (*eval) {
      std::vector<DocumentExtraction> predicted;
      std::vector<DocumentExtraction> truth;
      for (const auto& p : collect(input, ".extract.json")) {
        auto d = parse_extraction(read_text(p));
        d.source_id = stem_of(p.string());
        predicted.push_back(std::move(d));
      }
      for (const auto& p : collect(second, ".truth.json")) {
        auto d = parse_extraction(read_text(p));
        d.source_id = stem_of(p.string());
        truth.push_back(std::move(d));
      }
      if (truth.empty()) throw ValidationError("no ground truth files found in " + second);
      const auto report = score_corpus(predicted, truth);
      std::cout << report_table(report);
      if (!f.out.empty()) write_file(f.out, report_json(report));
    } else if (*synth) {
      auto spec = load_spec(input);
      if (o.seed->count()) spec.seed = f.seed;
      const auto corpus = generate(spec);
      for (std::size_t i = 0; i < corpus.documents.size(); ++i) {
        const auto& doc = corpus.documents[i];
        const auto stem = stem_of(doc.source_id());
        std::ostringstream stream;
        write_phrase_stream(stream, doc);
        write_file(fs::path(f.out) / (stem + ".jsonl"), stream.str());
        write_file(fs::path(f.out) / (stem + ".truth.json"), serialize_extraction(corpus.truth.documents[i]));
      }
      write_file(fs::path(f.out) / "generator_template.json", serialize_template(spec.tmpl));
      spdlog::info("wrote {} documents to {}", corpus.documents.size(), f.out);
    }
  } catch (const ValidationError& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const PipelineError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const OracleError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const fs::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 0;
}
