#include "doctest.h"
#include "formtree/errors.h"
#include "formtree/harness.h"
#include "formtree/pipeline.h"

using namespace formtree;

TEST_CASE("config JSON overlays defaults and rejects bad values") {
  PipelineConfig c;
  apply_config_json(c, R"({"epsilon": 0.01, "budget_ms": 250, "parallel": 3,
                          "oracle": {"mode": "remote", "endpoint": "http://127.0.0.1:9/f", "retries": 2}})");
  CHECK(c.epsilon == 0.01);
  CHECK(c.budget.count() == 250);
  CHECK(c.parallel == 3);
  CHECK(c.oracle.mode == OracleMode::kRemote);
  CHECK(c.oracle.retries == 2);
  CHECK(c.z == 1.96);  // untouched
  CHECK_NOTHROW(c.validate());

  PipelineConfig d;
  CHECK_THROWS_AS(apply_config_json(d, R"({"nope": 1})"), ValidationError);
  CHECK_THROWS_AS(apply_config_json(d, R"({"window_fallback": "sometimes"})"), ValidationError);
  CHECK_THROWS_AS(apply_config_json(d, "{"), ValidationError);
  d.epsilon = 0;
  CHECK_THROWS_AS(d.validate(), ValidationError);
  d = {};
  d.parallel = 0;
  CHECK_THROWS_AS(d.validate(), ValidationError);
  d = {};
  d.oracle.mode = OracleMode::kRemote;
  CHECK_THROWS_AS(d.validate(), ValidationError);  // no endpoint
}

TEST_CASE("window fallback policy") {
  // A single record never repeats its fields.
  GeneratorSpec s = sample_spec(4);
  s.records = 1;
  const auto corpus = generate(s);
  HeuristicOracle oracle;
  PipelineConfig c;
  c.window_fallback = WindowFallback::kFail;
  CHECK_THROWS_AS(learn_template(corpus.documents[0], oracle, c), PipelineError);
}

TEST_CASE("round trip on sampled corpora") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    SpecShape shape;
    shape.nested = seed % 2 == 0;
    shape.records = {5, 12};
    auto spec = sample_spec(seed, shape);
    spec.documents = 2;
    const auto corpus = generate(spec);
    HeuristicOracle oracle;
    PipelineConfig c;
    c.parallel = 2;
    const auto r = run_pipeline(corpus.documents, oracle, c);
    CAPTURE(seed);
    CHECK(r.learned.tmpl.isomorphic_to(spec.tmpl));
    const auto report = score_corpus(r.extractions, corpus.truth.documents);
    CHECK(report.precision == 1.0);
    CHECK(report.recall == 1.0);
  }
}

TEST_CASE("parallel extraction preserves order and output") {
  auto spec = sample_spec(21, {});
  spec.documents = 5;
  spec.records = 4;
  const auto corpus = generate(spec);
  const auto one = extract_corpus(corpus.documents, spec.tmpl, 1);
  const auto four = extract_corpus(corpus.documents, spec.tmpl, 4);
  REQUIRE(one.size() == 5);
  for (std::size_t i = 0; i < one.size(); ++i) {
    CHECK(one[i].source_id == corpus.documents[i].source_id());
    CHECK(serialize_extraction(one[i]) == serialize_extraction(four[i]));
  }
}

TEST_CASE("extraction errors surface from workers") {
  const auto corpus = generate(sample_spec(2));
  Template unrelated({{1, NodeType::kTable, {"Nothing", "Here"}, {}}}, {1});
  CHECK_THROWS_AS(extract_corpus(corpus.documents, unrelated, 2), PipelineError);
}
