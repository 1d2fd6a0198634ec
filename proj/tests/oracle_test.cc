#include <cstdlib>
#include <thread>

#include "doctest.h"
#include "formtree/errors.h"
#include "formtree/oracle.h"
#include "httplib.h"
#include "json.hpp"

using namespace formtree;
using json = nlohmann::json;

TEST_CASE("heuristic field test") {
  CHECK(looks_like_field("Date"));
  CHECK(looks_like_field("Type of Complaint"));
  CHECK(looks_like_field("Fecha de Emisión"));
  CHECK_FALSE(looks_like_field("05-01"));
  CHECK_FALSE(looks_like_field("Ref 123"));
  CHECK_FALSE(looks_like_field("---"));
  CHECK_FALSE(looks_like_field(""));
  CHECK_FALSE(looks_like_field(std::string(41, 'a')));
  CHECK(looks_like_field(std::string(40, 'a')));

  HeuristicOracle oracle;
  std::vector<std::string> texts = {"Date", "5/15/2023", "Number"};
  CHECK(oracle.flag_fields(texts, 1) == std::vector<std::string>{"Date", "Number"});
  CHECK(oracle.calls() == 1);
}

namespace {

struct LocalServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::vector<json> requests;
  std::vector<std::string> auth;
  std::mutex mu;

  explicit LocalServer(int status = 200, std::string reply = "") {
    server.Post("/flag", [this, status, reply](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard<std::mutex> lock(mu);
      auto body = json::parse(req.body);
      requests.push_back(body);
      auth.push_back(req.get_header_value("Authorization"));
      if (status != 200) {
        res.status = status;
        return;
      }
      if (!reply.empty()) {
        res.set_content(reply, "application/json");
        return;
      }
      json out;
      out["fields"] = json::array();
      for (const auto& p : body["phrases"]) {
        if (looks_like_field(p.get<std::string>())) out["fields"].push_back(p);
      }
      out["fields"].push_back("Unrequested");
      res.set_content(out.dump(), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~LocalServer() {
    server.stop();
    thread.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port) + "/flag"; }
};

}  // namespace

TEST_CASE("remote oracle batches requests and sends the prompt and key") {
  LocalServer srv;
  ::setenv("FORMTREE_TEST_KEY", "secret", 1);
  OracleConfig cfg;
  cfg.mode = OracleMode::kRemote;
  cfg.endpoint = srv.url();
  cfg.batch_size = 2;
  cfg.api_key_env = "FORMTREE_TEST_KEY";
  RemoteOracle oracle(cfg);
  std::vector<std::string> texts = {"Date", "05-01", "Number"};
  const auto flagged = oracle.flag_fields(texts, 7);
  CHECK(flagged == std::vector<std::string>{"Date", "Number"});
  CHECK(oracle.calls() == 2);
  REQUIRE(srv.requests.size() == 2);
  CHECK(srv.requests[0]["phrases"] == json::array({"Date", "05-01"}));
  const auto prompt = srv.requests[0]["prompt"].get<std::string>();
  CHECK(prompt.rfind(kFieldPrompt, 0) == 0);
  CHECK(prompt.find("\nDate\n05-01") != std::string::npos);
  CHECK(srv.auth[0] == "Bearer secret");
}

TEST_CASE("remote oracle failures carry the cluster id") {
  LocalServer srv(500);
  OracleConfig cfg;
  cfg.mode = OracleMode::kRemote;
  cfg.endpoint = srv.url();
  RemoteOracle oracle(cfg);
  std::vector<std::string> texts = {"Date"};
  try {
    oracle.flag_fields(texts, 42);
    FAIL("expected an oracle error");
  } catch (const OracleError& e) {
    CHECK(e.cluster_id() == 42);
  }
  CHECK(srv.requests.size() == 2);  // one retry
}

TEST_CASE("remote oracle rejects malformed replies") {
  LocalServer srv(200, R"({"nope": 1})");
  OracleConfig cfg;
  cfg.mode = OracleMode::kRemote;
  cfg.endpoint = srv.url();
  RemoteOracle oracle(cfg);
  std::vector<std::string> texts = {"Date"};
  CHECK_THROWS_AS(oracle.flag_fields(texts, 1), OracleError);
}

TEST_CASE("unreachable endpoint falls back to the heuristic when asked") {
  OracleConfig cfg;
  cfg.mode = OracleMode::kRemote;
  cfg.endpoint = "http://127.0.0.1:1/flag";
  cfg.timeout = std::chrono::milliseconds(300);
  cfg.retries = 0;
  std::vector<std::string> texts = {"Date", "05-01"};
  CHECK_THROWS_AS(make_oracle(cfg)->flag_fields(texts, 3), OracleError);

  cfg.heuristic_fallback = true;
  auto oracle = make_oracle(cfg);
  CHECK(oracle->flag_fields(texts, 3) == std::vector<std::string>{"Date"});
  CHECK(dynamic_cast<FallbackOracle&>(*oracle).fallbacks() == 1);
}

TEST_CASE("only http endpoints are accepted") {
  OracleConfig cfg;
  cfg.mode = OracleMode::kRemote;
  cfg.endpoint = "https://example.com/flag";
  CHECK_THROWS_AS(RemoteOracle{cfg}, ValidationError);
  cfg.endpoint = "example.com";
  CHECK_THROWS_AS(RemoteOracle{cfg}, ValidationError);
}
