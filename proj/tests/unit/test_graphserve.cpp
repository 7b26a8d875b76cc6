#include <doctest.h>

#include <cstdlib>
#include <thread>

#include "saegraph/graphserve.hpp"
#include "service_fixture.hpp"
#include "test_support.hpp"

// After the saegraph headers: <resolv.h> defines _res, which Eigen uses.
#include <httplib.h>

using namespace saegraph;
using saegraph::testing::TempDir;
using nlohmann::json;

namespace {

struct Loaded {
  TempDir dir{"serve"};
  testing::ServiceFixture fx;
  std::shared_ptr<const GraphService> service;

  Loaded() : fx(testing::build_service_fixture(dir.path())) {
    service = GraphService::load(ServiceConfig::load(fx.config_path));
  }

  HttpResponse get(const std::string& path, std::map<std::string, std::string> query = {}) const {
    return service->handle({"GET", path, std::move(query)});
  }
};

const Loaded& shared() {
  static const Loaded loaded;
  return loaded;
}

const std::string kPreset = "jaccard_louvain_threshold_0.1";

}  // namespace

TEST_CASE("presets and routing errors") {
  const auto& s = shared();
  const auto r = s.get("/api/presets");
  CHECK(r.status == 200);
  CHECK(json::parse(r.body) == json::array({kPreset}));
  CHECK(testing::check_preset_list(json::parse(r.body)).empty());

  for (const auto& path : {"/api/nope", "/", "/api/feature/1", "/other"}) {
    const auto e = s.get(path);
    CHECK(e.status == 404);
    CHECK(testing::check_error_body(json::parse(e.body)).empty());
  }
  const auto post = s.service->handle({"POST", "/api/presets", {}});
  CHECK(post.status == 405);
}

TEST_CASE("graph endpoint and threshold override") {
  const auto& s = shared();
  const auto stored = s.get("/api/graph", {{"preset", kPreset}});
  REQUIRE(stored.status == 200);
  const auto doc = json::parse(stored.body);
  CHECK(testing::check_graph_document(doc).empty());
  CHECK(doc["edges"].size() == s.fx.graph.edges().size());

  // Offline merge, built independently, matches byte for byte.
  CHECK(stored.body == export_graph(s.fx.graph, testing::offline_annotations(s.fx, s.fx.graph)).dump());

  const auto same = s.get("/api/graph", {{"preset", kPreset}, {"threshold", "0.1"}});
  CHECK(same.body == stored.body);

  const auto none = json::parse(s.get("/api/graph", {{"preset", kPreset}, {"threshold", "1.1"}}).body);
  CHECK(none["edges"].empty());
  CHECK(none["nodes"].size() == doc["nodes"].size());

  const auto half = s.get("/api/graph", {{"preset", kPreset}, {"threshold", "0.5"}});
  std::size_t expected = 0;
  for (const auto& e : s.fx.graph.edges()) expected += e.value > 0.5;
  CHECK(json::parse(half.body)["edges"].size() == expected);
  const auto offline = filter_edges(load_graph(s.fx.dir / "graph.json"), 0.5);
  CHECK(half.body == export_graph(offline, testing::offline_annotations(s.fx, offline)).dump());

  CHECK(s.get("/api/graph", {{"preset", kPreset}, {"threshold", "0.05"}}).status == 400);
  CHECK(s.get("/api/graph", {{"preset", kPreset}, {"threshold", "abc"}}).status == 400);
  CHECK(s.get("/api/graph", {{"preset", "missing"}}).status == 404);
  CHECK(s.get("/api/graph").status == 400);
}

TEST_CASE("feature detail") {
  const auto& s = shared();
  const auto& chain = s.fx.spec.chains.at(0);
  const FeatureId member{chain.start_layer, chain.indices[0]};
  const FeatureId partner{chain.start_layer + 1, chain.indices[1]};
  const auto r = s.get("/api/feature/" + std::to_string(member.layer) + "/" + std::to_string(member.index));
  REQUIRE(r.status == 200);
  const auto doc = json::parse(r.body);
  CHECK(testing::check_feature_detail(doc).empty());
  REQUIRE(!doc["neighbors"]["pearson"]["down"].empty());
  CHECK(doc["neighbors"]["pearson"]["down"][0]["id"] == partner.str());
  CHECK(doc["neighbors"]["pearson"]["down"].size() <= 5);
  CHECK(doc["classification"]["forward"] == "passed_through");
  CHECK(doc["max_activation"].get<double>() == doctest::Approx(s.fx.table.at(member)));

  const auto capped = json::parse(
      s.get("/api/feature/" + std::to_string(partner.layer) + "/" + std::to_string(partner.index), {{"cap", "1"}})
          .body);
  for (const auto& [measure, lists] : capped["neighbors"].items()) {
    CHECK(lists["up"].size() <= 1);
    CHECK(lists["down"].size() <= 1);
  }
  CHECK(capped["neighbors"]["pearson"]["up"].size() == 1);
  CHECK(capped["neighbors"]["pearson"]["up"][0]["id"] == member.str());

  CHECK(s.get("/api/feature/3/0").status == 404);
  CHECK(s.get("/api/feature/0/32").status == 404);
  CHECK(s.get("/api/feature/x/1").status == 404);
  CHECK(s.get("/api/feature/0/0", {{"cap", "0"}}).status == 400);
}

TEST_CASE("feature with no stored entries has empty neighbor lists") {
  TempDir dir;
  MatrixMeta meta;
  meta.measure = Measure::kPearson;
  meta.n_up = 4;
  meta.n_down = 4;
  SimilarityMatrix({meta, {}}).save(dir / "m.saem");
  const auto config = ServiceConfig::from_json({{"matrices", {"m.saem"}}}, dir.path());
  const auto svc = GraphService::load(config);
  const auto doc = json::parse(svc->handle({"GET", "/api/feature/1/2", {}}).body);
  CHECK(doc["neighbors"]["pearson"]["up"].empty());
  CHECK(doc["neighbors"]["pearson"]["down"].empty());
  CHECK(doc["explanation"].is_null());
}

TEST_CASE("communities endpoint") {
  const auto& s = shared();
  const auto all = json::parse(s.get("/api/communities").body);
  CHECK(testing::check_community_list(all).empty());
  CHECK(all.size() == s.fx.store.records.size());
  const auto filtered = json::parse(s.get("/api/communities", {{"measure", "jaccard"}, {"algo", "louvain"}}).body);
  CHECK(filtered == all);
  CHECK(json::parse(s.get("/api/communities", {{"min_size", "100000"}}).body).empty());

  std::size_t biggest = 0;
  std::string name;
  for (const auto& r : s.fx.store.records) {
    if (r.size() > biggest) {
      biggest = r.size();
      name = r.name;
    }
  }
  const auto big = json::parse(s.get("/api/communities", {{"min_size", std::to_string(biggest)}}).body);
  REQUIRE(!big.empty());
  bool found = false;
  for (const auto& r : big) found = found || r["name"] == name;
  CHECK(found);

  CHECK(s.get("/api/communities", {{"measure", "pearson"}}).status == 404);
  CHECK(s.get("/api/communities", {{"algo", "leiden"}}).status == 404);
  CHECK(s.get("/api/communities", {{"measure", "cosine?"}}).status == 400);
  CHECK(s.get("/api/communities", {{"min_size", "-1"}}).status == 400);
}

TEST_CASE("token subgraph endpoint matches offline code") {
  const auto& s = shared();
  const FrameIndex index(s.fx.manifest);
  std::optional<std::uint64_t> silent, chain_token;
  const auto& chain = s.fx.spec.chains.at(0);
  for (std::uint64_t t = 0; t < index.n_tokens() && (!silent || !chain_token); ++t) {
    const auto frame = index.read(t);
    if (frame.total_entries() == 0 && !silent) silent = t;
    bool all = true;
    for (std::uint32_t m = 0; m < chain.indices.size(); ++m) {
      const auto act = binarize(frame, s.fx.table, {0.2})[chain.start_layer + m];
      all = all && std::binary_search(act.begin(), act.end(), chain.indices[m]);
    }
    if (all && !chain_token) chain_token = t;
  }
  REQUIRE(silent);
  REQUIRE(chain_token);

  const auto empty = json::parse(s.get("/api/token-subgraph", {{"dataset", "synth"}, {"token", std::to_string(*silent)}}).body);
  CHECK(empty["nodes"].empty());
  CHECK(empty["edges"].empty());

  const auto body = s.get("/api/token-subgraph", {{"dataset", "synth"}, {"token", std::to_string(*chain_token)}}).body;
  const auto doc = json::parse(body);
  CHECK(testing::check_graph_document(doc).empty());
  std::set<std::pair<std::string, std::string>> edges;
  for (const auto& e : doc["edges"]) edges.emplace(e["u"].get<std::string>(), e["v"].get<std::string>());
  for (std::uint32_t m = 0; m + 1 < chain.indices.size(); ++m) {
    CHECK(edges.count({FeatureId{chain.start_layer + m, chain.indices[m]}.str(),
                       FeatureId{chain.start_layer + m + 1, chain.indices[m + 1]}.str()}));
  }
  const auto offline = token_subgraph(s.fx.manifest, *chain_token, s.fx.table, {0.2}, s.fx.graph);
  CHECK(body == export_graph(offline, testing::offline_annotations(s.fx, offline)).dump());

  CHECK(s.get("/api/token-subgraph", {{"dataset", "nope"}, {"token", "0"}}).status == 404);
  CHECK(s.get("/api/token-subgraph", {{"dataset", "synth"}, {"token", "4000"}}).status == 404);
  CHECK(s.get("/api/token-subgraph", {{"dataset", "synth"}}).status == 400);
}

TEST_CASE("identical requests give identical bodies across threads") {
  const auto& s = shared();
  const auto expected = s.get("/api/graph", {{"preset", kPreset}, {"threshold", "0.3"}}).body;
  std::vector<std::string> bodies(8);
  {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < bodies.size(); ++i) {
      pool.emplace_back([&, i] { bodies[i] = s.get("/api/graph", {{"preset", kPreset}, {"threshold", "0.3"}}).body; });
    }
  }
  for (const auto& b : bodies) CHECK(b == expected);
}

TEST_CASE("startup fails fast on missing artifacts") {
  TempDir dir;
  const json cfg = {{"presets", {{"a", {{"graph", "missing_a.json"}}}}}, {"matrices", {"missing_m.saem"}}};
  const auto config = ServiceConfig::from_json(cfg, dir.path());
  try {
    (void)GraphService::load(config);
    FAIL("expected MissingInputError");
  } catch (const MissingInputError& e) {
    const std::string what = e.what();
    CHECK(what.find("missing_a.json") != std::string::npos);
    CHECK(what.find("missing_m.saem") != std::string::npos);
  }
  CHECK_THROWS_AS((void)ServiceConfig::from_json({{"bogus", 1}}, dir.path()), ConfigError);
  CHECK_THROWS_AS((void)ServiceConfig::from_json({{"bind", "nohost"}}, dir.path()), ConfigError);
  CHECK_THROWS_AS(
      (void)ServiceConfig::from_json({{"datasets", {{"d", {{"manifest", "m"}, {"max_table", "t"}, {"preset", "x"}}}}}},
                                     dir.path()),
      ConfigError);
}

TEST_CASE("bind address precedence") {
  ServiceConfig cfg;
  cfg.bind = "127.0.0.1:7000";
  ::unsetenv("SAEGRAPH_BIND");
  CHECK(resolve_bind(std::nullopt, cfg).port == 7000);
  ::setenv("SAEGRAPH_BIND", "0.0.0.0:7100", 1);
  CHECK(resolve_bind(std::nullopt, cfg).port == 7100);
  CHECK(resolve_bind(std::nullopt, cfg).host == "0.0.0.0");
  CHECK(resolve_bind(std::string("localhost:7200"), cfg).port == 7200);
  ::unsetenv("SAEGRAPH_BIND");
  CHECK_THROWS_AS((void)parse_bind("host:99999"), ConfigError);
  CHECK_THROWS_AS((void)parse_bind(":80"), ConfigError);
}

TEST_CASE("HTTP round trip with CORS") {
  const auto& s = shared();
  HttpServer server(s.service);
  const int port = server.bind({"127.0.0.1", 0});
  std::jthread runner([&] { server.listen(); });
  server.wait_until_ready();
  httplib::Client client("127.0.0.1", port);
  const auto res = client.Get("/api/presets");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Access-Control-Allow-Origin") == "*");
  CHECK(res->get_header_value("Content-Type") == "application/json");
  CHECK(json::parse(res->body) == json::array({kPreset}));
  const auto missing = client.Get("/api/unknown");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  CHECK(json::parse(missing->body).contains("error"));
  const auto graph = client.Get("/api/graph?preset=" + kPreset + "&threshold=0.5");
  REQUIRE(graph);
  CHECK(graph->body == s.get("/api/graph", {{"preset", kPreset}, {"threshold", "0.5"}}).body);
  server.stop();
}
