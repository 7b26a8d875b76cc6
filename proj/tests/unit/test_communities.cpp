#include <doctest.h>

#include <map>
#include <numeric>
#include <random>

#include "saegraph/communities.hpp"
#include "fixtures.hpp"
#include "test_support.hpp"

using namespace saegraph;
using saegraph::testing::TempDir;
using saegraph::testing::connected_within;
using saegraph::testing::planted;

namespace {

GraphProvenance prov(std::uint32_t last_layer, double threshold = 0.1) {
  GraphProvenance p;
  p.threshold = threshold;
  p.last_layer = last_layer;
  p.n_features = 64;
  return p;
}

// Two complete bipartite blocks over layers 0-1 joined by one light edge.
FeatureGraph two_blocks() {
  std::vector<FeatureId> nodes;
  std::vector<GraphEdge> edges;
  for (std::uint32_t b = 0; b < 2; ++b) {
    for (std::uint32_t i = 0; i < 3; ++i) {
      nodes.push_back({0, b * 3 + i});
      nodes.push_back({1, b * 3 + i});
      for (std::uint32_t j = 0; j < 3; ++j) edges.push_back({{0, b * 3 + i}, {1, b * 3 + j}, 1.0, 1.0});
    }
  }
  edges.push_back({{0, 0}, {1, 3}, 0.2, 0.2});
  return FeatureGraph(nodes, edges, prov(1));
}

// Modularity from the definition over all ordered node pairs.
double brute_modularity(const FeatureGraph& g, const std::vector<std::uint32_t>& c, double gamma, bool weighted) {
  const std::size_t n = g.nodes().size();
  std::vector<std::vector<double>> A(n, std::vector<double>(n, 0.0));
  for (const auto& e : g.edges()) {
    const auto u = *g.node_index(e.u);
    const auto v = *g.node_index(e.v);
    const double w = weighted ? e.w : 1.0;
    A[u][v] += w;
    A[v][u] += w;
  }
  std::vector<double> k(n, 0.0);
  double two_m = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) k[i] += A[i][j];
    two_m += k[i];
  }
  if (two_m == 0) return 0.0;
  double q = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (c[i] == c[j]) q += A[i][j] - gamma * k[i] * k[j] / two_m;
    }
  }
  return q / two_m;
}

}  // namespace

TEST_CASE("modularity matches the brute-force definition") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto pl = planted(seed, 3, 3, 3, 0.5, 0.1);
    std::mt19937_64 rng(seed * 7);
    std::uniform_int_distribution<std::uint32_t> pick(0, 4);
    std::vector<std::uint32_t> c(pl.graph.nodes().size());
    for (auto& x : c) x = pick(rng);
    for (const double gamma : {0.5, 1.0, 2.0}) {
      for (const bool weighted : {true, false}) {
        CHECK(modularity(pl.graph, c, gamma, weighted) ==
              doctest::Approx(brute_modularity(pl.graph, c, gamma, weighted)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("modularity of trivial partitions") {
  const auto g = two_blocks();
  const std::size_t n = g.nodes().size();
  CHECK(modularity(g, std::vector<std::uint32_t>(n, 0)) == doctest::Approx(0.0).epsilon(1e-12));
  // Singletons: -sum(k_i^2) / (2m)^2 on a graph without self-loops.
  std::vector<std::uint32_t> single(n);
  std::iota(single.begin(), single.end(), 0u);
  std::vector<double> k(n, 0.0);
  double two_m = 0;
  for (const auto& e : g.edges()) {
    k[*g.node_index(e.u)] += e.w;
    k[*g.node_index(e.v)] += e.w;
    two_m += 2 * e.w;
  }
  double s = 0;
  for (const auto x : k) s += x * x;
  CHECK(modularity(g, single) == doctest::Approx(-s / (two_m * two_m)).epsilon(1e-12));
  CHECK_THROWS_AS((void)modularity(g, {0, 1}), ConfigError);
  const FeatureGraph empty({{0, 0}, {1, 0}}, {}, prov(1));
  CHECK(modularity(empty, {0, 1}) == 0.0);
}

TEST_CASE("two blocks split into two communities") {
  const auto g = two_blocks();
  for (const auto algo : {Algorithm::kLouvain, Algorithm::kLeiden}) {
    const auto p = detect_communities(g, algo);
    CHECK(p.n_communities() == 2);
    CHECK(p.community_of({0, 0}) == p.community_of({1, 2}));
    CHECK(p.community_of({0, 0}) != p.community_of({0, 3}));
    CHECK(p.membership.front() == 0);
    CHECK(p.algorithm == algorithm_name(algo));
  }
}

TEST_CASE("planted communities are recovered") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto pl = planted(seed, 8, 4, 6, 0.7, 0.01);
    QualityConfig cfg;
    cfg.seed = seed;
    const auto lo = louvain(pl.graph, cfg);
    const auto le = leiden(pl.graph, cfg);
    CAPTURE(seed);
    CHECK(testing::adjusted_rand_index(lo.membership, pl.truth) >= 0.9);
    CHECK(testing::adjusted_rand_index(le.membership, pl.truth) >= 0.9);
    CHECK(modularity(pl.graph, le.membership) >= modularity(pl.graph, lo.membership) - 0.01);
  }
}

TEST_CASE("single node and label equivariance") {
  const FeatureGraph one({{2, 5}}, {}, prov(2));
  CHECK(louvain(one).membership == std::vector<std::uint32_t>{0});
  CHECK(leiden(one).membership == std::vector<std::uint32_t>{0});

  // Reversing feature indices within each layer relabels nodes; the grouping
  // must follow.
  const auto g = two_blocks();
  std::vector<FeatureId> nodes;
  std::vector<GraphEdge> edges;
  const auto flip = [](FeatureId id) { return FeatureId{id.layer, 5 - id.index}; };
  for (const auto& id : g.nodes()) nodes.push_back(flip(id));
  for (const auto& e : g.edges()) edges.push_back({flip(e.u), flip(e.v), e.w, e.value});
  const FeatureGraph h(nodes, edges, g.provenance());
  for (const auto algo : {Algorithm::kLouvain, Algorithm::kLeiden}) {
    const auto pg = detect_communities(g, algo);
    const auto ph = detect_communities(h, algo);
    for (const auto& x : g.nodes()) {
      for (const auto& y : g.nodes()) {
        CHECK((pg.community_of(x) == pg.community_of(y)) == (ph.community_of(flip(x)) == ph.community_of(flip(y))));
      }
    }
  }
}

TEST_CASE("leiden communities are connected and quality never drops below singletons") {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const auto pl = planted(seed, 4, 3, 4, 0.3, 0.05);
    QualityConfig cfg;
    cfg.seed = seed;
    for (const double gamma : {0.5, 1.0, 3.0}) {
      cfg.resolution = gamma;
      std::vector<std::uint32_t> single(pl.graph.nodes().size());
      std::iota(single.begin(), single.end(), 0u);
      const double q0 = modularity(pl.graph, single, gamma);
      const auto le = leiden(pl.graph, cfg);
      const auto lo = louvain(pl.graph, cfg);
      CAPTURE(seed);
      CHECK(connected_within(pl.graph, le));
      CHECK(connected_within(pl.graph, lo));
      CHECK(modularity(pl.graph, le.membership, gamma) >= q0 - 1e-12);
      CHECK(modularity(pl.graph, lo.membership, gamma) >= q0 - 1e-12);
      CHECK(le.membership == normalize_membership(le.membership));
    }
  }
}

TEST_CASE("detection is deterministic for a seed") {
  const auto pl = planted(11, 6, 3, 4, 0.4, 0.05);
  QualityConfig cfg;
  cfg.seed = 42;
  CHECK(leiden(pl.graph, cfg) == leiden(pl.graph, cfg));
  CHECK(louvain(pl.graph, cfg) == louvain(pl.graph, cfg));
}

TEST_CASE("edgeless graph yields singletons") {
  const FeatureGraph g({{0, 0}, {0, 1}, {1, 0}}, {}, prov(1));
  for (const auto algo : {Algorithm::kLouvain, Algorithm::kLeiden}) {
    const auto p = detect_communities(g, algo);
    CHECK(p.membership == std::vector<std::uint32_t>{0, 1, 2});
  }
}

TEST_CASE("quality config validation") {
  QualityConfig cfg;
  cfg.resolution = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS((void)parse_algorithm("infomap"), ConfigError);
  CHECK(parse_algorithm("leiden") == Algorithm::kLeiden);
}

TEST_CASE("normalize_membership numbers by first appearance") {
  CHECK(normalize_membership({7, 7, 3, 9, 3}) == std::vector<std::uint32_t>{0, 0, 1, 2, 1});
}

TEST_CASE("community names") {
  CHECK(community_name(Measure::kPearson, "louvain", "modularity", 0.1, 24, 82) ==
        "pearson_louvain_threshold_0.1_size_24_82");
  CHECK(community_name(Measure::kSufficiency, "leiden", "modularity", 0.1, 14, 61) ==
        "sufficiency_leiden_modularity_threshold_0.1_size_14_61");
}

TEST_CASE("extract, filter and store records") {
  const auto g = two_blocks();
  const auto p = louvain(g);
  const auto recs = extract_communities(p, g);
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].size() == 6);
  CHECK(recs[0].layer_span() == 2);
  CHECK(recs[0].name == "jaccard_louvain_threshold_0.1_size_6_0");
  CommunityFilter f;
  f.min_size = 7;
  CHECK(extract_communities(p, g, f).empty());
  f.min_size = 1;
  f.max_layer_span = 1;
  CHECK(filter_records(recs, f).empty());

  TempDir dir;
  CommunityStore store{Measure::kJaccard, "louvain", "", 0.1, recs};
  store.save(dir / "c.json");
  const auto back = CommunityStore::load(dir / "c.json");
  CHECK(back.records == recs);
  p.save(dir / "p.json");
  CHECK(Partition::load(dir / "p.json") == p);
  CHECK_THROWS_AS((void)CommunityStore::load(dir / "missing.json"), MissingInputError);
}

TEST_CASE("intra-layer cosine annotation") {
  SaeWeights sae;
  sae.layer = 0;
  sae.w_enc = RowMatrix::Zero(2, 6);
  sae.b_enc = Eigen::VectorXd::Zero(6);
  sae.w_dec = RowMatrix::Zero(6, 2);
  sae.b_dec = Eigen::VectorXd::Zero(2);
  for (int f = 0; f < 6; ++f) sae.w_dec(f, f % 2) = 1.0;  // features 0,2,4 parallel; 1,3,5 parallel
  CommunityRecord r;
  r.members = {{0, 0}, {0, 2}, {1, 1}};
  annotate_intra_layer_cosine(r, [&](std::uint32_t l) { return l == 0 ? &sae : nullptr; });
  REQUIRE(r.intra_cosine.has_value());
  CHECK(*r.intra_cosine == doctest::Approx(1.0));
  CHECK(r.intra_cosine_by_layer.size() == 1);
  r.members.push_back({1, 3});
  CHECK_THROWS_AS(annotate_intra_layer_cosine(r, [&](std::uint32_t l) { return l == 0 ? &sae : nullptr; }),
                  MissingInputError);
}
