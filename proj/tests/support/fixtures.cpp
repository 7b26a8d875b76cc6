#include "fixtures.hpp"

#include <map>
#include <random>

#include "test_support.hpp"

namespace saegraph::testing {

Planted planted(std::uint64_t seed, std::uint32_t k, std::uint32_t layers, std::uint32_t per_layer, double p_in,
                double p_out) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution in(p_in), out(p_out);
  std::uniform_real_distribution<double> w(0.2, 1.0);
  const std::uint32_t width = k * per_layer;
  std::vector<FeatureId> nodes;
  std::vector<GraphEdge> edges;
  for (std::uint32_t l = 0; l < layers; ++l) {
    for (std::uint32_t f = 0; f < width; ++f) nodes.push_back({l, f});
  }
  for (std::uint32_t l = 0; l + 1 < layers; ++l) {
    for (std::uint32_t i = 0; i < width; ++i) {
      for (std::uint32_t j = 0; j < width; ++j) {
        const bool same = i / per_layer == j / per_layer;
        if (same ? in(rng) : out(rng)) {
          const double v = w(rng);
          edges.push_back({{l, i}, {l + 1, j}, v, v});
        }
      }
    }
  }
  GraphProvenance provenance;
  provenance.threshold = 0.1;
  provenance.last_layer = layers - 1;
  provenance.n_features = width;
  FeatureGraph g(nodes, edges, provenance);
  std::vector<std::uint32_t> truth;
  for (const auto& id : g.nodes()) truth.push_back(id.index / per_layer);
  return {std::move(g), std::move(truth)};
}

bool connected_within(const FeatureGraph& g, const Partition& p) {
  const std::size_t n = g.nodes().size();
  std::vector<std::vector<std::size_t>> adj(n);
  for (const auto& e : g.edges()) {
    const auto u = *g.node_index(e.u);
    const auto v = *g.node_index(e.v);
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  std::map<std::uint32_t, std::size_t> size, reached;
  for (const auto c : p.membership) ++size[c];
  std::vector<bool> seen(n, false);
  for (std::size_t s = 0; s < n; ++s) {
    const auto c = p.membership[s];
    if (reached.count(c)) continue;
    std::vector<std::size_t> stack{s};
    seen[s] = true;
    std::size_t count = 0;
    while (!stack.empty()) {
      const auto v = stack.back();
      stack.pop_back();
      ++count;
      for (const auto u : adj[v]) {
        if (!seen[u] && p.membership[u] == c) {
          seen[u] = true;
          stack.push_back(u);
        }
      }
    }
    reached[c] = count;
    if (count != size[c]) return false;
  }
  return true;
}

SaeWeights basis_sae(std::uint32_t layer, std::vector<int> axes, double stretch0) {
  const int d = 6;
  const int F = static_cast<int>(axes.size());
  SaeWeights s;
  s.layer = layer;
  s.w_dec = RowMatrix::Zero(F, d);
  for (int f = 0; f < F; ++f) s.w_dec(f, axes[f]) = f == 0 ? stretch0 : 1.0;
  s.w_enc = s.w_dec.transpose();
  s.b_enc = Eigen::VectorXd::Zero(F);
  s.b_dec = Eigen::VectorXd::Zero(d);
  return s;
}

ProjectionFixture projection_fixture(const std::filesystem::path& dir, double stretch0, double act_scale) {
  ProjectionFixture fx;
  fx.sae0 = basis_sae(0, {0, 1, 2, 3}, stretch0);
  fx.sae1 = basis_sae(1, {1, 2, 3, 4});
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> a(0.5, 4.0);
  std::normal_distribution<double> noise(0.0, 0.02);
  std::bernoulli_distribution fires(0.5);
  std::vector<TokenFrame> frames;
  ResidualWriter w(dir / "resid1.saer", 1, 6);
  for (std::uint64_t t = 0; t < 400; ++t) {
    std::vector<std::vector<SparseActivation>> layers(2);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(6);
    if (fires(rng)) {
      const double v = a(rng) * act_scale;
      layers[0].push_back({0, static_cast<float>(v)});
      x[0] = static_cast<float>(v) + noise(rng);
    }
    if (fires(rng)) {
      const double v = a(rng) * act_scale;
      layers[0].push_back({1, static_cast<float>(v)});
      x[1] = v;
      layers[1].push_back({0, static_cast<float>(v)});
    }
    x[4] = a(rng);
    frames.push_back(TokenFrame::from_layers(t, layers));
    w.write({t, x});
  }
  w.close();
  fx.manifest = write_dataset(dir / "data", frames, 2, 4, 128);
  fx.table = scan_max(fx.manifest);
  fx.residuals = dir / "resid1.saer";
  return fx;
}

}  // namespace saegraph::testing
