#include "network.hpp"

#include <algorithm>
#include <map>

namespace saegraph::detail {

Network Network::from_graph(const FeatureGraph& graph, bool weighted) {
  Network net;
  net.n = static_cast<std::uint32_t>(graph.nodes().size());
  net.adj.resize(net.n);
  net.self.assign(net.n, 0.0);
  for (const auto& e : graph.edges()) {
    const auto u = static_cast<std::uint32_t>(*graph.node_index(e.u));
    const auto v = static_cast<std::uint32_t>(*graph.node_index(e.v));
    const double w = weighted ? e.w : 1.0;
    if (!(w > 0.0)) continue;
    net.adj[u].push_back({v, w});
    net.adj[v].push_back({u, w});
  }
  net.finish();
  return net;
}

void Network::finish() {
  degree.assign(n, 0.0);
  two_m = 0.0;
  for (std::uint32_t i = 0; i < n; ++i) {
    double k = 2.0 * self[i];
    for (const auto& a : adj[i]) k += a.w;
    degree[i] = k;
    two_m += k;
  }
}

Network Network::aggregate(const std::vector<std::uint32_t>& membership, std::uint32_t k) const {
  Network out;
  out.n = k;
  out.adj.resize(k);
  out.self.assign(k, 0.0);
  std::vector<std::map<std::uint32_t, double>> links(k);
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto ci = membership[i];
    out.self[ci] += self[i];
    for (const auto& a : adj[i]) {
      if (a.to < i) continue;  // each undirected edge once
      const auto cj = membership[a.to];
      if (ci == cj) {
        out.self[ci] += a.w;
      } else {
        links[std::min(ci, cj)][std::max(ci, cj)] += a.w;
      }
    }
  }
  for (std::uint32_t c = 0; c < k; ++c) {
    for (const auto& [d, w] : links[c]) {
      out.adj[c].push_back({d, w});
      out.adj[d].push_back({c, w});
    }
  }
  for (auto& list : out.adj) {
    std::sort(list.begin(), list.end(), [](const Arc& a, const Arc& b) { return a.to < b.to; });
  }
  out.finish();
  return out;
}

double Network::quality(const std::vector<std::uint32_t>& membership, double gamma) const {
  if (two_m <= 0.0) return 0.0;
  std::uint32_t k = 0;
  for (const auto c : membership) k = std::max(k, c + 1);
  // Internal and total weight share one summation order, so a community
  // holding every edge scores exactly zero.
  std::vector<double> internal(k, 0.0), total(k, 0.0);
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto c = membership[i];
    internal[c] += 2.0 * self[i];
    total[c] += 2.0 * self[i];
    for (const auto& a : adj[i]) {
      total[c] += a.w;
      if (membership[a.to] == c) internal[c] += a.w;
    }
  }
  double sum = 0.0;
  for (const auto t : total) sum += t;
  double q = 0.0;
  for (std::uint32_t c = 0; c < k; ++c) {
    q += internal[c] / sum - gamma * (total[c] / sum) * (total[c] / sum);
  }
  return q;
}

std::uint32_t renumber(std::vector<std::uint32_t>& membership) {
  constexpr std::uint32_t kUnset = UINT32_MAX;
  std::uint32_t top = 0;
  for (const auto c : membership) top = std::max(top, c + 1);
  std::vector<std::uint32_t> ids(top, kUnset);
  std::uint32_t next = 0;
  for (auto& c : membership) {
    if (ids[c] == kUnset) ids[c] = next++;
    c = ids[c];
  }
  return next;
}

}  // namespace saegraph::detail
