#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <numeric>
#include <random>

#include "network.hpp"
#include "saegraph/communities.hpp"

namespace saegraph {

using detail::Network;
using detail::renumber;

namespace {

// Scratch for summing a node's edge weight per neighboring community.
class NeighborWeights {
 public:
  explicit NeighborWeights(std::uint32_t n) : weight_(n, 0.0), seen_(n, 0) {}

  void add(std::uint32_t c, double w) {
    if (!seen_[c]) {
      seen_[c] = 1;
      touched_.push_back(c);
    }
    weight_[c] += w;
  }
  [[nodiscard]] double at(std::uint32_t c) const { return weight_[c]; }
  [[nodiscard]] const std::vector<std::uint32_t>& touched() const { return touched_; }
  void clear() {
    for (const auto c : touched_) {
      weight_[c] = 0.0;
      seen_[c] = 0;
    }
    touched_.clear();
  }

 private:
  std::vector<double> weight_;
  std::vector<std::uint8_t> seen_;
  std::vector<std::uint32_t> touched_;
};

double tolerance(const Network& g) { return 1e-12 * std::max(1.0, g.two_m); }

// Picks the community with the largest gain among strictly better moves;
// ties go to the lowest id. Returns `stay` when nothing beats it.
struct MoveChoice {
  std::uint32_t community;
  double gain;
};

MoveChoice best_move(std::uint32_t stay, double stay_gain, const std::vector<std::uint32_t>& candidates,
                     const std::function<double(std::uint32_t)>& gain_of, double eps) {
  MoveChoice best{stay, stay_gain};
  bool moved = false;
  for (const auto c : candidates) {
    if (c == stay) continue;
    const double g = gain_of(c);
    if (g <= stay_gain + eps) continue;
    if (!moved || g > best.gain + eps || (std::abs(g - best.gain) <= eps && c < best.community)) {
      best = {c, g};
      moved = true;
    }
  }
  return best;
}

// One Louvain local-moving phase; returns true when any node moved.
bool louvain_local_moves(const Network& g, std::vector<std::uint32_t>& comm, double gamma, std::mt19937_64& rng,
                         std::uint32_t max_passes) {
  std::vector<double> total(g.n, 0.0);
  for (std::uint32_t i = 0; i < g.n; ++i) total[comm[i]] += g.degree[i];
  std::vector<std::uint32_t> order(g.n);
  std::iota(order.begin(), order.end(), 0u);
  NeighborWeights nw(g.n);
  const double eps = tolerance(g);
  bool any = false;
  for (std::uint32_t pass = 0; pass < max_passes; ++pass) {
    std::shuffle(order.begin(), order.end(), rng);
    bool moved = false;
    for (const auto i : order) {
      const auto old = comm[i];
      const double ki = g.degree[i];
      nw.clear();
      for (const auto& a : g.adj[i]) nw.add(comm[a.to], a.w);
      total[old] -= ki;
      const auto gain_of = [&](std::uint32_t c) { return nw.at(c) - gamma * ki * total[c] / g.two_m; };
      const auto choice = best_move(old, gain_of(old), nw.touched(), gain_of, eps);
      total[choice.community] += ki;
      comm[i] = choice.community;
      if (choice.community != old) moved = true;
    }
    if (!moved) break;
    any = true;
  }
  return any;
}

// Leiden fast local moving with a node queue.
void leiden_fast_moves(const Network& g, std::vector<std::uint32_t>& comm, double gamma, std::mt19937_64& rng) {
  std::vector<double> total(g.n, 0.0);
  std::vector<std::uint32_t> size(g.n, 0);
  for (std::uint32_t i = 0; i < g.n; ++i) {
    total[comm[i]] += g.degree[i];
    ++size[comm[i]];
  }
  std::vector<std::uint32_t> empty;
  for (std::uint32_t c = g.n; c-- > 0;) {
    if (size[c] == 0) empty.push_back(c);
  }
  std::vector<std::uint32_t> order(g.n);
  std::iota(order.begin(), order.end(), 0u);
  std::shuffle(order.begin(), order.end(), rng);
  std::deque<std::uint32_t> queue(order.begin(), order.end());
  std::vector<std::uint8_t> queued(g.n, 1);
  NeighborWeights nw(g.n);
  const double eps = tolerance(g);
  std::vector<std::uint32_t> candidates;

  while (!queue.empty()) {
    const auto v = queue.front();
    queue.pop_front();
    queued[v] = 0;
    const auto old = comm[v];
    const double kv = g.degree[v];
    nw.clear();
    for (const auto& a : g.adj[v]) nw.add(comm[a.to], a.w);
    total[old] -= kv;
    --size[old];
    if (size[old] == 0) empty.push_back(old);
    candidates = nw.touched();
    if (!empty.empty()) candidates.push_back(empty.back());
    const auto gain_of = [&](std::uint32_t c) { return nw.at(c) - gamma * kv * total[c] / g.two_m; };
    const auto choice = best_move(old, gain_of(old), candidates, gain_of, eps);
    const auto c = choice.community;
    if (size[c] == 0) empty.erase(std::find(empty.begin(), empty.end(), c));
    total[c] += kv;
    ++size[c];
    comm[v] = c;
    if (c != old) {
      for (const auto& a : g.adj[v]) {
        if (comm[a.to] != c && !queued[a.to]) {
          queued[a.to] = 1;
          queue.push_back(a.to);
        }
      }
    }
  }
}

// Leiden refinement: merges singletons within each community into
// well-connected subcommunities.
std::vector<std::uint32_t> leiden_refine(const Network& g, const std::vector<std::uint32_t>& comm, double gamma,
                                         double temperature, std::mt19937_64& rng) {
  std::vector<std::uint32_t> refined(g.n);
  std::iota(refined.begin(), refined.end(), 0u);
  std::vector<double> ref_total(g.degree);
  std::vector<std::uint32_t> ref_size(g.n, 1);
  std::vector<double> comm_total(g.n, 0.0);
  for (std::uint32_t i = 0; i < g.n; ++i) comm_total[comm[i]] += g.degree[i];
  // Weight from each refined community to the rest of its community.
  std::vector<double> external(g.n, 0.0);
  for (std::uint32_t v = 0; v < g.n; ++v) {
    for (const auto& a : g.adj[v]) {
      if (comm[a.to] == comm[v]) external[v] += a.w;
    }
  }

  std::vector<std::vector<std::uint32_t>> members(g.n);
  for (std::uint32_t v = 0; v < g.n; ++v) members[comm[v]].push_back(v);
  NeighborWeights nw(g.n);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::uint32_t> cands;
  std::vector<double> gains;

  for (auto& nodes : members) {
    if (nodes.size() < 2) continue;
    std::shuffle(nodes.begin(), nodes.end(), rng);
    const double K_C = comm_total[comm[nodes.front()]];
    for (const auto v : nodes) {
      if (ref_size[refined[v]] != 1) continue;
      const double kv = g.degree[v];
      const double ext_v = external[v];
      if (ext_v < gamma * kv * (K_C - kv) / g.two_m) continue;
      nw.clear();
      for (const auto& a : g.adj[v]) {
        if (comm[a.to] == comm[v]) nw.add(refined[a.to], a.w);
      }
      const auto own = refined[v];
      // v leaves its singleton.
      ref_total[own] = 0.0;
      ref_size[own] = 0;
      cands.assign(1, own);
      gains.assign(1, 0.0);
      for (const auto t : nw.touched()) {
        if (t == own) continue;
        const double K_T = ref_total[t];
        if (external[t] < gamma * K_T * (K_C - K_T) / g.two_m) continue;
        const double gain = nw.at(t) - gamma * kv * K_T / g.two_m;
        if (gain >= 0.0) {
          cands.push_back(t);
          gains.push_back(gain);
        }
      }
      const double top = *std::max_element(gains.begin(), gains.end());
      std::vector<double> weight(gains.size());
      double sum = 0.0;
      for (std::size_t k = 0; k < gains.size(); ++k) {
        weight[k] = std::exp((gains[k] - top) / temperature);
        sum += weight[k];
      }
      double r = unit(rng) * sum;
      std::size_t pick = 0;
      for (; pick + 1 < weight.size(); ++pick) {
        if (r < weight[pick]) break;
        r -= weight[pick];
      }
      const auto t = cands[pick];
      if (t != own) external[t] += ext_v - 2.0 * nw.at(t);
      refined[v] = t;
      ref_total[t] += kv;
      ++ref_size[t];
    }
  }
  return refined;
}

// Splits every community into its connected components.
std::vector<std::uint32_t> split_components(const Network& g, const std::vector<std::uint32_t>& comm) {
  constexpr std::uint32_t kUnset = UINT32_MAX;
  std::vector<std::uint32_t> out(g.n, kUnset);
  std::uint32_t next = 0;
  std::vector<std::uint32_t> stack;
  for (std::uint32_t s = 0; s < g.n; ++s) {
    if (out[s] != kUnset) continue;
    out[s] = next;
    stack.assign(1, s);
    while (!stack.empty()) {
      const auto v = stack.back();
      stack.pop_back();
      for (const auto& a : g.adj[v]) {
        if (out[a.to] == kUnset && comm[a.to] == comm[s]) {
          out[a.to] = next;
          stack.push_back(a.to);
        }
      }
    }
    ++next;
  }
  return out;
}

std::vector<std::uint32_t> singletons(std::uint32_t n) {
  std::vector<std::uint32_t> m(n);
  std::iota(m.begin(), m.end(), 0u);
  return m;
}

std::vector<std::uint32_t> run_louvain(const Network& base, const QualityConfig& cfg) {
  if (base.two_m <= 0.0) return singletons(base.n);
  std::mt19937_64 rng(cfg.seed);
  Network g = base;
  std::vector<std::uint32_t> node_comm = singletons(base.n);
  for (std::uint32_t level = 0; level < cfg.max_iterations; ++level) {
    std::vector<std::uint32_t> comm = singletons(g.n);
    if (!louvain_local_moves(g, comm, cfg.resolution, rng, cfg.max_iterations * 4)) break;
    const auto k = renumber(comm);
    for (auto& c : node_comm) c = comm[c];
    if (k == g.n) break;
    g = g.aggregate(comm, k);
  }
  return node_comm;
}

std::vector<std::uint32_t> run_leiden(const Network& base, const QualityConfig& cfg) {
  if (base.two_m <= 0.0) return singletons(base.n);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::uint32_t> partition = singletons(base.n);
  for (std::uint32_t iteration = 0; iteration < cfg.max_iterations; ++iteration) {
    const auto before = partition;
    Network g = base;
    std::vector<std::uint32_t> comm = partition;
    renumber(comm);
    std::vector<std::uint32_t> node_to_current = singletons(base.n);
    for (std::uint32_t level = 0; level < cfg.max_iterations; ++level) {
      leiden_fast_moves(g, comm, cfg.resolution, rng);
      const auto k = renumber(comm);
      if (k == g.n) break;
      auto refined = leiden_refine(g, comm, cfg.resolution, cfg.refine_temperature, rng);
      const auto kr = renumber(refined);
      std::vector<std::uint32_t> next_comm(kr, 0);
      for (std::uint32_t v = 0; v < g.n; ++v) next_comm[refined[v]] = comm[v];
      for (auto& c : node_to_current) c = refined[c];
      g = g.aggregate(refined, kr);
      comm = std::move(next_comm);
    }
    for (std::uint32_t v = 0; v < base.n; ++v) partition[v] = comm[node_to_current[v]];
    renumber(partition);
    if (partition == before) break;
  }
  return partition;
}

Partition finish(const FeatureGraph& graph, const Network& net, std::vector<std::uint32_t> membership,
                 Algorithm algorithm, const QualityConfig& cfg) {
  // Splitting disconnected communities never lowers modularity.
  membership = split_components(net, membership);
  const auto single = singletons(net.n);
  if (net.quality(membership, cfg.resolution) < net.quality(single, cfg.resolution)) membership = single;
  Partition p;
  p.nodes.assign(graph.nodes().begin(), graph.nodes().end());
  p.membership = normalize_membership(membership);
  p.algorithm = std::string(algorithm_name(algorithm));
  p.resolution = cfg.resolution;
  p.seed = cfg.seed;
  p.graph = graph.provenance();
  return p;
}

}  // namespace

std::string_view algorithm_name(Algorithm a) { return a == Algorithm::kLouvain ? "louvain" : "leiden"; }

Algorithm parse_algorithm(std::string_view name) {
  if (name == "louvain") return Algorithm::kLouvain;
  if (name == "leiden") return Algorithm::kLeiden;
  throw ConfigError("unknown algorithm '" + std::string(name) + "' (louvain, leiden)");
}

void QualityConfig::validate() const {
  if (!(resolution > 0.0)) throw ConfigError("resolution must be positive");
  if (max_iterations < 1) throw ConfigError("iteration cap must be at least 1");
  if (!(refine_temperature > 0.0)) throw ConfigError("refinement temperature must be positive");
}

std::vector<std::uint32_t> normalize_membership(const std::vector<std::uint32_t>& membership) {
  auto out = membership;
  renumber(out);
  return out;
}

double modularity(const FeatureGraph& graph, const std::vector<std::uint32_t>& membership, double resolution,
                  bool weighted) {
  if (membership.size() != graph.nodes().size()) {
    throw ConfigError("partition covers " + std::to_string(membership.size()) + " of " +
                      std::to_string(graph.nodes().size()) + " nodes");
  }
  return Network::from_graph(graph, weighted).quality(membership, resolution);
}

Partition louvain(const FeatureGraph& graph, const QualityConfig& config) {
  config.validate();
  const auto net = Network::from_graph(graph, config.weighted);
  return finish(graph, net, run_louvain(net, config), Algorithm::kLouvain, config);
}

Partition leiden(const FeatureGraph& graph, const QualityConfig& config) {
  config.validate();
  const auto net = Network::from_graph(graph, config.weighted);
  return finish(graph, net, run_leiden(net, config), Algorithm::kLeiden, config);
}

Partition detect_communities(const FeatureGraph& graph, Algorithm algorithm, const QualityConfig& config) {
  return algorithm == Algorithm::kLouvain ? louvain(graph, config) : leiden(graph, config);
}

}  // namespace saegraph
