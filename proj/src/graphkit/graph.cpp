#include <algorithm>

#include "saegraph/graphkit.hpp"

namespace saegraph {

namespace {

bool edge_less(const GraphEdge& a, const GraphEdge& b) {
  return a.u != b.u ? a.u < b.u : a.v < b.v;
}

}  // namespace

std::string_view node_rule_name(NodeRule rule) {
  switch (rule) {
    case NodeRule::kConnected: return "connected";
    case NodeRule::kAll: return "all";
    case NodeRule::kExplicit: return "explicit";
  }
  return "connected";
}

NodeRule parse_node_rule(std::string_view name) {
  if (name == "connected") return NodeRule::kConnected;
  if (name == "all") return NodeRule::kAll;
  if (name == "explicit") return NodeRule::kExplicit;
  throw ConfigError("unknown node rule '" + std::string(name) + "' (connected, all, explicit)");
}

FeatureGraph::FeatureGraph(std::vector<FeatureId> nodes, std::vector<GraphEdge> edges,
                           GraphProvenance provenance)
    : nodes_(std::move(nodes)), edges_(std::move(edges)), provenance_(std::move(provenance)) {
  std::sort(nodes_.begin(), nodes_.end());
  nodes_.erase(std::unique(nodes_.begin(), nodes_.end()), nodes_.end());
  std::sort(edges_.begin(), edges_.end(), edge_less);
  for (std::size_t k = 0; k < edges_.size(); ++k) {
    const auto& e = edges_[k];
    if (e.v.layer != e.u.layer + 1) {
      throw DimensionError("edge " + e.u.str() + " -> " + e.v.str() + " does not join adjacent layers");
    }
    if (k > 0 && !edge_less(edges_[k - 1], e)) {
      throw ConfigError("duplicate edge " + e.u.str() + " -> " + e.v.str());
    }
    if (!contains(e.u) || !contains(e.v)) {
      throw ConfigError("edge " + e.u.str() + " -> " + e.v.str() + " has an endpoint outside the node set");
    }
  }
}

std::optional<std::size_t> FeatureGraph::node_index(FeatureId id) const {
  const auto it = std::lower_bound(nodes_.begin(), nodes_.end(), id);
  if (it == nodes_.end() || *it != id) return std::nullopt;
  return static_cast<std::size_t>(it - nodes_.begin());
}

FeatureGraph build_graph(std::span<const SimilarityMatrix> matrices, const GraphConfig& config) {
  GraphProvenance prov;
  prov.measure = config.measure;
  prov.threshold = config.threshold;
  prov.weighted = config.weighted;
  prov.node_rule = config.node_rule;

  std::vector<const SimilarityMatrix*> order;
  for (const auto& m : matrices) order.push_back(&m);
  std::sort(order.begin(), order.end(),
            [](const auto* a, const auto* b) { return a->meta().up_layer < b->meta().up_layer; });
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& meta = order[k]->meta();
    if (meta.measure != config.measure) {
      throw ConfigError("matrix measure " + std::string(measure_name(meta.measure)) +
                        " differs from the graph measure " + std::string(measure_name(config.measure)));
    }
    if (k > 0 && meta.up_layer != order[k - 1]->meta().up_layer + 1) {
      throw DimensionError("similarity matrices do not cover contiguous layer pairs");
    }
    if (meta.n_up != meta.n_down || meta.n_up != order[0]->meta().n_up) {
      throw DimensionError("similarity matrices have differing feature counts");
    }
    if (config.threshold < meta.floor) {
      throw ConfigError("graph threshold " + format_number(config.threshold) +
                        " is below the matrix sparsification floor " + format_number(meta.floor));
    }
  }
  if (!order.empty()) {
    prov.first_layer = order.front()->meta().up_layer;
    prov.last_layer = order.back()->meta().up_layer + 1;
    prov.n_features = order.front()->meta().n_up;
  }

  std::vector<FeatureId> nodes;
  if (config.node_rule == NodeRule::kExplicit) {
    for (const auto& id : config.explicit_nodes) {
      if (order.empty() || id.layer < prov.first_layer || id.layer > prov.last_layer || id.index >= prov.n_features) {
        throw ConfigError("explicit node " + id.str() + " lies outside the matrices");
      }
    }
    nodes = config.explicit_nodes;
    std::sort(nodes.begin(), nodes.end());
  }
  const auto admitted = [&](FeatureId id) {
    return config.node_rule != NodeRule::kExplicit || std::binary_search(nodes.begin(), nodes.end(), id);
  };

  std::vector<GraphEdge> edges;
  for (const auto* m : order) {
    const std::uint32_t k = m->meta().up_layer;
    for (const auto& e : m->entries()) {
      if (!(e.value > config.threshold)) continue;
      const FeatureId u{k, e.up};
      const FeatureId v{k + 1, e.down};
      if (!admitted(u) || !admitted(v)) continue;
      edges.push_back({u, v, config.weighted ? e.value : 1.0, e.value});
    }
  }

  if (config.node_rule == NodeRule::kConnected) {
    for (const auto& e : edges) {
      nodes.push_back(e.u);
      nodes.push_back(e.v);
    }
  } else if (config.node_rule == NodeRule::kAll && !order.empty()) {
    for (std::uint32_t k = prov.first_layer; k <= prov.last_layer; ++k) {
      for (std::uint32_t i = 0; i < prov.n_features; ++i) nodes.push_back({k, i});
    }
  }
  return FeatureGraph(std::move(nodes), std::move(edges), prov);
}

FeatureGraph filter_edges(const FeatureGraph& graph, double threshold) {
  std::vector<GraphEdge> edges;
  for (const auto& e : graph.edges()) {
    if (e.value > threshold) edges.push_back(e);
  }
  auto prov = graph.provenance();
  prov.threshold = std::max(prov.threshold, threshold);
  return FeatureGraph({graph.nodes().begin(), graph.nodes().end()}, std::move(edges), prov);
}

FeatureGraph induced_subgraph(const FeatureGraph& graph, std::span<const FeatureId> nodes) {
  std::vector<FeatureId> keep(nodes.begin(), nodes.end());
  for (const auto& id : keep) {
    if (!graph.contains(id)) throw ConfigError("node " + id.str() + " is not in the graph");
  }
  std::sort(keep.begin(), keep.end());
  std::vector<GraphEdge> edges;
  for (const auto& e : graph.edges()) {
    if (std::binary_search(keep.begin(), keep.end(), e.u) && std::binary_search(keep.begin(), keep.end(), e.v)) {
      edges.push_back(e);
    }
  }
  return FeatureGraph(std::move(keep), std::move(edges), graph.provenance());
}

FeatureGraph token_subgraph(const FeatureGraph& graph, const TokenFrame& frame, const MaxActivationTable& table,
                            const BinarizationRule& rule) {
  const auto& prov = graph.provenance();
  if (frame.n_layers() != table.n_layers()) throw DimensionError("frame and max table differ in layer count");
  if (!graph.nodes().empty() && (prov.last_layer >= frame.n_layers() || prov.n_features != table.n_features())) {
    throw DimensionError("graph does not match the dataset dimensions");
  }
  const auto active = binarize(frame, table, rule);
  std::vector<FeatureId> nodes;
  if (!graph.nodes().empty() || prov.n_features > 0) {
    for (std::uint32_t k = prov.first_layer; k <= prov.last_layer && k < active.size(); ++k) {
      for (const auto i : active[k]) nodes.push_back({k, i});
    }
  }
  std::vector<GraphEdge> edges;
  for (const auto& e : graph.edges()) {
    if (std::binary_search(nodes.begin(), nodes.end(), e.u) && std::binary_search(nodes.begin(), nodes.end(), e.v)) {
      edges.push_back(e);
    }
  }
  auto sub_prov = prov;
  sub_prov.note = "token " + std::to_string(frame.position());
  return FeatureGraph(std::move(nodes), std::move(edges), sub_prov);
}

FeatureGraph token_subgraph(const DatasetManifest& manifest, std::uint64_t position, const MaxActivationTable& table,
                            const BinarizationRule& rule, const FeatureGraph& graph) {
  return token_subgraph(graph, read_frame_at(manifest, position), table, rule);
}

}  // namespace saegraph
