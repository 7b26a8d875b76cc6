#pragma once

// Multipartite feature graphs built from adjacent-layer similarity matrices.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "saegraph/activation_store.hpp"
#include "saegraph/similarity_matrix.hpp"

namespace saegraph {

struct GraphEdge {
  FeatureId u;  // upstream, layer k
  FeatureId v;  // downstream, layer k + 1
  double w = 0.0;      // weight used by community detection (1 when unweighted)
  double value = 0.0;  // similarity value

  bool operator==(const GraphEdge&) const = default;
};

/// Which features become nodes of a full graph. Token subgraphs always keep
/// every active feature.
enum class NodeRule { kConnected, kAll, kExplicit };

[[nodiscard]] std::string_view node_rule_name(NodeRule rule);
[[nodiscard]] NodeRule parse_node_rule(std::string_view name);

struct GraphConfig {
  Measure measure = Measure::kJaccard;
  double threshold = 0.1;  // edges need value > threshold
  bool weighted = true;
  NodeRule node_rule = NodeRule::kConnected;
  std::vector<FeatureId> explicit_nodes;  // used with NodeRule::kExplicit
};

struct GraphProvenance {
  Measure measure = Measure::kJaccard;
  double threshold = 0.0;
  bool weighted = true;
  NodeRule node_rule = NodeRule::kConnected;
  std::uint32_t first_layer = 0;
  std::uint32_t last_layer = 0;  // inclusive
  std::uint32_t n_features = 0;
  std::string note;  // free text, e.g. "token 42"

  bool operator==(const GraphProvenance&) const = default;
};

class FeatureGraph {
 public:
  FeatureGraph() = default;
  /// Nodes and edges are sorted and deduplicated; every edge endpoint must
  /// be a node and edges must join adjacent layers.
  FeatureGraph(std::vector<FeatureId> nodes, std::vector<GraphEdge> edges, GraphProvenance provenance);

  [[nodiscard]] std::span<const FeatureId> nodes() const { return nodes_; }
  [[nodiscard]] std::span<const GraphEdge> edges() const { return edges_; }
  [[nodiscard]] const GraphProvenance& provenance() const { return provenance_; }
  [[nodiscard]] std::optional<std::size_t> node_index(FeatureId id) const;
  [[nodiscard]] bool contains(FeatureId id) const { return node_index(id).has_value(); }

  bool operator==(const FeatureGraph&) const = default;

 private:
  std::vector<FeatureId> nodes_;
  std::vector<GraphEdge> edges_;
  GraphProvenance provenance_;
};

/// Matrices must share one measure and cover contiguous layer pairs (any
/// order). Throws ConfigError when the threshold is below a matrix's floor.
[[nodiscard]] FeatureGraph build_graph(std::span<const SimilarityMatrix> matrices, const GraphConfig& config);

/// Same node set, only edges with value > threshold. Shared by the service's
/// threshold override and offline filtering.
[[nodiscard]] FeatureGraph filter_edges(const FeatureGraph& graph, double threshold);

/// Throws ConfigError when a requested node is not in the graph.
[[nodiscard]] FeatureGraph induced_subgraph(const FeatureGraph& graph, std::span<const FeatureId> nodes);

/// Nodes: every feature active at the frame within the graph's layer span.
/// Edges: graph edges with both endpoints active.
[[nodiscard]] FeatureGraph token_subgraph(const FeatureGraph& graph, const TokenFrame& frame,
                                          const MaxActivationTable& table, const BinarizationRule& rule);
/// Reads the frame first; ConfigError when the position is out of range.
[[nodiscard]] FeatureGraph token_subgraph(const DatasetManifest& manifest, std::uint64_t position,
                                          const MaxActivationTable& table, const BinarizationRule& rule,
                                          const FeatureGraph& graph);

// --- annotations and documents ----------------------------------------------

struct GraphAnnotations {
  std::map<FeatureId, std::string> explanations;
  std::map<FeatureId, std::int64_t> communities;
  std::map<FeatureId, std::string> classes;

  bool operator==(const GraphAnnotations&) const = default;
};

struct AnnotationLoadReport {
  std::size_t rows = 0;
  std::size_t duplicates = 0;  // later rows replace earlier ones
};

/// CSV with header `layer,index,explanation`; quoted fields may contain
/// commas. Throws FormatError on malformed rows.
[[nodiscard]] std::map<FeatureId, std::string> load_explanations(const std::filesystem::path& path,
                                                                 AnnotationLoadReport* report = nullptr);

/// Deterministic portable document: nodes sorted by id, edges by endpoints.
[[nodiscard]] nlohmann::json export_graph(const FeatureGraph& graph, const GraphAnnotations& annotations = {});
[[nodiscard]] FeatureGraph import_graph(const nlohmann::json& doc, GraphAnnotations* annotations = nullptr);

void save_graph(const std::filesystem::path& path, const FeatureGraph& graph,
                const GraphAnnotations& annotations = {});
[[nodiscard]] FeatureGraph load_graph(const std::filesystem::path& path, GraphAnnotations* annotations = nullptr);

}  // namespace saegraph
