#pragma once

// Louvain and Leiden community detection with the modularity quality
// function, treating a feature graph as an undirected weighted graph.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "saegraph/graphkit.hpp"
#include "saegraph/saemath.hpp"

namespace saegraph {

enum class Algorithm { kLouvain, kLeiden };

[[nodiscard]] std::string_view algorithm_name(Algorithm a);
[[nodiscard]] Algorithm parse_algorithm(std::string_view name);

struct QualityConfig {
  double resolution = 1.0;  // gamma
  bool weighted = true;     // false: every edge counts 1
  std::uint64_t seed = 0;
  std::uint32_t max_iterations = 50;
  /// Leiden refinement randomness.
  double refine_temperature = 0.01;

  void validate() const;
};

/// Community id per node, indexed like graph.nodes(). Ids are dense and
/// numbered by first appearance in node order.
struct Partition {
  std::vector<FeatureId> nodes;
  std::vector<std::uint32_t> membership;
  std::string algorithm;
  std::string quality = "modularity";
  double resolution = 1.0;
  std::uint64_t seed = 0;
  GraphProvenance graph;

  [[nodiscard]] std::uint32_t n_communities() const;
  [[nodiscard]] std::optional<std::uint32_t> community_of(FeatureId id) const;
  [[nodiscard]] std::vector<std::vector<FeatureId>> groups() const;

  [[nodiscard]] nlohmann::json to_json() const;
  static Partition from_json(const nlohmann::json& doc);
  void save(const std::filesystem::path& path) const;
  static Partition load(const std::filesystem::path& path);

  bool operator==(const Partition&) const = default;
};

/// Renumbers ids densely by first appearance.
[[nodiscard]] std::vector<std::uint32_t> normalize_membership(const std::vector<std::uint32_t>& membership);

/// Q = 1/(2m) sum_ij (A_ij - gamma k_i k_j / 2m) delta(c_i, c_j); 0 for an
/// edgeless graph. membership is indexed like graph.nodes(); throws
/// ConfigError when its length differs.
[[nodiscard]] double modularity(const FeatureGraph& graph, const std::vector<std::uint32_t>& membership,
                                double resolution = 1.0, bool weighted = true);

[[nodiscard]] Partition louvain(const FeatureGraph& graph, const QualityConfig& config = {});
/// Every returned community induces a connected subgraph.
[[nodiscard]] Partition leiden(const FeatureGraph& graph, const QualityConfig& config = {});
[[nodiscard]] Partition detect_communities(const FeatureGraph& graph, Algorithm algorithm,
                                           const QualityConfig& config = {});

struct CommunityRecord {
  std::string name;
  Measure measure = Measure::kJaccard;
  std::string algorithm;
  std::string quality;
  double threshold = 0.0;
  std::uint32_t id = 0;
  std::vector<FeatureId> members;
  std::map<std::uint32_t, double> intra_cosine_by_layer;  // layers with >= 2 members
  std::optional<double> intra_cosine;                     // minimum over those layers

  [[nodiscard]] std::size_t size() const { return members.size(); }
  [[nodiscard]] std::uint32_t layer_span() const;
  [[nodiscard]] nlohmann::json to_json() const;
  static CommunityRecord from_json(const nlohmann::json& doc);

  bool operator==(const CommunityRecord&) const = default;
};

struct CommunityFilter {
  std::size_t min_size = 1;
  std::optional<std::size_t> max_size;
  std::uint32_t min_layer_span = 1;
  std::optional<std::uint32_t> max_layer_span;
};

/// `<measure>_<algorithm>[_<quality>]_threshold_<t>_size_<n>_<id>`; the
/// quality part is present for Leiden only.
[[nodiscard]] std::string community_name(Measure measure, std::string_view algorithm, std::string_view quality,
                                         double threshold, std::size_t size, std::uint32_t id);

[[nodiscard]] std::vector<CommunityRecord> extract_communities(const Partition& partition,
                                                               const FeatureGraph& graph,
                                                               const CommunityFilter& filter = {});

/// Looks up the SAE weights of a layer; returns nullptr when unavailable.
using SaeLookup = std::function<const SaeWeights*(std::uint32_t layer)>;

/// Throws MissingInputError when a layer with >= 2 members has no weights.
void annotate_intra_layer_cosine(CommunityRecord& record, const SaeLookup& saes);

struct CommunityStore {
  Measure measure = Measure::kJaccard;
  std::string algorithm;
  std::string quality;
  double threshold = 0.0;
  std::vector<CommunityRecord> records;

  [[nodiscard]] nlohmann::json to_json() const;
  static CommunityStore from_json(const nlohmann::json& doc);
  void save(const std::filesystem::path& path) const;
  static CommunityStore load(const std::filesystem::path& path);
};

[[nodiscard]] std::vector<CommunityRecord> filter_records(const std::vector<CommunityRecord>& records,
                                                          const CommunityFilter& filter);

}  // namespace saegraph
