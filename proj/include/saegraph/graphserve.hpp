#pragma once

// Read-only HTTP/JSON service over offline artifacts: graph presets, feature
// details, community lists and token subgraphs.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "saegraph/activation_store.hpp"
#include "saegraph/communities.hpp"
#include "saegraph/graphkit.hpp"
#include "saegraph/motifs.hpp"
#include "saegraph/similarity_matrix.hpp"

namespace saegraph {

struct PresetEntry {
  std::filesystem::path graph;
  std::optional<std::filesystem::path> partition;  // community ids for node colors
};

struct DatasetEntry {
  std::filesystem::path manifest;
  std::filesystem::path max_table;
  double theta = 0.2;
  std::string preset;  // graph used for token subgraphs
};

/// Service configuration. Relative paths resolve against `base_dir`.
struct ServiceConfig {
  std::string bind = "127.0.0.1:8080";
  std::string cors_origin = "*";
  std::uint32_t neighbor_cap = 10;
  std::optional<std::filesystem::path> annotations;     // layer,index,explanation CSV
  std::optional<std::filesystem::path> max_table;       // feature range and max activations
  std::optional<std::filesystem::path> classification;  // classify report JSON
  std::map<std::string, PresetEntry> presets;
  std::vector<std::filesystem::path> communities;  // community store JSON files
  std::vector<std::filesystem::path> matrices;     // similarity matrices for neighbor lists
  std::map<std::string, DatasetEntry> datasets;
  std::filesystem::path base_dir = ".";

  [[nodiscard]] nlohmann::json to_json() const;
  /// Throws ConfigError on unknown keys or bad values.
  static ServiceConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
  static ServiceConfig load(const std::filesystem::path& path);
};

struct BindAddress {
  std::string host;
  int port = 0;
};

/// "host:port"; throws ConfigError otherwise.
[[nodiscard]] BindAddress parse_bind(const std::string& text);
/// Precedence: flag, then the SAEGRAPH_BIND environment variable, then config.
[[nodiscard]] BindAddress resolve_bind(const std::optional<std::string>& flag, const ServiceConfig& config);

struct HttpRequest {
  std::string method = "GET";
  std::string path;
  std::map<std::string, std::string> query;
};

struct HttpResponse {
  int status = 200;
  std::string body;  // JSON
};

class GraphService {
 public:
  /// Loads every artifact up front. Throws MissingInputError naming all
  /// missing paths at once.
  static std::shared_ptr<const GraphService> load(const ServiceConfig& config);

  /// Pure request router; safe to call concurrently.
  [[nodiscard]] HttpResponse handle(const HttpRequest& request) const;

  // Endpoint bodies, also used for offline equivalence checks.
  [[nodiscard]] nlohmann::json presets() const;
  [[nodiscard]] nlohmann::json graph(const std::string& preset, std::optional<double> threshold) const;
  [[nodiscard]] nlohmann::json feature(FeatureId id, std::uint32_t cap) const;
  [[nodiscard]] nlohmann::json communities(const std::optional<std::string>& measure,
                                           const std::optional<std::string>& algorithm,
                                           std::optional<double> threshold, const CommunityFilter& filter) const;
  [[nodiscard]] nlohmann::json token_subgraph_doc(const std::string& dataset, std::uint64_t position) const;

  [[nodiscard]] const ServiceConfig& config() const { return config_; }

 private:
  struct Preset {
    FeatureGraph graph;
    std::map<FeatureId, std::int64_t> communities;
  };
  struct Dataset {
    std::unique_ptr<FrameIndex> index;
    MaxActivationTable table;
    BinarizationRule rule;
    std::string preset;
  };

  GraphService() = default;
  [[nodiscard]] GraphAnnotations annotations_for(const Preset& preset) const;

  ServiceConfig config_;
  std::map<FeatureId, std::string> explanations_;
  std::optional<MaxActivationTable> max_table_;
  std::optional<ClassificationReport> classification_;
  std::map<std::string, Preset> presets_;
  std::vector<CommunityStore> stores_;
  std::vector<SimilarityMatrix> matrices_;
  std::vector<std::vector<std::vector<SimilarityEntry>>> columns_;  // per matrix, entries by down index
  std::map<std::string, Dataset> datasets_;
  std::uint32_t n_layers_ = 0;
  std::uint32_t n_features_ = 0;
};

/// Error body `{"error": message}`.
[[nodiscard]] HttpResponse json_error(int status, const std::string& message);

/// Blocks serving HTTP until stop() is called from another thread.
class HttpServer {
 public:
  explicit HttpServer(std::shared_ptr<const GraphService> service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds; port 0 picks a free port. Throws IoError on bind failure.
  int bind(const BindAddress& address);
  void listen();  // blocks
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace saegraph
