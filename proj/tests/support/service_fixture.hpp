#pragma once

// Artifact set for service tests: a small synthetic dataset pushed through
// the offline pipeline, plus response shape validators.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "saegraph/communities.hpp"
#include "saegraph/graphkit.hpp"
#include "saegraph/graphserve.hpp"
#include "saegraph/motifs.hpp"
#include "saegraph/synth.hpp"

namespace saegraph::testing {

struct ServiceFixture {
  std::filesystem::path dir;
  std::filesystem::path config_path;
  SynthSpec spec;
  DatasetManifest manifest;
  MaxActivationTable table;
  FeatureGraph graph;  // jaccard, threshold 0.1, node rule all
  Partition partition;
  CommunityStore store;
  ClassificationReport classification;
  std::map<FeatureId, std::string> explanations;
  std::vector<SimilarityMatrix> pearson;
  std::vector<SimilarityMatrix> jaccard;
};

/// Writes every artifact and a service config into `dir`.
ServiceFixture build_service_fixture(const std::filesystem::path& dir);

/// Offline annotation merge, written independently of the service.
GraphAnnotations offline_annotations(const ServiceFixture& fx, const FeatureGraph& graph);

// Shape checks; each returns an empty string when the body is valid.
std::string check_graph_document(const nlohmann::json& doc);
std::string check_feature_detail(const nlohmann::json& doc);
std::string check_community_list(const nlohmann::json& doc);
std::string check_preset_list(const nlohmann::json& doc);
std::string check_error_body(const nlohmann::json& doc);

}  // namespace saegraph::testing
