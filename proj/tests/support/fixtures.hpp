#pragma once

// Planted fixtures shared by the unit suites and the acceptance run.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "saegraph/communities.hpp"
#include "saegraph/motifs.hpp"
#include "saegraph/saemath.hpp"

namespace saegraph::testing {

struct Planted {
  FeatureGraph graph;
  std::vector<std::uint32_t> truth;  // indexed like graph.nodes()
};

/// k groups, each with `per_layer` features in each of `layers` layers; edges
/// join adjacent layers with probability p_in inside a group, p_out across.
Planted planted(std::uint64_t seed, std::uint32_t k, std::uint32_t layers, std::uint32_t per_layer, double p_in,
                double p_out);

/// True when every community induces a connected subgraph.
bool connected_within(const FeatureGraph& g, const Partition& p);

// Orthonormal toy dictionaries in R^6. Layer 0 features point along e0..e3;
// the layer 1 dictionary holds e1..e4, so e0 is not represented there.
struct ProjectionFixture {
  SaeWeights sae0, sae1;
  DatasetManifest manifest;
  MaxActivationTable table;
  std::filesystem::path residuals;
};

SaeWeights basis_sae(std::uint32_t layer, std::vector<int> axes, double stretch0 = 1.0);

ProjectionFixture projection_fixture(const std::filesystem::path& dir, double stretch0, double act_scale = 1.0);

}  // namespace saegraph::testing
