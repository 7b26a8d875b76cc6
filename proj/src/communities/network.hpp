#pragma once

// Undirected weighted network used by the detection algorithms. Self-loops
// are kept separately; a self-loop of weight s adds 2s to the node degree.

#include <cstdint>
#include <vector>

#include "saegraph/graphkit.hpp"

namespace saegraph::detail {

struct Network {
  struct Arc {
    std::uint32_t to;
    double w;
  };
  std::uint32_t n = 0;
  std::vector<std::vector<Arc>> adj;  // no self-loops, each edge stored in both directions
  std::vector<double> self;
  std::vector<double> degree;
  double two_m = 0.0;

  static Network from_graph(const FeatureGraph& graph, bool weighted);
  void finish();  // recomputes degree and two_m

  /// Collapses communities (dense ids 0..k-1) into single nodes.
  [[nodiscard]] Network aggregate(const std::vector<std::uint32_t>& membership, std::uint32_t k) const;
  [[nodiscard]] double quality(const std::vector<std::uint32_t>& membership, double gamma) const;
};

/// Dense renumbering by first appearance; returns the community count.
std::uint32_t renumber(std::vector<std::uint32_t>& membership);

}  // namespace saegraph::detail
