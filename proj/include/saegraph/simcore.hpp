#pragma once

// Streaming pairwise statistics between adjacent layers.
//
// For a layer pair (k, k+1) the accumulator keeps, per upstream feature i, the
// binarized activity count a_i and the raw sums sum(x_i), sum(x_i^2); the same
// per downstream feature j; and per pair the binarized co-activation count
// c_ij and the raw cross-product sum sum(x_i y_j). Per-pair state lives in
// dense square tiles so a subset of upstream rows can be accumulated per pass
// when the full matrix does not fit in memory.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "saegraph/activation_store.hpp"
#include "saegraph/similarity_matrix.hpp"

namespace saegraph {

inline constexpr std::uint32_t kDefaultTileEdge = 4096;

/// Half-open range of upstream rows.
struct RowRange {
  std::uint32_t begin = 0;
  std::uint32_t end = 0;

  bool operator==(const RowRange&) const = default;
};

class PairStatsAccumulator {
 public:
  /// rows defaults to every upstream feature. A partial range must start on a
  /// tile boundary.
  PairStatsAccumulator(std::uint32_t up_layer, std::uint32_t n_up, std::uint32_t n_down,
                       BinarizationRule rule, std::uint32_t tile_edge = kDefaultTileEdge,
                       std::optional<RowRange> rows = std::nullopt);

  /// Adds one token. The frame must carry layers up_layer and up_layer + 1.
  void accumulate(const TokenFrame& frame, const MaxActivationTable& table,
                  const BinarizationRule& rule);

  /// Adds one token given both layers' raw activations and precomputed
  /// activity flags (parallel to the activation lists).
  void add_token(std::span<const SparseActivation> up, std::span<const std::uint8_t> up_active,
                 std::span<const SparseActivation> down, std::span<const std::uint8_t> down_active);

  /// Field-wise sum. Throws DimensionError for incompatible accumulators.
  void merge(const PairStatsAccumulator& other);

  [[nodiscard]] std::uint32_t up_layer() const { return up_layer_; }
  [[nodiscard]] std::uint32_t n_up() const { return n_up_; }
  [[nodiscard]] std::uint32_t n_down() const { return n_down_; }
  [[nodiscard]] RowRange rows() const { return rows_; }
  [[nodiscard]] std::uint32_t tile_edge() const { return edge_; }
  [[nodiscard]] const BinarizationRule& rule() const { return rule_; }
  [[nodiscard]] std::uint64_t n_tokens() const { return n_tokens_; }

  [[nodiscard]] std::uint64_t up_count(std::uint32_t i) const { return up_count_[i]; }
  [[nodiscard]] double up_sum(std::uint32_t i) const { return up_sum_[i]; }
  [[nodiscard]] double up_sumsq(std::uint32_t i) const { return up_sumsq_[i]; }
  [[nodiscard]] std::uint64_t down_count(std::uint32_t j) const { return down_count_[j]; }
  [[nodiscard]] double down_sum(std::uint32_t j) const { return down_sum_[j]; }
  [[nodiscard]] double down_sumsq(std::uint32_t j) const { return down_sumsq_[j]; }

  /// Per-pair state; i must lie within rows().
  [[nodiscard]] std::uint64_t co_count(std::uint32_t i, std::uint32_t j) const;
  [[nodiscard]] double cross_sum(std::uint32_t i, std::uint32_t j) const;

  /// Bytes held by per-pair state.
  [[nodiscard]] std::size_t pair_state_bytes() const;

  /// Visits the per-pair state of every covered row in (i, j) order.
  void for_each_pair(
      const std::function<void(std::uint32_t, std::uint32_t, std::uint64_t, double)>& fn) const;

  /// Row-major visit of one covered row: fn(j, co_count, cross_sum).
  template <typename Fn>
  void visit_row(std::uint32_t i, Fn&& fn) const;

 private:
  struct Tile {
    std::uint32_t width = 0;
    std::vector<std::uint64_t> co;
    std::vector<double> cross;
  };

  [[nodiscard]] const Tile& tile(std::uint32_t tile_row, std::uint32_t tile_col) const {
    return tiles_[(tile_row - first_tile_row_) * tile_cols_ + tile_col];
  }

  std::uint32_t up_layer_;
  std::uint32_t n_up_;
  std::uint32_t n_down_;
  BinarizationRule rule_;
  std::uint32_t edge_;
  RowRange rows_;
  std::uint32_t first_tile_row_ = 0;
  std::uint32_t tile_cols_ = 0;
  std::uint64_t n_tokens_ = 0;

  std::vector<std::uint64_t> up_count_;
  std::vector<double> up_sum_;
  std::vector<double> up_sumsq_;
  std::vector<std::uint64_t> down_count_;
  std::vector<double> down_sum_;
  std::vector<double> down_sumsq_;
  std::vector<Tile> tiles_;

  // Per-token scratch.
  std::vector<std::uint32_t> scratch_col_;
  std::vector<std::uint32_t> scratch_local_;
};

template <typename Fn>
void PairStatsAccumulator::visit_row(std::uint32_t i, Fn&& fn) const {
  const std::uint32_t tr = i / edge_;
  const std::uint32_t li = i - tr * edge_;
  for (std::uint32_t tc = 0; tc < tile_cols_; ++tc) {
    const Tile& t = tile(tr, tc);
    const std::size_t base = std::size_t{li} * t.width;
    const std::uint32_t j0 = tc * edge_;
    for (std::uint32_t lj = 0; lj < t.width; ++lj) fn(j0 + lj, t.co[base + lj], t.cross[base + lj]);
  }
}

/// Accumulators for every adjacent layer pair of a dataset, fed one frame at
/// a time so each layer is binarized once.
class StackAccumulator {
 public:
  StackAccumulator(std::uint32_t n_layers, std::uint32_t n_features, BinarizationRule rule,
                   std::uint32_t tile_edge = kDefaultTileEdge,
                   std::optional<RowRange> rows = std::nullopt);

  void accumulate(const TokenFrame& frame, const MaxActivationTable& table);
  void merge(const StackAccumulator& other);

  [[nodiscard]] std::span<const PairStatsAccumulator> pairs() const { return pairs_; }
  [[nodiscard]] const PairStatsAccumulator& pair(std::uint32_t up_layer) const {
    return pairs_.at(up_layer);
  }

 private:
  std::uint32_t n_layers_;
  std::uint32_t n_features_;
  BinarizationRule rule_;
  std::vector<PairStatsAccumulator> pairs_;
  std::vector<std::vector<std::uint8_t>> active_;
};

struct FinalizeOptions {
  std::optional<std::uint64_t> min_co = 10;
  UncenteredMode uncentered_mode = UncenteredMode::kNormalized;
};

/// Finalizes one measure over the accumulator's covered rows. Decoder cosine
/// is not a streaming measure and is rejected.
[[nodiscard]] SimilarityMatrix finalize(const PairStatsAccumulator& acc, Measure measure,
                                        const FinalizeOptions& options = {});

[[nodiscard]] SimilarityMatrix finalize_pearson(const PairStatsAccumulator& acc,
                                                std::optional<std::uint64_t> min_co = 10);
[[nodiscard]] SimilarityMatrix finalize_jaccard(const PairStatsAccumulator& acc,
                                                std::optional<std::uint64_t> min_co = 10);
[[nodiscard]] SimilarityMatrix finalize_sufficiency(const PairStatsAccumulator& acc,
                                                    std::optional<std::uint64_t> min_co = 10);
[[nodiscard]] SimilarityMatrix finalize_necessity(const PairStatsAccumulator& acc,
                                                  std::optional<std::uint64_t> min_co = 10);
[[nodiscard]] SimilarityMatrix finalize_uncentered(
    const PairStatsAccumulator& acc, std::optional<std::uint64_t> min_co = 10,
    UncenteredMode mode = UncenteredMode::kNormalized);

struct CoActivationStats {
  std::uint64_t at_or_below = 0;  // pairs with c <= threshold
  std::uint64_t total_pairs = 0;
  [[nodiscard]] double fraction() const {
    return total_pairs == 0 ? 0.0 : static_cast<double>(at_or_below) / static_cast<double>(total_pairs);
  }
  void add(const CoActivationStats& other) {
    at_or_below += other.at_or_below;
    total_pairs += other.total_pairs;
  }
};

/// Fraction of the accumulator's covered pairs that co-activated at most
/// `never_threshold` times.
[[nodiscard]] CoActivationStats co_activation_stats(const PairStatsAccumulator& acc,
                                                    std::uint64_t never_threshold = 10);

// --- whole-dataset driver ---------------------------------------------------

struct ComputeOptions {
  std::vector<Measure> measures{Measure::kPearson, Measure::kJaccard, Measure::kSufficiency,
                                Measure::kNecessity};
  BinarizationRule rule;
  FinalizeOptions finalize;
  /// Applied after finalization; nullopt keeps raw matrices.
  std::optional<double> floor = 0.1;
  std::uint32_t tile_edge = kDefaultTileEdge;
  /// Budget for per-pair state summed over workers; the upstream rows are
  /// split into as many stream passes as needed.
  std::size_t memory_budget = std::size_t{4} << 30;
  unsigned workers = 1;
  std::uint64_t never_threshold = 10;
  std::function<void(const std::string&)> progress;
};

struct ComputeResult {
  /// matrices[m][k]: measure options.measures[m], layer pair (k, k+1).
  std::vector<std::vector<SimilarityMatrix>> matrices;
  std::vector<CoActivationStats> co_stats;  // per layer pair
  std::uint32_t passes = 0;
  std::uint32_t rows_per_pass = 0;
};

/// Rows of upstream features per pass for the given budget, a multiple of the
/// tile edge (at least one tile row).
[[nodiscard]] std::uint32_t plan_rows_per_pass(std::uint32_t n_layers, std::uint32_t n_features,
                                               std::uint32_t tile_edge, std::size_t memory_budget,
                                               unsigned workers);

[[nodiscard]] ComputeResult compute_similarities(const DatasetManifest& manifest,
                                                 const MaxActivationTable& table,
                                                 const ComputeOptions& options);

}  // namespace saegraph
