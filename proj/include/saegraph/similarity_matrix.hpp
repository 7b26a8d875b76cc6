#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "saegraph/common.hpp"

namespace saegraph {

struct SimilarityEntry {
  std::uint32_t up = 0;
  std::uint32_t down = 0;
  double value = 0.0;

  bool operator==(const SimilarityEntry&) const = default;
};

/// How the uncentered measure is normalized: sum(xy) / sqrt(sum(x^2) sum(y^2)),
/// or the literal mean product sum(xy) / N.
enum class UncenteredMode : std::uint32_t { kNormalized = 0, kMeanProduct = 1 };

struct MatrixMeta {
  Measure measure = Measure::kPearson;
  std::uint32_t up_layer = 0;  // downstream layer is up_layer + 1
  std::uint32_t n_up = 0;
  std::uint32_t n_down = 0;
  /// Pairs with at most this many co-activations are absent. nullopt: no
  /// co-activation rule (static measures, or explicitly disabled).
  std::optional<std::uint64_t> min_co;
  double floor = 0.0;  // sparsification floor applied so far
  UncenteredMode uncentered_mode = UncenteredMode::kNormalized;
  // Why pairs are absent.
  std::uint64_t invalid_co = 0;          // co-activation count <= min_co
  std::uint64_t invalid_degenerate = 0;  // zero variance or zero denominator
  std::uint64_t below_floor = 0;         // removed by sparsify

  bool operator==(const MatrixMeta&) const = default;
};

/// Finalized sparse similarity values for one measure and adjacent layer pair.
/// Entries are sorted by (up, down); a pair without an entry is absent.
class SimilarityMatrix {
 public:
  SimilarityMatrix() = default;
  /// Entries must be sorted by (up, down), unique and in range.
  SimilarityMatrix(MatrixMeta meta, std::vector<SimilarityEntry> entries);

  [[nodiscard]] const MatrixMeta& meta() const { return meta_; }
  [[nodiscard]] MatrixMeta& mutable_meta() { return meta_; }
  [[nodiscard]] std::span<const SimilarityEntry> entries() const { return entries_; }
  [[nodiscard]] std::size_t size() const { return entries_.size(); }
  [[nodiscard]] std::uint64_t total_pairs() const {
    return std::uint64_t{meta_.n_up} * meta_.n_down;
  }

  [[nodiscard]] std::optional<double> at(std::uint32_t up, std::uint32_t down) const;
  [[nodiscard]] std::span<const SimilarityEntry> row(std::uint32_t up) const;

  /// Appends entries for rows strictly after the current last row, summing the
  /// absence counters. Used to assemble multi-pass results.
  void append_rows(const SimilarityMatrix& rows);

  void save(const std::filesystem::path& path) const;
  static SimilarityMatrix load(const std::filesystem::path& path);
  /// "up,down,value" with full precision.
  void save_csv(const std::filesystem::path& path) const;

  bool operator==(const SimilarityMatrix&) const = default;

 private:
  void build_row_index();

  MatrixMeta meta_;
  std::vector<SimilarityEntry> entries_;
  std::vector<std::uint32_t> row_offsets_;
};

/// Drops entries with |value| < floor (strict, so a value equal to the floor
/// survives). floor 0 is the identity.
[[nodiscard]] SimilarityMatrix sparsify(const SimilarityMatrix& matrix, double floor = 0.1);

struct Histogram {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<std::uint64_t> counts;
  std::uint64_t absent = 0;

  [[nodiscard]] nlohmann::json to_json() const;
};

/// Equal-width bins over the measure's range; the top edge falls in the last
/// bin. Absent pairs are counted separately. Throws ConfigError for 0 bins.
[[nodiscard]] Histogram similarity_histogram(const SimilarityMatrix& matrix, std::size_t bins);

struct MatrixComparison {
  std::uint64_t both_present = 0;
  std::uint64_t only_first = 0;   // present in the first, absent in the second
  std::uint64_t only_second = 0;  // absent in the first, present in the second
  std::uint64_t both_absent = 0;
  double absent_agreement = 1.0;  // (both_present + both_absent) / total
  double mean_abs_diff = 0.0;     // over jointly present entries
  double max_abs_diff = 0.0;
  Histogram difference;           // |m1 - m2| over jointly present entries

  [[nodiscard]] nlohmann::json to_json() const;
};

/// Throws DimensionError unless both matrices share measure, layer pair and
/// dimensions.
[[nodiscard]] MatrixComparison compare_matrices(const SimilarityMatrix& first,
                                                const SimilarityMatrix& second,
                                                std::size_t diff_bins = 50);

}  // namespace saegraph
