#pragma once

// Motif analyses over finalized similarity matrices: pass-through
// classification, threshold curves, threshold calibration, logic gates,
// disappearing-feature error projection and ablation-effect binning.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "saegraph/activation_store.hpp"
#include "saegraph/saemath.hpp"
#include "saegraph/similarity_matrix.hpp"

namespace saegraph {

// --- classification ------------------------------------------------------------

enum class ForwardClass { kPassedThrough, kDisappearing, kLastLayer };
enum class BackwardClass { kContinued, kAppearing, kFirstLayer };

[[nodiscard]] std::string_view forward_class_name(ForwardClass c);
[[nodiscard]] std::string_view backward_class_name(BackwardClass c);
[[nodiscard]] ForwardClass parse_forward_class(std::string_view name);
[[nodiscard]] BackwardClass parse_backward_class(std::string_view name);

struct Neighbor {
  FeatureId id;
  double value = 0.0;

  bool operator==(const Neighbor&) const = default;
};

struct FeatureClassification {
  FeatureId id;
  ForwardClass forward = ForwardClass::kDisappearing;
  BackwardClass backward = BackwardClass::kAppearing;
  std::optional<Neighbor> best_next;
  std::optional<Neighbor> best_prev;
};

struct LayerClassCounts {
  std::uint32_t layer = 0;
  std::uint64_t passed_through = 0;
  std::uint64_t disappearing = 0;
  std::uint64_t continued = 0;
  std::uint64_t appearing = 0;
};

struct ClassificationReport {
  Measure measure = Measure::kPearson;
  double threshold = 0.95;
  std::uint32_t n_layers = 0;
  std::uint32_t n_features = 0;
  std::vector<LayerClassCounts> layers;
  std::vector<FeatureClassification> features;  // layer-major

  [[nodiscard]] const FeatureClassification& at(FeatureId id) const;
  [[nodiscard]] nlohmann::json to_json(bool include_features = true) const;
  /// Reads a document written with features included.
  static ClassificationReport from_json(const nlohmann::json& doc);
  /// Plain-text per-layer count table.
  [[nodiscard]] std::string table() const;
};

/// matrices[k] covers layers (k, k + 1). A feature passes through when its
/// best next-layer value is >= threshold; absent entries count as below.
[[nodiscard]] ClassificationReport classify_features(std::span<const SimilarityMatrix> matrices, double threshold);

// --- threshold curves ------------------------------------------------------------

struct CurvePoint {
  double threshold = 0.0;
  /// counts[n] = number of upstream features with exactly n downstream
  /// neighbors at value >= threshold.
  std::vector<std::uint64_t> counts;
  std::uint64_t with_any = 0;
  double mean = 0.0;
};

[[nodiscard]] std::vector<CurvePoint> neighbor_threshold_curve(const SimilarityMatrix& matrix,
                                                               std::span<const double> thresholds);
[[nodiscard]] nlohmann::json curve_json(const std::vector<CurvePoint>& curve);

// --- threshold calibration ---------------------------------------------------------

struct PairSample {
  FeatureId up;
  FeatureId down;
  double value = 0.0;
  std::string up_explanation;
  std::string down_explanation;
};

/// Returns true when the two features are judged equivalent.
using PairJudge = std::function<bool(const PairSample&)>;

struct CalibrationConfig {
  double lo = 0.0;
  double hi = 1.0;
  double start = 0.5;
  /// Search stops once hi - lo <= width.
  double width = 0.02;
  std::uint32_t pairs_per_probe = 5;
  /// Pairs are drawn from [t, t + min(window, (hi - lo) / 2)).
  double window = 0.05;
  /// Fraction of sampled pairs that must be judged equivalent for the probe
  /// threshold to count as high enough.
  double agree_fraction = 1.0;
  std::uint32_t max_probes = 32;
  std::uint64_t seed = 0;

  void validate() const;
};

struct CalibrationProbe {
  double threshold = 0.0;
  std::uint32_t n_pairs = 0;
  std::uint32_t n_equivalent = 0;
  bool skipped = false;
  bool high_enough = false;
};

struct CalibrationResult {
  double lo = 0.0;
  double hi = 1.0;
  bool converged = false;
  std::vector<CalibrationProbe> probes;

  [[nodiscard]] nlohmann::json to_json() const;
};

/// Binary search for the lowest threshold at which pairs are still judged
/// equivalent. A probe with no pairs in [t, hi) is skipped; since it admits
/// the same pairs as hi, the upper bound moves down to t.
[[nodiscard]] CalibrationResult calibrate_threshold(const SimilarityMatrix& matrix,
                                                    const std::map<FeatureId, std::string>& explanations,
                                                    const PairJudge& judge, const CalibrationConfig& config = {});

/// Interactive judge: shows the pair on `out`, reads y/n from `in`.
[[nodiscard]] PairJudge terminal_judge(std::istream& in, std::ostream& out);

// --- logic gates ---------------------------------------------------------------------

struct GateConfig {
  double min_sim = 0.999;
  std::uint32_t min_arity = 2;
  std::uint32_t max_arity = 2;
  /// Allows Pearson/Jaccard/uncentered matrices for comparison runs.
  bool allow_any_measure = false;

  void validate() const;
};

struct GateCandidate {
  FeatureId child;
  std::vector<FeatureId> parents;  // sorted
  Measure measure = Measure::kNecessity;
  double min_similarity = 0.0;
  std::string kind;  // "AND", "OR" or "none"

  bool operator==(const GateCandidate&) const = default;
};

[[nodiscard]] std::vector<GateCandidate> find_gates(const SimilarityMatrix& matrix, const GateConfig& config = {});
[[nodiscard]] nlohmann::json gates_json(const std::vector<GateCandidate>& gates);

// --- disappearing features ----------------------------------------------------------------

struct ProjectionConfig {
  double necessity_max = 0.4;
  double act_min_frac = 0.001;
  double fire_frac = 0.1;
  /// When set, these layer-k indices are studied instead of the
  /// necessity-based selection.
  std::optional<std::vector<std::uint32_t>> features;
};

struct DisappearanceSample {
  FeatureId feature;
  std::uint64_t position = 0;
  double activation = 0.0;
  double projection = 0.0;
};

struct FeatureSlope {
  FeatureId feature;
  std::uint64_t n_fit = 0;
  std::optional<double> slope;  // OLS through the origin
};

struct ProjectionResult {
  std::vector<std::uint32_t> selected;
  std::vector<DisappearanceSample> samples;
  std::vector<FeatureSlope> slopes;

  [[nodiscard]] nlohmann::json to_json() const;
};

/// Layer-k features whose necessity with every next-layer feature is below
/// necessity_max (absent entries count as below).
[[nodiscard]] std::vector<std::uint32_t> select_disappearing(const SimilarityMatrix& necessity,
                                                             double necessity_max);

/// Streams the dataset and the layer k + 1 residual file in lockstep. Samples
/// keep tokens with activation >= act_min_frac * max; the slope is fitted on
/// tokens with activation >= fire_frac * max.
[[nodiscard]] ProjectionResult disappearance_projection(const DatasetManifest& manifest,
                                                        const MaxActivationTable& table,
                                                        const std::filesystem::path& next_residuals,
                                                        const SaeWeights& sae_k, const SaeWeights& sae_next,
                                                        const SimilarityMatrix& necessity,
                                                        const ProjectionConfig& config = {});

// --- ablation -------------------------------------------------------------------------------

struct AblationRecord {
  Measure measure = Measure::kPearson;
  std::uint32_t layer = 0;  // upstream layer
  std::uint32_t up = 0;
  std::uint32_t down = 0;
  double similarity = 0.0;
  double effect = 0.0;

  bool operator==(const AblationRecord&) const = default;
};

/// CSV with header `measure,layer,up,down,similarity,effect`.
[[nodiscard]] std::vector<AblationRecord> load_ablation_records(const std::filesystem::path& path);
void save_ablation_records(const std::filesystem::path& path, std::span<const AblationRecord> records);

struct BinSummary {
  double lo = 0.0;
  double hi = 0.0;
  std::uint64_t count = 0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double whisker_lo = 0.0;  // most extreme values within 1.5 IQR
  double whisker_hi = 0.0;
  std::uint64_t outliers = 0;
};

struct AblationSummary {
  Measure measure = Measure::kPearson;
  std::vector<BinSummary> bins;

  [[nodiscard]] nlohmann::json to_json() const;
};

/// Equal-width bins over the measure's range. A value on an inner boundary
/// goes to the upper bin; the range maximum goes to the last bin.
[[nodiscard]] std::size_t similarity_bin(Measure measure, double value, std::size_t n_bins);
[[nodiscard]] AblationSummary ablation_bins(std::span<const AblationRecord> records, std::size_t n_bins = 10);

}  // namespace saegraph
