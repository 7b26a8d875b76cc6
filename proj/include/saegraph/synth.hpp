#pragma once

// Synthetic activation datasets with planted ground-truth structure:
// pass-through chains, AND/OR gates and community blocks over a sparse
// independent background.
//
// Every nonzero synthetic activation is drawn from scale * U[min_rel, 1], with
// a fixed per-feature scale. Since the observed maximum never exceeds the
// scale, every firing is binarize-active for any theta <= min_rel, so "fires"
// and "active" coincide for the default theta of 0.2.

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include <json.hpp>

#include "saegraph/activation_store.hpp"

namespace saegraph {

/// One feature per layer starting at start_layer; each member copies its
/// parent's activation plus N(0, sigma) noise.
struct ChainMotif {
  std::uint32_t start_layer = 0;
  std::vector<std::uint32_t> indices;
  double sigma = 0.0;
  double fire_p = 0.05;
};

/// Two parents in `layer`, child in layer + 1.
struct GateMotif {
  std::uint32_t layer = 0;
  std::array<std::uint32_t, 2> parents{};
  std::uint32_t child = 0;
  double parent_p = 0.1;
};

/// Members fire (each with member_p) whenever a shared latent fires.
struct CommunityMotif {
  std::vector<FeatureId> members;
  double latent_p = 0.02;
  double member_p = 0.9;
};

struct SynthSpec {
  std::uint32_t n_layers = 2;
  std::uint32_t n_features = 64;
  std::uint64_t n_tokens = 1000;
  double background_p = 0.01;
  double min_rel = 0.5;
  double scale_lo = 1.0;
  double scale_hi = 10.0;
  std::vector<ChainMotif> chains;
  std::vector<GateMotif> and_gates;
  std::vector<GateMotif> or_gates;
  std::vector<CommunityMotif> communities;
  std::uint64_t seed = 0;
  std::uint64_t tokens_per_shard = 1u << 20;

  /// Throws ConfigError on bad dimensions, probabilities outside (0, 1), or
  /// overlapping motif features.
  void validate() const;

  [[nodiscard]] nlohmann::json to_json() const;
  static SynthSpec from_json(const nlohmann::json& doc);
};

/// Counts of motifs to place automatically on disjoint random features.
struct PlantRequest {
  std::uint32_t chains = 0;
  double chain_sigma = 0.0;
  double chain_fire_p = 0.05;
  std::uint32_t and_gates = 0;
  std::uint32_t or_gates = 0;
  double gate_parent_p = 0.1;
  std::uint32_t communities = 0;
  std::uint32_t community_width = 2;  // members per layer
  double community_latent_p = 0.02;
};

/// Fills the motif lists of `spec` with disjoint features chosen from the
/// spec's seed. Chains span every layer; gates cycle over the layer pairs;
/// communities span every layer.
void plant_motifs(SynthSpec& spec, const PlantRequest& request);

/// Deterministic frame source for a spec, independent of any files.
class SynthStream {
 public:
  explicit SynthStream(SynthSpec spec);

  bool next(TokenFrame& frame);
  [[nodiscard]] const SynthSpec& spec() const { return spec_; }
  /// Per-feature magnitude scale (upper bound on the feature's activation).
  [[nodiscard]] float scale(FeatureId id) const {
    return scales_[std::size_t{id.layer} * spec_.n_features + id.index];
  }

 private:
  float draw_magnitude(std::uint32_t layer, std::uint32_t index);

  SynthSpec spec_;
  std::mt19937_64 rng_;
  std::vector<float> scales_;
  std::vector<std::uint8_t> is_motif_;
  std::vector<std::vector<SparseActivation>> layers_;
  std::uint64_t position_ = 0;
};

[[nodiscard]] nlohmann::json ground_truth(const SynthSpec& spec);

struct SynthOutput {
  DatasetManifest manifest;
  std::filesystem::path manifest_path;
  std::filesystem::path ground_truth_path;
};

/// Writes shards, manifest.json and ground_truth.json into out_dir.
SynthOutput synth_generate(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace saegraph
