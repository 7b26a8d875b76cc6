#pragma once

// Shared fixtures for the test suites: scratch directories, random frame
// generators and brute-force reference computations.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "saegraph/activation_store.hpp"

namespace saegraph::testing {

/// Unique scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  [[nodiscard]] std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Random sparse frames: each feature fires with probability p, magnitude
/// uniform in (0, max_value].
std::vector<TokenFrame> random_frames(std::mt19937_64& rng, std::uint32_t n_layers,
                                      std::uint32_t n_features, std::size_t n_tokens, double p,
                                      float max_value = 5.0f);

/// Writes frames to one or more shards and returns the manifest.
DatasetManifest write_dataset(const std::filesystem::path& dir, const std::vector<TokenFrame>& frames,
                              std::uint32_t n_layers, std::uint32_t n_features,
                              std::size_t tokens_per_shard);

/// Dense value matrix [token][feature] for one layer.
std::vector<std::vector<double>> dense_layer(const std::vector<TokenFrame>& frames, std::uint32_t layer,
                                             std::uint32_t n_features);

/// Reference measures computed straight from the definitions on dense data:
/// two-pass centered Pearson, set-based count measures.
struct DenseOracle {
  std::vector<std::vector<double>> x;   // [token][up feature]
  std::vector<std::vector<double>> y;   // [token][down feature]
  std::vector<std::vector<bool>> ax;    // binarized
  std::vector<std::vector<bool>> ay;

  DenseOracle(const std::vector<TokenFrame>& frames, const MaxActivationTable& table,
              std::uint32_t up_layer, double theta);

  [[nodiscard]] std::uint64_t co(std::uint32_t i, std::uint32_t j) const;
  [[nodiscard]] std::uint64_t count_up(std::uint32_t i) const;
  [[nodiscard]] std::uint64_t count_down(std::uint32_t j) const;
  [[nodiscard]] std::optional<double> pearson(std::uint32_t i, std::uint32_t j) const;
  [[nodiscard]] std::optional<double> jaccard(std::uint32_t i, std::uint32_t j) const;
  [[nodiscard]] std::optional<double> sufficiency(std::uint32_t i, std::uint32_t j) const;
  [[nodiscard]] std::optional<double> necessity(std::uint32_t i, std::uint32_t j) const;
  [[nodiscard]] std::optional<double> uncentered(std::uint32_t i, std::uint32_t j) const;
};

}  // namespace saegraph::testing

namespace saegraph::testing {

/// Adjusted Rand index between two labelings of the same items.
double adjusted_rand_index(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b);

}  // namespace saegraph::testing
