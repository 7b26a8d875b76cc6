#pragma once

// SAE linear algebra: encoding, decoding, reconstruction error, projection of
// the error onto a decoder direction, and decoder-weight cosine similarity.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "saegraph/similarity_matrix.hpp"

namespace saegraph {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Weights of one layer's SAE. Decoder rows are feature directions.
struct SaeWeights {
  std::uint32_t layer = 0;
  RowMatrix w_enc;        // d x F
  Eigen::VectorXd b_enc;  // F
  RowMatrix w_dec;        // F x d
  Eigen::VectorXd b_dec;  // d

  [[nodiscard]] std::uint32_t d() const { return static_cast<std::uint32_t>(w_enc.rows()); }
  [[nodiscard]] std::uint32_t n_features() const { return static_cast<std::uint32_t>(w_enc.cols()); }

  /// Throws DimensionError for inconsistent shapes and FormatError for a
  /// zero-norm decoder row or non-finite values.
  void validate() const;

  // Container: "SAEW" | u32 version | u32 header length | JSON header
  // {"layer", "d", "F"} | f32 little-endian blobs W_enc (d x F), b_enc (F),
  // W_dec (F x d), b_dec (d), row-major.
  static SaeWeights load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

enum class EncodeMode { kRelu, kLinear };

/// a = relu(x W_enc + b_enc), or without the relu in linear mode.
[[nodiscard]] Eigen::VectorXd encode(const Eigen::VectorXd& x, const SaeWeights& sae,
                                     EncodeMode mode = EncodeMode::kRelu);
/// x_hat = a W_dec + b_dec.
[[nodiscard]] Eigen::VectorXd decode(const Eigen::VectorXd& a, const SaeWeights& sae);
/// x - decode(encode(x)).
[[nodiscard]] Eigen::VectorXd recon_error(const Eigen::VectorXd& x, const SaeWeights& sae,
                                          EncodeMode mode = EncodeMode::kRelu);
/// eps . (W_dec[i] / |W_dec[i]|).
[[nodiscard]] double project_error(const Eigen::VectorXd& eps, const SaeWeights& sae_prev,
                                   std::uint32_t feature);

/// Cosine between every decoder row of `up` and every decoder row of `down`.
/// Entries with |cos| < floor are dropped (floor 0 keeps all F x F entries).
[[nodiscard]] SimilarityMatrix decoder_cosine(const SaeWeights& up, const SaeWeights& down,
                                              double floor = 0.0);

/// Minimum pairwise decoder cosine within a set of features of one layer.
[[nodiscard]] double intra_layer_cosine(const SaeWeights& sae, std::span<const std::uint32_t> features);

// --- residual streams -------------------------------------------------------

struct ResidualFrame {
  std::uint64_t position = 0;
  Eigen::VectorXd x;
};

// Residual stream file: "SAER" | u32 version | u32 layer | u32 d | u64 token
// count, then per token u64 position followed by d f32 values.
class ResidualWriter {
 public:
  ResidualWriter(const std::filesystem::path& path, std::uint32_t layer, std::uint32_t d);
  ~ResidualWriter();
  ResidualWriter(const ResidualWriter&) = delete;
  ResidualWriter& operator=(const ResidualWriter&) = delete;

  void write(const ResidualFrame& frame);
  void close();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::uint32_t d_;
  std::uint64_t n_tokens_ = 0;
  bool closed_ = false;
};

class ResidualReader {
 public:
  explicit ResidualReader(const std::filesystem::path& path);

  [[nodiscard]] std::uint32_t layer() const { return layer_; }
  [[nodiscard]] std::uint32_t d() const { return d_; }
  [[nodiscard]] std::uint64_t n_tokens() const { return n_tokens_; }
  bool next(ResidualFrame& frame);

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::uint32_t layer_ = 0;
  std::uint32_t d_ = 0;
  std::uint64_t n_tokens_ = 0;
  std::uint64_t read_ = 0;
  std::vector<char> raw_;
};

}  // namespace saegraph
