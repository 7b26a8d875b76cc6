#pragma once

// Token-major sparse activation shards, dataset manifests, the per-feature
// maximum scan and relative binarization.
//
// Shard layout (little-endian):
//   "SAEA" | u32 version | u32 n_layers | u32 n_features | u64 n_tokens
//   then per token, per layer: u32 count, count x (u32 index, f32 value)

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "saegraph/common.hpp"

namespace saegraph {

inline constexpr std::uint32_t kShardVersion = 1;

struct SparseActivation {
  std::uint32_t index = 0;
  float value = 0.0f;

  bool operator==(const SparseActivation&) const = default;
};

/// Sparse SAE activations of every layer at one token. Indices within a layer
/// are strictly increasing and values strictly positive.
class TokenFrame {
 public:
  TokenFrame() = default;

  static TokenFrame from_layers(std::uint64_t position,
                                const std::vector<std::vector<SparseActivation>>& layers);

  // Incremental construction: reset, then add() entries of layer 0,
  // close_layer(), entries of layer 1, close_layer(), ...
  void reset(std::uint64_t position);
  void add(std::uint32_t index, float value) { entries_.push_back({index, value}); }
  void close_layer() { offsets_.push_back(static_cast<std::uint32_t>(entries_.size())); }

  [[nodiscard]] std::uint64_t position() const { return position_; }
  void set_position(std::uint64_t position) { position_ = position; }
  [[nodiscard]] std::uint32_t n_layers() const {
    return offsets_.empty() ? 0 : static_cast<std::uint32_t>(offsets_.size() - 1);
  }
  [[nodiscard]] std::span<const SparseActivation> layer(std::uint32_t k) const {
    return {entries_.data() + offsets_[k], entries_.data() + offsets_[k + 1]};
  }
  [[nodiscard]] std::size_t total_entries() const { return entries_.size(); }

  /// Checks the frame invariants against the given dimensions.
  void validate(std::uint32_t n_layers, std::uint32_t n_features) const;

  bool operator==(const TokenFrame&) const = default;

 private:
  std::uint64_t position_ = 0;
  std::vector<SparseActivation> entries_;
  std::vector<std::uint32_t> offsets_{0};
};

struct ShardHeader {
  std::uint32_t version = kShardVersion;
  std::uint32_t n_layers = 0;
  std::uint32_t n_features = 0;
  std::uint64_t n_tokens = 0;
};

struct ShardRef {
  std::filesystem::path path;
  std::uint64_t n_tokens = 0;
};

struct DatasetManifest {
  std::uint32_t n_layers = 0;
  std::uint32_t n_features = 0;  // per layer, uniform
  std::uint64_t n_tokens = 0;
  std::vector<ShardRef> shards;
  std::string provenance;

  /// Shard paths in the file are relative to the manifest's directory; they
  /// are resolved on load.
  static DatasetManifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Token-count and dimension invariants, plus every shard header.
  void validate() const;

  [[nodiscard]] bool contains(FeatureId id) const {
    return id.layer < n_layers && id.index < n_features;
  }
};

/// Streams frames into a shard file. The token count in the header is patched
/// on close(). Frames must carry consecutive positions.
class ShardWriter {
 public:
  ShardWriter(const std::filesystem::path& path, std::uint32_t n_layers, std::uint32_t n_features);
  ShardWriter(const ShardWriter&) = delete;
  ShardWriter& operator=(const ShardWriter&) = delete;
  ~ShardWriter();

  void write(const TokenFrame& frame);
  void close();
  [[nodiscard]] std::uint64_t tokens_written() const { return n_tokens_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::uint32_t n_layers_;
  std::uint32_t n_features_;
  std::uint64_t n_tokens_ = 0;
  std::uint64_t next_position_ = 0;
  bool closed_ = false;
};

/// Streaming shard reader; memory use is independent of shard size. The header
/// is validated on construction.
class ShardReader {
 public:
  explicit ShardReader(const std::filesystem::path& path, std::uint64_t base_position = 0);

  [[nodiscard]] const ShardHeader& header() const { return header_; }
  /// Reads the next frame; false at end of shard. Throws FormatError on
  /// truncation or corrupt records.
  bool next(TokenFrame& frame);
  /// Skips one frame without decoding its values.
  bool skip();

  /// Byte offset of the next record, and repositioning to a known record.
  [[nodiscard]] std::uint64_t tell();
  void seek(std::uint64_t byte_offset, std::uint64_t record_index);

 private:
  bool read_record(TokenFrame* frame);

  std::filesystem::path path_;
  std::ifstream in_;
  std::vector<char> buffer_;
  ShardHeader header_;
  std::uint64_t base_position_;
  std::uint64_t read_ = 0;
  std::vector<char> raw_;
};

void write_shard(const std::filesystem::path& path, std::span<const TokenFrame> frames,
                 const DatasetManifest& dims);
/// Reads a whole shard. All-or-nothing: throws before returning any frame if
/// the shard is corrupt anywhere.
[[nodiscard]] std::vector<TokenFrame> read_shard(const std::filesystem::path& path,
                                                 std::uint64_t base_position = 0);
[[nodiscard]] ShardHeader read_shard_header(const std::filesystem::path& path);

/// Sequential reader over a contiguous range of a manifest's shards, assigning
/// global token positions.
class DatasetReader {
 public:
  explicit DatasetReader(const DatasetManifest& manifest);
  DatasetReader(const DatasetManifest& manifest, std::size_t shard_begin, std::size_t shard_end);

  bool next(TokenFrame& frame);

 private:
  void open_current();

  const DatasetManifest* manifest_;
  std::size_t shard_;
  std::size_t shard_end_;
  std::vector<std::uint64_t> base_positions_;
  std::unique_ptr<ShardReader> reader_;
};

/// Reads the frame at a global token position by scanning. Throws
/// ConfigError when the position is out of range.
[[nodiscard]] TokenFrame read_frame_at(const DatasetManifest& manifest, std::uint64_t position);

/// Byte offsets of every token record, for O(1) random access.
class FrameIndex {
 public:
  explicit FrameIndex(DatasetManifest manifest);

  [[nodiscard]] std::uint64_t n_tokens() const { return manifest_.n_tokens; }
  [[nodiscard]] TokenFrame read(std::uint64_t position) const;
  [[nodiscard]] const DatasetManifest& manifest() const { return manifest_; }

 private:
  DatasetManifest manifest_;
  std::vector<std::uint64_t> shard_first_;  // first global position per shard
  std::vector<std::vector<std::uint64_t>> offsets_;
};

/// Per-feature maximum activation over a dataset; 0 for never-firing features.
class MaxActivationTable {
 public:
  MaxActivationTable() = default;
  MaxActivationTable(std::uint32_t n_layers, std::uint32_t n_features);

  [[nodiscard]] std::uint32_t n_layers() const { return n_layers_; }
  [[nodiscard]] std::uint32_t n_features() const { return n_features_; }
  [[nodiscard]] float at(FeatureId id) const { return values_.at(flat(id)); }
  [[nodiscard]] std::span<const float> layer(std::uint32_t k) const {
    return {values_.data() + std::size_t{k} * n_features_, n_features_};
  }

  void observe(const TokenFrame& frame);
  void merge(const MaxActivationTable& other);
  void set(FeatureId id, float value) { values_.at(flat(id)) = value; }

  static MaxActivationTable load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  bool operator==(const MaxActivationTable&) const = default;

 private:
  [[nodiscard]] std::size_t flat(FeatureId id) const {
    return std::size_t{id.layer} * n_features_ + id.index;
  }

  std::uint32_t n_layers_ = 0;
  std::uint32_t n_features_ = 0;
  std::vector<float> values_;
};

/// Exact maximum over all tokens. Shards are split across `workers` threads
/// and merged with a commutative max.
[[nodiscard]] MaxActivationTable scan_max(const DatasetManifest& manifest, unsigned workers = 1);

struct BinarizationRule {
  double theta = 0.2;
};

/// Relative activity test: value / max >= theta (inclusive). Features whose
/// maximum is 0 are never active.
[[nodiscard]] inline bool is_active(float value, float max, double theta) {
  return max > 0.0f && value > 0.0f &&
         static_cast<double>(value) / static_cast<double>(max) >= theta;
}

/// Per-layer active feature indices (ascending).
[[nodiscard]] std::vector<std::vector<std::uint32_t>> binarize(const TokenFrame& frame,
                                                               const MaxActivationTable& table,
                                                               const BinarizationRule& rule);

}  // namespace saegraph
