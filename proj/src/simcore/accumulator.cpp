#include <algorithm>

#include "saegraph/simcore.hpp"

namespace saegraph {

PairStatsAccumulator::PairStatsAccumulator(std::uint32_t up_layer, std::uint32_t n_up,
                                           std::uint32_t n_down, BinarizationRule rule,
                                           std::uint32_t tile_edge, std::optional<RowRange> rows)
    : up_layer_(up_layer),
      n_up_(n_up),
      n_down_(n_down),
      rule_(rule),
      edge_(tile_edge),
      rows_(rows.value_or(RowRange{0, n_up})),
      up_count_(n_up, 0),
      up_sum_(n_up, 0.0),
      up_sumsq_(n_up, 0.0),
      down_count_(n_down, 0),
      down_sum_(n_down, 0.0),
      down_sumsq_(n_down, 0.0) {
  if (tile_edge == 0) throw ConfigError("tile edge must be positive");
  if (rows_.begin > rows_.end || rows_.end > n_up) throw ConfigError("row range outside the layer");
  if (rows_.begin % edge_ != 0) throw ConfigError("row range must start on a tile boundary");
  first_tile_row_ = rows_.begin / edge_;
  tile_cols_ = (n_down + edge_ - 1) / edge_;
  const std::uint32_t last_tile_row = (rows_.end + edge_ - 1) / edge_;
  for (std::uint32_t tr = first_tile_row_; tr < last_tile_row; ++tr) {
    const std::uint32_t height = std::min(rows_.end, (tr + 1) * edge_) - tr * edge_;
    for (std::uint32_t tc = 0; tc < tile_cols_; ++tc) {
      Tile t;
      t.width = std::min(n_down, (tc + 1) * edge_) - tc * edge_;
      t.co.assign(std::size_t{height} * t.width, 0);
      t.cross.assign(std::size_t{height} * t.width, 0.0);
      tiles_.push_back(std::move(t));
    }
  }
}

void PairStatsAccumulator::accumulate(const TokenFrame& frame, const MaxActivationTable& table,
                                      const BinarizationRule& rule) {
  if (rule.theta != rule_.theta) throw ConfigError("binarization rule differs from the accumulator's");
  if (frame.n_layers() <= up_layer_ + 1 || table.n_layers() <= up_layer_ + 1) {
    throw DimensionError("frame does not carry layer " + std::to_string(up_layer_ + 1));
  }
  const auto flags = [&](std::uint32_t k) {
    const auto acts = frame.layer(k);
    const auto maxima = table.layer(k);
    std::vector<std::uint8_t> out(acts.size());
    for (std::size_t e = 0; e < acts.size(); ++e) {
      out[e] = is_active(acts[e].value, maxima[acts[e].index], rule_.theta) ? 1 : 0;
    }
    return out;
  };
  const auto up_active = flags(up_layer_);
  const auto down_active = flags(up_layer_ + 1);
  add_token(frame.layer(up_layer_), up_active, frame.layer(up_layer_ + 1), down_active);
}

void PairStatsAccumulator::add_token(std::span<const SparseActivation> up,
                                     std::span<const std::uint8_t> up_active,
                                     std::span<const SparseActivation> down,
                                     std::span<const std::uint8_t> down_active) {
  ++n_tokens_;
  for (std::size_t e = 0; e < up.size(); ++e) {
    const double x = up[e].value;
    up_count_[up[e].index] += up_active[e];
    up_sum_[up[e].index] += x;
    up_sumsq_[up[e].index] += x * x;
  }
  scratch_col_.resize(down.size());
  scratch_local_.resize(down.size());
  for (std::size_t e = 0; e < down.size(); ++e) {
    const double y = down[e].value;
    const std::uint32_t j = down[e].index;
    down_count_[j] += down_active[e];
    down_sum_[j] += y;
    down_sumsq_[j] += y * y;
    scratch_col_[e] = j / edge_;
    scratch_local_[e] = j - scratch_col_[e] * edge_;
  }
  if (down.empty()) return;

  // Activation lists are sorted, so only the slice inside the row range matters.
  const auto lo = std::lower_bound(up.begin(), up.end(), rows_.begin,
                                   [](const SparseActivation& a, std::uint32_t v) { return a.index < v; });
  for (auto it = lo; it != up.end() && it->index < rows_.end; ++it) {
    const auto e = static_cast<std::size_t>(it - up.begin());
    const std::uint32_t i = it->index;
    const std::uint32_t tr = i / edge_;
    const std::size_t li = i - tr * edge_;
    Tile* row_tiles = tiles_.data() + std::size_t{tr - first_tile_row_} * tile_cols_;
    const double x = it->value;
    if (up_active[e]) {
      for (std::size_t d = 0; d < down.size(); ++d) {
        Tile& t = row_tiles[scratch_col_[d]];
        const std::size_t k = li * t.width + scratch_local_[d];
        t.cross[k] += x * static_cast<double>(down[d].value);
        t.co[k] += down_active[d];
      }
    } else {
      for (std::size_t d = 0; d < down.size(); ++d) {
        Tile& t = row_tiles[scratch_col_[d]];
        t.cross[li * t.width + scratch_local_[d]] += x * static_cast<double>(down[d].value);
      }
    }
  }
}

void PairStatsAccumulator::merge(const PairStatsAccumulator& other) {
  if (other.up_layer_ != up_layer_ || other.n_up_ != n_up_ || other.n_down_ != n_down_ ||
      other.edge_ != edge_ || other.rows_ != rows_) {
    throw DimensionError("cannot merge accumulators of different layer pairs, shapes or row ranges");
  }
  if (other.rule_.theta != rule_.theta) {
    throw DimensionError("cannot merge accumulators with different binarization rules");
  }
  n_tokens_ += other.n_tokens_;
  const auto add = [](auto& dst, const auto& src) {
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  };
  add(up_count_, other.up_count_);
  add(up_sum_, other.up_sum_);
  add(up_sumsq_, other.up_sumsq_);
  add(down_count_, other.down_count_);
  add(down_sum_, other.down_sum_);
  add(down_sumsq_, other.down_sumsq_);
  for (std::size_t t = 0; t < tiles_.size(); ++t) {
    add(tiles_[t].co, other.tiles_[t].co);
    add(tiles_[t].cross, other.tiles_[t].cross);
  }
}

std::uint64_t PairStatsAccumulator::co_count(std::uint32_t i, std::uint32_t j) const {
  if (i < rows_.begin || i >= rows_.end || j >= n_down_) throw DimensionError("pair outside the accumulator");
  const Tile& t = tile(i / edge_, j / edge_);
  return t.co[std::size_t{i % edge_} * t.width + j % edge_];
}

double PairStatsAccumulator::cross_sum(std::uint32_t i, std::uint32_t j) const {
  if (i < rows_.begin || i >= rows_.end || j >= n_down_) throw DimensionError("pair outside the accumulator");
  const Tile& t = tile(i / edge_, j / edge_);
  return t.cross[std::size_t{i % edge_} * t.width + j % edge_];
}

std::size_t PairStatsAccumulator::pair_state_bytes() const {
  std::size_t bytes = 0;
  for (const auto& t : tiles_) bytes += t.co.size() * sizeof(std::uint64_t) + t.cross.size() * sizeof(double);
  return bytes;
}

void PairStatsAccumulator::for_each_pair(
    const std::function<void(std::uint32_t, std::uint32_t, std::uint64_t, double)>& fn) const {
  for (std::uint32_t i = rows_.begin; i < rows_.end; ++i) {
    visit_row(i, [&](std::uint32_t j, std::uint64_t c, double s) { fn(i, j, c, s); });
  }
}

// --- whole stack --------------------------------------------------------------

StackAccumulator::StackAccumulator(std::uint32_t n_layers, std::uint32_t n_features,
                                   BinarizationRule rule, std::uint32_t tile_edge,
                                   std::optional<RowRange> rows)
    : n_layers_(n_layers), n_features_(n_features), rule_(rule), active_(n_layers) {
  if (n_layers < 2) throw ConfigError("need at least two layers for pairwise statistics");
  pairs_.reserve(n_layers - 1);
  for (std::uint32_t k = 0; k + 1 < n_layers; ++k) {
    pairs_.emplace_back(k, n_features, n_features, rule, tile_edge, rows);
  }
}

void StackAccumulator::accumulate(const TokenFrame& frame, const MaxActivationTable& table) {
  if (frame.n_layers() != n_layers_ || table.n_layers() != n_layers_ ||
      table.n_features() != n_features_) {
    throw DimensionError("frame or max table does not match the accumulator stack");
  }
  for (std::uint32_t k = 0; k < n_layers_; ++k) {
    const auto acts = frame.layer(k);
    const auto maxima = table.layer(k);
    auto& flags = active_[k];
    flags.resize(acts.size());
    for (std::size_t e = 0; e < acts.size(); ++e) {
      flags[e] = is_active(acts[e].value, maxima[acts[e].index], rule_.theta) ? 1 : 0;
    }
  }
  for (std::uint32_t k = 0; k + 1 < n_layers_; ++k) {
    pairs_[k].add_token(frame.layer(k), active_[k], frame.layer(k + 1), active_[k + 1]);
  }
}

void StackAccumulator::merge(const StackAccumulator& other) {
  if (other.pairs_.size() != pairs_.size()) throw DimensionError("cannot merge stacks of different depth");
  for (std::size_t k = 0; k < pairs_.size(); ++k) pairs_[k].merge(other.pairs_[k]);
}

}  // namespace saegraph
