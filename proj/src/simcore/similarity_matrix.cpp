#include "saegraph/similarity_matrix.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "common/binary_io.hpp"

namespace saegraph {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// "SAEM" | u32 version | u32 measure | u32 up_layer | u32 n_up | u32 n_down |
// u32 flags (bit 0: min_co set, bit 1: mean-product uncentered) | u64 min_co |
// f64 floor | u64 invalid_co | u64 invalid_degenerate | u64 below_floor |
// u64 n_entries, then n_entries x (u32 up, u32 down, f64 value).
constexpr char kMagic[4] = {'S', 'A', 'E', 'M'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 4 * 6 + 8 * 6;
constexpr std::size_t kEntryBytes = 16;

bool entry_less(const SimilarityEntry& a, const SimilarityEntry& b) {
  return a.up != b.up ? a.up < b.up : a.down < b.down;
}

}  // namespace

SimilarityMatrix::SimilarityMatrix(MatrixMeta meta, std::vector<SimilarityEntry> entries)
    : meta_(meta), entries_(std::move(entries)) {
  for (std::size_t k = 0; k < entries_.size(); ++k) {
    const auto& e = entries_[k];
    if (e.up >= meta_.n_up || e.down >= meta_.n_down) {
      throw DimensionError("similarity entry (" + std::to_string(e.up) + ", " +
                           std::to_string(e.down) + ") outside " + std::to_string(meta_.n_up) +
                           " x " + std::to_string(meta_.n_down));
    }
    if (k > 0 && !entry_less(entries_[k - 1], e)) {
      throw FormatError("similarity entries not sorted and unique");
    }
  }
  build_row_index();
}

void SimilarityMatrix::build_row_index() {
  row_offsets_.assign(std::size_t{meta_.n_up} + 1, 0);
  for (const auto& e : entries_) ++row_offsets_[std::size_t{e.up} + 1];
  for (std::size_t i = 1; i < row_offsets_.size(); ++i) row_offsets_[i] += row_offsets_[i - 1];
}

std::optional<double> SimilarityMatrix::at(std::uint32_t up, std::uint32_t down) const {
  const auto r = row(up);
  const auto it = std::lower_bound(r.begin(), r.end(), down,
                                   [](const SimilarityEntry& e, std::uint32_t d) { return e.down < d; });
  if (it != r.end() && it->down == down) return it->value;
  return std::nullopt;
}

std::span<const SimilarityEntry> SimilarityMatrix::row(std::uint32_t up) const {
  if (up >= meta_.n_up) return {};
  return std::span<const SimilarityEntry>(entries_).subspan(row_offsets_[up],
                                                              row_offsets_[up + 1] - row_offsets_[up]);
}

void SimilarityMatrix::append_rows(const SimilarityMatrix& rows) {
  const auto& m = rows.meta_;
  if (m.measure != meta_.measure || m.up_layer != meta_.up_layer || m.n_up != meta_.n_up ||
      m.n_down != meta_.n_down) {
    throw DimensionError("cannot append rows from a different matrix shape");
  }
  if (!entries_.empty() && !rows.entries_.empty() && rows.entries_.front().up <= entries_.back().up) {
    throw FormatError("appended rows must follow the existing rows");
  }
  entries_.insert(entries_.end(), rows.entries_.begin(), rows.entries_.end());
  meta_.invalid_co += m.invalid_co;
  meta_.invalid_degenerate += m.invalid_degenerate;
  meta_.below_floor += m.below_floor;
  build_row_index();
}

void SimilarityMatrix::save(const fs::path& path) const {
  std::vector<char> buf;
  buf.reserve(kHeaderBytes + entries_.size() * kEntryBytes);
  buf.insert(buf.end(), std::begin(kMagic), std::end(kMagic));
  detail::put_le(buf, kVersion);
  detail::put_le(buf, static_cast<std::uint32_t>(meta_.measure));
  detail::put_le(buf, meta_.up_layer);
  detail::put_le(buf, meta_.n_up);
  detail::put_le(buf, meta_.n_down);
  std::uint32_t flags = 0;
  if (meta_.min_co) flags |= 1u;
  if (meta_.uncentered_mode == UncenteredMode::kMeanProduct) flags |= 2u;
  detail::put_le(buf, flags);
  detail::put_le(buf, meta_.min_co.value_or(0));
  detail::put_le(buf, meta_.floor);
  detail::put_le(buf, meta_.invalid_co);
  detail::put_le(buf, meta_.invalid_degenerate);
  detail::put_le(buf, meta_.below_floor);
  detail::put_le(buf, static_cast<std::uint64_t>(entries_.size()));
  for (const auto& e : entries_) {
    detail::put_le(buf, e.up);
    detail::put_le(buf, e.down);
    detail::put_le(buf, e.value);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

SimilarityMatrix SimilarityMatrix::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    if (!fs::exists(path)) throw MissingInputError("similarity matrix not found: " + path.string());
    throw IoError("cannot open " + path.string());
  }
  const std::string what = path.string();
  std::vector<char> header(kHeaderBytes);
  detail::read_exact(in, header.data(), header.size(), what);
  if (!std::equal(std::begin(kMagic), std::end(kMagic), header.begin())) {
    throw FormatError(what + ": not a similarity matrix");
  }
  const char* p = header.data() + 4;
  auto u32 = [&] {
    const auto v = detail::get_le<std::uint32_t>(p);
    p += 4;
    return v;
  };
  auto u64 = [&] {
    const auto v = detail::get_le<std::uint64_t>(p);
    p += 8;
    return v;
  };
  if (const auto version = u32(); version != kVersion) {
    throw FormatError(what + ": unsupported version " + std::to_string(version));
  }
  MatrixMeta meta;
  const auto measure = u32();
  if (measure > static_cast<std::uint32_t>(Measure::kDecoderCosine)) {
    throw FormatError(what + ": unknown measure tag");
  }
  meta.measure = static_cast<Measure>(measure);
  meta.up_layer = u32();
  meta.n_up = u32();
  meta.n_down = u32();
  const auto flags = u32();
  const auto min_co = u64();
  if (flags & 1u) meta.min_co = min_co;
  meta.uncentered_mode = (flags & 2u) ? UncenteredMode::kMeanProduct : UncenteredMode::kNormalized;
  meta.floor = detail::get_le<double>(p);
  p += 8;
  meta.invalid_co = u64();
  meta.invalid_degenerate = u64();
  meta.below_floor = u64();
  const auto n = u64();
  if (n > std::uint64_t{meta.n_up} * meta.n_down) throw FormatError(what + ": entry count too large");
  std::vector<char> body(n * kEntryBytes);
  detail::read_exact(in, body.data(), body.size(), what);
  std::vector<SimilarityEntry> entries(n);
  for (std::size_t k = 0; k < n; ++k) {
    const char* q = body.data() + k * kEntryBytes;
    entries[k] = {detail::get_le<std::uint32_t>(q), detail::get_le<std::uint32_t>(q + 4),
                  detail::get_le<double>(q + 8)};
  }
  try {
    return SimilarityMatrix(meta, std::move(entries));
  } catch (const Error& e) {
    throw FormatError(what + ": " + e.what());
  }
}

void SimilarityMatrix::save_csv(const fs::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "up,down,value\n";
  char buf[64];
  for (const auto& e : entries_) {
    std::snprintf(buf, sizeof buf, "%.17g", e.value);
    out << e.up << ',' << e.down << ',' << buf << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

SimilarityMatrix sparsify(const SimilarityMatrix& matrix, double floor) {
  if (!(floor >= 0.0)) throw ConfigError("sparsification floor must be non-negative");
  MatrixMeta meta = matrix.meta();
  std::vector<SimilarityEntry> kept;
  kept.reserve(matrix.size());
  for (const auto& e : matrix.entries()) {
    if (std::abs(e.value) < floor) {
      ++meta.below_floor;
    } else {
      kept.push_back(e);
    }
  }
  meta.floor = std::max(meta.floor, floor);
  return SimilarityMatrix(meta, std::move(kept));
}

json Histogram::to_json() const {
  return {{"lo", lo}, {"hi", hi}, {"counts", counts}, {"absent", absent}};
}

namespace {

std::size_t bin_of(double v, double lo, double hi, std::size_t bins) {
  const double t = (v - lo) / (hi - lo) * static_cast<double>(bins);
  if (!(t > 0.0)) return 0;
  return std::min(bins - 1, static_cast<std::size_t>(t));
}

}  // namespace

Histogram similarity_histogram(const SimilarityMatrix& matrix, std::size_t bins) {
  if (bins == 0) throw ConfigError("histogram needs at least one bin");
  const auto range = measure_range(matrix.meta().measure);
  Histogram h{range.lo, range.hi, std::vector<std::uint64_t>(bins, 0),
              matrix.total_pairs() - matrix.size()};
  for (const auto& e : matrix.entries()) ++h.counts[bin_of(e.value, h.lo, h.hi, bins)];
  return h;
}

json MatrixComparison::to_json() const {
  return {{"both_present", both_present},
          {"only_first", only_first},
          {"only_second", only_second},
          {"both_absent", both_absent},
          {"absent_agreement", absent_agreement},
          {"mean_abs_diff", mean_abs_diff},
          {"max_abs_diff", max_abs_diff},
          {"difference_histogram", difference.to_json()}};
}

MatrixComparison compare_matrices(const SimilarityMatrix& first, const SimilarityMatrix& second,
                                  std::size_t diff_bins) {
  const auto& a = first.meta();
  const auto& b = second.meta();
  if (a.measure != b.measure) throw DimensionError("cannot compare matrices of different measures");
  if (a.up_layer != b.up_layer || a.n_up != b.n_up || a.n_down != b.n_down) {
    throw DimensionError("cannot compare matrices of different layer pairs or dimensions");
  }
  if (diff_bins == 0) throw ConfigError("histogram needs at least one bin");
  const auto range = measure_range(a.measure);
  MatrixComparison out;
  out.difference = {0.0, range.hi - range.lo, std::vector<std::uint64_t>(diff_bins, 0), 0};
  double sum = 0.0;
  auto x = first.entries().begin();
  auto y = second.entries().begin();
  const auto xe = first.entries().end();
  const auto ye = second.entries().end();
  while (x != xe || y != ye) {
    if (y == ye || (x != xe && entry_less(*x, *y))) {
      ++out.only_first;
      ++x;
    } else if (x == xe || entry_less(*y, *x)) {
      ++out.only_second;
      ++y;
    } else {
      const double d = std::abs(x->value - y->value);
      ++out.both_present;
      sum += d;
      out.max_abs_diff = std::max(out.max_abs_diff, d);
      ++out.difference.counts[bin_of(d, out.difference.lo, out.difference.hi, diff_bins)];
      ++x;
      ++y;
    }
  }
  const std::uint64_t total = first.total_pairs();
  out.both_absent = total - out.both_present - out.only_first - out.only_second;
  out.difference.absent = total - out.both_present;
  out.absent_agreement =
      total == 0 ? 1.0 : static_cast<double>(out.both_present + out.both_absent) / static_cast<double>(total);
  out.mean_abs_diff = out.both_present == 0 ? 0.0 : sum / static_cast<double>(out.both_present);
  return out;
}

}  // namespace saegraph
