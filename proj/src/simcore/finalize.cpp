#include <algorithm>
#include <cmath>

#include "saegraph/simcore.hpp"

namespace saegraph {

namespace {

using Real = long double;

// Relative tolerance below which a variance term counts as zero.
constexpr Real kVarianceTolerance = 1e-12L;

Real clamp_unit(Real v) { return std::clamp(v, Real{-1}, Real{1}); }

template <typename ValueFn>
SimilarityMatrix finalize_with(const PairStatsAccumulator& acc, Measure measure,
                               const FinalizeOptions& options, ValueFn&& value_of) {
  MatrixMeta meta;
  meta.measure = measure;
  meta.up_layer = acc.up_layer();
  meta.n_up = acc.n_up();
  meta.n_down = acc.n_down();
  meta.min_co = options.min_co;
  meta.uncentered_mode = options.uncentered_mode;
  std::vector<SimilarityEntry> entries;
  const RowRange rows = acc.rows();
  for (std::uint32_t i = rows.begin; i < rows.end; ++i) {
    acc.visit_row(i, [&](std::uint32_t j, std::uint64_t c, double s) {
      if (options.min_co && c <= *options.min_co) {
        ++meta.invalid_co;
        return;
      }
      const std::optional<Real> v = value_of(i, j, c, s);
      if (!v) {
        ++meta.invalid_degenerate;
        return;
      }
      entries.push_back({i, j, static_cast<double>(*v)});
    });
  }
  return SimilarityMatrix(meta, std::move(entries));
}

// N * sum(x^2) - sum(x)^2 per feature, or a negative marker when degenerate.
std::vector<Real> variance_terms(std::uint64_t n_tokens, std::uint32_t n,
                                 const auto& sum_of, const auto& sumsq_of) {
  std::vector<Real> out(n);
  const Real N = static_cast<Real>(n_tokens);
  for (std::uint32_t i = 0; i < n; ++i) {
    const Real sx = sum_of(i);
    const Real sxx = sumsq_of(i);
    const Real v = N * sxx - sx * sx;
    out[i] = (sxx > 0 && v > kVarianceTolerance * N * sxx) ? v : Real{-1};
  }
  return out;
}

}  // namespace

SimilarityMatrix finalize(const PairStatsAccumulator& acc, Measure measure,
                          const FinalizeOptions& options) {
  switch (measure) {
    case Measure::kPearson: {
      const Real N = static_cast<Real>(acc.n_tokens());
      const auto vx = variance_terms(acc.n_tokens(), acc.n_up(),
                                     [&](std::uint32_t i) { return acc.up_sum(i); },
                                     [&](std::uint32_t i) { return acc.up_sumsq(i); });
      const auto vy = variance_terms(acc.n_tokens(), acc.n_down(),
                                     [&](std::uint32_t j) { return acc.down_sum(j); },
                                     [&](std::uint32_t j) { return acc.down_sumsq(j); });
      return finalize_with(acc, measure, options,
                           [&](std::uint32_t i, std::uint32_t j, std::uint64_t, double s) -> std::optional<Real> {
                             if (vx[i] < 0 || vy[j] < 0) return std::nullopt;
                             const Real num = N * static_cast<Real>(s) -
                                              static_cast<Real>(acc.up_sum(i)) * static_cast<Real>(acc.down_sum(j));
                             return clamp_unit(num / std::sqrt(vx[i] * vy[j]));
                           });
    }
    case Measure::kJaccard:
      return finalize_with(acc, measure, options,
                           [&](std::uint32_t i, std::uint32_t j, std::uint64_t c, double) -> std::optional<Real> {
                             const std::uint64_t denom = acc.up_count(i) + acc.down_count(j) - c;
                             if (denom == 0) return std::nullopt;
                             return static_cast<Real>(c) / static_cast<Real>(denom);
                           });
    case Measure::kSufficiency:
      return finalize_with(acc, measure, options,
                           [&](std::uint32_t i, std::uint32_t, std::uint64_t c, double) -> std::optional<Real> {
                             if (acc.up_count(i) == 0) return std::nullopt;
                             return static_cast<Real>(c) / static_cast<Real>(acc.up_count(i));
                           });
    case Measure::kNecessity:
      return finalize_with(acc, measure, options,
                           [&](std::uint32_t, std::uint32_t j, std::uint64_t c, double) -> std::optional<Real> {
                             if (acc.down_count(j) == 0) return std::nullopt;
                             return static_cast<Real>(c) / static_cast<Real>(acc.down_count(j));
                           });
    case Measure::kUncentered: {
      if (options.uncentered_mode == UncenteredMode::kMeanProduct) {
        const Real N = static_cast<Real>(acc.n_tokens());
        return finalize_with(acc, measure, options,
                             [&](std::uint32_t, std::uint32_t, std::uint64_t, double s) -> std::optional<Real> {
                               if (N == 0) return std::nullopt;
                               return static_cast<Real>(s) / N;
                             });
      }
      return finalize_with(acc, measure, options,
                           [&](std::uint32_t i, std::uint32_t j, std::uint64_t, double s) -> std::optional<Real> {
                             const Real d = static_cast<Real>(acc.up_sumsq(i)) * static_cast<Real>(acc.down_sumsq(j));
                             if (!(d > 0)) return std::nullopt;
                             return clamp_unit(static_cast<Real>(s) / std::sqrt(d));
                           });
    }
    case Measure::kDecoderCosine:
      break;
  }
  throw ConfigError("decoder cosine is computed from SAE weights, not activation statistics");
}

SimilarityMatrix finalize_pearson(const PairStatsAccumulator& acc, std::optional<std::uint64_t> min_co) {
  return finalize(acc, Measure::kPearson, {min_co});
}

SimilarityMatrix finalize_jaccard(const PairStatsAccumulator& acc, std::optional<std::uint64_t> min_co) {
  return finalize(acc, Measure::kJaccard, {min_co});
}

SimilarityMatrix finalize_sufficiency(const PairStatsAccumulator& acc, std::optional<std::uint64_t> min_co) {
  return finalize(acc, Measure::kSufficiency, {min_co});
}

SimilarityMatrix finalize_necessity(const PairStatsAccumulator& acc, std::optional<std::uint64_t> min_co) {
  return finalize(acc, Measure::kNecessity, {min_co});
}

SimilarityMatrix finalize_uncentered(const PairStatsAccumulator& acc, std::optional<std::uint64_t> min_co,
                                     UncenteredMode mode) {
  return finalize(acc, Measure::kUncentered, {min_co, mode});
}

CoActivationStats co_activation_stats(const PairStatsAccumulator& acc, std::uint64_t never_threshold) {
  CoActivationStats out;
  const RowRange rows = acc.rows();
  for (std::uint32_t i = rows.begin; i < rows.end; ++i) {
    acc.visit_row(i, [&](std::uint32_t, std::uint64_t c, double) {
      ++out.total_pairs;
      if (c <= never_threshold) ++out.at_or_below;
    });
  }
  return out;
}

}  // namespace saegraph
