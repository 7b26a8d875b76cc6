#include <algorithm>
#include <exception>
#include <thread>

#include "saegraph/simcore.hpp"

namespace saegraph {

std::uint32_t plan_rows_per_pass(std::uint32_t n_layers, std::uint32_t n_features,
                                 std::uint32_t tile_edge, std::size_t memory_budget, unsigned workers) {
  if (tile_edge == 0) throw ConfigError("tile edge must be positive");
  if (n_layers < 2 || n_features == 0) return n_features;
  const std::size_t per_row = std::size_t{n_features} * 16 * (n_layers - 1) * std::max(1u, workers);
  const std::size_t rows = memory_budget / per_row;
  const std::size_t tile_rows = std::max<std::size_t>(1, rows / tile_edge);
  return static_cast<std::uint32_t>(std::min<std::size_t>(tile_rows * tile_edge, n_features));
}

ComputeResult compute_similarities(const DatasetManifest& manifest, const MaxActivationTable& table,
                                   const ComputeOptions& options) {
  if (table.n_layers() != manifest.n_layers || table.n_features() != manifest.n_features) {
    throw DimensionError("max table shape differs from the dataset");
  }
  if (manifest.n_layers < 2) throw ConfigError("need at least two layers for pairwise statistics");
  if (options.measures.empty()) throw ConfigError("no measures requested");
  for (const auto m : options.measures) {
    if (m == Measure::kDecoderCosine) {
      throw ConfigError("decoder cosine is computed from SAE weights, not activation statistics");
    }
  }

  const std::size_t n_shards = manifest.shards.size();
  const unsigned workers = std::max(
      1u, std::min<unsigned>(options.workers, static_cast<unsigned>(std::max<std::size_t>(n_shards, 1))));
  const std::uint32_t F = manifest.n_features;
  const std::uint32_t pairs = manifest.n_layers - 1;

  ComputeResult result;
  result.rows_per_pass =
      plan_rows_per_pass(manifest.n_layers, F, options.tile_edge, options.memory_budget, workers);
  result.passes = result.rows_per_pass == 0 ? 1 : (F + result.rows_per_pass - 1) / result.rows_per_pass;
  result.matrices.resize(options.measures.size());
  result.co_stats.assign(pairs, {});

  for (std::uint32_t pass = 0; pass < result.passes; ++pass) {
    const RowRange rows{pass * result.rows_per_pass, std::min(F, (pass + 1) * result.rows_per_pass)};
    if (options.progress) {
      options.progress("pass " + std::to_string(pass + 1) + "/" + std::to_string(result.passes) +
                       ": upstream rows [" + std::to_string(rows.begin) + ", " +
                       std::to_string(rows.end) + ")");
    }
    std::vector<StackAccumulator> partial;
    partial.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
      partial.emplace_back(manifest.n_layers, F, options.rule, options.tile_edge, rows);
    }
    std::vector<std::exception_ptr> errors(workers);
    const auto run = [&](unsigned w) {
      try {
        TokenFrame frame;
        for (std::size_t s = w; s < n_shards; s += workers) {
          DatasetReader reader(manifest, s, s + 1);
          while (reader.next(frame)) partial[w].accumulate(frame, table);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    };
    if (workers == 1) {
      run(0);
    } else {
      std::vector<std::jthread> pool;
      for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run, w);
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    for (unsigned w = 1; w < workers; ++w) partial[0].merge(partial[w]);
    partial.erase(partial.begin() + 1, partial.end());

    for (std::uint32_t k = 0; k < pairs; ++k) {
      const auto& acc = partial[0].pair(k);
      result.co_stats[k].add(co_activation_stats(acc, options.never_threshold));
      for (std::size_t m = 0; m < options.measures.size(); ++m) {
        SimilarityMatrix mat = finalize(acc, options.measures[m], options.finalize);
        if (options.floor) mat = sparsify(mat, *options.floor);
        if (pass == 0) {
          result.matrices[m].push_back(std::move(mat));
        } else {
          result.matrices[m][k].append_rows(mat);
        }
      }
    }
  }
  return result;
}

}  // namespace saegraph
