#include "test_support.hpp"

#include <map>
#include <atomic>
#include <unistd.h>

namespace saegraph::testing {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("saegraph_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::vector<TokenFrame> random_frames(std::mt19937_64& rng, std::uint32_t n_layers,
                                      std::uint32_t n_features, std::size_t n_tokens, double p,
                                      float max_value) {
  std::bernoulli_distribution fires(p);
  std::uniform_real_distribution<float> mag(0.0f, max_value);
  std::vector<TokenFrame> frames(n_tokens);
  for (std::size_t t = 0; t < n_tokens; ++t) {
    frames[t].reset(t);
    for (std::uint32_t k = 0; k < n_layers; ++k) {
      for (std::uint32_t i = 0; i < n_features; ++i) {
        if (fires(rng)) {
          float v = mag(rng);
          if (v <= 0.0f) v = max_value;
          frames[t].add(i, v);
        }
      }
      frames[t].close_layer();
    }
  }
  return frames;
}

DatasetManifest write_dataset(const fs::path& dir, const std::vector<TokenFrame>& frames,
                              std::uint32_t n_layers, std::uint32_t n_features,
                              std::size_t tokens_per_shard) {
  fs::create_directories(dir);
  DatasetManifest m;
  m.n_layers = n_layers;
  m.n_features = n_features;
  m.n_tokens = frames.size();
  std::size_t shard = 0;
  for (std::size_t begin = 0; begin < frames.size(); begin += tokens_per_shard, ++shard) {
    const std::size_t end = std::min(frames.size(), begin + tokens_per_shard);
    const auto path = dir / ("s" + std::to_string(shard) + ".saea");
    std::vector<TokenFrame> part(frames.begin() + static_cast<std::ptrdiff_t>(begin),
                                 frames.begin() + static_cast<std::ptrdiff_t>(end));
    for (std::size_t t = 0; t < part.size(); ++t) part[t].set_position(t);
    write_shard(path, part, m);
    m.shards.push_back({path, end - begin});
  }
  m.save(dir / "manifest.json");
  return m;
}

std::vector<std::vector<double>> dense_layer(const std::vector<TokenFrame>& frames, std::uint32_t layer,
                                             std::uint32_t n_features) {
  std::vector<std::vector<double>> out(frames.size(), std::vector<double>(n_features, 0.0));
  for (std::size_t t = 0; t < frames.size(); ++t) {
    for (const auto& a : frames[t].layer(layer)) out[t][a.index] = a.value;
  }
  return out;
}

DenseOracle::DenseOracle(const std::vector<TokenFrame>& frames, const MaxActivationTable& table,
                         std::uint32_t up_layer, double theta) {
  const std::uint32_t F = table.n_features();
  x = dense_layer(frames, up_layer, F);
  y = dense_layer(frames, up_layer + 1, F);
  const auto bin = [&](const std::vector<std::vector<double>>& v, std::uint32_t layer) {
    std::vector<std::vector<bool>> out(v.size(), std::vector<bool>(F, false));
    for (std::size_t t = 0; t < v.size(); ++t) {
      for (std::uint32_t i = 0; i < F; ++i) {
        const double mx = table.at({layer, i});
        out[t][i] = mx > 0 && v[t][i] > 0 && v[t][i] / mx >= theta;
      }
    }
    return out;
  };
  ax = bin(x, up_layer);
  ay = bin(y, up_layer + 1);
}

std::uint64_t DenseOracle::co(std::uint32_t i, std::uint32_t j) const {
  std::uint64_t c = 0;
  for (std::size_t t = 0; t < ax.size(); ++t) c += (ax[t][i] && ay[t][j]) ? 1 : 0;
  return c;
}

std::uint64_t DenseOracle::count_up(std::uint32_t i) const {
  std::uint64_t c = 0;
  for (const auto& row : ax) c += row[i] ? 1 : 0;
  return c;
}

std::uint64_t DenseOracle::count_down(std::uint32_t j) const {
  std::uint64_t c = 0;
  for (const auto& row : ay) c += row[j] ? 1 : 0;
  return c;
}

std::optional<double> DenseOracle::pearson(std::uint32_t i, std::uint32_t j) const {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    mx += x[t][i];
    my += y[t][j];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    const double dx = x[t][i] - mx;
    const double dy = y[t][j] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0 || syy <= 0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

std::optional<double> DenseOracle::jaccard(std::uint32_t i, std::uint32_t j) const {
  std::uint64_t inter = 0, uni = 0;
  for (std::size_t t = 0; t < ax.size(); ++t) {
    inter += (ax[t][i] && ay[t][j]) ? 1 : 0;
    uni += (ax[t][i] || ay[t][j]) ? 1 : 0;
  }
  if (uni == 0) return std::nullopt;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::optional<double> DenseOracle::sufficiency(std::uint32_t i, std::uint32_t j) const {
  const auto a = count_up(i);
  if (a == 0) return std::nullopt;
  return static_cast<double>(co(i, j)) / static_cast<double>(a);
}

std::optional<double> DenseOracle::necessity(std::uint32_t i, std::uint32_t j) const {
  const auto b = count_down(j);
  if (b == 0) return std::nullopt;
  return static_cast<double>(co(i, j)) / static_cast<double>(b);
}

std::optional<double> DenseOracle::uncentered(std::uint32_t i, std::uint32_t j) const {
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    sxy += x[t][i] * y[t][j];
    sxx += x[t][i] * x[t][i];
    syy += y[t][j] * y[t][j];
  }
  if (sxx <= 0 || syy <= 0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace saegraph::testing

namespace saegraph::testing {

double adjusted_rand_index(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
  const std::size_t n = a.size();
  std::map<std::pair<std::uint32_t, std::uint32_t>, double> joint;
  std::map<std::uint32_t, double> ra, rb;
  for (std::size_t i = 0; i < n; ++i) {
    joint[{a[i], b[i]}] += 1;
    ra[a[i]] += 1;
    rb[b[i]] += 1;
  }
  const auto c2 = [](double x) { return x * (x - 1) / 2; };
  double sj = 0, sa = 0, sb = 0;
  for (const auto& [k, v] : joint) sj += c2(v);
  for (const auto& [k, v] : ra) sa += c2(v);
  for (const auto& [k, v] : rb) sb += c2(v);
  const double expected = sa * sb / c2(static_cast<double>(n));
  const double top = (sa + sb) / 2;
  if (top == expected) return 1.0;
  return (sj - expected) / (top - expected);
}

}  // namespace saegraph::testing
