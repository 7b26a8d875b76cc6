#include <algorithm>
#include <istream>
#include <ostream>
#include <random>

#include "saegraph/motifs.hpp"

namespace saegraph {

using nlohmann::json;

void CalibrationConfig::validate() const {
  if (!(lo < hi)) throw ConfigError("calibration bounds must satisfy lo < hi");
  if (!(start > lo && start < hi)) throw ConfigError("calibration start must lie strictly inside the bounds");
  if (!(width > 0.0)) throw ConfigError("calibration width must be positive");
  if (pairs_per_probe == 0) throw ConfigError("calibration needs at least one pair per probe");
  if (!(window > 0.0)) throw ConfigError("calibration window must be positive");
  if (!(agree_fraction > 0.0 && agree_fraction <= 1.0)) throw ConfigError("agree fraction must be in (0, 1]");
  if (max_probes == 0) throw ConfigError("calibration needs at least one probe");
}

json CalibrationResult::to_json() const {
  json rows = json::array();
  for (const auto& p : probes) {
    rows.push_back({{"threshold", p.threshold},
                    {"pairs", p.n_pairs},
                    {"equivalent", p.n_equivalent},
                    {"skipped", p.skipped},
                    {"high_enough", p.high_enough}});
  }
  return {{"format", "saegraph.calibration"}, {"lo", lo}, {"hi", hi}, {"converged", converged}, {"probes", rows}};
}

CalibrationResult calibrate_threshold(const SimilarityMatrix& matrix,
                                      const std::map<FeatureId, std::string>& explanations, const PairJudge& judge,
                                      const CalibrationConfig& config) {
  config.validate();
  if (!judge) throw ConfigError("calibration needs a judge");
  std::vector<SimilarityEntry> sorted(matrix.entries().begin(), matrix.entries().end());
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.value < b.value; });
  const auto first_at_or_above = [&](double v) {
    return std::lower_bound(sorted.begin(), sorted.end(), v,
                            [](const SimilarityEntry& e, double x) { return e.value < x; });
  };
  const auto explanation = [&](FeatureId id) {
    const auto it = explanations.find(id);
    return it == explanations.end() ? std::string() : it->second;
  };
  const std::uint32_t up_layer = matrix.meta().up_layer;

  std::mt19937_64 rng(config.seed);
  CalibrationResult r{config.lo, config.hi, false, {}};
  double t = config.start;
  while (r.probes.size() < config.max_probes) {
    CalibrationProbe probe;
    probe.threshold = t;
    const double w = std::min(config.window, (r.hi - r.lo) / 2);
    auto begin = first_at_or_above(t);
    auto end = first_at_or_above(t + w);
    if (begin == end) end = first_at_or_above(r.hi);
    if (begin == end) {
      probe.skipped = true;
      r.hi = t;
    } else {
      std::vector<SimilarityEntry> pool(begin, end);
      std::shuffle(pool.begin(), pool.end(), rng);
      pool.resize(std::min<std::size_t>(pool.size(), config.pairs_per_probe));
      for (const auto& e : pool) {
        const FeatureId up{up_layer, e.up};
        const FeatureId down{up_layer + 1, e.down};
        ++probe.n_pairs;
        if (judge({up, down, e.value, explanation(up), explanation(down)})) ++probe.n_equivalent;
      }
      probe.high_enough = probe.n_equivalent >= config.agree_fraction * probe.n_pairs;
      (probe.high_enough ? r.hi : r.lo) = t;
    }
    r.probes.push_back(probe);
    if (r.hi - r.lo <= config.width) {
      r.converged = true;
      break;
    }
    t = (r.lo + r.hi) / 2;
  }
  return r;
}

PairJudge terminal_judge(std::istream& in, std::ostream& out) {
  return [&in, &out](const PairSample& p) {
    out << "\n" << p.up.str() << " -> " << p.down.str() << "  similarity " << p.value << "\n"
        << "  " << p.up.str() << ": " << (p.up_explanation.empty() ? "(no explanation)" : p.up_explanation) << "\n"
        << "  " << p.down.str() << ": " << (p.down_explanation.empty() ? "(no explanation)" : p.down_explanation)
        << "\n";
    for (;;) {
      out << "equivalent? [y/n] " << std::flush;
      std::string answer;
      if (!std::getline(in, answer)) throw ConfigError("calibration aborted: no answer on input");
      if (answer == "y" || answer == "Y" || answer == "yes") return true;
      if (answer == "n" || answer == "N" || answer == "no") return false;
    }
  };
}

}  // namespace saegraph
