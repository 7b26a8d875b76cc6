#include <algorithm>

#include "saegraph/motifs.hpp"

namespace saegraph {

using nlohmann::json;

void GateConfig::validate() const {
  if (min_arity < 2) throw ConfigError("gate arity must be at least 2");
  if (max_arity < min_arity) throw ConfigError("gate arity cap below the minimum arity");
}

std::vector<GateCandidate> find_gates(const SimilarityMatrix& matrix, const GateConfig& config) {
  config.validate();
  const auto& meta = matrix.meta();
  const bool gate_measure = meta.measure == Measure::kNecessity || meta.measure == Measure::kSufficiency;
  if (!gate_measure && !config.allow_any_measure) {
    throw ConfigError("gate search expects a necessity or sufficiency matrix, got " +
                      std::string(measure_name(meta.measure)));
  }
  std::vector<std::vector<SimilarityEntry>> by_child(meta.n_down);
  for (const auto& e : matrix.entries()) {
    if (e.value >= config.min_sim) by_child[e.down].push_back(e);
  }
  const std::string kind = meta.measure == Measure::kNecessity     ? "AND"
                           : meta.measure == Measure::kSufficiency ? "OR"
                                                                   : "none";
  std::vector<GateCandidate> out;
  for (std::uint32_t j = 0; j < meta.n_down; ++j) {
    const auto& parents = by_child[j];
    if (parents.size() < config.min_arity || parents.size() > config.max_arity) continue;
    GateCandidate g;
    g.child = {meta.up_layer + 1, j};
    g.measure = meta.measure;
    g.kind = kind;
    g.min_similarity = parents.front().value;
    for (const auto& e : parents) {
      g.parents.push_back({meta.up_layer, e.up});
      g.min_similarity = std::min(g.min_similarity, e.value);
    }
    std::sort(g.parents.begin(), g.parents.end());
    out.push_back(std::move(g));
  }
  return out;
}

json gates_json(const std::vector<GateCandidate>& gates) {
  json rows = json::array();
  for (const auto& g : gates) {
    json parents = json::array();
    for (const auto& p : g.parents) parents.push_back(p.str());
    rows.push_back({{"child", g.child.str()},
                    {"parents", parents},
                    {"measure", measure_name(g.measure)},
                    {"kind", g.kind},
                    {"min_similarity", g.min_similarity}});
  }
  return {{"format", "saegraph.gates"}, {"gates", rows}};
}

}  // namespace saegraph
