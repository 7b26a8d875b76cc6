#include <algorithm>

#include "saegraph/motifs.hpp"

namespace saegraph {

using nlohmann::json;

std::vector<std::uint32_t> select_disappearing(const SimilarityMatrix& necessity, double necessity_max) {
  if (necessity.meta().measure != Measure::kNecessity) throw ConfigError("selection expects a necessity matrix");
  std::vector<std::uint8_t> blocked(necessity.meta().n_up, 0);
  for (const auto& e : necessity.entries()) {
    if (e.value >= necessity_max) blocked[e.up] = 1;
  }
  std::vector<std::uint32_t> out;
  for (std::uint32_t i = 0; i < blocked.size(); ++i) {
    if (!blocked[i]) out.push_back(i);
  }
  return out;
}

ProjectionResult disappearance_projection(const DatasetManifest& manifest, const MaxActivationTable& table,
                                          const std::filesystem::path& next_residuals, const SaeWeights& sae_k,
                                          const SaeWeights& sae_next, const SimilarityMatrix& necessity,
                                          const ProjectionConfig& config) {
  if (!(config.act_min_frac >= 0.0) || !(config.fire_frac >= 0.0)) {
    throw ConfigError("activation fractions must be non-negative");
  }
  const std::uint32_t k = necessity.meta().up_layer;
  if (sae_k.layer != k || sae_next.layer != k + 1) {
    throw DimensionError("SAE weights do not match layers " + std::to_string(k) + " and " + std::to_string(k + 1));
  }
  if (sae_k.d() != sae_next.d()) throw DimensionError("SAE residual widths differ");
  if (k + 1 >= manifest.n_layers || table.n_layers() != manifest.n_layers) {
    throw DimensionError("dataset does not cover layer " + std::to_string(k + 1));
  }
  if (sae_k.n_features() != manifest.n_features) throw DimensionError("SAE width differs from the dataset");

  ProjectionResult r;
  r.selected = config.features ? *config.features : select_disappearing(necessity, config.necessity_max);
  std::sort(r.selected.begin(), r.selected.end());
  r.selected.erase(std::unique(r.selected.begin(), r.selected.end()), r.selected.end());
  for (const auto f : r.selected) {
    if (f >= manifest.n_features) throw DimensionError("feature index " + std::to_string(f) + " out of range");
  }
  std::vector<std::int64_t> slot(manifest.n_features, -1);
  for (std::size_t s = 0; s < r.selected.size(); ++s) slot[r.selected[s]] = static_cast<std::int64_t>(s);
  std::vector<double> sxy(r.selected.size(), 0.0), sxx(r.selected.size(), 0.0);
  std::vector<std::uint64_t> n_fit(r.selected.size(), 0);
  const auto maxima = table.layer(k);

  ResidualReader residuals(next_residuals);
  if (residuals.layer() != k + 1) {
    throw DimensionError("residual file holds layer " + std::to_string(residuals.layer()) + ", expected " +
                         std::to_string(k + 1));
  }
  if (residuals.d() != sae_next.d()) throw DimensionError("residual width differs from the SAE");
  DatasetReader reader(manifest);
  TokenFrame frame;
  ResidualFrame res;
  while (reader.next(frame)) {
    if (!residuals.next(res)) throw MissingInputError("residual stream ends before the activation dataset");
    if (res.position != frame.position()) {
      throw DimensionError("residual position " + std::to_string(res.position) + " does not match token " +
                           std::to_string(frame.position()));
    }
    std::optional<Eigen::VectorXd> eps;
    for (const auto& a : frame.layer(k)) {
      const auto s = slot[a.index];
      if (s < 0) continue;
      const double max = maxima[a.index];
      if (!(max > 0.0) || a.value < config.act_min_frac * max) continue;
      if (!eps) eps = recon_error(res.x, sae_next);
      const double p = project_error(*eps, sae_k, a.index);
      r.samples.push_back({{k, a.index}, frame.position(), a.value, p});
      if (a.value >= config.fire_frac * max) {
        sxy[s] += a.value * p;
        sxx[s] += static_cast<double>(a.value) * a.value;
        ++n_fit[s];
      }
    }
  }
  for (std::size_t s = 0; s < r.selected.size(); ++s) {
    FeatureSlope fs{{k, r.selected[s]}, n_fit[s], std::nullopt};
    if (sxx[s] > 0.0) fs.slope = sxy[s] / sxx[s];
    r.slopes.push_back(fs);
  }
  return r;
}

json ProjectionResult::to_json() const {
  json samples_doc = json::array();
  for (const auto& s : samples) {
    samples_doc.push_back(
        {{"feature", s.feature.str()}, {"position", s.position}, {"activation", s.activation}, {"projection", s.projection}});
  }
  json slopes_doc = json::array();
  for (const auto& s : slopes) {
    slopes_doc.push_back(
        {{"feature", s.feature.str()}, {"n_fit", s.n_fit}, {"slope", s.slope ? json(*s.slope) : json(nullptr)}});
  }
  return {{"format", "saegraph.projection"}, {"selected", selected}, {"slopes", slopes_doc}, {"samples", samples_doc}};
}

}  // namespace saegraph
