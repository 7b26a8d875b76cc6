#include <algorithm>
#include <cstdio>
#include <sstream>

#include "saegraph/motifs.hpp"

namespace saegraph {

using nlohmann::json;

std::string_view forward_class_name(ForwardClass c) {
  switch (c) {
    case ForwardClass::kPassedThrough: return "passed_through";
    case ForwardClass::kDisappearing: return "disappearing";
    case ForwardClass::kLastLayer: return "n/a-last-layer";
  }
  return "disappearing";
}

std::string_view backward_class_name(BackwardClass c) {
  switch (c) {
    case BackwardClass::kContinued: return "continued";
    case BackwardClass::kAppearing: return "appearing";
    case BackwardClass::kFirstLayer: return "n/a-first-layer";
  }
  return "appearing";
}

ForwardClass parse_forward_class(std::string_view name) {
  for (const auto c : {ForwardClass::kPassedThrough, ForwardClass::kDisappearing, ForwardClass::kLastLayer}) {
    if (forward_class_name(c) == name) return c;
  }
  throw ConfigError("unknown forward class '" + std::string(name) + "'");
}

BackwardClass parse_backward_class(std::string_view name) {
  for (const auto c : {BackwardClass::kContinued, BackwardClass::kAppearing, BackwardClass::kFirstLayer}) {
    if (backward_class_name(c) == name) return c;
  }
  throw ConfigError("unknown backward class '" + std::string(name) + "'");
}

namespace {

std::optional<Neighbor> neighbor_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return Neighbor{FeatureId::parse(j.at("id").get<std::string>()), j.at("value").get<double>()};
}

void keep_best(std::optional<Neighbor>& slot, FeatureId id, double value) {
  // Ties keep the lower feature id, which arrives first.
  if (!slot || value > slot->value) slot = Neighbor{id, value};
}

json neighbor_json(const std::optional<Neighbor>& n) {
  if (!n) return nullptr;
  return {{"id", n->id.str()}, {"value", n->value}};
}

}  // namespace

ClassificationReport classify_features(std::span<const SimilarityMatrix> matrices, double threshold) {
  if (matrices.empty()) throw ConfigError("classification needs at least one layer pair");
  const auto& first = matrices.front().meta();
  ClassificationReport r;
  r.measure = first.measure;
  r.threshold = threshold;
  r.n_layers = static_cast<std::uint32_t>(matrices.size()) + 1;
  r.n_features = first.n_up;
  for (std::size_t k = 0; k < matrices.size(); ++k) {
    const auto& m = matrices[k].meta();
    if (m.measure != r.measure) throw ConfigError("classification matrices mix measures");
    if (m.up_layer != first.up_layer + k) throw DimensionError("classification matrices are not contiguous");
    if (m.n_up != r.n_features || m.n_down != r.n_features) {
      throw DimensionError("classification matrices differ in feature count");
    }
  }
  const std::uint32_t base = first.up_layer;
  r.features.resize(std::size_t{r.n_layers} * r.n_features);
  for (std::uint32_t l = 0; l < r.n_layers; ++l) {
    for (std::uint32_t f = 0; f < r.n_features; ++f) {
      r.features[std::size_t{l} * r.n_features + f].id = {base + l, f};
    }
  }
  for (std::uint32_t k = 0; k < matrices.size(); ++k) {
    for (const auto& e : matrices[k].entries()) {
      auto& up = r.features[std::size_t{k} * r.n_features + e.up];
      auto& down = r.features[std::size_t{k + 1} * r.n_features + e.down];
      keep_best(up.best_next, down.id, e.value);
      keep_best(down.best_prev, up.id, e.value);
    }
  }
  r.layers.resize(r.n_layers);
  for (std::uint32_t l = 0; l < r.n_layers; ++l) {
    auto& counts = r.layers[l];
    counts.layer = base + l;
    for (std::uint32_t f = 0; f < r.n_features; ++f) {
      auto& c = r.features[std::size_t{l} * r.n_features + f];
      if (l + 1 == r.n_layers) {
        c.forward = ForwardClass::kLastLayer;
      } else if (c.best_next && c.best_next->value >= threshold) {
        c.forward = ForwardClass::kPassedThrough;
        ++counts.passed_through;
      } else {
        c.forward = ForwardClass::kDisappearing;
        ++counts.disappearing;
      }
      if (l == 0) {
        c.backward = BackwardClass::kFirstLayer;
      } else if (c.best_prev && c.best_prev->value >= threshold) {
        c.backward = BackwardClass::kContinued;
        ++counts.continued;
      } else {
        c.backward = BackwardClass::kAppearing;
        ++counts.appearing;
      }
    }
  }
  return r;
}

const FeatureClassification& ClassificationReport::at(FeatureId id) const {
  const std::uint32_t base = layers.empty() ? 0 : layers.front().layer;
  if (id.layer < base || id.layer >= base + n_layers || id.index >= n_features) {
    throw DimensionError("feature " + id.str() + " outside the classification report");
  }
  return features[std::size_t{id.layer - base} * n_features + id.index];
}

json ClassificationReport::to_json(bool include_features) const {
  json layer_rows = json::array();
  for (const auto& c : layers) {
    layer_rows.push_back({{"layer", c.layer},
                          {"passed_through", c.passed_through},
                          {"disappearing", c.disappearing},
                          {"continued", c.continued},
                          {"appearing", c.appearing}});
  }
  json doc = {{"format", "saegraph.classification"},
              {"measure", measure_name(measure)},
              {"threshold", threshold},
              {"comparison", ">="},
              {"n_layers", n_layers},
              {"n_features", n_features},
              {"layers", layer_rows}};
  if (include_features) {
    json feats = json::array();
    for (const auto& c : features) {
      feats.push_back({{"id", c.id.str()},
                       {"forward", forward_class_name(c.forward)},
                       {"backward", backward_class_name(c.backward)},
                       {"best_next", neighbor_json(c.best_next)},
                       {"best_prev", neighbor_json(c.best_prev)}});
    }
    doc["features"] = std::move(feats);
  }
  return doc;
}

ClassificationReport ClassificationReport::from_json(const json& doc) {
  try {
    ClassificationReport r;
    r.measure = parse_measure(doc.at("measure").get<std::string>());
    r.threshold = doc.at("threshold").get<double>();
    r.n_layers = doc.at("n_layers").get<std::uint32_t>();
    r.n_features = doc.at("n_features").get<std::uint32_t>();
    for (const auto& row : doc.at("layers")) {
      r.layers.push_back({row.at("layer").get<std::uint32_t>(), row.at("passed_through").get<std::uint64_t>(),
                          row.at("disappearing").get<std::uint64_t>(), row.at("continued").get<std::uint64_t>(),
                          row.at("appearing").get<std::uint64_t>()});
    }
    for (const auto& f : doc.at("features")) {
      FeatureClassification c;
      c.id = FeatureId::parse(f.at("id").get<std::string>());
      c.forward = parse_forward_class(f.at("forward").get<std::string>());
      c.backward = parse_backward_class(f.at("backward").get<std::string>());
      c.best_next = neighbor_from(f.at("best_next"));
      c.best_prev = neighbor_from(f.at("best_prev"));
      r.features.push_back(c);
    }
    if (r.layers.size() != r.n_layers || r.features.size() != std::size_t{r.n_layers} * r.n_features) {
      throw ConfigError("classification report shape mismatch");
    }
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("classification report: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("classification report: ") + e.what());
  }
}

std::string ClassificationReport::table() const {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-6s %15s %13s %10s %10s\n", "layer", "passed_through", "disappearing",
                "continued", "appearing");
  out << line;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& c = layers[l];
    const bool last = l + 1 == layers.size();
    const bool first = l == 0;
    std::snprintf(line, sizeof line, "%-6u %15s %13s %10s %10s\n", c.layer,
                  last ? "-" : std::to_string(c.passed_through).c_str(),
                  last ? "-" : std::to_string(c.disappearing).c_str(),
                  first ? "-" : std::to_string(c.continued).c_str(),
                  first ? "-" : std::to_string(c.appearing).c_str());
    out << line;
  }
  return out.str();
}

std::vector<CurvePoint> neighbor_threshold_curve(const SimilarityMatrix& matrix, std::span<const double> thresholds) {
  std::vector<CurvePoint> out;
  const std::uint32_t n_up = matrix.meta().n_up;
  for (const double t : thresholds) {
    std::vector<std::uint64_t> per_feature(n_up, 0);
    for (const auto& e : matrix.entries()) {
      if (e.value >= t) ++per_feature[e.up];
    }
    CurvePoint p;
    p.threshold = t;
    std::uint64_t top = 0;
    std::uint64_t total = 0;
    for (const auto c : per_feature) {
      top = std::max(top, c);
      total += c;
    }
    p.counts.assign(top + 1, 0);
    for (const auto c : per_feature) {
      ++p.counts[c];
      if (c > 0) ++p.with_any;
    }
    p.mean = n_up == 0 ? 0.0 : static_cast<double>(total) / n_up;
    out.push_back(std::move(p));
  }
  return out;
}

json curve_json(const std::vector<CurvePoint>& curve) {
  json rows = json::array();
  for (const auto& p : curve) {
    rows.push_back({{"threshold", p.threshold}, {"counts", p.counts}, {"with_any", p.with_any}, {"mean", p.mean}});
  }
  return {{"format", "saegraph.curve"}, {"points", rows}};
}

}  // namespace saegraph
