#include <algorithm>
#include <cstdlib>
#include <set>

#include "common/json_io.hpp"
#include "saegraph/graphserve.hpp"

namespace saegraph {

namespace fs = std::filesystem;
using nlohmann::json;

// --- configuration -------------------------------------------------------------

namespace {

fs::path resolve(const fs::path& base, const fs::path& p) { return p.is_absolute() ? p : base / p; }

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ConfigError("unknown key '" + key + "' in " + where);
    }
  }
}

}  // namespace

json ServiceConfig::to_json() const {
  json presets_doc = json::object();
  for (const auto& [name, p] : presets) {
    json e = {{"graph", p.graph.string()}};
    if (p.partition) e["partition"] = p.partition->string();
    presets_doc[name] = e;
  }
  json datasets_doc = json::object();
  for (const auto& [name, d] : datasets) {
    datasets_doc[name] = {{"manifest", d.manifest.string()},
                          {"max_table", d.max_table.string()},
                          {"theta", d.theta},
                          {"preset", d.preset}};
  }
  json paths_communities = json::array();
  for (const auto& c : communities) paths_communities.push_back(c.string());
  json paths_matrices = json::array();
  for (const auto& m : matrices) paths_matrices.push_back(m.string());
  json doc = {{"bind", bind},
              {"cors_origin", cors_origin},
              {"neighbor_cap", neighbor_cap},
              {"presets", presets_doc},
              {"communities", paths_communities},
              {"matrices", paths_matrices},
              {"datasets", datasets_doc}};
  if (annotations) doc["annotations"] = annotations->string();
  if (max_table) doc["max_table"] = max_table->string();
  if (classification) doc["classification"] = classification->string();
  return doc;
}

ServiceConfig ServiceConfig::from_json(const json& doc, const fs::path& base_dir) {
  check_keys(doc,
             {"bind", "cors_origin", "neighbor_cap", "annotations", "max_table", "classification", "presets",
              "communities", "matrices", "datasets"},
             "service config");
  ServiceConfig c;
  c.base_dir = base_dir;
  try {
    c.bind = doc.value("bind", c.bind);
    c.cors_origin = doc.value("cors_origin", c.cors_origin);
    c.neighbor_cap = doc.value("neighbor_cap", c.neighbor_cap);
    if (doc.contains("annotations")) c.annotations = doc["annotations"].get<std::string>();
    if (doc.contains("max_table")) c.max_table = doc["max_table"].get<std::string>();
    if (doc.contains("classification")) c.classification = doc["classification"].get<std::string>();
    if (doc.contains("presets")) {
      for (const auto& [name, p] : doc["presets"].items()) {
        check_keys(p, {"graph", "partition"}, "preset '" + name + "'");
        PresetEntry e;
        e.graph = p.at("graph").get<std::string>();
        if (p.contains("partition")) e.partition = p["partition"].get<std::string>();
        c.presets[name] = e;
      }
    }
    for (const auto& s : doc.value("communities", json::array())) c.communities.emplace_back(s.get<std::string>());
    for (const auto& s : doc.value("matrices", json::array())) c.matrices.emplace_back(s.get<std::string>());
    if (doc.contains("datasets")) {
      for (const auto& [name, d] : doc["datasets"].items()) {
        check_keys(d, {"manifest", "max_table", "theta", "preset"}, "dataset '" + name + "'");
        DatasetEntry e;
        e.manifest = d.at("manifest").get<std::string>();
        e.max_table = d.at("max_table").get<std::string>();
        e.theta = d.value("theta", 0.2);
        e.preset = d.at("preset").get<std::string>();
        c.datasets[name] = e;
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("service config: ") + e.what());
  }
  if (c.neighbor_cap == 0) throw ConfigError("neighbor_cap must be at least 1");
  for (const auto& [name, d] : c.datasets) {
    if (!c.presets.count(d.preset)) {
      throw ConfigError("dataset '" + name + "' refers to unknown preset '" + d.preset + "'");
    }
    if (!(d.theta > 0.0 && d.theta <= 1.0)) throw ConfigError("dataset '" + name + "' theta must be in (0, 1]");
  }
  (void)parse_bind(c.bind);
  return c;
}

ServiceConfig ServiceConfig::load(const fs::path& path) {
  json doc;
  try {
    doc = detail::read_json_file(path, "service config");
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  return from_json(doc, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

BindAddress parse_bind(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
    throw ConfigError("bind address must look like host:port, got '" + text + "'");
  }
  const std::string port = text.substr(colon + 1);
  if (!std::all_of(port.begin(), port.end(), [](char c) { return c >= '0' && c <= '9'; }) || port.size() > 5) {
    throw ConfigError("bad port in bind address '" + text + "'");
  }
  const int p = std::stoi(port);
  if (p > 65535) throw ConfigError("bad port in bind address '" + text + "'");
  return {text.substr(0, colon), p};
}

BindAddress resolve_bind(const std::optional<std::string>& flag, const ServiceConfig& config) {
  if (flag) return parse_bind(*flag);
  if (const char* env = std::getenv("SAEGRAPH_BIND"); env && *env) return parse_bind(env);
  return parse_bind(config.bind);
}

// --- loading -------------------------------------------------------------------

std::shared_ptr<const GraphService> GraphService::load(const ServiceConfig& config) {
  const auto& base = config.base_dir;
  std::vector<std::string> missing;
  const auto need = [&](const fs::path& p) {
    const auto full = resolve(base, p);
    if (!fs::exists(full)) missing.push_back(full.string());
  };
  if (config.annotations) need(*config.annotations);
  if (config.max_table) need(*config.max_table);
  if (config.classification) need(*config.classification);
  for (const auto& [name, p] : config.presets) {
    need(p.graph);
    if (p.partition) need(*p.partition);
  }
  for (const auto& p : config.communities) need(p);
  for (const auto& p : config.matrices) need(p);
  for (const auto& [name, d] : config.datasets) {
    need(d.manifest);
    need(d.max_table);
  }
  if (!missing.empty()) {
    std::string msg = "missing artifacts:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw MissingInputError(msg);
  }

  std::shared_ptr<GraphService> s(new GraphService());
  s->config_ = config;
  if (config.annotations) s->explanations_ = load_explanations(resolve(base, *config.annotations));
  if (config.max_table) {
    s->max_table_ = MaxActivationTable::load(resolve(base, *config.max_table));
    s->n_layers_ = s->max_table_->n_layers();
    s->n_features_ = s->max_table_->n_features();
  }
  if (config.classification) {
    s->classification_ =
        ClassificationReport::from_json(detail::read_json_file(resolve(base, *config.classification), "classification"));
  }
  for (const auto& [name, p] : config.presets) {
    Preset preset{load_graph(resolve(base, p.graph)), {}};
    if (p.partition) {
      const auto part = Partition::load(resolve(base, *p.partition));
      for (std::size_t i = 0; i < part.nodes.size(); ++i) preset.communities[part.nodes[i]] = part.membership[i];
    }
    s->presets_.emplace(name, std::move(preset));
  }
  for (const auto& p : config.communities) s->stores_.push_back(CommunityStore::load(resolve(base, p)));
  for (const auto& p : config.matrices) {
    auto m = SimilarityMatrix::load(resolve(base, p));
    std::vector<std::vector<SimilarityEntry>> cols(m.meta().n_down);
    for (const auto& e : m.entries()) cols[e.down].push_back(e);
    if (!s->max_table_) {
      s->n_layers_ = std::max(s->n_layers_, m.meta().up_layer + 2);
      s->n_features_ = std::max(s->n_features_, std::max(m.meta().n_up, m.meta().n_down));
    }
    s->matrices_.push_back(std::move(m));
    s->columns_.push_back(std::move(cols));
  }
  for (const auto& [name, d] : config.datasets) {
    Dataset ds;
    ds.index = std::make_unique<FrameIndex>(DatasetManifest::load(resolve(base, d.manifest)));
    ds.table = MaxActivationTable::load(resolve(base, d.max_table));
    ds.rule.theta = d.theta;
    ds.preset = d.preset;
    s->datasets_.emplace(name, std::move(ds));
  }
  return s;
}

// --- endpoint bodies -------------------------------------------------------------

GraphAnnotations GraphService::annotations_for(const Preset& preset) const {
  GraphAnnotations a;
  for (const auto& id : preset.graph.nodes()) {
    if (const auto it = explanations_.find(id); it != explanations_.end()) a.explanations[id] = it->second;
    if (const auto it = preset.communities.find(id); it != preset.communities.end()) a.communities[id] = it->second;
    if (classification_) {
      const auto& r = *classification_;
      const std::uint32_t base = r.layers.empty() ? 0 : r.layers.front().layer;
      if (id.layer >= base && id.layer < base + r.n_layers && id.index < r.n_features) {
        const auto& c = r.at(id);
        if (c.forward != ForwardClass::kLastLayer) {
          a.classes[id] = std::string(forward_class_name(c.forward));
        } else {
          a.classes[id] = std::string(backward_class_name(c.backward));
        }
      }
    }
  }
  return a;
}

json GraphService::presets() const {
  json out = json::array();
  for (const auto& [name, p] : presets_) out.push_back(name);
  return out;
}

json GraphService::graph(const std::string& preset, std::optional<double> threshold) const {
  const auto it = presets_.find(preset);
  if (it == presets_.end()) throw MissingInputError("unknown preset '" + preset + "'");
  const auto& g = it->second.graph;
  if (!threshold) return export_graph(g, annotations_for(it->second));
  if (*threshold < g.provenance().threshold) {
    throw ConfigError("threshold " + format_number(*threshold) + " is below the preset's build threshold " +
                      format_number(g.provenance().threshold));
  }
  return export_graph(filter_edges(g, *threshold), annotations_for(it->second));
}

json GraphService::feature(FeatureId id, std::uint32_t cap) const {
  if ((n_layers_ > 0 || n_features_ > 0) && (id.layer >= n_layers_ || id.index >= n_features_)) {
    throw MissingInputError("feature " + id.str() + " out of range");
  }
  const auto explain = [&](FeatureId f) -> json {
    const auto it = explanations_.find(f);
    return it == explanations_.end() ? json(nullptr) : json(it->second);
  };
  const auto ranked = [&](std::vector<std::pair<FeatureId, double>> v) {
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    if (v.size() > cap) v.resize(cap);
    json out = json::array();
    for (const auto& [f, value] : v) out.push_back({{"id", f.str()}, {"value", value}, {"explanation", explain(f)}});
    return out;
  };
  std::map<std::string, std::pair<std::vector<std::pair<FeatureId, double>>, std::vector<std::pair<FeatureId, double>>>>
      by_measure;
  for (std::size_t k = 0; k < matrices_.size(); ++k) {
    const auto& m = matrices_[k];
    auto& slot = by_measure[std::string(measure_name(m.meta().measure))];
    if (m.meta().up_layer == id.layer) {
      for (const auto& e : m.row(id.index)) slot.second.push_back({{id.layer + 1, e.down}, e.value});
    }
    if (m.meta().up_layer + 1 == id.layer && id.index < columns_[k].size()) {
      for (const auto& e : columns_[k][id.index]) slot.first.push_back({{m.meta().up_layer, e.up}, e.value});
    }
  }
  json neighbors = json::object();
  for (auto& [name, lists] : by_measure) {
    neighbors[name] = {{"up", ranked(std::move(lists.first))}, {"down", ranked(std::move(lists.second))}};
  }
  json cls = nullptr;
  if (classification_) {
    const auto& r = *classification_;
    const std::uint32_t base = r.layers.empty() ? 0 : r.layers.front().layer;
    if (id.layer >= base && id.layer < base + r.n_layers && id.index < r.n_features) {
      const auto& c = r.at(id);
      cls = {{"forward", forward_class_name(c.forward)},
             {"backward", backward_class_name(c.backward)},
             {"measure", measure_name(r.measure)},
             {"threshold", r.threshold}};
    }
  }
  json max_act = nullptr;
  if (max_table_) max_act = max_table_->at(id);
  return {{"id", id.str()},       {"layer", id.layer},         {"index", id.index},
          {"explanation", explain(id)}, {"max_activation", max_act}, {"classification", cls},
          {"neighbors", neighbors}};
}

json GraphService::communities(const std::optional<std::string>& measure, const std::optional<std::string>& algorithm,
                               std::optional<double> threshold, const CommunityFilter& filter) const {
  std::optional<Measure> want_measure;
  if (measure) want_measure = parse_measure(*measure);
  if (algorithm) (void)parse_algorithm(*algorithm);
  json out = json::array();
  bool matched = false;
  for (const auto& store : stores_) {
    if (want_measure && store.measure != *want_measure) continue;
    if (algorithm && store.algorithm != *algorithm) continue;
    if (threshold && store.threshold != *threshold) continue;
    matched = true;
    for (const auto& r : filter_records(store.records, filter)) out.push_back(r.to_json());
  }
  if (!matched) throw MissingInputError("no community artifact matches the request");
  return out;
}

json GraphService::token_subgraph_doc(const std::string& dataset, std::uint64_t position) const {
  const auto it = datasets_.find(dataset);
  if (it == datasets_.end()) throw MissingInputError("unknown dataset '" + dataset + "'");
  const auto& ds = it->second;
  if (position >= ds.index->n_tokens()) {
    throw MissingInputError("token " + std::to_string(position) + " outside dataset '" + dataset + "'");
  }
  const auto& preset = presets_.at(ds.preset);
  const auto frame = ds.index->read(position);
  return export_graph(token_subgraph(preset.graph, frame, ds.table, ds.rule), annotations_for(preset));
}

// --- routing ---------------------------------------------------------------------

HttpResponse json_error(int status, const std::string& message) {
  return {status, json{{"error", message}}.dump()};
}

namespace {

std::optional<std::string> param(const HttpRequest& r, const std::string& key) {
  const auto it = r.query.find(key);
  if (it == r.query.end() || it->second.empty()) return std::nullopt;
  return it->second;
}

double parse_real(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw ConfigError("bad " + what + " '" + s + "'");
  return v;
}

std::uint64_t parse_count(const std::string& s, const std::string& what) {
  if (s.empty() || s.size() > 19 || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw ConfigError("bad " + what + " '" + s + "'");
  }
  return std::stoull(s);
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (start <= path.size()) {
    const auto slash = path.find('/', start);
    const auto end = slash == std::string::npos ? path.size() : slash;
    if (end > start) parts.push_back(path.substr(start, end - start));
    if (slash == std::string::npos) break;
    start = slash + 1;
  }
  return parts;
}

}  // namespace

HttpResponse GraphService::handle(const HttpRequest& request) const {
  try {
    if (request.method != "GET") return json_error(405, "method not allowed");
    const auto parts = split_path(request.path);
    if (parts.size() < 2 || parts[0] != "api") return json_error(404, "no such route: " + request.path);
    const auto& route = parts[1];
    json body;
    if (route == "presets" && parts.size() == 2) {
      body = presets();
    } else if (route == "graph" && parts.size() == 2) {
      const auto preset = param(request, "preset");
      if (!preset) return json_error(400, "missing 'preset' parameter");
      std::optional<double> threshold;
      if (const auto t = param(request, "threshold")) threshold = parse_real(*t, "threshold");
      body = graph(*preset, threshold);
    } else if (route == "feature" && parts.size() == 4) {
      FeatureId id;
      try {
        id = {static_cast<std::uint32_t>(parse_count(parts[2], "layer")),
              static_cast<std::uint32_t>(parse_count(parts[3], "index"))};
        if (std::stoull(parts[2]) > UINT32_MAX || std::stoull(parts[3]) > UINT32_MAX) throw ConfigError("range");
      } catch (const ConfigError&) {
        return json_error(404, "no such feature: " + parts[2] + "/" + parts[3]);
      }
      std::uint32_t cap = config_.neighbor_cap;
      if (const auto c = param(request, "cap")) {
        const auto v = parse_count(*c, "cap");
        if (v == 0) throw ConfigError("cap must be at least 1");
        cap = static_cast<std::uint32_t>(std::min<std::uint64_t>(v, UINT32_MAX));
      }
      body = feature(id, cap);
    } else if (route == "communities" && parts.size() == 2) {
      CommunityFilter f;
      if (const auto v = param(request, "min_size")) f.min_size = parse_count(*v, "min_size");
      if (const auto v = param(request, "max_size")) f.max_size = parse_count(*v, "max_size");
      std::optional<double> threshold;
      if (const auto v = param(request, "threshold")) threshold = parse_real(*v, "threshold");
      body = communities(param(request, "measure"), param(request, "algo"), threshold, f);
    } else if (route == "token-subgraph" && parts.size() == 2) {
      const auto dataset = param(request, "dataset");
      const auto token = param(request, "token");
      if (!dataset || !token) return json_error(400, "missing 'dataset' or 'token' parameter");
      body = token_subgraph_doc(*dataset, parse_count(*token, "token"));
    } else {
      return json_error(404, "no such route: " + request.path);
    }
    return {200, body.dump()};
  } catch (const MissingInputError& e) {
    return json_error(404, e.what());
  } catch (const ConfigError& e) {
    return json_error(400, e.what());
  } catch (const std::exception& e) {
    return json_error(500, e.what());
  }
}

}  // namespace saegraph
