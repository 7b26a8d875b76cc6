#include "service_fixture.hpp"

#include <fstream>

#include "saegraph/simcore.hpp"

namespace saegraph::testing {

namespace fs = std::filesystem;
using nlohmann::json;

ServiceFixture build_service_fixture(const fs::path& dir) {
  ServiceFixture fx;
  fx.dir = dir;
  fs::create_directories(dir);
  fx.spec.n_layers = 3;
  fx.spec.n_features = 32;
  fx.spec.n_tokens = 4000;
  fx.spec.background_p = 0.002;
  fx.spec.seed = 17;
  fx.spec.tokens_per_shard = 1000;
  PlantRequest req;
  req.chains = 3;
  req.chain_sigma = 0.0;
  req.chain_fire_p = 0.05;
  req.communities = 1;
  req.community_width = 3;
  req.community_latent_p = 0.05;
  plant_motifs(fx.spec, req);
  const auto out = synth_generate(fx.spec, dir / "data");
  fx.manifest = out.manifest;
  fx.table = scan_max(fx.manifest);
  fx.table.save(dir / "max.json");

  ComputeOptions opts;
  opts.measures = {Measure::kPearson, Measure::kJaccard};
  const auto res = compute_similarities(fx.manifest, fx.table, opts);
  fx.pearson = res.matrices[0];
  fx.jaccard = res.matrices[1];
  json matrices = json::array();
  for (std::uint32_t k = 0; k < fx.pearson.size(); ++k) {
    const std::string p = "pearson_" + std::to_string(k) + ".saem";
    const std::string j = "jaccard_" + std::to_string(k) + ".saem";
    fx.pearson[k].save(dir / p);
    fx.jaccard[k].save(dir / j);
    matrices.push_back(p);
    matrices.push_back(j);
  }

  GraphConfig gc{Measure::kJaccard, 0.1};
  gc.node_rule = NodeRule::kAll;
  fx.graph = build_graph(fx.jaccard, gc);
  save_graph(dir / "graph.json", fx.graph);
  fx.partition = louvain(fx.graph);
  fx.partition.save(dir / "partition.json");
  fx.store = {Measure::kJaccard, "louvain", "", 0.1, extract_communities(fx.partition, fx.graph)};
  fx.store.save(dir / "communities.json");

  fx.classification = classify_features(fx.pearson, 0.95);
  std::ofstream(dir / "classification.json") << fx.classification.to_json().dump(2);

  std::ofstream csv(dir / "explanations.csv");
  csv << "layer,index,explanation\n";
  for (std::uint32_t l = 0; l < fx.spec.n_layers; ++l) {
    for (std::uint32_t f = 0; f < fx.spec.n_features; f += 2) {
      const std::string text = "feature " + std::to_string(l) + "/" + std::to_string(f) + ", \"quoted\"";
      fx.explanations[{l, f}] = text;
      std::string escaped;
      for (const char c : text) {
        if (c == '"') escaped += '\\';
        escaped += c;
      }
      csv << l << ',' << f << ",\"" << escaped << "\"\n";
    }
  }
  csv.close();

  const json config = {
      {"bind", "127.0.0.1:0"},
      {"neighbor_cap", 5},
      {"annotations", "explanations.csv"},
      {"max_table", "max.json"},
      {"classification", "classification.json"},
      {"presets", {{"jaccard_louvain_threshold_0.1", {{"graph", "graph.json"}, {"partition", "partition.json"}}}}},
      {"communities", {"communities.json"}},
      {"matrices", matrices},
      {"datasets",
       {{"synth",
         {{"manifest", "data/manifest.json"}, {"max_table", "max.json"}, {"preset", "jaccard_louvain_threshold_0.1"}}}}}};
  fx.config_path = dir / "service.json";
  std::ofstream(fx.config_path) << config.dump(2);
  return fx;
}

GraphAnnotations offline_annotations(const ServiceFixture& fx, const FeatureGraph& graph) {
  GraphAnnotations a;
  for (const auto& id : graph.nodes()) {
    if (fx.explanations.count(id)) a.explanations[id] = fx.explanations.at(id);
    if (const auto c = fx.partition.community_of(id)) a.communities[id] = *c;
    const auto& cls = fx.classification.at(id);
    a.classes[id] = std::string(id.layer + 1 < fx.classification.n_layers ? forward_class_name(cls.forward)
                                                                           : backward_class_name(cls.backward));
  }
  return a;
}

namespace {

bool is_feature_id(const json& j) {
  if (!j.is_string()) return false;
  try {
    (void)FeatureId::parse(j.get<std::string>());
    return true;
  } catch (const Error&) {
    return false;
  }
}

bool nullable_string(const json& j) { return j.is_null() || j.is_string(); }

}  // namespace

std::string check_graph_document(const json& doc) {
  if (!doc.is_object()) return "graph document is not an object";
  if (doc.value("format", "") != "saegraph.graph") return "bad format tag";
  if (!doc.contains("nodes") || !doc["nodes"].is_array()) return "nodes missing";
  if (!doc.contains("edges") || !doc["edges"].is_array()) return "edges missing";
  if (!doc.contains("config") || !doc["config"].is_object()) return "config missing";
  for (const auto& n : doc["nodes"]) {
    if (!is_feature_id(n.value("id", json()))) return "node id is not L/F";
    if (!n.contains("layer") || !n["layer"].is_number_unsigned()) return "node layer missing";
    if (!n.contains("explanation") || !nullable_string(n["explanation"])) return "node explanation malformed";
    if (!n.contains("community") || !(n["community"].is_null() || n["community"].is_number_integer())) {
      return "node community malformed";
    }
    if (!n.contains("class") || !nullable_string(n["class"])) return "node class malformed";
  }
  for (const auto& e : doc["edges"]) {
    if (!is_feature_id(e.value("u", json())) || !is_feature_id(e.value("v", json()))) return "edge endpoint malformed";
    if (!e.contains("w") || !e["w"].is_number()) return "edge weight missing";
  }
  for (const char* key : {"measure", "threshold", "weighted", "node_rule"}) {
    if (!doc["config"].contains(key)) return std::string("config.") + key + " missing";
  }
  return {};
}

std::string check_feature_detail(const json& doc) {
  if (!doc.is_object()) return "feature detail is not an object";
  if (!is_feature_id(doc.value("id", json()))) return "id malformed";
  if (!doc.contains("explanation") || !nullable_string(doc["explanation"])) return "explanation malformed";
  if (!doc.contains("max_activation") || !(doc["max_activation"].is_null() || doc["max_activation"].is_number())) {
    return "max_activation malformed";
  }
  if (!doc.contains("classification")) return "classification missing";
  if (!doc.contains("neighbors") || !doc["neighbors"].is_object()) return "neighbors missing";
  for (const auto& [measure, lists] : doc["neighbors"].items()) {
    for (const char* dir : {"up", "down"}) {
      if (!lists.contains(dir) || !lists[dir].is_array()) return measure + "." + dir + " missing";
      double prev = 1e300;
      for (const auto& n : lists[dir]) {
        if (!is_feature_id(n.value("id", json()))) return "neighbor id malformed";
        if (!n.contains("value") || !n["value"].is_number()) return "neighbor value missing";
        if (!n.contains("explanation") || !nullable_string(n["explanation"])) return "neighbor explanation malformed";
        if (n["value"].get<double>() > prev) return "neighbors not sorted by descending value";
        prev = n["value"].get<double>();
      }
    }
  }
  return {};
}

std::string check_community_list(const json& doc) {
  if (!doc.is_array()) return "community list is not an array";
  for (const auto& r : doc) {
    if (!r.contains("name") || !r["name"].is_string()) return "community name missing";
    if (!r.contains("members") || !r["members"].is_array()) return "members missing";
    if (!r.contains("size") || r["size"].get<std::size_t>() != r["members"].size()) return "size mismatch";
    for (const auto& m : r["members"]) {
      if (!is_feature_id(m)) return "member id malformed";
    }
  }
  return {};
}

std::string check_preset_list(const json& doc) {
  if (!doc.is_array()) return "preset list is not an array";
  for (const auto& p : doc) {
    if (!p.is_string()) return "preset name is not a string";
  }
  return {};
}

std::string check_error_body(const json& doc) {
  if (!doc.is_object() || !doc.contains("error") || !doc["error"].is_string()) return "error body malformed";
  return {};
}

}  // namespace saegraph::testing
