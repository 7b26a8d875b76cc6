#include <fstream>

#include <boost/tokenizer.hpp>

#include "common/json_io.hpp"
#include "saegraph/graphkit.hpp"

namespace saegraph {

namespace fs = std::filesystem;
using nlohmann::json;

std::map<FeatureId, std::string> load_explanations(const fs::path& path, AnnotationLoadReport* report) {
  std::ifstream in(path);
  if (!in) {
    if (!fs::exists(path)) throw MissingInputError("annotation file not found: " + path.string());
    throw IoError("cannot open " + path.string());
  }
  using Tokenizer = boost::tokenizer<boost::escaped_list_separator<char>>;
  const boost::escaped_list_separator<char> sep('\\', ',', '"');
  std::map<FeatureId, std::string> out;
  AnnotationLoadReport r;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line.rfind("layer,index,explanation", 0) != 0) {
        throw FormatError(path.string() + ": expected header layer,index,explanation");
      }
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> fields;
    try {
      Tokenizer tok(line, sep);
      fields.assign(tok.begin(), tok.end());
    } catch (const boost::escaped_list_error& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (fields.size() != 3) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected 3 fields");
    }
    FeatureId id;
    try {
      id = {static_cast<std::uint32_t>(std::stoul(fields[0])), static_cast<std::uint32_t>(std::stoul(fields[1]))};
    } catch (const std::exception&) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad layer or index");
    }
    ++r.rows;
    if (!out.insert_or_assign(id, fields[2]).second) ++r.duplicates;
  }
  if (report) *report = r;
  return out;
}

json export_graph(const FeatureGraph& graph, const GraphAnnotations& annotations) {
  json nodes = json::array();
  for (const auto& id : graph.nodes()) {
    json n = {{"id", id.str()}, {"layer", id.layer}, {"index", id.index}};
    const auto ex = annotations.explanations.find(id);
    n["explanation"] = ex == annotations.explanations.end() ? json(nullptr) : json(ex->second);
    const auto co = annotations.communities.find(id);
    n["community"] = co == annotations.communities.end() ? json(nullptr) : json(co->second);
    const auto cl = annotations.classes.find(id);
    n["class"] = cl == annotations.classes.end() ? json(nullptr) : json(cl->second);
    nodes.push_back(std::move(n));
  }
  json edges = json::array();
  for (const auto& e : graph.edges()) {
    edges.push_back({{"u", e.u.str()}, {"v", e.v.str()}, {"w", e.w}, {"value", e.value}});
  }
  const auto& p = graph.provenance();
  json config = {{"measure", measure_name(p.measure)},
                 {"threshold", p.threshold},
                 {"admission", ">"},
                 {"weighted", p.weighted},
                 {"node_rule", node_rule_name(p.node_rule)},
                 {"first_layer", p.first_layer},
                 {"last_layer", p.last_layer},
                 {"n_features", p.n_features},
                 {"note", p.note}};
  return {{"format", "saegraph.graph"}, {"nodes", nodes}, {"edges", edges}, {"config", config}};
}

FeatureGraph import_graph(const json& doc, GraphAnnotations* annotations) {
  try {
    const auto& c = doc.at("config");
    GraphProvenance p;
    p.measure = parse_measure(c.at("measure").get<std::string>());
    p.threshold = c.at("threshold").get<double>();
    p.weighted = c.at("weighted").get<bool>();
    p.node_rule = parse_node_rule(c.at("node_rule").get<std::string>());
    p.first_layer = c.at("first_layer").get<std::uint32_t>();
    p.last_layer = c.at("last_layer").get<std::uint32_t>();
    p.n_features = c.at("n_features").get<std::uint32_t>();
    p.note = c.value("note", "");
    std::vector<FeatureId> nodes;
    GraphAnnotations ann;
    for (const auto& n : doc.at("nodes")) {
      const auto id = FeatureId::parse(n.at("id").get<std::string>());
      nodes.push_back(id);
      if (n.contains("explanation") && !n["explanation"].is_null()) ann.explanations[id] = n["explanation"];
      if (n.contains("community") && !n["community"].is_null()) ann.communities[id] = n["community"];
      if (n.contains("class") && !n["class"].is_null()) ann.classes[id] = n["class"];
    }
    std::vector<GraphEdge> edges;
    for (const auto& e : doc.at("edges")) {
      edges.push_back({FeatureId::parse(e.at("u").get<std::string>()), FeatureId::parse(e.at("v").get<std::string>()),
                       e.at("w").get<double>(), e.value("value", e.at("w").get<double>())});
    }
    if (annotations) *annotations = std::move(ann);
    return FeatureGraph(std::move(nodes), std::move(edges), p);
  } catch (const json::exception& e) {
    throw FormatError(std::string("graph document: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("graph document: ") + e.what());
  }
}

void save_graph(const fs::path& path, const FeatureGraph& graph, const GraphAnnotations& annotations) {
  detail::write_json_file(path, export_graph(graph, annotations));
}

FeatureGraph load_graph(const fs::path& path, GraphAnnotations* annotations) {
  try {
    return import_graph(detail::read_json_file(path, "graph document"), annotations);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace saegraph
