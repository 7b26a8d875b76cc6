#include <algorithm>
#include <set>

#include "common/json_io.hpp"
#include "saegraph/communities.hpp"

namespace saegraph {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json provenance_json(const GraphProvenance& p) {
  return {{"measure", measure_name(p.measure)}, {"threshold", p.threshold},   {"weighted", p.weighted},
          {"node_rule", node_rule_name(p.node_rule)}, {"first_layer", p.first_layer},
          {"last_layer", p.last_layer}, {"n_features", p.n_features}, {"note", p.note}};
}

GraphProvenance provenance_from(const json& c) {
  GraphProvenance p;
  p.measure = parse_measure(c.at("measure").get<std::string>());
  p.threshold = c.at("threshold").get<double>();
  p.weighted = c.at("weighted").get<bool>();
  p.node_rule = parse_node_rule(c.at("node_rule").get<std::string>());
  p.first_layer = c.at("first_layer").get<std::uint32_t>();
  p.last_layer = c.at("last_layer").get<std::uint32_t>();
  p.n_features = c.at("n_features").get<std::uint32_t>();
  p.note = c.value("note", "");
  return p;
}

json ids_json(const std::vector<FeatureId>& ids) {
  json out = json::array();
  for (const auto& id : ids) out.push_back(id.str());
  return out;
}

std::vector<FeatureId> ids_from(const json& arr) {
  std::vector<FeatureId> out;
  for (const auto& s : arr) out.push_back(FeatureId::parse(s.get<std::string>()));
  return out;
}

template <typename Fn>
auto parse_or_format_error(const char* what, Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw FormatError(std::string(what) + ": " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string(what) + ": " + e.what());
  }
}

}  // namespace

// --- partition -----------------------------------------------------------------

std::uint32_t Partition::n_communities() const {
  std::uint32_t k = 0;
  for (const auto c : membership) k = std::max(k, c + 1);
  return k;
}

std::optional<std::uint32_t> Partition::community_of(FeatureId id) const {
  const auto it = std::lower_bound(nodes.begin(), nodes.end(), id);
  if (it == nodes.end() || *it != id) return std::nullopt;
  return membership[static_cast<std::size_t>(it - nodes.begin())];
}

std::vector<std::vector<FeatureId>> Partition::groups() const {
  std::vector<std::vector<FeatureId>> out(n_communities());
  for (std::size_t i = 0; i < nodes.size(); ++i) out[membership[i]].push_back(nodes[i]);
  return out;
}

json Partition::to_json() const {
  json members = json::object();
  for (std::size_t i = 0; i < nodes.size(); ++i) members[nodes[i].str()] = membership[i];
  return {{"format", "saegraph.partition"},
          {"algorithm", algorithm},
          {"quality", quality},
          {"resolution", resolution},
          {"seed", seed},
          {"n_communities", n_communities()},
          {"nodes", ids_json(nodes)},
          {"membership", membership},
          {"graph", provenance_json(graph)}};
}

Partition Partition::from_json(const json& doc) {
  return parse_or_format_error("partition document", [&] {
    Partition p;
    p.algorithm = doc.at("algorithm").get<std::string>();
    p.quality = doc.value("quality", "modularity");
    p.resolution = doc.value("resolution", 1.0);
    p.seed = doc.value("seed", std::uint64_t{0});
    p.nodes = ids_from(doc.at("nodes"));
    p.membership = doc.at("membership").get<std::vector<std::uint32_t>>();
    p.graph = provenance_from(doc.at("graph"));
    if (p.membership.size() != p.nodes.size()) throw ConfigError("membership length differs from node count");
    if (!std::is_sorted(p.nodes.begin(), p.nodes.end())) throw ConfigError("nodes not sorted");
    return p;
  });
}

void Partition::save(const fs::path& path) const { detail::write_json_file(path, to_json()); }

Partition Partition::load(const fs::path& path) {
  return from_json(detail::read_json_file(path, "partition document"));
}

// --- records -------------------------------------------------------------------

std::uint32_t CommunityRecord::layer_span() const {
  if (members.empty()) return 0;
  const auto [lo, hi] = std::minmax_element(members.begin(), members.end(),
                                            [](const FeatureId& a, const FeatureId& b) { return a.layer < b.layer; });
  return hi->layer - lo->layer + 1;
}

json CommunityRecord::to_json() const {
  json by_layer = json::object();
  for (const auto& [layer, v] : intra_cosine_by_layer) by_layer[std::to_string(layer)] = v;
  return {{"name", name},
          {"measure", measure_name(measure)},
          {"algorithm", algorithm},
          {"quality", quality},
          {"threshold", threshold},
          {"id", id},
          {"size", size()},
          {"layer_span", layer_span()},
          {"members", ids_json(members)},
          {"intra_cosine_by_layer", by_layer},
          {"intra_cosine", intra_cosine ? json(*intra_cosine) : json(nullptr)}};
}

CommunityRecord CommunityRecord::from_json(const json& doc) {
  return parse_or_format_error("community record", [&] {
    CommunityRecord r;
    r.name = doc.at("name").get<std::string>();
    r.measure = parse_measure(doc.at("measure").get<std::string>());
    r.algorithm = doc.at("algorithm").get<std::string>();
    r.quality = doc.value("quality", "");
    r.threshold = doc.at("threshold").get<double>();
    r.id = doc.at("id").get<std::uint32_t>();
    r.members = ids_from(doc.at("members"));
    if (doc.contains("intra_cosine_by_layer")) {
      for (const auto& [k, v] : doc["intra_cosine_by_layer"].items()) {
        r.intra_cosine_by_layer[static_cast<std::uint32_t>(std::stoul(k))] = v.get<double>();
      }
    }
    if (doc.contains("intra_cosine") && !doc["intra_cosine"].is_null()) r.intra_cosine = doc["intra_cosine"].get<double>();
    return r;
  });
}

std::string community_name(Measure measure, std::string_view algorithm, std::string_view quality, double threshold,
                           std::size_t size, std::uint32_t id) {
  std::string out(measure_name(measure));
  out += '_';
  out += algorithm;
  if (algorithm == "leiden" && !quality.empty()) {
    out += '_';
    out += quality;
  }
  out += "_threshold_" + format_number(threshold) + "_size_" + std::to_string(size) + "_" + std::to_string(id);
  return out;
}

namespace {

bool passes(const CommunityRecord& r, const CommunityFilter& f) {
  if (r.size() < f.min_size) return false;
  if (f.max_size && r.size() > *f.max_size) return false;
  if (r.layer_span() < f.min_layer_span) return false;
  if (f.max_layer_span && r.layer_span() > *f.max_layer_span) return false;
  return true;
}

}  // namespace

std::vector<CommunityRecord> extract_communities(const Partition& partition, const FeatureGraph& graph,
                                                 const CommunityFilter& filter) {
  const auto nodes = graph.nodes();
  if (partition.nodes.size() != nodes.size() || !std::equal(nodes.begin(), nodes.end(), partition.nodes.begin())) {
    throw ConfigError("partition was computed on a different node set");
  }
  const auto& prov = graph.provenance();
  std::vector<CommunityRecord> out;
  const auto groups = partition.groups();
  for (std::uint32_t c = 0; c < groups.size(); ++c) {
    CommunityRecord r;
    r.measure = prov.measure;
    r.algorithm = partition.algorithm;
    r.quality = partition.algorithm == "leiden" ? partition.quality : "";
    r.threshold = prov.threshold;
    r.id = c;
    r.members = groups[c];
    r.name = community_name(r.measure, r.algorithm, r.quality, r.threshold, r.size(), c);
    if (passes(r, filter)) out.push_back(std::move(r));
  }
  return out;
}

void annotate_intra_layer_cosine(CommunityRecord& record, const SaeLookup& saes) {
  std::map<std::uint32_t, std::vector<std::uint32_t>> by_layer;
  for (const auto& id : record.members) by_layer[id.layer].push_back(id.index);
  record.intra_cosine_by_layer.clear();
  record.intra_cosine.reset();
  for (const auto& [layer, features] : by_layer) {
    if (features.size() < 2) continue;
    const SaeWeights* sae = saes ? saes(layer) : nullptr;
    if (!sae) throw MissingInputError("no SAE weights for layer " + std::to_string(layer));
    const double v = intra_layer_cosine(*sae, features);
    record.intra_cosine_by_layer[layer] = v;
    record.intra_cosine = record.intra_cosine ? std::min(*record.intra_cosine, v) : v;
  }
}

std::vector<CommunityRecord> filter_records(const std::vector<CommunityRecord>& records,
                                            const CommunityFilter& filter) {
  std::vector<CommunityRecord> out;
  for (const auto& r : records) {
    if (passes(r, filter)) out.push_back(r);
  }
  return out;
}

// --- store -----------------------------------------------------------------------

json CommunityStore::to_json() const {
  json recs = json::array();
  for (const auto& r : records) recs.push_back(r.to_json());
  return {{"format", "saegraph.communities"},
          {"measure", measure_name(measure)},
          {"algorithm", algorithm},
          {"quality", quality},
          {"threshold", threshold},
          {"communities", recs}};
}

CommunityStore CommunityStore::from_json(const json& doc) {
  return parse_or_format_error("community store", [&] {
    CommunityStore s;
    s.measure = parse_measure(doc.at("measure").get<std::string>());
    s.algorithm = doc.at("algorithm").get<std::string>();
    s.quality = doc.value("quality", "");
    s.threshold = doc.at("threshold").get<double>();
    for (const auto& r : doc.at("communities")) s.records.push_back(CommunityRecord::from_json(r));
    return s;
  });
}

void CommunityStore::save(const fs::path& path) const { detail::write_json_file(path, to_json()); }

CommunityStore CommunityStore::load(const fs::path& path) {
  return from_json(detail::read_json_file(path, "community store"));
}

}  // namespace saegraph
