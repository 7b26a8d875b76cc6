#include "saegraph/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <unordered_set>

#include "common/json_io.hpp"

namespace saegraph {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kScaleStream = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kPlantStream = 0xc2b2ae3d27d4eb4fULL;

void check_probability(double p, const std::string& what) {
  if (!(p > 0.0 && p < 1.0)) throw ConfigError(what + " must lie in (0, 1)");
}

json id_list(const std::vector<FeatureId>& ids) {
  json out = json::array();
  for (const auto& id : ids) out.push_back(id.str());
  return out;
}

std::vector<FeatureId> chain_members(const ChainMotif& c) {
  std::vector<FeatureId> ids;
  for (std::uint32_t i = 0; i < c.indices.size(); ++i) {
    ids.push_back({c.start_layer + i, c.indices[i]});
  }
  return ids;
}

}  // namespace

void SynthSpec::validate() const {
  if (n_layers == 0 || n_features == 0) throw ConfigError("synth dimensions must be nonzero");
  if (tokens_per_shard == 0) throw ConfigError("tokens_per_shard must be nonzero");
  if (!(background_p >= 0.0 && background_p < 1.0)) {
    throw ConfigError("background_p must lie in [0, 1)");
  }
  if (!(min_rel > 0.0 && min_rel <= 1.0)) throw ConfigError("min_rel must lie in (0, 1]");
  if (!(scale_lo > 0.0 && scale_hi >= scale_lo)) throw ConfigError("invalid magnitude scale range");

  std::unordered_set<FeatureId, FeatureIdHash> used;
  const auto claim = [&](FeatureId id) {
    if (id.layer >= n_layers || id.index >= n_features) {
      throw ConfigError("motif feature " + id.str() + " out of range");
    }
    if (!used.insert(id).second) throw ConfigError("overlapping motif assignments at " + id.str());
  };
  for (const auto& c : chains) {
    if (c.indices.size() < 2) throw ConfigError("a chain needs at least two members");
    if (!(c.sigma >= 0.0)) throw ConfigError("chain sigma must be >= 0");
    check_probability(c.fire_p, "chain fire_p");
    for (const auto& id : chain_members(c)) claim(id);
  }
  for (const auto* gates : {&and_gates, &or_gates}) {
    for (const auto& g : *gates) {
      if (g.layer + 1 >= n_layers) throw ConfigError("gate child layer out of range");
      check_probability(g.parent_p, "gate parent_p");
      claim({g.layer, g.parents[0]});
      claim({g.layer, g.parents[1]});
      claim({g.layer + 1, g.child});
    }
  }
  for (const auto& c : communities) {
    if (c.members.empty()) throw ConfigError("a community block needs members");
    check_probability(c.latent_p, "community latent_p");
    check_probability(c.member_p, "community member_p");
    for (const auto& id : c.members) claim(id);
  }
}

json SynthSpec::to_json() const {
  json chain_list = json::array();
  for (const auto& c : chains) {
    chain_list.push_back({{"start_layer", c.start_layer},
                          {"indices", c.indices},
                          {"sigma", c.sigma},
                          {"fire_p", c.fire_p}});
  }
  const auto gates_json = [](const std::vector<GateMotif>& gates) {
    json out = json::array();
    for (const auto& g : gates) {
      out.push_back({{"layer", g.layer},
                     {"parents", {g.parents[0], g.parents[1]}},
                     {"child", g.child},
                     {"parent_p", g.parent_p}});
    }
    return out;
  };
  json comm_list = json::array();
  for (const auto& c : communities) {
    comm_list.push_back(
        {{"members", id_list(c.members)}, {"latent_p", c.latent_p}, {"member_p", c.member_p}});
  }
  return {{"n_layers", n_layers},
          {"n_features", n_features},
          {"n_tokens", n_tokens},
          {"background_p", background_p},
          {"min_rel", min_rel},
          {"scale_lo", scale_lo},
          {"scale_hi", scale_hi},
          {"chains", chain_list},
          {"and_gates", gates_json(and_gates)},
          {"or_gates", gates_json(or_gates)},
          {"communities", comm_list},
          {"seed", seed},
          {"tokens_per_shard", tokens_per_shard}};
}

SynthSpec SynthSpec::from_json(const json& doc) {
  SynthSpec s;
  try {
    s.n_layers = doc.at("n_layers").get<std::uint32_t>();
    s.n_features = doc.at("n_features").get<std::uint32_t>();
    s.n_tokens = doc.at("n_tokens").get<std::uint64_t>();
    s.background_p = doc.value("background_p", s.background_p);
    s.min_rel = doc.value("min_rel", s.min_rel);
    s.scale_lo = doc.value("scale_lo", s.scale_lo);
    s.scale_hi = doc.value("scale_hi", s.scale_hi);
    s.seed = doc.value("seed", s.seed);
    s.tokens_per_shard = doc.value("tokens_per_shard", s.tokens_per_shard);
    for (const auto& c : doc.value("chains", json::array())) {
      s.chains.push_back({c.value("start_layer", 0u), c.at("indices").get<std::vector<std::uint32_t>>(),
                          c.value("sigma", 0.0), c.value("fire_p", 0.05)});
    }
    const auto read_gates = [](const json& list, std::vector<GateMotif>& out) {
      for (const auto& g : list) {
        GateMotif gate;
        gate.layer = g.at("layer").get<std::uint32_t>();
        const auto parents = g.at("parents").get<std::vector<std::uint32_t>>();
        if (parents.size() != 2) throw ConfigError("gates take exactly two parents");
        gate.parents = {parents[0], parents[1]};
        gate.child = g.at("child").get<std::uint32_t>();
        gate.parent_p = g.value("parent_p", gate.parent_p);
        out.push_back(gate);
      }
    };
    read_gates(doc.value("and_gates", json::array()), s.and_gates);
    read_gates(doc.value("or_gates", json::array()), s.or_gates);
    for (const auto& c : doc.value("communities", json::array())) {
      CommunityMotif m;
      for (const auto& id : c.at("members")) m.members.push_back(FeatureId::parse(id.get<std::string>()));
      m.latent_p = c.value("latent_p", m.latent_p);
      m.member_p = c.value("member_p", m.member_p);
      s.communities.push_back(std::move(m));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synth spec: ") + e.what());
  }
  return s;
}

void plant_motifs(SynthSpec& spec, const PlantRequest& request) {
  std::mt19937_64 rng(spec.seed ^ kPlantStream);
  // Free features per layer, in random order. Features already claimed by the
  // spec are excluded.
  std::unordered_set<FeatureId, FeatureIdHash> taken;
  for (const auto& c : spec.chains) {
    for (const auto& id : chain_members(c)) taken.insert(id);
  }
  for (const auto* gates : {&spec.and_gates, &spec.or_gates}) {
    for (const auto& g : *gates) {
      taken.insert({g.layer, g.parents[0]});
      taken.insert({g.layer, g.parents[1]});
      taken.insert({g.layer + 1, g.child});
    }
  }
  for (const auto& c : spec.communities) taken.insert(c.members.begin(), c.members.end());

  std::vector<std::vector<std::uint32_t>> pool(spec.n_layers);
  for (std::uint32_t k = 0; k < spec.n_layers; ++k) {
    for (std::uint32_t i = 0; i < spec.n_features; ++i) {
      if (!taken.contains({k, i})) pool[k].push_back(i);
    }
    std::shuffle(pool[k].begin(), pool[k].end(), rng);
  }
  const auto take = [&](std::uint32_t layer) {
    if (pool[layer].empty()) throw ConfigError("not enough free features in layer " + std::to_string(layer));
    const auto idx = pool[layer].back();
    pool[layer].pop_back();
    return idx;
  };

  for (std::uint32_t c = 0; c < request.chains; ++c) {
    ChainMotif chain;
    chain.sigma = request.chain_sigma;
    chain.fire_p = request.chain_fire_p;
    for (std::uint32_t k = 0; k < spec.n_layers; ++k) chain.indices.push_back(take(k));
    spec.chains.push_back(std::move(chain));
  }
  if ((request.and_gates > 0 || request.or_gates > 0) && spec.n_layers < 2) {
    throw ConfigError("gates need at least two layers");
  }
  const auto plant_gates = [&](std::uint32_t count, std::vector<GateMotif>& out) {
    for (std::uint32_t g = 0; g < count; ++g) {
      GateMotif gate;
      gate.layer = g % (spec.n_layers - 1);
      gate.parents = {take(gate.layer), take(gate.layer)};
      gate.child = take(gate.layer + 1);
      gate.parent_p = request.gate_parent_p;
      out.push_back(gate);
    }
  };
  plant_gates(request.and_gates, spec.and_gates);
  plant_gates(request.or_gates, spec.or_gates);
  for (std::uint32_t c = 0; c < request.communities; ++c) {
    CommunityMotif block;
    block.latent_p = request.community_latent_p;
    for (std::uint32_t k = 0; k < spec.n_layers; ++k) {
      for (std::uint32_t w = 0; w < request.community_width; ++w) block.members.push_back({k, take(k)});
    }
    std::sort(block.members.begin(), block.members.end());
    spec.communities.push_back(std::move(block));
  }
}

// --- stream -----------------------------------------------------------------

SynthStream::SynthStream(SynthSpec spec) : spec_(std::move(spec)), rng_(spec_.seed) {
  spec_.validate();
  const std::size_t total = std::size_t{spec_.n_layers} * spec_.n_features;
  std::mt19937_64 scale_rng(spec_.seed ^ kScaleStream);
  std::uniform_real_distribution<double> scale_dist(spec_.scale_lo, spec_.scale_hi);
  scales_.resize(total);
  for (auto& s : scales_) s = static_cast<float>(scale_dist(scale_rng));

  is_motif_.assign(total, 0);
  const auto mark = [&](FeatureId id) { is_motif_[std::size_t{id.layer} * spec_.n_features + id.index] = 1; };
  for (const auto& c : spec_.chains) {
    for (const auto& id : chain_members(c)) mark(id);
  }
  for (const auto* gates : {&spec_.and_gates, &spec_.or_gates}) {
    for (const auto& g : *gates) {
      mark({g.layer, g.parents[0]});
      mark({g.layer, g.parents[1]});
      mark({g.layer + 1, g.child});
    }
  }
  for (const auto& c : spec_.communities) {
    for (const auto& id : c.members) mark(id);
  }
  layers_.resize(spec_.n_layers);
}

float SynthStream::draw_magnitude(std::uint32_t layer, std::uint32_t index) {
  std::uniform_real_distribution<double> u(spec_.min_rel, 1.0);
  return static_cast<float>(u(rng_)) * scale({layer, index});
}

bool SynthStream::next(TokenFrame& frame) {
  if (position_ >= spec_.n_tokens) return false;
  for (auto& l : layers_) l.clear();
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  if (spec_.background_p > 0.0) {
    std::geometric_distribution<std::uint32_t> gap(spec_.background_p);
    for (std::uint32_t k = 0; k < spec_.n_layers; ++k) {
      const std::uint8_t* motif = is_motif_.data() + std::size_t{k} * spec_.n_features;
      std::uint64_t idx = 0;
      while (true) {
        idx += gap(rng_);
        if (idx >= spec_.n_features) break;
        const auto i = static_cast<std::uint32_t>(idx);
        if (!motif[i]) layers_[k].push_back({i, draw_magnitude(k, i)});
        ++idx;
      }
    }
  }

  for (const auto& c : spec_.chains) {
    if (unit(rng_) >= c.fire_p) continue;
    std::normal_distribution<double> noise(0.0, c.sigma);
    double value = draw_magnitude(c.start_layer, c.indices[0]);
    layers_[c.start_layer].push_back({c.indices[0], static_cast<float>(value)});
    for (std::uint32_t m = 1; m < c.indices.size(); ++m) {
      if (c.sigma > 0.0) value += noise(rng_);
      // Noise cannot silence a member; a firing parent always propagates.
      const float stored = std::max(static_cast<float>(value), 1e-6f);
      value = stored;
      layers_[c.start_layer + m].push_back({c.indices[m], stored});
    }
  }

  const auto run_gate = [&](const GateMotif& g, bool is_and) {
    const bool a = unit(rng_) < g.parent_p;
    const bool b = unit(rng_) < g.parent_p;
    if (a) layers_[g.layer].push_back({g.parents[0], draw_magnitude(g.layer, g.parents[0])});
    if (b) layers_[g.layer].push_back({g.parents[1], draw_magnitude(g.layer, g.parents[1])});
    if (is_and ? (a && b) : (a || b)) {
      layers_[g.layer + 1].push_back({g.child, draw_magnitude(g.layer + 1, g.child)});
    }
  };
  for (const auto& g : spec_.and_gates) run_gate(g, true);
  for (const auto& g : spec_.or_gates) run_gate(g, false);

  for (const auto& c : spec_.communities) {
    if (unit(rng_) >= c.latent_p) continue;
    for (const auto& id : c.members) {
      if (unit(rng_) < c.member_p) layers_[id.layer].push_back({id.index, draw_magnitude(id.layer, id.index)});
    }
  }

  frame.reset(position_);
  for (auto& l : layers_) {
    std::sort(l.begin(), l.end(), [](const auto& x, const auto& y) { return x.index < y.index; });
    for (const auto& a : l) frame.add(a.index, a.value);
    frame.close_layer();
  }
  ++position_;
  return true;
}

// --- output -----------------------------------------------------------------

json ground_truth(const SynthSpec& spec) {
  json chains = json::array();
  for (const auto& c : spec.chains) {
    chains.push_back({{"members", id_list(chain_members(c))}, {"sigma", c.sigma}});
  }
  const auto gates = [](const std::vector<GateMotif>& list) {
    json out = json::array();
    for (const auto& g : list) {
      out.push_back({{"parents", id_list({{g.layer, g.parents[0]}, {g.layer, g.parents[1]}})},
                     {"child", FeatureId{g.layer + 1, g.child}.str()}});
    }
    return out;
  };
  json communities = json::array();
  for (std::size_t i = 0; i < spec.communities.size(); ++i) {
    communities.push_back({{"label", i}, {"members", id_list(spec.communities[i].members)}});
  }
  return {{"format", "saegraph.ground_truth"},
          {"seed", spec.seed},
          {"chains", chains},
          {"and_gates", gates(spec.and_gates)},
          {"or_gates", gates(spec.or_gates)},
          {"communities", communities},
          {"spec", spec.to_json()}};
}

SynthOutput synth_generate(const SynthSpec& spec, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  SynthStream stream(spec);
  SynthOutput out;
  out.manifest.n_layers = spec.n_layers;
  out.manifest.n_features = spec.n_features;
  out.manifest.n_tokens = spec.n_tokens;
  out.manifest.provenance = "synthetic (seed " + std::to_string(spec.seed) + ")";

  TokenFrame frame;
  std::uint64_t remaining = spec.n_tokens;
  std::size_t shard_no = 0;
  do {
    char name[32];
    std::snprintf(name, sizeof(name), "shard_%05zu.saea", shard_no++);
    const auto path = out_dir / name;
    ShardWriter writer(path, spec.n_layers, spec.n_features);
    const std::uint64_t count = std::min(remaining, spec.tokens_per_shard);
    for (std::uint64_t t = 0; t < count; ++t) {
      stream.next(frame);
      writer.write(frame);
    }
    writer.close();
    out.manifest.shards.push_back({path, count});
    remaining -= count;
  } while (remaining > 0);

  out.manifest_path = out_dir / "manifest.json";
  out.ground_truth_path = out_dir / "ground_truth.json";
  out.manifest.save(out.manifest_path);
  detail::write_json_file(out.ground_truth_path, ground_truth(spec));
  return out;
}

}  // namespace saegraph
