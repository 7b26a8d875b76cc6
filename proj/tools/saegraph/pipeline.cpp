// synth, scan-max, compute-sims, build-graph, communities.

#include <algorithm>
#include <map>

#include "common/json_io.hpp"
#include "context.hpp"
#include "saegraph/communities.hpp"
#include "saegraph/graphkit.hpp"
#include "saegraph/saemath.hpp"
#include "saegraph/simcore.hpp"
#include "saegraph/synth.hpp"

namespace saegraph::cli {

using nlohmann::json;

namespace {

void add_synth(CLI::App& app, std::vector<Command>& commands) {
  struct Options {
    fs::path spec;
    SynthSpec synth;
    PlantRequest plant;
  };
  auto o = std::make_shared<Options>();
  o->synth.n_layers = 3;
  o->synth.n_tokens = 10000;
  o->synth.tokens_per_shard = 100000;
  o->plant.chains = 4;
  o->plant.chain_sigma = 0.02;
  o->plant.and_gates = 2;
  o->plant.or_gates = 2;
  o->plant.communities = 1;
  auto* sub = app.add_subcommand("synth", "Generate a synthetic dataset with planted motifs");
  sub->add_option("--spec", o->spec, "Full synth spec JSON (motif flags are then ignored)");
  sub->add_option("--layers", o->synth.n_layers)->capture_default_str();
  sub->add_option("--features", o->synth.n_features, "Features per layer")->capture_default_str();
  sub->add_option("--tokens", o->synth.n_tokens)->capture_default_str();
  sub->add_option("--tokens-per-shard", o->synth.tokens_per_shard)->capture_default_str();
  sub->add_option("--background", o->synth.background_p, "Background firing probability")->capture_default_str();
  sub->add_option("--min-rel", o->synth.min_rel, "Lowest relative firing magnitude")->capture_default_str();
  auto* seed = sub->add_option("--seed", o->synth.seed)->capture_default_str();
  sub->add_option("--chains", o->plant.chains)->capture_default_str();
  sub->add_option("--chain-sigma", o->plant.chain_sigma)->capture_default_str();
  sub->add_option("--chain-fire-p", o->plant.chain_fire_p)->capture_default_str();
  sub->add_option("--and-gates", o->plant.and_gates)->capture_default_str();
  sub->add_option("--or-gates", o->plant.or_gates)->capture_default_str();
  sub->add_option("--gate-parent-p", o->plant.gate_parent_p)->capture_default_str();
  sub->add_option("--communities", o->plant.communities)->capture_default_str();
  sub->add_option("--community-width", o->plant.community_width, "Members per layer")->capture_default_str();
  sub->add_option("--community-latent-p", o->plant.community_latent_p)->capture_default_str();
  commands.push_back({sub, [o, seed](Context& ctx) {
    SynthSpec spec = o->synth;
    if (!o->spec.empty()) {
      ctx.input(o->spec);
      spec = SynthSpec::from_json(detail::read_json_file(o->spec, "synth spec"));
      if (seed->count() > 0) spec.seed = o->synth.seed;
    } else {
      plant_motifs(spec, o->plant);
    }
    spec.validate();
    ctx.seeds["synth"] = spec.seed;
    ctx.progress("generating " + std::to_string(spec.n_tokens) + " tokens");
    const auto out = synth_generate(spec, ctx.out);
    ctx.outputs.push_back(out.manifest_path);
    ctx.outputs.push_back(out.ground_truth_path);
    for (const auto& s : out.manifest.shards) ctx.outputs.push_back(s.path);
  }});
}

void add_scan_max(CLI::App& app, std::vector<Command>& commands) {
  auto dataset = std::make_shared<fs::path>();
  auto* sub = app.add_subcommand("scan-max", "Per-feature maximum activation over a dataset");
  sub->add_option("--dataset", *dataset, "Dataset manifest")->required();
  commands.push_back({sub, [dataset](Context& ctx) {
    const auto manifest = DatasetManifest::load(*dataset);
    ctx.input_dataset(*dataset, manifest);
    ctx.progress("scanning " + std::to_string(manifest.n_tokens) + " tokens");
    scan_max(manifest, ctx.workers).save(ctx.output("max.json"));
  }});
}

std::vector<SaeWeights> load_saes(Context& ctx, const std::vector<fs::path>& paths) {
  std::vector<SaeWeights> saes;
  for (const auto& p : paths) {
    ctx.input(p);
    saes.push_back(SaeWeights::load(p));
  }
  std::sort(saes.begin(), saes.end(), [](const auto& a, const auto& b) { return a.layer < b.layer; });
  return saes;
}

void add_compute_sims(CLI::App& app, std::vector<Command>& commands) {
  struct Options {
    fs::path dataset;
    fs::path max;
    std::vector<std::string> measures{"pearson,jaccard,sufficiency,necessity"};
    double theta = 0.2;
    std::uint64_t min_co = 10;
    bool no_min_co = false;
    double floor = 0.1;
    bool no_floor = false;
    std::uint32_t tile = kDefaultTileEdge;
    std::size_t memory_mib = 4096;
    std::string uncentered = "normalized";
    bool csv = false;
    std::vector<fs::path> saes;
  };
  auto o = std::make_shared<Options>();
  auto* sub = app.add_subcommand("compute-sims", "Similarity matrices for every adjacent layer pair");
  sub->add_option("--dataset", o->dataset, "Dataset manifest")->required();
  sub->add_option("--max", o->max, "Max activation table (default: scanned from the dataset)");
  sub->add_option("--measures", o->measures, "pearson,jaccard,sufficiency,necessity,uncentered,decoder_cosine")
      ->delimiter(',')
      ->capture_default_str();
  sub->add_option("--theta", o->theta, "Relative binarization threshold")->capture_default_str();
  sub->add_option("--min-co", o->min_co, "Pairs with at most this many co-activations are absent")
      ->capture_default_str();
  sub->add_flag("--no-min-co", o->no_min_co, "Disable the co-activation rule");
  sub->add_option("--floor", o->floor, "Sparsification floor")->capture_default_str();
  sub->add_flag("--no-floor", o->no_floor, "Keep unsparsified matrices");
  sub->add_option("--tile", o->tile, "Tile edge of the pair accumulator")->capture_default_str();
  sub->add_option("--memory-mib", o->memory_mib, "Budget for per-pair state")->capture_default_str();
  sub->add_option("--uncentered", o->uncentered, "normalized or mean_product")
      ->check(CLI::IsMember({"normalized", "mean_product"}))
      ->capture_default_str();
  sub->add_flag("--csv", o->csv, "Also write up,down,value CSV files");
  sub->add_option("--sae", o->saes, "SAE weight files, one per layer (decoder_cosine)");
  commands.push_back({sub, [o](Context& ctx) {
    if (!(o->theta >= 0.0 && o->theta <= 1.0)) throw ConfigError("--theta must lie in [0, 1]");
    if (!o->no_floor && !(o->floor >= 0.0 && o->floor <= 1.0)) throw ConfigError("--floor must lie in [0, 1]");
    if (o->tile == 0) throw ConfigError("--tile must be positive");
    auto measures = parse_measures(o->measures);
    const bool cosine =
        std::erase(measures, Measure::kDecoderCosine) > 0;
    const auto manifest = DatasetManifest::load(o->dataset);
    ctx.input_dataset(o->dataset, manifest);
    MaxActivationTable table;
    if (o->max.empty()) {
      ctx.progress("scanning maxima");
      table = scan_max(manifest, ctx.workers);
    } else {
      ctx.input(o->max);
      table = MaxActivationTable::load(o->max);
    }

    ComputeOptions opts;
    opts.measures = measures;
    opts.rule = {o->theta};
    opts.finalize.min_co = o->no_min_co ? std::nullopt : std::optional<std::uint64_t>(o->min_co);
    opts.finalize.uncentered_mode =
        o->uncentered == "normalized" ? UncenteredMode::kNormalized : UncenteredMode::kMeanProduct;
    opts.floor = o->no_floor ? std::nullopt : std::optional<double>(o->floor);
    opts.tile_edge = o->tile;
    opts.memory_budget = o->memory_mib << 20;
    opts.workers = ctx.workers;
    opts.progress = [&ctx](const std::string& m) { ctx.progress(m); };

    json summary = {{"format", "saegraph.sims"}, {"matrices", json::array()}};
    const auto record = [&](const SimilarityMatrix& m) {
      const auto name = matrix_file_name(m.meta().measure, m.meta().up_layer);
      m.save(ctx.output(name));
      if (o->csv) m.save_csv(ctx.output(name + ".csv"));
      summary["matrices"].push_back({{"file", name},
                                     {"measure", measure_name(m.meta().measure)},
                                     {"up_layer", m.meta().up_layer},
                                     {"entries", m.size()},
                                     {"invalid_co", m.meta().invalid_co},
                                     {"invalid_degenerate", m.meta().invalid_degenerate},
                                     {"below_floor", m.meta().below_floor}});
    };

    if (!measures.empty()) {
      const auto result = compute_similarities(manifest, table, opts);
      summary["passes"] = result.passes;
      summary["rows_per_pass"] = result.rows_per_pass;
      json co = json::array();
      for (std::size_t k = 0; k < result.co_stats.size(); ++k) {
        const auto& s = result.co_stats[k];
        co.push_back({{"up_layer", k},
                      {"at_or_below", s.at_or_below},
                      {"total_pairs", s.total_pairs},
                      {"fraction", s.fraction()}});
      }
      summary["co_activation"] = co;
      summary["never_threshold"] = opts.never_threshold;
      for (const auto& per_measure : result.matrices) {
        for (const auto& m : per_measure) record(m);
      }
    }
    if (cosine) {
      const auto saes = load_saes(ctx, o->saes);
      if (saes.size() != manifest.n_layers) {
        throw ConfigError("decoder_cosine needs one --sae file per layer (" + std::to_string(manifest.n_layers) +
                          ")");
      }
      for (std::uint32_t k = 0; k + 1 < saes.size(); ++k) {
        if (saes[k].layer != k) throw ConfigError("--sae files must cover layers 0.." + std::to_string(saes.size() - 1));
        ctx.progress("decoder cosine " + std::to_string(k) + "->" + std::to_string(k + 1));
        auto m = decoder_cosine(saes[k], saes[k + 1], o->no_floor ? 0.0 : o->floor);
        m.mutable_meta().up_layer = k;
        record(m);
      }
    }
    ctx.write_json("sims.json", summary);
  }});
}

void add_build_graph(CLI::App& app, std::vector<Command>& commands) {
  struct Options {
    fs::path sims = ".";
    std::vector<fs::path> matrices;
    std::string measure = "jaccard";
    double threshold = 0.1;
    bool unweighted = false;
    std::string nodes = "connected";
    std::vector<std::string> node_ids;
    fs::path annotations;
    std::string name = "graph.json";
  };
  auto o = std::make_shared<Options>();
  auto* sub = app.add_subcommand("build-graph", "Multipartite feature graph from similarity matrices");
  sub->add_option("--sims", o->sims, "Directory written by compute-sims")->capture_default_str();
  sub->add_option("--matrix", o->matrices, "Explicit matrix files (instead of --sims)");
  sub->add_option("--measure", o->measure)->capture_default_str();
  sub->add_option("--threshold", o->threshold, "Edges need value > threshold")->capture_default_str();
  sub->add_flag("--unweighted", o->unweighted, "Every edge gets weight 1");
  sub->add_option("--nodes", o->nodes, "connected, all or explicit")
      ->check(CLI::IsMember({"connected", "all", "explicit"}))
      ->capture_default_str();
  sub->add_option("--node", o->node_ids, "L/F ids for --nodes explicit");
  sub->add_option("--annotations", o->annotations, "layer,index,explanation CSV embedded in the document");
  sub->add_option("--name", o->name, "Output file name")->capture_default_str();
  commands.push_back({sub, [o](Context& ctx) {
    GraphConfig gc;
    gc.measure = parse_measure(o->measure);
    gc.threshold = o->threshold;
    gc.weighted = !o->unweighted;
    gc.node_rule = parse_node_rule(o->nodes);
    for (const auto& id : o->node_ids) gc.explicit_nodes.push_back(FeatureId::parse(id));
    const auto matrices = load_matrices(ctx, o->matrices, o->sims, gc.measure);
    const auto graph = build_graph(matrices, gc);
    GraphAnnotations notes;
    if (!o->annotations.empty()) {
      ctx.input(o->annotations);
      AnnotationLoadReport report;
      notes.explanations = load_explanations(o->annotations, &report);
      if (report.duplicates > 0) ctx.progress(std::to_string(report.duplicates) + " duplicate annotation rows");
    }
    ctx.progress(std::to_string(graph.nodes().size()) + " nodes, " + std::to_string(graph.edges().size()) +
                 " edges");
    save_graph(ctx.output(o->name), graph, notes);
  }});
}

void add_communities(CLI::App& app, std::vector<Command>& commands) {
  struct Options {
    fs::path graph;
    std::string algorithm = "leiden";
    QualityConfig quality;
    bool unweighted = false;
    CommunityFilter filter;
    std::vector<fs::path> saes;
  };
  auto o = std::make_shared<Options>();
  auto* sub = app.add_subcommand("communities", "Louvain or Leiden communities of a feature graph");
  sub->add_option("--graph", o->graph, "Graph document")->required();
  sub->add_option("--algorithm", o->algorithm)->check(CLI::IsMember({"louvain", "leiden"}))->capture_default_str();
  sub->add_option("--resolution", o->quality.resolution)->capture_default_str();
  sub->add_option("--seed", o->quality.seed)->capture_default_str();
  sub->add_option("--max-iterations", o->quality.max_iterations)->capture_default_str();
  sub->add_flag("--unweighted", o->unweighted, "Ignore edge weights");
  sub->add_option("--min-size", o->filter.min_size)->capture_default_str();
  sub->add_option("--max-size", o->filter.max_size);
  sub->add_option("--min-layer-span", o->filter.min_layer_span)->capture_default_str();
  sub->add_option("--max-layer-span", o->filter.max_layer_span);
  sub->add_option("--sae", o->saes, "SAE weight files for intra-layer decoder cosine");
  commands.push_back({sub, [o](Context& ctx) {
    ctx.input(o->graph);
    const auto graph = load_graph(o->graph);
    auto quality = o->quality;
    quality.weighted = !o->unweighted;
    quality.validate();
    ctx.seeds["communities"] = quality.seed;
    const Algorithm algorithm = parse_algorithm(o->algorithm);
    const auto partition = detect_communities(graph, algorithm, quality);
    partition.save(ctx.output("partition.json"));

    auto records = extract_communities(partition, graph, o->filter);
    if (!o->saes.empty()) {
      const auto saes = load_saes(ctx, o->saes);
      const SaeLookup lookup = [&saes](std::uint32_t layer) -> const SaeWeights* {
        for (const auto& s : saes) {
          if (s.layer == layer) return &s;
        }
        return nullptr;
      };
      for (auto& r : records) annotate_intra_layer_cosine(r, lookup);
    }
    CommunityStore store;
    store.measure = graph.provenance().measure;
    store.algorithm = partition.algorithm;
    store.quality = algorithm == Algorithm::kLeiden ? partition.quality : "";
    store.threshold = graph.provenance().threshold;
    store.records = std::move(records);
    store.save(ctx.output("communities.json"));
    ctx.progress(std::to_string(partition.n_communities()) + " communities, Q = " +
                 format_number(modularity(graph, partition.membership, quality.resolution, quality.weighted)) +
                 ", " + std::to_string(store.records.size()) + " kept");
  }});
}

}  // namespace

void add_pipeline_commands(CLI::App& app, std::vector<Command>& commands) {
  add_synth(app, commands);
  add_scan_max(app, commands);
  add_compute_sims(app, commands);
  add_build_graph(app, commands);
  add_communities(app, commands);
}

}  // namespace saegraph::cli
