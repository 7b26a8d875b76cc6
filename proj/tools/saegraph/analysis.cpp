// classify, curve, gates, project-errors, ablation-bins, calibrate,
// compare-matrices, histogram.

#include <fstream>
#include <iostream>
#include <map>

#include "context.hpp"
#include "saegraph/graphkit.hpp"
#include "saegraph/motifs.hpp"
#include "saegraph/saemath.hpp"

namespace saegraph::cli {

using nlohmann::json;

namespace {

struct MatrixSource {
  fs::path sims = ".";
  std::vector<fs::path> matrices;

  void add_to(CLI::App* sub) {
    sub->add_option("--sims", sims, "Directory written by compute-sims")->capture_default_str();
    sub->add_option("--matrix", matrices, "Explicit matrix files (instead of --sims)");
  }
};

void add_classify(CLI::App& app, std::vector<Command>& commands) {
  struct Options {
    MatrixSource source;
    std::string measure = "pearson";
    double threshold = 0.95;
  };
  auto o = std::make_shared<Options>();
  auto* sub = app.add_subcommand("classify", "Pass-through / disappearing / appearing counts per layer");
  o->source.add_to(sub);
  sub->add_option("--measure", o->measure)->capture_default_str();
  sub->add_option("--threshold", o->threshold, "Best neighbor value >= threshold passes through")
      ->capture_default_str();
  commands.push_back({sub, [o](Context& ctx) {
    const Measure measure = parse_measure(o->measure);
    const auto matrices = load_matrices(ctx, o->source.matrices, o->source.sims, measure);
    const auto report = classify_features(matrices, o->threshold);
    ctx.write_json("classification.json", report.to_json(true));
    const auto table = report.table();
    std::ofstream(ctx.output("classification.txt")) << table;
    std::cout << table;
  }});
}

void add_curve(CLI::App& app, std::vector<Command>& commands) {
  struct Options {
    MatrixSource source;
    std::string measure = "pearson";
    std::vector<double> thresholds{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99};
  };
  auto o = std::make_shared<Options>();
  auto* sub = app.add_subcommand("curve", "Downstream neighbor counts as the threshold varies");
  o->source.add_to(sub);
  sub->add_option("--measure", o->measure)->capture_default_str();
  sub->add_option("--thresholds", o->thresholds)->delimiter(',')->capture_default_str();
  commands.push_back({sub, [o](Context& ctx) {
    const Measure measure = parse_measure(o->measure);
    const auto matrices = load_matrices(ctx, o->source.matrices, o->source.sims, measure);
    json pairs = json::array();
    for (const auto& m : matrices) {
      pairs.push_back({{"up_layer", m.meta().up_layer},
                       {"curve", curve_json(neighbor_threshold_curve(m, o->thresholds))}});
    }
    ctx.write_json("curve.json", {{"format", "saegraph.curves"}, {"measure", o->measure}, {"pairs", pairs}});
  }});
}

void add_gates(CLI::App& app, std::vector<Command>& commands) {
  struct Options {
    MatrixSource source;
    std::vector<std::string> measures{"necessity,sufficiency"};
    GateConfig config;
  };
  auto o = std::make_shared<Options>();
  auto* sub = app.add_subcommand("gates", "AND (necessity) and OR (sufficiency) gate candidates");
  o->source.add_to(sub);
  sub->add_option("--measures", o->measures)->delimiter(',')->capture_default_str();
  sub->add_option("--min-sim", o->config.min_sim)->capture_default_str();
  sub->add_option("--min-arity", o->config.min_arity)->capture_default_str();
  sub->add_option("--max-arity", o->config.max_arity)->capture_default_str();
  sub->add_flag("--allow-any-measure", o->config.allow_any_measure, "Accept other measures for comparison runs");
  commands.push_back({sub, [o](Context& ctx) {
    o->config.validate();
    std::vector<GateCandidate> gates;
    for (const Measure m : parse_measures(o->measures)) {
      for (const auto& matrix : load_matrices(ctx, o->source.matrices, o->source.sims, m)) {
        if (matrix.meta().measure != m) continue;
        const auto found = find_gates(matrix, o->config);
        gates.insert(gates.end(), found.begin(), found.end());
      }
    }
    ctx.progress(std::to_string(gates.size()) + " gate candidates");
    ctx.write_json("gates.json", gates_json(gates));
  }});
}

void add_project_errors(CLI::App& app, std::vector<Command>& commands) {
  struct Options {
    fs::path dataset;
    fs::path max;
    fs::path residuals;
    fs::path sae_k;
    fs::path sae_next;
    fs::path necessity;
    ProjectionConfig config;
    std::vector<std::uint32_t> features;
  };
  auto o = std::make_shared<Options>();
  auto* sub = app.add_subcommand("project-errors",
                                 "Project layer k+1 reconstruction errors onto disappearing layer-k features");
  sub->add_option("--dataset", o->dataset, "Dataset manifest")->required();
  sub->add_option("--max", o->max, "Max activation table")->required();
  sub->add_option("--residuals", o->residuals, "Layer k+1 residual stream")->required();
  sub->add_option("--sae-k", o->sae_k, "Layer k SAE weights")->required();
  sub->add_option("--sae-next", o->sae_next, "Layer k+1 SAE weights")->required();
  sub->add_option("--necessity", o->necessity, "Necessity matrix for (k, k+1)")->required();
  sub->add_option("--necessity-max", o->config.necessity_max)->capture_default_str();
  sub->add_option("--act-min-frac", o->config.act_min_frac, "Sample tokens with act >= frac * max")
      ->capture_default_str();
  sub->add_option("--fire-frac", o->config.fire_frac, "Fit the slope on tokens with act >= frac * max")
      ->capture_default_str();
  sub->add_option("--feature", o->features, "Study these layer-k indices instead");
  commands.push_back({sub, [o](Context& ctx) {
    const auto manifest = DatasetManifest::load(o->dataset);
    ctx.input_dataset(o->dataset, manifest);
    for (const auto* p : {&o->max, &o->residuals, &o->sae_k, &o->sae_next, &o->necessity}) ctx.input(*p);
    auto config = o->config;
    if (!o->features.empty()) config.features = o->features;
    const auto result =
        disappearance_projection(manifest, MaxActivationTable::load(o->max), o->residuals, SaeWeights::load(o->sae_k),
                                 SaeWeights::load(o->sae_next), SimilarityMatrix::load(o->necessity), config);
    ctx.progress(std::to_string(result.selected.size()) + " features, " + std::to_string(result.samples.size()) +
                 " samples");
    ctx.write_json("projection.json", result.to_json());
  }});
}

void add_ablation_bins(CLI::App& app, std::vector<Command>& commands) {
  struct Options {
    fs::path records;
    std::size_t bins = 10;
  };
  auto o = std::make_shared<Options>();
  auto* sub = app.add_subcommand("ablation-bins", "Bin ablation effects by similarity value");
  sub->add_option("--records", o->records, "measure,layer,up,down,similarity,effect CSV")->required();
  sub->add_option("--bins", o->bins)->capture_default_str();
  commands.push_back({sub, [o](Context& ctx) {
    if (o->bins == 0) throw ConfigError("--bins must be positive");
    ctx.input(o->records);
    std::map<Measure, std::vector<AblationRecord>> by_measure;
    for (const auto& r : load_ablation_records(o->records)) by_measure[r.measure].push_back(r);
    json summaries = json::array();
    for (const auto& [measure, records] : by_measure) summaries.push_back(ablation_bins(records, o->bins).to_json());
    ctx.write_json("ablation_bins.json", {{"format", "saegraph.ablation"}, {"summaries", summaries}});
  }});
}

void add_calibrate(CLI::App& app, std::vector<Command>& commands) {
  struct Options {
    fs::path matrix;
    fs::path annotations;
    fs::path answers;
    CalibrationConfig config;
  };
  auto o = std::make_shared<Options>();
  auto* sub = app.add_subcommand("calibrate", "Interactive binary search for an equivalence threshold");
  sub->add_option("--matrix", o->matrix, "Similarity matrix")->required();
  sub->add_option("--annotations", o->annotations, "layer,index,explanation CSV");
  sub->add_option("--answers", o->answers, "File of y/n answers (default: standard input)");
  sub->add_option("--lo", o->config.lo)->capture_default_str();
  sub->add_option("--hi", o->config.hi)->capture_default_str();
  sub->add_option("--start", o->config.start)->capture_default_str();
  sub->add_option("--width", o->config.width, "Stop once hi - lo <= width")->capture_default_str();
  sub->add_option("--pairs", o->config.pairs_per_probe, "Pairs shown per probe")->capture_default_str();
  sub->add_option("--window", o->config.window)->capture_default_str();
  sub->add_option("--agree-fraction", o->config.agree_fraction)->capture_default_str();
  sub->add_option("--max-probes", o->config.max_probes)->capture_default_str();
  sub->add_option("--seed", o->config.seed)->capture_default_str();
  commands.push_back({sub, [o](Context& ctx) {
    o->config.validate();
    ctx.input(o->matrix);
    std::map<FeatureId, std::string> explanations;
    if (!o->annotations.empty()) {
      ctx.input(o->annotations);
      explanations = load_explanations(o->annotations);
    }
    ctx.seeds["calibrate"] = o->config.seed;
    std::ifstream answers;
    if (!o->answers.empty()) {
      ctx.input(o->answers);
      answers.open(o->answers);
    }
    std::istream& in = o->answers.empty() ? std::cin : answers;
    const auto result =
        calibrate_threshold(SimilarityMatrix::load(o->matrix), explanations, terminal_judge(in, std::cerr), o->config);
    ctx.write_json("calibration.json", result.to_json());
    std::cout << format_number(result.lo) << ' ' << format_number(result.hi) << '\n';
  }});
}

json aggregate(const std::vector<MatrixComparison>& parts) {
  std::uint64_t bp = 0, o1 = 0, o2 = 0, ba = 0;
  double diff_sum = 0.0, max_diff = 0.0;
  for (const auto& c : parts) {
    bp += c.both_present;
    o1 += c.only_first;
    o2 += c.only_second;
    ba += c.both_absent;
    diff_sum += c.mean_abs_diff * static_cast<double>(c.both_present);
    max_diff = std::max(max_diff, c.max_abs_diff);
  }
  const std::uint64_t total = bp + o1 + o2 + ba;
  return {{"both_present", bp},
          {"only_first", o1},
          {"only_second", o2},
          {"both_absent", ba},
          {"absent_agreement", total == 0 ? 1.0 : static_cast<double>(bp + ba) / static_cast<double>(total)},
          {"mean_abs_diff", bp == 0 ? 0.0 : diff_sum / static_cast<double>(bp)},
          {"max_abs_diff", max_diff}};
}

void add_compare(CLI::App& app, std::vector<Command>& commands) {
  struct Options {
    fs::path first;
    fs::path second;
    std::string measure = "pearson";
    std::size_t bins = 50;
  };
  auto o = std::make_shared<Options>();
  auto* sub = app.add_subcommand("compare-matrices", "Absence agreement and value differences of two runs");
  sub->add_option("--first", o->first, "Matrix file or compute-sims directory")->required();
  sub->add_option("--second", o->second, "Matrix file or compute-sims directory")->required();
  sub->add_option("--measure", o->measure, "Measure to compare when given directories")->capture_default_str();
  sub->add_option("--bins", o->bins, "Difference histogram bins")->capture_default_str();
  commands.push_back({sub, [o](Context& ctx) {
    std::vector<fs::path> a{o->first}, b{o->second};
    if (fs::is_directory(o->first) || fs::is_directory(o->second)) {
      const Measure m = parse_measure(o->measure);
      a = measure_files(o->first, m);
      b = measure_files(o->second, m);
      if (a.size() != b.size()) throw DimensionError("runs cover different layer counts");
    }
    std::vector<MatrixComparison> parts;
    json pairs = json::array();
    for (std::size_t k = 0; k < a.size(); ++k) {
      ctx.input(a[k]);
      ctx.input(b[k]);
      parts.push_back(compare_matrices(SimilarityMatrix::load(a[k]), SimilarityMatrix::load(b[k]), o->bins));
      pairs.push_back(parts.back().to_json());
    }
    const json total = aggregate(parts);
    ctx.write_json("comparison.json", {{"format", "saegraph.comparison"}, {"total", total}, {"pairs", pairs}});
    std::cout << "absent_agreement " << format_number(total["absent_agreement"].get<double>()) << "\nmean_abs_diff "
              << format_number(total["mean_abs_diff"].get<double>()) << '\n';
  }});
}

void add_histogram(CLI::App& app, std::vector<Command>& commands) {
  struct Options {
    MatrixSource source;
    std::string measure = "pearson";
    std::size_t bins = 20;
  };
  auto o = std::make_shared<Options>();
  auto* sub = app.add_subcommand("histogram", "Value histograms with absent pairs counted separately");
  o->source.add_to(sub);
  sub->add_option("--measure", o->measure)->capture_default_str();
  sub->add_option("--bins", o->bins)->capture_default_str();
  commands.push_back({sub, [o](Context& ctx) {
    const auto matrices = load_matrices(ctx, o->source.matrices, o->source.sims, parse_measure(o->measure));
    json pairs = json::array();
    for (const auto& m : matrices) {
      auto h = similarity_histogram(m, o->bins).to_json();
      h["up_layer"] = m.meta().up_layer;
      h["measure"] = measure_name(m.meta().measure);
      pairs.push_back(h);
    }
    ctx.write_json("histogram.json", {{"format", "saegraph.histograms"}, {"pairs", pairs}});
  }});
}

}  // namespace

void add_analysis_commands(CLI::App& app, std::vector<Command>& commands) {
  add_classify(app, commands);
  add_curve(app, commands);
  add_gates(app, commands);
  add_project_errors(app, commands);
  add_ablation_bins(app, commands);
  add_calibrate(app, commands);
  add_compare(app, commands);
  add_histogram(app, commands);
}

}  // namespace saegraph::cli
