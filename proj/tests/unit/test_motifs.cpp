#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "saegraph/motifs.hpp"
#include "saegraph/simcore.hpp"
#include "saegraph/synth.hpp"
#include "fixtures.hpp"
#include "test_support.hpp"

using namespace saegraph;
using saegraph::testing::TempDir;
using saegraph::testing::projection_fixture;

namespace {

SimilarityMatrix make_matrix(Measure m, std::uint32_t up_layer, std::uint32_t n, std::vector<SimilarityEntry> entries) {
  MatrixMeta meta;
  meta.measure = m;
  meta.up_layer = up_layer;
  meta.n_up = n;
  meta.n_down = n;
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.up != b.up ? a.up < b.up : a.down < b.down; });
  return SimilarityMatrix(meta, std::move(entries));
}

SimilarityMatrix random_matrix(std::mt19937_64& rng, Measure m, std::uint32_t up_layer, std::uint32_t n,
                               double density) {
  std::bernoulli_distribution keep(density);
  const auto range = measure_range(m);
  std::uniform_real_distribution<double> val(range.lo, range.hi);
  std::vector<SimilarityEntry> e;
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < n; ++j) {
      if (keep(rng)) e.push_back({i, j, val(rng)});
    }
  }
  return make_matrix(m, up_layer, n, std::move(e));
}

}  // namespace

// --- classification -------------------------------------------------------------

TEST_CASE("classification matches a direct scan") {
  std::mt19937_64 rng(3);
  for (int round = 0; round < 20; ++round) {
    const std::uint32_t n = 12;
    std::vector<SimilarityMatrix> ms;
    for (std::uint32_t k = 0; k < 3; ++k) ms.push_back(random_matrix(rng, Measure::kPearson, k, n, 0.15));
    const double t = 0.6;
    const auto r = classify_features(ms, t);
    REQUIRE(r.layers.size() == 4);
    for (std::uint32_t l = 0; l < 4; ++l) {
      std::uint64_t passed = 0, appearing = 0;
      for (std::uint32_t f = 0; f < n; ++f) {
        bool any_next = false, any_prev = false;
        for (std::uint32_t g = 0; g < n; ++g) {
          if (l < 3) {
            const auto v = ms[l].at(f, g);
            any_next = any_next || (v && *v >= t);
          }
          if (l > 0) {
            const auto v = ms[l - 1].at(g, f);
            any_prev = any_prev || (v && *v >= t);
          }
        }
        const auto& c = r.at({l, f});
        if (l < 3) {
          CHECK((c.forward == ForwardClass::kPassedThrough) == any_next);
          passed += any_next;
        } else {
          CHECK(c.forward == ForwardClass::kLastLayer);
        }
        if (l > 0) {
          CHECK((c.backward == BackwardClass::kAppearing) == !any_prev);
          appearing += !any_prev;
        } else {
          CHECK(c.backward == BackwardClass::kFirstLayer);
        }
      }
      const auto& counts = r.layers[l];
      CHECK(counts.passed_through == passed);
      CHECK(counts.appearing == appearing);
      if (l < 3) CHECK(counts.passed_through + counts.disappearing == n);
      if (l > 0) CHECK(counts.continued + counts.appearing == n);
    }
  }
}

TEST_CASE("classification is monotone in the threshold and inclusive") {
  std::mt19937_64 rng(9);
  std::vector<SimilarityMatrix> ms;
  for (std::uint32_t k = 0; k < 2; ++k) ms.push_back(random_matrix(rng, Measure::kPearson, k, 20, 0.3));
  std::uint64_t prev = UINT64_MAX;
  for (double t = -1.0; t <= 1.01; t += 0.05) {
    const auto r = classify_features(ms, t);
    const auto total = r.layers[0].passed_through + r.layers[1].passed_through;
    CHECK(total <= prev);
    prev = total;
  }
  const std::vector<SimilarityMatrix> exact{make_matrix(Measure::kPearson, 0, 2, {{0, 1, 0.95}, {1, 0, 1.0}})};
  const auto r = classify_features(exact, 0.95);
  CHECK(r.at({0, 0}).forward == ForwardClass::kPassedThrough);
  CHECK(r.at({0, 0}).best_next == Neighbor{{1, 1}, 0.95});
  CHECK(classify_features(exact, 1.0 + 1e-9).layers[0].passed_through == 0);
  const std::vector<SimilarityMatrix> empty{make_matrix(Measure::kPearson, 0, 2, {})};
  CHECK(classify_features(empty, 0.5).layers[0].disappearing == 2);
}

TEST_CASE("sigma 0 chains pass through at Pearson 0.95") {
  SynthSpec spec;
  spec.n_layers = 4;
  spec.n_features = 48;
  spec.n_tokens = 6000;
  spec.seed = 5;
  PlantRequest req;
  req.chains = 4;
  req.chain_sigma = 0.0;
  plant_motifs(spec, req);
  TempDir dir;
  const auto out = synth_generate(spec, dir.path());
  const auto table = scan_max(out.manifest);
  const auto res = compute_similarities(out.manifest, table, ComputeOptions{.measures = {Measure::kPearson}});
  const auto r = classify_features(res.matrices[0], 0.95);
  std::set<FeatureId> chain_members;
  for (const auto& c : spec.chains) {
    for (std::uint32_t m = 0; m + 1 < c.indices.size(); ++m) chain_members.insert({c.start_layer + m, c.indices[m]});
  }
  for (const auto& f : r.features) {
    if (f.forward == ForwardClass::kLastLayer) continue;
    CHECK((f.forward == ForwardClass::kPassedThrough) == chain_members.count(f.id));
  }
  const auto doc = r.to_json();
  CHECK(doc["layers"].size() == 4);
  CHECK(r.table().find("passed_through") != std::string::npos);
}

// --- curves ---------------------------------------------------------------------

TEST_CASE("neighbor threshold curve matches a direct scan") {
  std::mt19937_64 rng(4);
  const auto m = random_matrix(rng, Measure::kJaccard, 0, 16, 0.4);
  const std::vector<double> ts{0.0, 0.25, 0.5, 0.9, 2.0};
  const auto curve = neighbor_threshold_curve(m, ts);
  REQUIRE(curve.size() == ts.size());
  for (std::size_t k = 0; k < ts.size(); ++k) {
    std::vector<std::uint64_t> hist;
    for (std::uint32_t i = 0; i < 16; ++i) {
      std::uint64_t c = 0;
      for (std::uint32_t j = 0; j < 16; ++j) {
        const auto v = m.at(i, j);
        c += v && *v >= ts[k];
      }
      if (hist.size() <= c) hist.resize(c + 1, 0);
      ++hist[c];
    }
    CHECK(curve[k].counts == hist);
  }
  CHECK(curve.back().counts == std::vector<std::uint64_t>{16});
  std::vector<SimilarityEntry> dense;
  for (std::uint32_t i = 0; i < 4; ++i) {
    for (std::uint32_t j = 0; j < 4; ++j) dense.push_back({i, j, 0.5});
  }
  const double zero = 0.0;
  CHECK(neighbor_threshold_curve(make_matrix(Measure::kJaccard, 0, 4, dense), {&zero, 1})[0].counts ==
        std::vector<std::uint64_t>{0, 0, 0, 0, 4});
}

// --- calibration ------------------------------------------------------------------

TEST_CASE("calibration with a scripted judge brackets the true threshold") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<SimilarityEntry> e;
  for (std::uint32_t i = 0; i < 100; ++i) {
    for (std::uint32_t j = 0; j < 100; ++j) e.push_back({i, j, u(rng)});
  }
  const auto m = make_matrix(Measure::kPearson, 0, 100, e);
  const std::map<FeatureId, std::string> ann{{{0, 0}, "dogs"}};
  int calls = 0;
  const auto judge = [&](const PairSample& p) {
    ++calls;
    return p.value >= 0.9;
  };
  const auto r = calibrate_threshold(m, ann, judge);
  CHECK(r.converged);
  CHECK(r.lo <= 0.9);
  CHECK(r.hi >= 0.9);
  CHECK(r.hi - r.lo <= 0.02);
  CHECK(r.probes.size() <= 12);
  CHECK(r.probes.front().threshold == 0.5);
  CHECK(calls > 0);

  const auto always = calibrate_threshold(m, ann, [](const PairSample&) { return true; });
  CHECK(always.lo == 0.0);
  CHECK(always.hi <= 0.02);
}

TEST_CASE("calibration skips probes without nearby pairs") {
  const auto m = make_matrix(Measure::kPearson, 0, 2, {{0, 0, 0.2}});
  const auto r = calibrate_threshold(m, {}, [](const PairSample& p) { return p.value >= 0.1; });
  REQUIRE(!r.probes.empty());
  CHECK(r.probes.front().skipped);
  CHECK(r.hi <= 0.5);
  CalibrationConfig bad;
  bad.start = 1.5;
  CHECK_THROWS_AS((void)calibrate_threshold(m, {}, [](const PairSample&) { return true; }, bad), ConfigError);
}

TEST_CASE("terminal judge reads answers") {
  std::istringstream in("maybe\ny\nn\n");
  std::ostringstream out;
  const auto judge = terminal_judge(in, out);
  const PairSample p{{0, 1}, {1, 2}, 0.97, "cats", ""};
  CHECK(judge(p));
  CHECK_FALSE(judge(p));
  CHECK(out.str().find("cats") != std::string::npos);
  CHECK(out.str().find("(no explanation)") != std::string::npos);
  CHECK_THROWS_AS(judge(p), ConfigError);
}

// --- gates --------------------------------------------------------------------------

TEST_CASE("gate search uses exact arity") {
  const auto m = make_matrix(Measure::kNecessity, 2, 6,
                             {{0, 0, 1.0}, {1, 0, 0.9995}, {2, 0, 0.5},  // gate
                              {0, 1, 1.0}, {1, 1, 1.0},   {2, 1, 1.0},   // three parents
                              {3, 2, 1.0}});                            // one parent
  const auto gates = find_gates(m);
  REQUIRE(gates.size() == 1);
  CHECK(gates[0].child == FeatureId{3, 0});
  CHECK(gates[0].parents == std::vector<FeatureId>{{2, 0}, {2, 1}});
  CHECK(gates[0].kind == "AND");
  CHECK(gates[0].min_similarity == 0.9995);
  GateConfig wide;
  wide.max_arity = 3;
  CHECK(find_gates(m, wide).size() == 2);
  CHECK_THROWS_AS((void)find_gates(make_matrix(Measure::kPearson, 0, 2, {})), ConfigError);
  GateConfig any;
  any.allow_any_measure = true;
  CHECK(find_gates(make_matrix(Measure::kPearson, 0, 2, {}), any).empty());
}

TEST_CASE("planted gates are found exactly") {
  SynthSpec spec;
  spec.n_layers = 3;
  spec.n_features = 96;
  spec.n_tokens = 20000;
  spec.seed = 11;
  spec.background_p = 0.01;
  PlantRequest req;
  req.and_gates = 3;
  req.or_gates = 3;
  req.gate_parent_p = 0.2;
  plant_motifs(spec, req);
  TempDir dir;
  const auto out = synth_generate(spec, dir.path());
  const auto table = scan_max(out.manifest);
  const auto res = compute_similarities(out.manifest, table,
                                        ComputeOptions{.measures = {Measure::kNecessity, Measure::kSufficiency}});
  std::set<std::pair<FeatureId, std::vector<FeatureId>>> want_and, want_or, got_and, got_or;
  const auto key = [](const GateMotif& g) {
    std::vector<FeatureId> p{{g.layer, g.parents[0]}, {g.layer, g.parents[1]}};
    std::sort(p.begin(), p.end());
    return std::make_pair(FeatureId{g.layer + 1, g.child}, p);
  };
  for (const auto& g : spec.and_gates) want_and.insert(key(g));
  for (const auto& g : spec.or_gates) want_or.insert(key(g));
  for (std::uint32_t k = 0; k < 2; ++k) {
    for (const auto& g : find_gates(res.matrices[0][k])) {
      CHECK(g.kind == "AND");
      got_and.insert({g.child, g.parents});
    }
    for (const auto& g : find_gates(res.matrices[1][k])) {
      CHECK(g.kind == "OR");
      got_or.insert({g.child, g.parents});
    }
  }
  CHECK(got_and == want_and);
  CHECK(got_or == want_or);
}

// --- error projection ------------------------------------------------------------------

namespace {

double slope_of(const ProjectionResult& r, std::uint32_t f) {
  for (const auto& s : r.slopes) {
    if (s.feature.index == f) return s.slope.value();
  }
  FAIL("feature not studied");
  return 0.0;
}

}  // namespace

TEST_CASE("error projection recovers an unrepresented direction") {
  TempDir dir;
  const auto fx = projection_fixture(dir.path(), 1.0);
  const auto necessity = make_matrix(Measure::kNecessity, 0, 4, {});
  const auto r = disappearance_projection(fx.manifest, fx.table, fx.residuals, fx.sae0, fx.sae1, necessity);
  CHECK(r.selected == std::vector<std::uint32_t>{0, 1, 2, 3});
  const double s0 = slope_of(r, 0);
  const double s1 = slope_of(r, 1);
  CHECK(s0 >= 0.9);
  CHECK(s0 <= 1.1);
  CHECK(std::abs(s1) <= 0.1);
  for (const auto& s : r.samples) CHECK(s.activation >= 0.001 * fx.table.at(s.feature));

  // Stretching the stored decoder row leaves the slope unchanged.
  TempDir dir2;
  const auto fx2 = projection_fixture(dir2.path(), 3.0);
  const auto r2 = disappearance_projection(fx2.manifest, fx2.table, fx2.residuals, fx2.sae0, fx2.sae1, necessity);
  CHECK(slope_of(r2, 0) == doctest::Approx(s0).epsilon(1e-9));
}

TEST_CASE("error projection selection and admission") {
  TempDir dir;
  const auto fx = projection_fixture(dir.path(), 1.0);
  const auto necessity = make_matrix(Measure::kNecessity, 0, 4, {{1, 0, 0.95}, {2, 3, 0.39}});
  CHECK(select_disappearing(necessity, 0.4) == std::vector<std::uint32_t>{0, 2, 3});
  ProjectionConfig cfg;
  cfg.features = std::vector<std::uint32_t>{2};
  const auto r = disappearance_projection(fx.manifest, fx.table, fx.residuals, fx.sae0, fx.sae1, necessity, cfg);
  CHECK(r.samples.empty());  // feature 2 never fires
  REQUIRE(r.slopes.size() == 1);
  CHECK_FALSE(r.slopes[0].slope.has_value());
  CHECK_THROWS_AS((void)disappearance_projection(fx.manifest, fx.table, fx.residuals, fx.sae1, fx.sae1, necessity),
                  DimensionError);
  CHECK_THROWS_AS(
      (void)disappearance_projection(fx.manifest, fx.table, dir / "none.saer", fx.sae0, fx.sae1, necessity),
      MissingInputError);
}

// --- ablation -------------------------------------------------------------------------------

TEST_CASE("ablation bins boundaries") {
  CHECK(similarity_bin(Measure::kJaccard, 0.0, 10) == 0);
  CHECK(similarity_bin(Measure::kJaccard, 0.1, 10) == 1);
  CHECK(similarity_bin(Measure::kJaccard, 0.3, 10) == 3);
  CHECK(similarity_bin(Measure::kJaccard, 0.7, 10) == 7);
  CHECK(similarity_bin(Measure::kJaccard, 0.0999999, 10) == 0);
  CHECK(similarity_bin(Measure::kJaccard, 1.0, 10) == 9);
  CHECK(similarity_bin(Measure::kPearson, -1.0, 10) == 0);
  CHECK(similarity_bin(Measure::kPearson, 0.0, 10) == 5);
  for (int k = 1; k < 10; ++k) CHECK(similarity_bin(Measure::kJaccard, k / 10.0, 10) == static_cast<std::size_t>(k));

  std::vector<AblationRecord> one{{Measure::kJaccard, 0, 1, 2, 0.55, 0.3}, {Measure::kJaccard, 0, 1, 3, 0.56, 0.1}};
  const auto s = ablation_bins(one);
  CHECK(s.bins[5].count == 2);
  CHECK(s.bins[5].median == doctest::Approx(0.2));
  for (std::size_t b = 0; b < 10; ++b) {
    if (b != 5) CHECK(s.bins[b].count == 0);
  }
  CHECK_THROWS_AS((void)ablation_bins({}), ConfigError);
  one.push_back({Measure::kPearson, 0, 0, 0, 0.1, 0.1});
  CHECK_THROWS_AS((void)ablation_bins(one), ConfigError);
}

TEST_CASE("ablation box statistics match a sorted-sample oracle") {
  std::vector<AblationRecord> recs;
  for (int v : {1, 2, 3, 4, 100}) recs.push_back({Measure::kJaccard, 0, 0, 0, 0.05, static_cast<double>(v)});
  const auto b = ablation_bins(recs).bins[0];
  CHECK(b.median == 3.0);
  CHECK(b.q1 == 2.0);
  CHECK(b.q3 == 4.0);
  CHECK(b.whisker_lo == 1.0);
  CHECK(b.whisker_hi == 4.0);
  CHECK(b.outliers == 1);
}

TEST_CASE("ablation records round-trip and effect tracks similarity") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.01);
  std::vector<AblationRecord> recs;
  for (int k = 0; k < 2000; ++k) {
    const double s = u(rng);
    recs.push_back({Measure::kJaccard, 3, static_cast<std::uint32_t>(k), 7, s, std::abs(s + noise(rng))});
  }
  TempDir dir;
  save_ablation_records(dir / "a.csv", recs);
  CHECK(load_ablation_records(dir / "a.csv") == recs);
  const auto summary = ablation_bins(recs);
  for (const auto& b : summary.bins) {
    CHECK(std::abs(b.median - (b.lo + b.hi) / 2) <= (b.hi - b.lo) / 2);
  }
  std::ofstream(dir / "bad.csv") << "measure,layer,up,down,similarity,effect\njaccard,0,1,2,0.5,-1\n";
  CHECK_THROWS_AS((void)load_ablation_records(dir / "bad.csv"), FormatError);
  std::ofstream(dir / "hdr.csv") << "a,b\n";
  CHECK_THROWS_AS((void)load_ablation_records(dir / "hdr.csv"), FormatError);
  CHECK_THROWS_AS((void)load_ablation_records(dir / "none.csv"), MissingInputError);
}
