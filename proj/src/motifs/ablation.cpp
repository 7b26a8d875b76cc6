#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <boost/tokenizer.hpp>

#include "saegraph/motifs.hpp"

namespace saegraph {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kHeader = "measure,layer,up,down,similarity,effect";

double parse_double(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw FormatError(where + ": bad number '" + s + "'");
  return v;
}

std::uint32_t parse_u32(const std::string& s, const std::string& where) {
  if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw FormatError(where + ": bad index '" + s + "'");
  }
  const auto v = std::stoull(s);
  if (v > UINT32_MAX) throw FormatError(where + ": index out of range");
  return static_cast<std::uint32_t>(v);
}

// Linear interpolation between closest ranks.
double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

std::vector<AblationRecord> load_ablation_records(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    if (!fs::exists(path)) throw MissingInputError("ablation records not found: " + path.string());
    throw IoError("cannot open " + path.string());
  }
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kHeader) throw FormatError(path.string() + ": expected header '" + kHeader + "'");
  std::vector<AblationRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    boost::tokenizer<boost::escaped_list_separator<char>> tok(line);
    const std::vector<std::string> cells(tok.begin(), tok.end());
    if (cells.size() != 6) throw FormatError(where + ": expected 6 fields");
    AblationRecord r;
    try {
      r.measure = parse_measure(cells[0]);
    } catch (const ConfigError& e) {
      throw FormatError(where + ": " + e.what());
    }
    r.layer = parse_u32(cells[1], where);
    r.up = parse_u32(cells[2], where);
    r.down = parse_u32(cells[3], where);
    r.similarity = parse_double(cells[4], where);
    r.effect = parse_double(cells[5], where);
    const auto range = measure_range(r.measure);
    if (!(r.similarity >= range.lo && r.similarity <= range.hi)) {
      throw FormatError(where + ": similarity outside the measure's range");
    }
    if (!(r.effect >= 0.0)) throw FormatError(where + ": effect must be non-negative");
    out.push_back(r);
  }
  return out;
}

void save_ablation_records(const fs::path& path, std::span<const AblationRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << kHeader << '\n';
  char buf[96];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g", r.similarity, r.effect);
    out << measure_name(r.measure) << ',' << r.layer << ',' << r.up << ',' << r.down << ',' << buf << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::size_t similarity_bin(Measure measure, double value, std::size_t n_bins) {
  if (n_bins == 0) throw ConfigError("need at least one bin");
  const auto range = measure_range(measure);
  const double span = range.hi - range.lo;
  const auto edge = [&](std::size_t k) { return range.lo + span * static_cast<double>(k) / static_cast<double>(n_bins); };
  const double t = (value - range.lo) / span * static_cast<double>(n_bins);
  std::size_t b = t > 0.0 ? std::min(n_bins - 1, static_cast<std::size_t>(t)) : 0;
  // Correct rounding near the computed edges.
  if (b + 1 < n_bins && value >= edge(b + 1)) ++b;
  if (b > 0 && value < edge(b)) --b;
  return b;
}

AblationSummary ablation_bins(std::span<const AblationRecord> records, std::size_t n_bins) {
  if (records.empty()) throw ConfigError("no ablation records");
  if (n_bins == 0) throw ConfigError("need at least one bin");
  const Measure measure = records.front().measure;
  std::vector<std::vector<double>> effects(n_bins);
  for (const auto& r : records) {
    if (r.measure != measure) throw ConfigError("ablation records mix measures");
    effects[similarity_bin(measure, r.similarity, n_bins)].push_back(r.effect);
  }
  const auto range = measure_range(measure);
  AblationSummary out{measure, {}};
  for (std::size_t b = 0; b < n_bins; ++b) {
    BinSummary s;
    s.lo = range.lo + (range.hi - range.lo) * static_cast<double>(b) / static_cast<double>(n_bins);
    s.hi = range.lo + (range.hi - range.lo) * static_cast<double>(b + 1) / static_cast<double>(n_bins);
    auto& v = effects[b];
    s.count = v.size();
    if (!v.empty()) {
      std::sort(v.begin(), v.end());
      s.median = quantile(v, 0.5);
      s.q1 = quantile(v, 0.25);
      s.q3 = quantile(v, 0.75);
      const double fence = 1.5 * (s.q3 - s.q1);
      s.whisker_lo = s.q1;
      s.whisker_hi = s.q3;
      for (const double x : v) {
        if (x < s.q1 - fence || x > s.q3 + fence) {
          ++s.outliers;
        } else {
          s.whisker_lo = std::min(s.whisker_lo, x);
          s.whisker_hi = std::max(s.whisker_hi, x);
        }
      }
    }
    out.bins.push_back(s);
  }
  return out;
}

json AblationSummary::to_json() const {
  json rows = json::array();
  for (const auto& b : bins) {
    json row = {{"lo", b.lo}, {"hi", b.hi}, {"count", b.count}};
    if (b.count > 0) {
      row.update({{"median", b.median},
                  {"q1", b.q1},
                  {"q3", b.q3},
                  {"whisker_lo", b.whisker_lo},
                  {"whisker_hi", b.whisker_hi},
                  {"outliers", b.outliers}});
    }
    rows.push_back(std::move(row));
  }
  return {{"format", "saegraph.ablation_bins"}, {"measure", measure_name(measure)}, {"bins", rows}};
}

}  // namespace saegraph
