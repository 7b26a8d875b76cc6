#include <algorithm>
#include <fstream>
#include <thread>

#include "common/json_io.hpp"
#include "saegraph/activation_store.hpp"

namespace saegraph {

using nlohmann::json;
namespace fs = std::filesystem;

using detail::read_json_file;
using detail::write_json_file;

// --- manifest ---------------------------------------------------------------

DatasetManifest DatasetManifest::load(const fs::path& path) {
  const json doc = read_json_file(path, "dataset manifest");
  DatasetManifest m;
  try {
    m.n_layers = doc.at("n_layers").get<std::uint32_t>();
    m.n_features = doc.at("n_features").get<std::uint32_t>();
    m.n_tokens = doc.at("n_tokens").get<std::uint64_t>();
    m.provenance = doc.value("provenance", "");
    const auto base = path.parent_path();
    for (const auto& s : doc.at("shards")) {
      fs::path p = s.at("path").get<std::string>();
      if (p.is_relative()) p = base / p;
      m.shards.push_back({p, s.at("n_tokens").get<std::uint64_t>()});
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  std::uint64_t total = 0;
  for (const auto& s : m.shards) total += s.n_tokens;
  if (total != m.n_tokens) {
    throw FormatError(path.string() + ": n_tokens does not equal the sum over shards");
  }
  return m;
}

void DatasetManifest::save(const fs::path& path) const {
  const auto base = fs::absolute(path).parent_path();
  json shard_list = json::array();
  for (const auto& s : shards) {
    const auto rel = fs::absolute(s.path).lexically_relative(base);
    shard_list.push_back({{"path", rel.generic_string()}, {"n_tokens", s.n_tokens}});
  }
  json doc = {{"format", "saegraph.dataset"}, {"version", 1},         {"n_layers", n_layers},
              {"n_features", n_features},      {"n_tokens", n_tokens}, {"shards", shard_list},
              {"provenance", provenance}};
  write_json_file(path, doc);
}

void DatasetManifest::validate() const {
  std::uint64_t total = 0;
  for (const auto& s : shards) {
    const auto h = read_shard_header(s.path);
    if (h.n_layers != n_layers || h.n_features != n_features) {
      throw DimensionError(s.path.string() + ": shard dimensions differ from the manifest");
    }
    if (h.n_tokens != s.n_tokens) {
      throw FormatError(s.path.string() + ": shard token count differs from the manifest");
    }
    total += h.n_tokens;
  }
  if (total != n_tokens) throw FormatError("manifest n_tokens does not equal the sum over shards");
}

// --- sequential dataset reading ----------------------------------------------

DatasetReader::DatasetReader(const DatasetManifest& manifest)
    : DatasetReader(manifest, 0, manifest.shards.size()) {}

DatasetReader::DatasetReader(const DatasetManifest& manifest, std::size_t shard_begin,
                             std::size_t shard_end)
    : manifest_(&manifest), shard_(shard_begin), shard_end_(std::min(shard_end, manifest.shards.size())) {
  std::uint64_t base = 0;
  for (const auto& s : manifest.shards) {
    base_positions_.push_back(base);
    base += s.n_tokens;
  }
  open_current();
}

void DatasetReader::open_current() {
  reader_.reset();
  if (shard_ >= shard_end_) return;
  const auto& ref = manifest_->shards[shard_];
  reader_ = std::make_unique<ShardReader>(ref.path, base_positions_[shard_]);
  const auto& h = reader_->header();
  if (h.n_layers != manifest_->n_layers || h.n_features != manifest_->n_features) {
    throw DimensionError(ref.path.string() + ": shard dimensions differ from the manifest");
  }
  if (h.n_tokens != ref.n_tokens) {
    throw FormatError(ref.path.string() + ": shard token count differs from the manifest");
  }
}

bool DatasetReader::next(TokenFrame& frame) {
  while (reader_) {
    if (reader_->next(frame)) return true;
    ++shard_;
    open_current();
  }
  return false;
}

TokenFrame read_frame_at(const DatasetManifest& manifest, std::uint64_t position) {
  if (position >= manifest.n_tokens) {
    throw ConfigError("token position " + std::to_string(position) + " out of range (dataset has " +
                      std::to_string(manifest.n_tokens) + " tokens)");
  }
  std::uint64_t first = 0;
  for (const auto& s : manifest.shards) {
    if (position < first + s.n_tokens) {
      ShardReader reader(s.path, first);
      for (std::uint64_t i = first; i < position; ++i) reader.skip();
      TokenFrame frame;
      if (!reader.next(frame)) throw FormatError(s.path.string() + ": truncated");
      return frame;
    }
    first += s.n_tokens;
  }
  throw FormatError("manifest shards do not cover token " + std::to_string(position));
}

FrameIndex::FrameIndex(DatasetManifest manifest) : manifest_(std::move(manifest)) {
  std::uint64_t first = 0;
  for (const auto& s : manifest_.shards) {
    shard_first_.push_back(first);
    ShardReader reader(s.path, first);
    std::vector<std::uint64_t> offsets;
    offsets.reserve(s.n_tokens);
    for (std::uint64_t i = 0; i < s.n_tokens; ++i) {
      offsets.push_back(reader.tell());
      if (!reader.skip()) throw FormatError(s.path.string() + ": truncated");
    }
    offsets_.push_back(std::move(offsets));
    first += s.n_tokens;
  }
}

TokenFrame FrameIndex::read(std::uint64_t position) const {
  if (position >= manifest_.n_tokens) {
    throw ConfigError("token position " + std::to_string(position) + " out of range");
  }
  const auto it = std::upper_bound(shard_first_.begin(), shard_first_.end(), position);
  const auto shard = static_cast<std::size_t>(std::distance(shard_first_.begin(), it) - 1);
  // Skip past empty shards that share a first position.
  std::size_t s = shard;
  while (position - shard_first_[s] >= manifest_.shards[s].n_tokens) ++s;
  const auto local = position - shard_first_[s];
  ShardReader reader(manifest_.shards[s].path, shard_first_[s]);
  reader.seek(offsets_[s][local], local);
  TokenFrame frame;
  if (!reader.next(frame)) throw FormatError("frame index out of sync with shard");
  return frame;
}

// --- maxima -----------------------------------------------------------------

MaxActivationTable::MaxActivationTable(std::uint32_t n_layers, std::uint32_t n_features)
    : n_layers_(n_layers), n_features_(n_features), values_(std::size_t{n_layers} * n_features, 0.0f) {}

void MaxActivationTable::observe(const TokenFrame& frame) {
  for (std::uint32_t k = 0; k < n_layers_; ++k) {
    float* row = values_.data() + std::size_t{k} * n_features_;
    for (const auto& a : frame.layer(k)) row[a.index] = std::max(row[a.index], a.value);
  }
}

void MaxActivationTable::merge(const MaxActivationTable& other) {
  if (other.n_layers_ != n_layers_ || other.n_features_ != n_features_) {
    throw DimensionError("cannot merge max tables of different shapes");
  }
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] = std::max(values_[i], other.values_[i]);
}

MaxActivationTable MaxActivationTable::load(const fs::path& path) {
  const json doc = read_json_file(path, "max activation table");
  try {
    MaxActivationTable t(doc.at("n_layers").get<std::uint32_t>(),
                         doc.at("n_features").get<std::uint32_t>());
    const auto& layers = doc.at("max");
    if (layers.size() != t.n_layers_) throw FormatError(path.string() + ": layer count mismatch");
    for (std::uint32_t k = 0; k < t.n_layers_; ++k) {
      const auto& row = layers[k];
      if (row.size() != t.n_features_) throw FormatError(path.string() + ": feature count mismatch");
      for (std::uint32_t i = 0; i < t.n_features_; ++i) {
        const float v = row[i].get<float>();
        if (!(v >= 0.0f)) throw FormatError(path.string() + ": negative maximum");
        t.values_[std::size_t{k} * t.n_features_ + i] = v;
      }
    }
    return t;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void MaxActivationTable::save(const fs::path& path) const {
  json layers = json::array();
  for (std::uint32_t k = 0; k < n_layers_; ++k) {
    const auto row = layer(k);
    layers.push_back(std::vector<float>(row.begin(), row.end()));
  }
  json doc = {{"format", "saegraph.max_activations"},
              {"n_layers", n_layers_},
              {"n_features", n_features_},
              {"max", layers}};
  write_json_file(path, doc, -1);
}

MaxActivationTable scan_max(const DatasetManifest& manifest, unsigned workers) {
  const std::size_t n_shards = manifest.shards.size();
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n_shards, 1))));
  std::vector<MaxActivationTable> partial(workers, MaxActivationTable(manifest.n_layers, manifest.n_features));
  std::vector<std::exception_ptr> errors(workers);
  const auto run = [&](unsigned w) {
    try {
      // Round-robin shard assignment.
      TokenFrame frame;
      for (std::size_t s = w; s < n_shards; s += workers) {
        DatasetReader reader(manifest, s, s + 1);
        while (reader.next(frame)) partial[w].observe(frame);
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(run, w);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (unsigned w = 1; w < workers; ++w) partial[0].merge(partial[w]);
  return std::move(partial[0]);
}

std::vector<std::vector<std::uint32_t>> binarize(const TokenFrame& frame,
                                                 const MaxActivationTable& table,
                                                 const BinarizationRule& rule) {
  std::vector<std::vector<std::uint32_t>> active(frame.n_layers());
  for (std::uint32_t k = 0; k < frame.n_layers(); ++k) {
    const auto maxima = table.layer(k);
    for (const auto& a : frame.layer(k)) {
      if (is_active(a.value, maxima[a.index], rule.theta)) active[k].push_back(a.index);
    }
  }
  return active;
}

}  // namespace saegraph
