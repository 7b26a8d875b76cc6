#include "saegraph/saemath.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "common/binary_io.hpp"

namespace saegraph {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kWeightsMagic[4] = {'S', 'A', 'E', 'W'};
constexpr char kResidualMagic[4] = {'S', 'A', 'E', 'R'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kResidualHeaderBytes = 24;

void put_floats(std::vector<char>& buf, const double* data, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) detail::put_le(buf, static_cast<float>(data[k]));
}

void get_floats(std::istream& in, double* dst, std::size_t n, const std::string& what) {
  std::vector<char> raw(n * 4);
  detail::read_exact(in, raw.data(), raw.size(), what);
  for (std::size_t k = 0; k < n; ++k) dst[k] = detail::get_le<float>(raw.data() + 4 * k);
}

std::ifstream open_input(const fs::path& path, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    if (!fs::exists(path)) throw MissingInputError(what + " not found: " + path.string());
    throw IoError("cannot open " + path.string());
  }
  return in;
}

Eigen::VectorXd decoder_norms(const SaeWeights& sae) { return sae.w_dec.rowwise().norm(); }

}  // namespace

void SaeWeights::validate() const {
  const auto d = w_enc.rows();
  const auto F = w_enc.cols();
  if (b_enc.size() != F || w_dec.rows() != F || w_dec.cols() != d || b_dec.size() != d) {
    throw DimensionError("SAE weight shapes are inconsistent");
  }
  if (!w_enc.allFinite() || !b_enc.allFinite() || !w_dec.allFinite() || !b_dec.allFinite()) {
    throw FormatError("SAE weights contain non-finite values");
  }
  const Eigen::VectorXd norms = decoder_norms(*this);
  for (Eigen::Index i = 0; i < F; ++i) {
    if (!(norms[i] > 0.0)) {
      throw FormatError("decoder row " + std::to_string(i) + " of layer " + std::to_string(layer) +
                        " has zero norm");
    }
  }
}

SaeWeights SaeWeights::load(const fs::path& path) {
  auto in = open_input(path, "SAE weights");
  const std::string what = path.string();
  char magic[4];
  detail::read_exact(in, magic, 4, what);
  if (!std::equal(magic, magic + 4, kWeightsMagic)) throw FormatError(what + ": not an SAE weight container");
  if (const auto v = detail::read_le<std::uint32_t>(in, what); v != kVersion) {
    throw FormatError(what + ": unsupported version " + std::to_string(v));
  }
  const auto header_len = detail::read_le<std::uint32_t>(in, what);
  if (header_len > (1u << 20)) throw FormatError(what + ": header too large");
  std::string header(header_len, '\0');
  detail::read_exact(in, header.data(), header_len, what);
  SaeWeights w;
  std::uint64_t d = 0, F = 0;
  try {
    const auto h = json::parse(header);
    w.layer = h.at("layer").get<std::uint32_t>();
    d = h.at("d").get<std::uint64_t>();
    F = h.at("F").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw FormatError(what + ": bad header: " + e.what());
  }
  if (d == 0 || F == 0) throw FormatError(what + ": empty dimensions");
  w.w_enc.resize(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(F));
  w.b_enc.resize(static_cast<Eigen::Index>(F));
  w.w_dec.resize(static_cast<Eigen::Index>(F), static_cast<Eigen::Index>(d));
  w.b_dec.resize(static_cast<Eigen::Index>(d));
  get_floats(in, w.w_enc.data(), d * F, what);
  get_floats(in, w.b_enc.data(), F, what);
  get_floats(in, w.w_dec.data(), F * d, what);
  get_floats(in, w.b_dec.data(), d, what);
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError(what + ": trailing bytes");
  w.validate();
  return w;
}

void SaeWeights::save(const fs::path& path) const {
  validate();
  const std::string header = json{{"layer", layer}, {"d", d()}, {"F", n_features()}}.dump();
  std::vector<char> buf(std::begin(kWeightsMagic), std::end(kWeightsMagic));
  detail::put_le(buf, kVersion);
  detail::put_le(buf, static_cast<std::uint32_t>(header.size()));
  buf.insert(buf.end(), header.begin(), header.end());
  put_floats(buf, w_enc.data(), static_cast<std::size_t>(w_enc.size()));
  put_floats(buf, b_enc.data(), static_cast<std::size_t>(b_enc.size()));
  put_floats(buf, w_dec.data(), static_cast<std::size_t>(w_dec.size()));
  put_floats(buf, b_dec.data(), static_cast<std::size_t>(b_dec.size()));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Eigen::VectorXd encode(const Eigen::VectorXd& x, const SaeWeights& sae, EncodeMode mode) {
  if (x.size() != sae.w_enc.rows()) {
    throw DimensionError("residual has length " + std::to_string(x.size()) + ", SAE expects " +
                         std::to_string(sae.w_enc.rows()));
  }
  Eigen::VectorXd a = sae.w_enc.transpose() * x + sae.b_enc;
  if (mode == EncodeMode::kRelu) a = a.cwiseMax(0.0);
  return a;
}

Eigen::VectorXd decode(const Eigen::VectorXd& a, const SaeWeights& sae) {
  if (a.size() != sae.w_dec.rows()) {
    throw DimensionError("activation vector has length " + std::to_string(a.size()) + ", SAE has " +
                         std::to_string(sae.w_dec.rows()) + " features");
  }
  return sae.w_dec.transpose() * a + sae.b_dec;
}

Eigen::VectorXd recon_error(const Eigen::VectorXd& x, const SaeWeights& sae, EncodeMode mode) {
  return x - decode(encode(x, sae, mode), sae);
}

double project_error(const Eigen::VectorXd& eps, const SaeWeights& sae_prev, std::uint32_t feature) {
  if (eps.size() != sae_prev.w_dec.cols()) throw DimensionError("error vector length differs from SAE d");
  if (feature >= sae_prev.n_features()) throw DimensionError("feature index out of range");
  const auto row = sae_prev.w_dec.row(feature);
  const double norm = row.norm();
  if (!(norm > 0.0)) throw FormatError("decoder row " + std::to_string(feature) + " has zero norm");
  return row.dot(eps) / norm;
}

SimilarityMatrix decoder_cosine(const SaeWeights& up, const SaeWeights& down, double floor) {
  if (up.d() != down.d()) throw DimensionError("decoder dimensions differ between layers");
  if (!(floor >= 0.0)) throw ConfigError("floor must be non-negative");
  const Eigen::VectorXd nu = up.w_dec.rowwise().norm();
  const Eigen::VectorXd nd = down.w_dec.rowwise().norm();
  const RowMatrix du = nu.cwiseInverse().asDiagonal() * up.w_dec;
  const RowMatrix dd = nd.cwiseInverse().asDiagonal() * down.w_dec;

  MatrixMeta meta;
  meta.measure = Measure::kDecoderCosine;
  meta.up_layer = up.layer;
  meta.n_up = up.n_features();
  meta.n_down = down.n_features();
  meta.floor = floor;
  std::vector<SimilarityEntry> entries;
  constexpr Eigen::Index kBlock = 512;
  for (Eigen::Index r0 = 0; r0 < du.rows(); r0 += kBlock) {
    const Eigen::Index rows = std::min(kBlock, du.rows() - r0);
    const RowMatrix block = du.middleRows(r0, rows) * dd.transpose();
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < block.cols(); ++c) {
        const double v = std::clamp(block(r, c), -1.0, 1.0);
        if (std::abs(v) < floor) {
          ++meta.below_floor;
        } else {
          entries.push_back({static_cast<std::uint32_t>(r0 + r), static_cast<std::uint32_t>(c), v});
        }
      }
    }
  }
  return SimilarityMatrix(meta, std::move(entries));
}

double intra_layer_cosine(const SaeWeights& sae, std::span<const std::uint32_t> features) {
  if (features.size() < 2) throw ConfigError("intra-layer cosine needs at least two features");
  double lowest = 1.0;
  for (std::size_t a = 0; a < features.size(); ++a) {
    for (std::size_t b = a + 1; b < features.size(); ++b) {
      if (features[a] >= sae.n_features() || features[b] >= sae.n_features()) {
        throw DimensionError("feature index out of range");
      }
      const auto ra = sae.w_dec.row(features[a]);
      const auto rb = sae.w_dec.row(features[b]);
      lowest = std::min(lowest, std::clamp(ra.dot(rb) / (ra.norm() * rb.norm()), -1.0, 1.0));
    }
  }
  return lowest;
}

// --- residual streams -------------------------------------------------------

ResidualWriter::ResidualWriter(const fs::path& path, std::uint32_t layer, std::uint32_t d)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc), d_(d) {
  if (!out_) throw IoError("cannot write " + path.string());
  std::vector<char> buf(std::begin(kResidualMagic), std::end(kResidualMagic));
  detail::put_le(buf, kVersion);
  detail::put_le(buf, layer);
  detail::put_le(buf, d);
  detail::put_le(buf, std::uint64_t{0});
  out_.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

ResidualWriter::~ResidualWriter() {
  try {
    close();
  } catch (...) {
  }
}

void ResidualWriter::write(const ResidualFrame& frame) {
  if (frame.x.size() != d_) throw DimensionError("residual frame length differs from d");
  if (!frame.x.allFinite()) throw ConfigError("residual frame has non-finite entries");
  std::vector<char> buf;
  detail::put_le(buf, frame.position);
  put_floats(buf, frame.x.data(), d_);
  out_.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  ++n_tokens_;
}

void ResidualWriter::close() {
  if (closed_) return;
  closed_ = true;
  out_.seekp(16);
  std::vector<char> buf;
  detail::put_le(buf, n_tokens_);
  out_.write(buf.data(), 8);
  out_.close();
  if (!out_) throw IoError("write failed: " + path_.string());
}

ResidualReader::ResidualReader(const fs::path& path) : path_(path), in_(open_input(path, "residual stream")) {
  const std::string what = path.string();
  char header[kResidualHeaderBytes];
  detail::read_exact(in_, header, sizeof header, what);
  if (!std::equal(header, header + 4, kResidualMagic)) throw FormatError(what + ": not a residual stream");
  if (detail::get_le<std::uint32_t>(header + 4) != kVersion) throw FormatError(what + ": unsupported version");
  layer_ = detail::get_le<std::uint32_t>(header + 8);
  d_ = detail::get_le<std::uint32_t>(header + 12);
  n_tokens_ = detail::get_le<std::uint64_t>(header + 16);
  raw_.resize(8 + std::size_t{d_} * 4);
}

bool ResidualReader::next(ResidualFrame& frame) {
  if (read_ >= n_tokens_) return false;
  detail::read_exact(in_, raw_.data(), raw_.size(), path_.string());
  frame.position = detail::get_le<std::uint64_t>(raw_.data());
  frame.x.resize(d_);
  for (std::uint32_t k = 0; k < d_; ++k) frame.x[k] = detail::get_le<float>(raw_.data() + 8 + 4 * k);
  ++read_;
  return true;
}

}  // namespace saegraph
