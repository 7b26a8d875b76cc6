#include <cmath>
#include <string>

#include "common/binary_io.hpp"
#include "saegraph/activation_store.hpp"

namespace saegraph {

namespace {

constexpr char kMagic[4] = {'S', 'A', 'E', 'A'};
constexpr std::size_t kHeaderBytes = 24;
constexpr std::size_t kTokenCountOffset = 16;
constexpr std::size_t kIoBufferBytes = 1 << 20;

}  // namespace

TokenFrame TokenFrame::from_layers(std::uint64_t position,
                                   const std::vector<std::vector<SparseActivation>>& layers) {
  TokenFrame frame;
  frame.reset(position);
  for (const auto& layer : layers) {
    for (const auto& a : layer) frame.add(a.index, a.value);
    frame.close_layer();
  }
  return frame;
}

void TokenFrame::reset(std::uint64_t position) {
  position_ = position;
  entries_.clear();
  offsets_.assign(1, 0);
}

void TokenFrame::validate(std::uint32_t n_layers, std::uint32_t n_features) const {
  if (this->n_layers() != n_layers) {
    throw DimensionError("frame at token " + std::to_string(position_) + " has " +
                         std::to_string(this->n_layers()) + " layers, expected " +
                         std::to_string(n_layers));
  }
  for (std::uint32_t k = 0; k < n_layers; ++k) {
    std::int64_t prev = -1;
    for (const auto& a : layer(k)) {
      if (a.index >= n_features) {
        throw DimensionError("feature index " + std::to_string(a.index) + " out of range at token " +
                             std::to_string(position_) + " layer " + std::to_string(k));
      }
      if (static_cast<std::int64_t>(a.index) <= prev) {
        throw DimensionError("feature indices not strictly increasing at token " +
                             std::to_string(position_) + " layer " + std::to_string(k));
      }
      if (!(a.value > 0.0f) || !std::isfinite(a.value)) {
        throw DimensionError("non-positive or non-finite activation at token " +
                             std::to_string(position_) + " layer " + std::to_string(k));
      }
      prev = a.index;
    }
  }
}

// --- writer -----------------------------------------------------------------

ShardWriter::ShardWriter(const std::filesystem::path& path, std::uint32_t n_layers,
                         std::uint32_t n_features)
    : path_(path), n_layers_(n_layers), n_features_(n_features) {
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw IoError("cannot open shard for writing: " + path.string());
  std::vector<char> header;
  header.insert(header.end(), std::begin(kMagic), std::end(kMagic));
  detail::put_le<std::uint32_t>(header, kShardVersion);
  detail::put_le<std::uint32_t>(header, n_layers);
  detail::put_le<std::uint32_t>(header, n_features);
  detail::put_le<std::uint64_t>(header, 0);
  out_.write(header.data(), static_cast<std::streamsize>(header.size()));
}

ShardWriter::~ShardWriter() {
  if (!closed_) {
    try {
      close();
    } catch (...) {
    }
  }
}

void ShardWriter::write(const TokenFrame& frame) {
  frame.validate(n_layers_, n_features_);
  if (n_tokens_ == 0) {
    next_position_ = frame.position();
  } else if (frame.position() != next_position_) {
    throw DimensionError("shard frames must have consecutive positions; got " +
                         std::to_string(frame.position()) + ", expected " +
                         std::to_string(next_position_));
  }
  std::vector<char> record;
  record.reserve(4 * n_layers_ + 8 * frame.total_entries());
  for (std::uint32_t k = 0; k < n_layers_; ++k) {
    const auto entries = frame.layer(k);
    detail::put_le<std::uint32_t>(record, static_cast<std::uint32_t>(entries.size()));
    for (const auto& a : entries) {
      detail::put_le<std::uint32_t>(record, a.index);
      detail::put_le<float>(record, a.value);
    }
  }
  out_.write(record.data(), static_cast<std::streamsize>(record.size()));
  if (!out_) throw IoError("write failed: " + path_.string());
  ++n_tokens_;
  ++next_position_;
}

void ShardWriter::close() {
  if (closed_) return;
  closed_ = true;
  std::vector<char> count;
  detail::put_le<std::uint64_t>(count, n_tokens_);
  out_.seekp(static_cast<std::streamoff>(kTokenCountOffset));
  out_.write(count.data(), static_cast<std::streamsize>(count.size()));
  out_.close();
  if (!out_) throw IoError("failed to finalize shard: " + path_.string());
}

void write_shard(const std::filesystem::path& path, std::span<const TokenFrame> frames,
                 const DatasetManifest& dims) {
  // Validate everything before touching the file.
  for (const auto& f : frames) f.validate(dims.n_layers, dims.n_features);
  ShardWriter writer(path, dims.n_layers, dims.n_features);
  for (const auto& f : frames) writer.write(f);
  writer.close();
}

// --- reader -----------------------------------------------------------------

ShardReader::ShardReader(const std::filesystem::path& path, std::uint64_t base_position)
    : path_(path), buffer_(kIoBufferBytes), base_position_(base_position) {
  in_.rdbuf()->pubsetbuf(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
  in_.open(path, std::ios::binary);
  if (!in_) {
    if (!std::filesystem::exists(path)) throw MissingInputError("shard not found: " + path.string());
    throw IoError("cannot open shard: " + path.string());
  }
  std::array<char, kHeaderBytes> raw{};
  in_.read(raw.data(), raw.size());
  if (static_cast<std::size_t>(in_.gcount()) != raw.size()) {
    throw FormatError(path.string() + ": truncated header");
  }
  if (!std::equal(std::begin(kMagic), std::end(kMagic), raw.begin())) {
    throw FormatError(path.string() + ": bad magic (not an activation shard)");
  }
  header_.version = detail::get_le<std::uint32_t>(raw.data() + 4);
  header_.n_layers = detail::get_le<std::uint32_t>(raw.data() + 8);
  header_.n_features = detail::get_le<std::uint32_t>(raw.data() + 12);
  header_.n_tokens = detail::get_le<std::uint64_t>(raw.data() + 16);
  if (header_.version != kShardVersion) {
    throw FormatError(path.string() + ": unsupported shard version " +
                      std::to_string(header_.version));
  }
  if (header_.n_layers == 0 && header_.n_tokens > 0) {
    throw FormatError(path.string() + ": zero layers with nonzero token count");
  }
}

bool ShardReader::read_record(TokenFrame* frame) {
  if (read_ == header_.n_tokens) return false;
  const auto fail = [&](const char* why) {
    throw FormatError(path_.string() + " token " + std::to_string(read_) + ": " + why);
  };
  if (frame) frame->reset(base_position_ + read_);
  std::array<char, 4> count_raw{};
  for (std::uint32_t k = 0; k < header_.n_layers; ++k) {
    in_.read(count_raw.data(), 4);
    if (in_.gcount() != 4) fail("truncated");
    const auto count = detail::get_le<std::uint32_t>(count_raw.data());
    if (count > header_.n_features) fail("layer count exceeds n_features");
    const std::size_t bytes = std::size_t{count} * 8;
    if (!frame) {
      in_.seekg(static_cast<std::streamoff>(bytes), std::ios::cur);
      if (!in_) fail("truncated");
      continue;
    }
    raw_.resize(bytes);
    in_.read(raw_.data(), static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(in_.gcount()) != bytes) fail("truncated");
    std::int64_t prev = -1;
    for (std::uint32_t e = 0; e < count; ++e) {
      const auto index = detail::get_le<std::uint32_t>(raw_.data() + 8 * e);
      const auto value = detail::get_le<float>(raw_.data() + 8 * e + 4);
      if (index >= header_.n_features || static_cast<std::int64_t>(index) <= prev ||
          !(value > 0.0f) || !std::isfinite(value)) {
        fail("corrupt activation record");
      }
      prev = index;
      frame->add(index, value);
    }
    frame->close_layer();
  }
  ++read_;
  return true;
}

bool ShardReader::next(TokenFrame& frame) { return read_record(&frame); }

bool ShardReader::skip() { return read_record(nullptr); }

std::uint64_t ShardReader::tell() { return static_cast<std::uint64_t>(in_.tellg()); }

void ShardReader::seek(std::uint64_t byte_offset, std::uint64_t record_index) {
  in_.clear();
  in_.seekg(static_cast<std::streamoff>(byte_offset));
  read_ = record_index;
}

std::vector<TokenFrame> read_shard(const std::filesystem::path& path, std::uint64_t base_position) {
  ShardReader reader(path, base_position);
  std::vector<TokenFrame> frames;
  frames.reserve(reader.header().n_tokens);
  TokenFrame frame;
  while (reader.next(frame)) frames.push_back(frame);
  return frames;
}

ShardHeader read_shard_header(const std::filesystem::path& path) {
  return ShardReader(path).header();
}

}  // namespace saegraph
