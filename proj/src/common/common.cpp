#include "saegraph/common.hpp"

#include <array>
#include <charconv>

namespace saegraph {

std::string FeatureId::str() const {
  return std::to_string(layer) + "/" + std::to_string(index);
}

FeatureId FeatureId::parse(std::string_view text) {
  const auto slash = text.find('/');
  if (slash == std::string_view::npos) {
    throw ConfigError("feature id '" + std::string(text) + "' is not of the form L/F");
  }
  FeatureId id;
  const auto parse_part = [&](std::string_view part, std::uint32_t& out) {
    const auto* end = part.data() + part.size();
    auto [ptr, ec] = std::from_chars(part.data(), end, out);
    if (ec != std::errc{} || ptr != end || part.empty()) {
      throw ConfigError("feature id '" + std::string(text) + "' is not of the form L/F");
    }
  };
  parse_part(text.substr(0, slash), id.layer);
  parse_part(text.substr(slash + 1), id.index);
  return id;
}

namespace {
constexpr std::array<std::string_view, 6> kMeasureNames = {
    "pearson", "jaccard", "sufficiency", "necessity", "uncentered", "decoder_cosine"};
}

std::string_view measure_name(Measure m) {
  return kMeasureNames.at(static_cast<std::size_t>(m));
}

Measure parse_measure(std::string_view name) {
  for (std::size_t i = 0; i < kMeasureNames.size(); ++i) {
    if (kMeasureNames[i] == name) return static_cast<Measure>(i);
  }
  throw ConfigError("unknown measure '" + std::string(name) + "'");
}

ValueRange measure_range(Measure m) {
  switch (m) {
    case Measure::kJaccard:
    case Measure::kSufficiency:
    case Measure::kNecessity:
      return {0.0, 1.0};
    case Measure::kPearson:
    case Measure::kUncentered:
    case Measure::kDecoderCosine:
      return {-1.0, 1.0};
  }
  return {0.0, 1.0};
}

std::string format_number(double value) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), ptr);
}

}  // namespace saegraph
