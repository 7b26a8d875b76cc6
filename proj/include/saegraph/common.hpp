#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace saegraph {

// Error hierarchy. The CLI maps these onto exit codes, the service onto HTTP
// statuses.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or truncated on-disk data.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Shapes or layer pairs that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid user-supplied configuration or arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A required input file or artifact does not exist.
class MissingInputError : public Error {
 public:
  using Error::Error;
};

// Filesystem failure other than a missing input.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Identity of one SAE feature: zero-based layer and zero-based index within
/// the layer. Rendered as "L/F".
struct FeatureId {
  std::uint32_t layer = 0;
  std::uint32_t index = 0;

  auto operator<=>(const FeatureId&) const = default;

  [[nodiscard]] std::string str() const;

  /// Parses "L/F". Throws ConfigError on anything else.
  static FeatureId parse(std::string_view text);
};

struct FeatureIdHash {
  std::size_t operator()(const FeatureId& id) const noexcept {
    return std::hash<std::uint64_t>{}((std::uint64_t{id.layer} << 32) | id.index);
  }
};

enum class Measure : std::uint32_t {
  kPearson = 0,
  kJaccard = 1,
  kSufficiency = 2,
  kNecessity = 3,
  kUncentered = 4,
  kDecoderCosine = 5,
};

[[nodiscard]] std::string_view measure_name(Measure m);
/// Accepts the names produced by measure_name. Throws ConfigError otherwise.
[[nodiscard]] Measure parse_measure(std::string_view name);

/// Value range of a measure: [0, 1] for the count-based measures, [-1, 1]
/// for the correlation-like ones.
struct ValueRange {
  double lo = 0.0;
  double hi = 1.0;
};
[[nodiscard]] ValueRange measure_range(Measure m);

/// Shortest decimal rendering that round-trips ("0.1", "0.95", "1").
[[nodiscard]] std::string format_number(double value);

}  // namespace saegraph
