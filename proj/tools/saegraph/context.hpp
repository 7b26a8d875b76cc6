#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "saegraph/activation_store.hpp"
#include "saegraph/similarity_matrix.hpp"

namespace saegraph::cli {

namespace fs = std::filesystem;

/// State shared by every subcommand: output directory, worker count, and the
/// inputs/outputs recorded in the run manifest.
struct Context {
  fs::path out = ".";
  unsigned workers = 1;
  bool quiet = false;

  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
  nlohmann::json seeds = nlohmann::json::object();

  void progress(const std::string& message) const;
  void input(const fs::path& path);
  /// Records the manifest file and every shard it lists.
  void input_dataset(const fs::path& manifest_path, const DatasetManifest& manifest);
  /// out / name, recorded as an output.
  fs::path output(const std::string& name);
  void write_json(const std::string& name, const nlohmann::json& doc);
};

[[nodiscard]] std::string sha256_file(const fs::path& path);

/// Versions, resolved options, seeds and input/output hashes.
[[nodiscard]] nlohmann::json run_manifest(const Context& ctx, const CLI::App& command);

/// Parses config files with toml++; nested tables map to subcommand sections.
class TomlConfig : public CLI::ConfigTOML {
 public:
  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override;
};

/// Converts a TOML document to JSON.
[[nodiscard]] nlohmann::json toml_file_to_json(const fs::path& path);

struct Command {
  CLI::App* app = nullptr;
  std::function<void(Context&)> run;
  bool writes_manifest = true;
};

void add_pipeline_commands(CLI::App& app, std::vector<Command>& commands);
void add_analysis_commands(CLI::App& app, std::vector<Command>& commands);
void add_serve_command(CLI::App& app, std::vector<Command>& commands);

// Helpers shared by the subcommands.

/// Comma-separated or repeated measure names.
[[nodiscard]] std::vector<Measure> parse_measures(const std::vector<std::string>& names);

/// `<dir>/<measure>_<k>.saem` for k = 0, 1, ... until the first gap.
[[nodiscard]] std::vector<fs::path> measure_files(const fs::path& dir, Measure measure);

/// Matrices from explicit files, or else from a compute-sims directory.
[[nodiscard]] std::vector<SimilarityMatrix> load_matrices(Context& ctx, const std::vector<fs::path>& files,
                                                          const fs::path& dir, Measure measure);

[[nodiscard]] std::string matrix_file_name(Measure measure, std::uint32_t up_layer);

}  // namespace saegraph::cli
