#include "context.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <iostream>
#include <sstream>

#include <openssl/evp.h>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "common/json_io.hpp"

namespace saegraph::cli {

using nlohmann::json;

void Context::progress(const std::string& message) const {
  if (!quiet) std::cerr << "saegraph: " << message << '\n';
}

void Context::input(const fs::path& path) {
  if (!fs::exists(path)) throw MissingInputError("input not found: " + path.string());
  inputs.push_back(path);
}

void Context::input_dataset(const fs::path& manifest_path, const DatasetManifest& manifest) {
  input(manifest_path);
  for (const auto& shard : manifest.shards) input(shard.path);
}

fs::path Context::output(const std::string& name) {
  fs::create_directories(out);
  outputs.push_back(out / name);
  return out / name;
}

void Context::write_json(const std::string& name, const json& doc) {
  detail::write_json_file(output(name), doc);
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("cannot hash " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> md(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!md || EVP_DigestInit_ex(md.get(), EVP_sha256(), nullptr) != 1) throw IoError("sha256 init failed");
  std::vector<char> buf(1 << 20);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(md.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(md.get(), digest.data(), &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex += kHex[digest[i] >> 4];
    hex += kHex[digest[i] & 15];
  }
  return hex;
}

namespace {

json file_list(const std::vector<fs::path>& paths) {
  json list = json::array();
  for (const auto& p : paths) {
    if (!fs::exists(p)) continue;
    list.push_back({{"path", p.string()}, {"bytes", fs::file_size(p)}, {"sha256", sha256_file(p)}});
  }
  return list;
}

json option_values(const CLI::App& app) {
  json values = json::object();
  for (const CLI::Option* opt : app.get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name.empty()) continue;
    const auto results = opt->reduced_results();
    if (!results.empty()) {
      values[name] = results.size() == 1 ? json(results[0]) : json(results);
    } else {
      values[name] = opt->get_default_str();
    }
  }
  return values;
}

}  // namespace

json run_manifest(const Context& ctx, const CLI::App& command) {
  json global = option_values(*command.get_parent());
  global.erase("config");
  global.erase("out");
  global.erase("quiet");
  global.erase("show-config");
  global.erase("version");
  return {{"format", "saegraph.run"},
          {"tool", "saegraph"},
          {"version", SAEGRAPH_VERSION},
          {"subcommand", command.get_name()},
          {"global", global},
          {"options", option_values(command)},
          {"seeds", ctx.seeds},
          {"inputs", file_list(ctx.inputs)},
          {"outputs", file_list(ctx.outputs)}};
}

namespace {

std::string scalar_text(const toml::node& node) {
  if (auto s = node.as_string()) return s->get();
  if (auto i = node.as_integer()) return std::to_string(i->get());
  if (auto f = node.as_floating_point()) return format_number(f->get());
  if (auto b = node.as_boolean()) return b->get() ? "true" : "false";
  throw saegraph::ConfigError("config: unsupported value type");
}

void flatten(const toml::table& table, std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& items) {
  for (const auto& [key, node] : table) {
    const std::string name(key.str());
    if (const auto* sub = node.as_table()) {
      parents.push_back(name);
      flatten(*sub, parents, items);
      parents.pop_back();
      continue;
    }
    CLI::ConfigItem item;
    item.parents = parents;
    item.name = name;
    if (const auto* arr = node.as_array()) {
      for (const auto& v : *arr) item.inputs.push_back(scalar_text(v));
    } else {
      item.inputs.push_back(scalar_text(node));
      // --show-config writes unset options as "".
      if (item.inputs.back().empty()) continue;
    }
    items.push_back(std::move(item));
  }
}

}  // namespace

std::vector<CLI::ConfigItem> TomlConfig::from_config(std::istream& input) const {
  toml::table table;
  try {
    table = toml::parse(input);
  } catch (const toml::parse_error& e) {
    throw saegraph::ConfigError(std::string("config: ") + std::string(e.description()));
  }
  std::vector<CLI::ConfigItem> items;
  std::vector<std::string> parents;
  flatten(table, parents, items);
  return items;
}

json toml_file_to_json(const fs::path& path) {
  if (!fs::exists(path)) throw MissingInputError("config not found: " + path.string());
  try {
    const auto table = toml::parse_file(path.string());
    std::ostringstream os;
    os << toml::json_formatter{table};
    return json::parse(os.str());
  } catch (const toml::parse_error& e) {
    throw saegraph::ConfigError(path.string() + ": " + std::string(e.description()));
  }
}

std::vector<Measure> parse_measures(const std::vector<std::string>& names) {
  std::vector<Measure> out;
  for (const auto& joined : names) {
    std::stringstream ss(joined);
    std::string name;
    while (std::getline(ss, name, ',')) {
      if (name.empty()) continue;
      const Measure m = parse_measure(name);
      if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
    }
  }
  if (out.empty()) throw saegraph::ConfigError("no measures given");
  return out;
}

std::string matrix_file_name(Measure measure, std::uint32_t up_layer) {
  return std::string(measure_name(measure)) + "_" + std::to_string(up_layer) + ".saem";
}

std::vector<fs::path> measure_files(const fs::path& dir, Measure measure) {
  std::vector<fs::path> files;
  for (std::uint32_t k = 0;; ++k) {
    const auto p = dir / matrix_file_name(measure, k);
    if (!fs::exists(p)) break;
    files.push_back(p);
  }
  if (files.empty()) {
    throw MissingInputError("no " + std::string(measure_name(measure)) + " matrices in " + dir.string() +
                            " (expected " + matrix_file_name(measure, 0) + ")");
  }
  return files;
}

std::vector<SimilarityMatrix> load_matrices(Context& ctx, const std::vector<fs::path>& files, const fs::path& dir,
                                            Measure measure) {
  const auto paths = files.empty() ? measure_files(dir, measure) : files;
  std::vector<SimilarityMatrix> out;
  for (const auto& p : paths) {
    ctx.input(p);
    out.push_back(SimilarityMatrix::load(p));
  }
  return out;
}

}  // namespace saegraph::cli
