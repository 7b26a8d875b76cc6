#include <iostream>

#include "context.hpp"

using namespace saegraph::cli;

namespace {

int fail(int code, const std::string& message) {
  std::cerr << "saegraph: error: " << message << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feature similarity graphs over sparse autoencoder activations", "saegraph"};
  app.set_version_flag("--version", SAEGRAPH_VERSION);
  app.config_formatter(std::make_shared<TomlConfig>());
  app.set_config("--config", "", "TOML config file; tables name subcommands");
  app.allow_config_extras(CLI::config_extras_mode::error);

  Context ctx;
  bool show_config = false;
  app.add_option("--out,-o", ctx.out, "Output directory")->capture_default_str();
  app.add_option("--workers,-j", ctx.workers, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_flag("--quiet,-q", ctx.quiet, "No progress messages");
  app.add_flag("--show-config", show_config, "Print the resolved configuration with defaults and exit")
      ->configurable(false);
  app.require_subcommand(0, 1);
  app.fallthrough();

  std::vector<Command> commands;
  add_pipeline_commands(app, commands);
  add_analysis_commands(app, commands);
  add_serve_command(app, commands);

  try {
    app.parse(argc, argv);
  } catch (const CLI::FileError& e) {
    return fail(3, e.what());
  } catch (const CLI::ConfigError& e) {
    return fail(2, std::string("config: ") + e.what());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 2;
  } catch (const saegraph::ConfigError& e) {
    return fail(2, e.what());
  }

  if (show_config) {
    std::cout << app.config_to_str(true, true);
    return 0;
  }
  const Command* selected = nullptr;
  for (const auto& c : commands) {
    if (c.app->parsed()) selected = &c;
  }
  if (selected == nullptr) {
    std::cerr << app.help();
    return 2;
  }

  try {
    selected->run(ctx);
    if (selected->writes_manifest) {
      const auto doc = run_manifest(ctx, *selected->app);
      std::ofstream(ctx.output(selected->app->get_name() + ".run.json")) << doc.dump(2) << '\n';
    }
  } catch (const saegraph::ConfigError& e) {
    return fail(2, e.what());
  } catch (const saegraph::MissingInputError& e) {
    return fail(3, e.what());
  } catch (const std::exception& e) {
    return fail(1, e.what());
  }
  return 0;
}
