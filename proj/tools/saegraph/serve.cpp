#include <csignal>
#include <iostream>
#include <thread>

#include "context.hpp"
#include "saegraph/graphserve.hpp"

namespace saegraph::cli {

namespace {

ServiceConfig load_service_config(const fs::path& path) {
  if (path.extension() == ".toml") {
    return ServiceConfig::from_json(toml_file_to_json(path), path.parent_path());
  }
  return ServiceConfig::load(path);
}

}  // namespace

void add_serve_command(CLI::App& app, std::vector<Command>& commands) {
  struct Options {
    fs::path service;
    std::string bind;
    bool check = false;
  };
  auto o = std::make_shared<Options>();
  auto* sub = app.add_subcommand("serve", "Serve artifacts over HTTP until interrupted");
  sub->add_option("--service", o->service, "Service config (.toml or .json)")->required();
  sub->add_option("--bind", o->bind, "host:port (overrides SAEGRAPH_BIND and the config)");
  sub->add_flag("--check", o->check, "Load every artifact, print the bind address and exit");
  commands.push_back({sub,
                      [o](Context& ctx) {
                        ctx.input(o->service);
                        const auto config = load_service_config(o->service);
                        const auto address =
                            resolve_bind(o->bind.empty() ? std::nullopt : std::optional<std::string>(o->bind), config);
                        const auto service = GraphService::load(config);
                        if (o->check) {
                          std::cout << address.host << ':' << address.port << '\n';
                          return;
                        }
                        // Signals are taken synchronously by a watcher thread.
                        sigset_t set;
                        sigemptyset(&set);
                        sigaddset(&set, SIGINT);
                        sigaddset(&set, SIGTERM);
                        pthread_sigmask(SIG_BLOCK, &set, nullptr);

                        HttpServer server(service);
                        const int port = server.bind(address);
                        std::jthread watcher([&server, set] {
                          int sig = 0;
                          sigwait(&set, &sig);
                          server.stop();
                        });
                        ctx.progress("listening on " + address.host + ":" + std::to_string(port));
                        server.listen();
                        if (watcher.joinable()) {
                          pthread_kill(watcher.native_handle(), SIGTERM);
                        }
                      },
                      false});
}

}  // namespace saegraph::cli
