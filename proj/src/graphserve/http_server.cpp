// Eigen (via the service header) must come before httplib: <resolv.h> defines _res.
#include "saegraph/graphserve.hpp"

#include <httplib.h>

namespace saegraph {

struct HttpServer::Impl {
  std::shared_ptr<const GraphService> service;
  httplib::Server server;
};

HttpServer::HttpServer(std::shared_ptr<const GraphService> service) : impl_(std::make_unique<Impl>()) {
  impl_->service = std::move(service);
  auto& srv = impl_->server;
  const std::string origin = impl_->service->config().cors_origin;
  if (!origin.empty()) {
    srv.set_default_headers({{"Access-Control-Allow-Origin", origin},
                             {"Access-Control-Allow-Methods", "GET, OPTIONS"},
                             {"Access-Control-Allow-Headers", "Content-Type"}});
  }
  const auto service_ptr = impl_->service;
  const auto dispatch = [service_ptr](const httplib::Request& req, httplib::Response& res) {
    HttpRequest r;
    r.method = req.method;
    r.path = req.path;
    for (const auto& [k, v] : req.params) r.query[k] = v;  // last value wins
    const auto out = service_ptr->handle(r);
    res.status = out.status;
    res.set_content(out.body, "application/json");
  };
  srv.Get(R"(/.*)", dispatch);
  srv.Post(R"(/.*)", dispatch);
  srv.Put(R"(/.*)", dispatch);
  srv.Delete(R"(/.*)", dispatch);
  srv.Patch(R"(/.*)", dispatch);
  srv.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const BindAddress& address) {
  auto& srv = impl_->server;
  if (address.port == 0) {
    const int port = srv.bind_to_any_port(address.host);
    if (port < 0) throw IoError("cannot bind " + address.host);
    return port;
  }
  if (!srv.bind_to_port(address.host, address.port)) {
    throw IoError("cannot bind " + address.host + ":" + std::to_string(address.port));
  }
  return address.port;
}

void HttpServer::listen() {
  if (!impl_->server.listen_after_bind()) throw IoError("server stopped unexpectedly");
}

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace saegraph
