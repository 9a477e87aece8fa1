#include <map>
#include <string>

#include "schoolrun/serve.hpp"

#include "httplib.h"

namespace schoolrun::serve {

struct HttpServer::Impl {
  const ApiService& api;
  std::string host;
  int port;
  httplib::Server server;
};

HttpServer::HttpServer(const ApiService& api, std::string host, int port)
    : impl_(new Impl{api, std::move(host), port, {}}) {
  const auto dispatch = [this](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query.emplace(k, v);
    const ApiResponse r = impl_->api.handle(req.method, req.path, query, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json; charset=utf-8");
  };
  impl_->server.Get(R"(/.*)", dispatch);
  impl_->server.Post(R"(/.*)", dispatch);
  impl_->server.Put(R"(/.*)", dispatch);
  impl_->server.Delete(R"(/.*)", dispatch);
}

HttpServer::~HttpServer() = default;

int HttpServer::bind() {
  if (impl_->port == 0) {
    const int p = impl_->server.bind_to_any_port(impl_->host);
    if (p > 0) return impl_->port = p;
  } else if (impl_->server.bind_to_port(impl_->host, impl_->port)) {
    return impl_->port;
  }
  throw Error(ErrorCode::kInvalidArgument,
              "cannot bind " + impl_->host + ":" + std::to_string(impl_->port));
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

void run_http(const ApiService& api, const std::string& host, int port) {
  HttpServer server(api, host, port);
  server.bind();
  server.listen();
}

}  // namespace schoolrun::serve
