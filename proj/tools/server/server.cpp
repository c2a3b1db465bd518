#include "server.hpp"

namespace rvsim::server {

using nlohmann::json;

namespace {

void reply(httplib::Response& res, const service::Response& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

template <typename Handler>
httplib::Server::Handler jsonEndpoint(Handler handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::parse_error& e) {
      reply(res, {400, {{"error", "invalid JSON"}, {"errors", json::array({{{"field", ""}, {"message", e.what()}}})}}});
      return;
    }
    reply(res, handler(body));
  };
}

}  // namespace

std::unique_ptr<httplib::Server> makeServer(const ServerOptions& options) {
  auto server = std::make_unique<httplib::Server>();
  server->set_payload_max_length(options.maxBodyBytes);

  const auto maxCycles = options.maxCycles;
  const auto compiler = options.compiler;
  server->Post("/api/simulate", jsonEndpoint([maxCycles](const json& b) { return service::handleSimulate(b, maxCycles); }));
  server->Post("/api/parseAsm", jsonEndpoint([](const json& b) { return service::handleParseAsm(b); }));
  server->Post("/api/compile", jsonEndpoint([compiler](const json& b) { return service::handleCompile(b, compiler); }));
  server->Get("/api/schema", [](const httplib::Request&, httplib::Response& res) {
    res.set_content(service::schemaDocument().dump(), "application/json");
  });
  server->set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      if (ep) std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    reply(res, {500, {{"error", "internal error"}, {"errors", json::array({{{"field", ""}, {"message", what}}})}}});
  });
  return server;
}

}  // namespace rvsim::server
