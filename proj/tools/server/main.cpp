#include <CLI11.hpp>

#include <iostream>

#include "server.hpp"

int main(int argc, char** argv) {
  rvsim::server::ServerOptions options;
  CLI::App app{"HTTP/JSON simulation service", "rvsim-server"};
  bool printSchema = false;
  app.add_option("--host", options.host, "Listen address");
  app.add_option("--port", options.port, "Listen port")->envname("RVSIM_PORT");
  app.add_option("--max-body", options.maxBodyBytes, "Request body size limit in bytes");
  app.add_option("--max-cycles", options.maxCycles, "Upper bound on simulated cycles per request")->check(CLI::PositiveNumber);
  app.add_option("--compiler", options.compiler.commandTemplate, "Compiler command template ({input}, {output}, {level})");
  app.add_flag("--print-schema", printSchema, "Print the API schema document and exit");
  CLI11_PARSE(app, argc, argv);

  if (printSchema) {
    std::cout << rvsim::service::schemaDocument().dump(2) << "\n";
    return 0;
  }
  auto server = rvsim::server::makeServer(options);
  std::cerr << "listening on " << options.host << ":" << options.port << "\n";
  if (!server->listen(options.host, options.port)) {
    std::cerr << "cannot listen on " << options.host << ":" << options.port << "\n";
    return 1;
  }
  return 0;
}
