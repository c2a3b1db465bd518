#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include <httplib.h>

#include "rvsim/service.hpp"

namespace rvsim::server {

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t maxBodyBytes = 8 * 1024 * 1024;
  std::uint64_t maxCycles = kDefaultMaxCycles;
  service::CompilerOptions compiler = service::compilerOptionsFromEnv();
};

/// Registers the API routes; the caller binds and listens.
std::unique_ptr<httplib::Server> makeServer(const ServerOptions& options);

}  // namespace rvsim::server
