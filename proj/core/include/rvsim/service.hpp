#pragma once

// Request handling shared by the HTTP server and the CLI. Every handler is a
// pure function of its request body.

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rvsim/assembler.hpp"
#include "rvsim/config.hpp"
#include "rvsim/pipeline.hpp"
#include "rvsim/stats.hpp"

namespace rvsim::service {

struct Response {
  int status = 200;
  nlohmann::json body;
};

/// A malformed request. `errors` is the structured detail returned with 400.
class RequestError : public std::runtime_error {
 public:
  RequestError(std::string kind, nlohmann::json errors);
  [[nodiscard]] const std::string& kind() const { return kind_; }
  [[nodiscard]] const nlohmann::json& errors() const { return errors_; }

 private:
  std::string kind_;
  nlohmann::json errors_;
};

struct SimulateRequest {
  CpuConfig config;
  std::string program;
  std::vector<UserArray> memory;
  std::optional<std::string> entry;
  std::int64_t tick = -1;  // -1 runs to the end
  std::uint64_t maxCycles = kDefaultMaxCycles;
};

SimulateRequest parseSimulateRequest(const nlohmann::json& body);

struct SimulateOutcome {
  SimState state;
  StatsReport report;
  bool budgetExhausted = false;
};

/// Assembles, builds memory and runs to the requested tick. Throws
/// RequestError for configuration or assembly problems.
SimulateOutcome simulate(const SimulateRequest& request, const std::vector<std::uint8_t>* baseImage = nullptr);

/// Assembles with the layout a configuration implies.
AsmProgram assembleFor(const CpuConfig& config, std::string_view source, const std::vector<UserArray>& arrays = {},
                       const std::optional<std::string>& entry = std::nullopt);

nlohmann::json simulateResponseBody(const SimulateOutcome& outcome);

/// `maxCyclesCap` bounds whatever the request asks for.
Response handleSimulate(const nlohmann::json& body, std::uint64_t maxCyclesCap = kDefaultMaxCycles);
Response handleParseAsm(const nlohmann::json& body);

struct CompilerOptions {
  /// Shell command with {input}, {output} and {level} placeholders.
  std::string commandTemplate;
  std::chrono::milliseconds timeout{10'000};
};

inline constexpr std::string_view kDefaultCompilerTemplate =
    "clang --target=riscv32 -march=rv32im -mabi=ilp32 -S -g -O{level} -fno-addrsig -o {output} {input}";

/// Reads RVSIM_COMPILER, falling back to the clang template above.
CompilerOptions compilerOptionsFromEnv();

struct LineMapping {
  int cLine = 0;
  std::vector<int> asmLines;  // 1-based lines of the filtered assembly
};

struct CompileResult {
  enum class Status { kOk, kErrors, kUnavailable, kTimeout };
  Status status = Status::kOk;
  std::string assembly;
  std::vector<Diagnostic> errors;
  std::vector<LineMapping> mapping;
};

/// Runs the external compiler on `cCode` at -O`level` (0..3), filters the
/// output and recovers the C-to-assembly line mapping from .loc markers.
CompileResult compileC(std::string_view cCode, int level, const CompilerOptions& options);

/// Pairs each instruction line of the filtered output with the C line of
/// the .loc marker in effect where it came from.
std::vector<LineMapping> extractLineMapping(std::string_view rawAsm, const FilteredAsm& filtered);

Response handleCompile(const nlohmann::json& body, const CompilerOptions& options);

/// Request/response schemas plus the default configuration.
nlohmann::json schemaDocument();

}  // namespace rvsim::service
