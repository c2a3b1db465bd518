#include "cli.hpp"

#include <CLI11.hpp>
#include <httplib.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "rvsim/service.hpp"

namespace rvsim::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string readText(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Options {
  std::string program;
  std::string cpu;
  std::optional<std::string> entry;
  std::optional<std::string> memory;
  std::string format = "text";
  int verbosity = 0;
  std::uint64_t maxCycles = kDefaultMaxCycles;
  std::optional<std::string> dumpMemory;
  std::optional<std::string> gcc;
  std::optional<std::string> cSource;
  int optLevel = 0;
  std::optional<std::string> server;
};

/// Either user arrays laid out by the assembler or a raw image placed
/// underneath the program.
struct MemoryInput {
  std::vector<UserArray> arrays;
  std::optional<std::vector<std::uint8_t>> image;
};

MemoryInput loadMemory(const std::string& spec, std::uint32_t capacity) {
  MemoryInput m;
  const auto first = spec.find_first_not_of(" \t\n");
  auto parseArrays = [&](const std::string& text) {
    try {
      const auto j = json::parse(text);
      m.arrays = j.is_array() ? j.get<std::vector<UserArray>>() : std::vector<UserArray>{j.get<UserArray>()};
    } catch (const std::exception& e) {
      throw InputError(std::string("invalid memory array spec: ") + e.what());
    }
  };
  if (first != std::string::npos && (spec[first] == '[' || spec[first] == '{')) {
    parseArrays(spec);
    return m;
  }
  const auto ext = fs::path(spec).extension().string();
  const std::string content = readText(spec);
  try {
    if (ext == ".json") parseArrays(content);
    else if (ext == ".csv") m.image = importCsv(content, capacity);
    else m.image = importBinary({reinterpret_cast<const std::uint8_t*>(content.data()), content.size()}, capacity);
  } catch (const MemoryError& e) {
    throw InputError(std::string("invalid memory image: ") + e.what());
  }
  return m;
}

void writeDump(const std::string& path, const std::vector<std::uint8_t>& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  if (fs::path(path).extension() == ".csv") out << exportCsv(image);
  else out.write(reinterpret_cast<const char*>(image.data()), static_cast<std::streamsize>(image.size()));
}

std::string describeErrors(const json& errors) {
  std::ostringstream s;
  for (const auto& e : errors) {
    if (e.contains("line"))
      s << "line " << e.value("line", 0) << ":" << e.value("column", 0) << ": " << e.value("message", "") << "\n";
    else
      s << e.value("field", "") << ": " << e.value("message", "") << "\n";
  }
  return s.str();
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

void printText(std::ostream& out, const json& report, const Options& opts) {
  const auto& stats = report["stats"];
  const auto& c = stats["counters"];
  auto row = [&](const std::string& key, const std::string& value) {
    out << std::left << std::setw(24) << key << value << "\n";
  };
  row("program", opts.cSource ? *opts.cSource : opts.program);
  row("cpu", report.value("cpu", std::string()));
  row("halted", report["halted"].get<bool>() ? "yes (" + report["haltReason"].get<std::string>() + ")" : "no");
  row("budget exhausted", report["budgetExhausted"].get<bool>() ? "yes" : "no");
  row("cycles", std::to_string(report["cycle"].get<std::uint64_t>()));
  row("committed", std::to_string(c["committed"].get<std::uint64_t>()));
  row("fetched", std::to_string(c["fetched"].get<std::uint64_t>()));
  row("flushes", std::to_string(c["flushes"].get<std::uint64_t>()));
  row("IPC", fixed(stats["ipc"].get<double>()));
  row("branches resolved", std::to_string(c["branchesResolved"].get<std::uint64_t>()));
  row("branches mispredicted", std::to_string(c["branchesMispredicted"].get<std::uint64_t>()));
  row("prediction accuracy", fixed(stats["predictionAccuracy"].get<double>()));
  row("cache accesses", std::to_string(c["cacheAccesses"].get<std::uint64_t>()));
  row("cache hit rate", fixed(stats["hitRate"].get<double>()));
  row("bytes written", std::to_string(c["bytesWritten"].get<std::uint64_t>()));
  row("FLOPS", fixed(stats["flops"].get<double>(), 1));
  row("wall time [s]", fixed(stats["wallTimeSeconds"].get<double>(), 9));
  out << "\nunit utilization\n";
  for (const auto& [unit, u] : stats["perUnitUtilization"].items()) row("  " + unit, fixed(u.get<double>()));
  out << "\ninstruction mix        static   dynamic\n";
  for (const auto& [type, n] : c["staticMix"].items()) {
    const auto dyn = c["dynamicMix"].contains(type) ? c["dynamicMix"][type].get<std::uint64_t>() : 0;
    out << "  " << std::left << std::setw(20) << type << std::right << std::setw(7) << n.get<std::uint64_t>()
        << std::setw(10) << dyn << "\n";
  }
  if (opts.verbosity >= 1 && report.contains("registers")) {
    out << "\nregisters\n";
    const auto& regs = report["registers"];
    for (std::size_t i = 0; i < regs.size(); ++i) {
      std::ostringstream name;
      name << "x" << i;
      out << "  " << std::left << std::setw(4) << name.str() << std::right << std::setw(12) << regs[i].get<std::int32_t>();
      out << ((i % 4 == 3) ? "\n" : "   ");
    }
  }
  if (opts.verbosity >= 2 && report.contains("log")) {
    out << "\nlog\n";
    for (const auto& e : report["log"]) out << "  [" << e["cycle"].get<std::uint64_t>() << "] " << e["message"].get<std::string>() << "\n";
  }
}

json buildReport(const json& simulateBody, const CpuConfig& config, const Options& opts) {
  json report{{"cpu", config.name},
              {"halted", simulateBody["halted"]},
              {"haltReason", simulateBody["haltReason"]},
              {"budgetExhausted", simulateBody["budgetExhausted"]},
              {"cycle", simulateBody["cycle"]},
              {"stats", simulateBody["stats"]}};
  if (opts.verbosity >= 1) report["registers"] = simulateBody["registers"];
  if (opts.verbosity >= 2) report["log"] = simulateBody["log"];
  return report;
}

json runRemote(const Options& opts, const json& request) {
  httplib::Client client(*opts.server);
  client.set_read_timeout(600, 0);
  auto res = client.Post("/api/simulate", request.dump(), "application/json");
  if (!res) throw InputError("cannot reach server '" + *opts.server + "'");
  json body;
  try {
    body = json::parse(res->body);
  } catch (const json::parse_error&) {
    throw InputError("server returned status " + std::to_string(res->status));
  }
  if (res->status == 400) throw InputError(body.value("error", std::string("request rejected")) + "\n" + describeErrors(body["errors"]));
  if (res->status != 200 && res->status != 422) throw InputError("server returned status " + std::to_string(res->status));
  return body;
}

int execute(const Options& opts, std::ostream& out) {
  CpuConfig config;
  try {
    config = parseConfig(readText(opts.cpu));
  } catch (const ConfigError& e) {
    std::ostringstream s;
    s << opts.cpu << ": invalid configuration\n";
    for (const auto& i : e.issues()) s << "  " << i.field << ": " << i.message << "\n";
    throw InputError(s.str());
  }
  if (auto issues = validate(config); !issues.empty()) {
    std::ostringstream s;
    s << opts.cpu << ": invalid configuration\n";
    for (const auto& i : issues) s << "  " << i.field << ": " << i.message << "\n";
    throw InputError(s.str());
  }

  std::string source;
  std::string sourceName = opts.program;
  std::optional<std::string> entry = opts.entry;
  if (opts.cSource) {
    service::CompilerOptions cc = service::compilerOptionsFromEnv();
    if (opts.gcc) cc.commandTemplate = *opts.gcc;
    const auto compiled = service::compileC(readText(*opts.cSource), opts.optLevel, cc);
    using Status = service::CompileResult::Status;
    if (compiled.status == Status::kUnavailable) throw InputError("compiler unavailable");
    if (compiled.status == Status::kTimeout) throw InputError("compiler timed out");
    if (compiled.status == Status::kErrors) {
      std::ostringstream s;
      for (const auto& d : compiled.errors) s << *opts.cSource << ":" << d.line << ":" << d.column << ": error: " << d.message << "\n";
      throw InputError(s.str());
    }
    source = compiled.assembly;
    if (!entry && (source.starts_with("main:") || source.find("\nmain:") != std::string::npos)) entry = "main";
    std::ofstream asmOut(opts.program, std::ios::binary);
    if (!asmOut) throw InputError("cannot write '" + opts.program + "'");
    asmOut << source;
  } else {
    source = readText(opts.program);
  }

  MemoryInput memory;
  if (opts.memory) memory = loadMemory(*opts.memory, config.memoryCapacity);

  json body;
  if (opts.server) {
    if (memory.image) throw InputError("raw memory images cannot be sent to a server; use a JSON array spec");
    if (opts.dumpMemory) throw InputError("--dump-memory is not available with --server");
    json request{{"config", configToJson(config)}, {"program", source}, {"tick", -1}, {"maxCycles", opts.maxCycles}};
    if (!memory.arrays.empty()) request["memory"] = memory.arrays;
    if (entry) request["entry"] = *entry;
    body = runRemote(opts, request);
  } else {
    service::SimulateRequest request;
    request.config = config;
    request.program = source;
    request.memory = memory.arrays;
    request.entry = entry;
    request.maxCycles = opts.maxCycles;
    service::SimulateOutcome outcome;
    try {
      outcome = service::simulate(request, memory.image ? &*memory.image : nullptr);
    } catch (const service::RequestError& e) {
      if (e.kind() == "assembly failed") {
        std::ostringstream s;
        for (const auto& d : e.errors())
          s << sourceName << ":" << d.value("line", 0) << ":" << d.value("column", 0) << ": error: " << d.value("message", "") << "\n";
        throw InputError(s.str());
      }
      throw InputError(e.kind() + "\n" + describeErrors(e.errors()));
    }
    if (opts.dumpMemory) writeDump(*opts.dumpMemory, outcome.state.memory.snapshot());
    body = {{"halted", outcome.state.halted},
            {"haltReason", std::string(toString(outcome.state.haltReason))},
            {"budgetExhausted", outcome.budgetExhausted},
            {"cycle", outcome.state.cycle},
            {"stats", outcome.report},
            {"registers", archRegisterValues(outcome.state)},
            {"log", json::array()}};
    for (const auto& e : outcome.state.log) body["log"].push_back({{"cycle", e.cycle}, {"message", e.message}});
  }

  const json report = buildReport(body, config, opts);
  if (opts.format == "json") out << report.dump(2) << "\n";
  else printText(out, report, opts);
  return body["budgetExhausted"].get<bool>() ? 2 : 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cycle-level out-of-order RV32IM simulator (batch mode)", "rvsim"};
  Options opts;
  app.add_option("--program", opts.program, "Assembly source (with --c-source: where the compiled assembly is written)")
      ->required();
  app.add_option("--cpu", opts.cpu, "Architecture description (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("--entry", opts.entry, "Label to start execution at");
  app.add_option("--memory", opts.memory, "Initial memory: .csv or binary image, .json array file, or inline JSON arrays");
  app.add_option("--format", opts.format, "Report format")->check(CLI::IsMember({"text", "json"}));
  app.add_option("--verbosity", opts.verbosity, "0: statistics, 1: + registers, 2: + log")->check(CLI::Range(0, 2));
  app.add_option("--max-cycles", opts.maxCycles, "Cycle budget")->check(CLI::PositiveNumber);
  app.add_option("--dump-memory", opts.dumpMemory, "Write final memory (.csv or binary)");
  app.add_option("--gcc", opts.gcc, "Compiler command template with {input}, {output} and {level}");
  app.add_option("--c-source", opts.cSource, "C source to compile before running");
  app.add_option("--opt-level", opts.optLevel, "Optimization level for --c-source")->check(CLI::Range(0, 3));
  app.add_option("--server", opts.server, "Run on a simulation server (http://host:port) instead of locally");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    return execute(opts, out);
  } catch (const InputError& e) {
    err << "error: " << e.what();
    if (std::string_view(e.what()).empty() || std::string_view(e.what()).back() != '\n') err << "\n";
    return 1;
  }
}

}  // namespace rvsim::cli
