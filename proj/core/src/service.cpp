#include "rvsim/service.hpp"

#include <algorithm>
#include <memory>
#include <stdexcept>
#include <utility>

namespace rvsim::service {

using nlohmann::json;

RequestError::RequestError(std::string kind, json errors)
    : std::runtime_error(kind), kind_(std::move(kind)), errors_(std::move(errors)) {}

namespace {

json issuesJson(const std::vector<ConfigIssue>& issues) {
  json out = json::array();
  for (const auto& i : issues) out.push_back(i);
  return out;
}

json diagnosticsJson(const std::vector<Diagnostic>& diags) {
  json out = json::array();
  for (const auto& d : diags) out.push_back(d);
  return out;
}

Response errorResponse(int status, const std::string& kind, json errors) {
  return {status, {{"error", kind}, {"errors", std::move(errors)}}};
}

const std::vector<std::string> kRequestFields = {"config", "program", "memory", "entry", "tick", "maxCycles"};

}  // namespace

SimulateRequest parseSimulateRequest(const json& body) {
  if (!body.is_object()) throw RequestError("invalid request", json::array({{{"field", ""}, {"message", "expected an object"}}}));
  json problems = json::array();
  for (const auto& [key, _] : body.items())
    if (std::find(kRequestFields.begin(), kRequestFields.end(), key) == kRequestFields.end())
      problems.push_back({{"field", key}, {"message", "unknown field"}});
  for (const char* key : {"config", "program"})
    if (!body.contains(key)) problems.push_back({{"field", key}, {"message", "missing required field"}});
  if (!problems.empty()) throw RequestError("invalid request", problems);

  SimulateRequest r;
  try {
    r.config = configFromJson(body.at("config"));
  } catch (const ConfigError& e) {
    json issues = json::array();
    for (const auto& i : e.issues()) issues.push_back({{"field", "config." + i.field}, {"message", i.message}});
    throw RequestError("invalid config", issues);
  }
  try {
    r.program = body.at("program").get<std::string>();
    if (body.contains("memory")) r.memory = body.at("memory").get<std::vector<UserArray>>();
    if (body.contains("entry") && !body.at("entry").is_null()) r.entry = body.at("entry").get<std::string>();
    if (body.contains("tick")) r.tick = body.at("tick").get<std::int64_t>();
    if (body.contains("maxCycles")) r.maxCycles = body.at("maxCycles").get<std::uint64_t>();
  } catch (const std::exception& e) {
    throw RequestError("invalid request", json::array({{{"field", ""}, {"message", e.what()}}}));
  }
  if (r.tick < -1) throw RequestError("invalid request", json::array({{{"field", "tick"}, {"message", "must be >= -1"}}}));
  if (r.maxCycles == 0)
    throw RequestError("invalid request", json::array({{{"field", "maxCycles"}, {"message", "must be positive"}}}));
  return r;
}

AsmProgram assembleFor(const CpuConfig& config, std::string_view source, const std::vector<UserArray>& arrays,
                       const std::optional<std::string>& entry) {
  AssembleOptions options;
  options.userArrays = arrays;
  options.stackSize = config.callStackSize;
  options.memoryCapacity = config.memoryCapacity;
  options.entry = entry;
  return assemble(source, options);
}

SimulateOutcome simulate(const SimulateRequest& request, const std::vector<std::uint8_t>* baseImage) {
  if (auto issues = validate(request.config); !issues.empty()) {
    json errors = json::array();
    for (const auto& i : issues) errors.push_back({{"field", "config." + i.field}, {"message", i.message}});
    throw RequestError("invalid config", errors);
  }
  std::shared_ptr<const AsmProgram> program;
  try {
    program = std::make_shared<const AsmProgram>(assembleFor(request.config, request.program, request.memory, request.entry));
  } catch (const AsmError& e) {
    throw RequestError("assembly failed", diagnosticsJson(e.diagnostics()));
  } catch (const std::invalid_argument& e) {
    throw RequestError("invalid request", json::array({{{"field", "memory"}, {"message", e.what()}}}));
  }

  SimulateOutcome out{initSimulation(request.config, program, baseImage), {}, false};
  if (request.tick < 0) {
    out.budgetExhausted = runToEnd(out.state, request.maxCycles) == RunOutcome::kBudgetExhausted;
  } else {
    const auto target = std::min<std::uint64_t>(static_cast<std::uint64_t>(request.tick), request.maxCycles);
    while (!out.state.halted && out.state.cycle < target) step(out.state);
    out.budgetExhausted = static_cast<std::uint64_t>(request.tick) > request.maxCycles && !out.state.halted;
  }
  out.report = deriveReport(out.state.stats, request.config);
  return out;
}

json simulateResponseBody(const SimulateOutcome& outcome) {
  json state = serializeState(outcome.state);
  state["program"] = *outcome.state.program;
  json log = state["log"];
  return {{"state", std::move(state)},
          {"stats", outcome.report},
          {"log", std::move(log)},
          {"halted", outcome.state.halted},
          {"haltReason", std::string(toString(outcome.state.haltReason))},
          {"cycle", outcome.state.cycle},
          {"budgetExhausted", outcome.budgetExhausted},
          {"registers", archRegisterValues(outcome.state)},
          {"memoryImage", toHex(outcome.state.memory.snapshot())}};
}

Response handleSimulate(const json& body, std::uint64_t maxCyclesCap) {
  try {
    auto request = parseSimulateRequest(body);
    request.maxCycles = std::min(request.maxCycles, maxCyclesCap);
    const auto outcome = simulate(request);
    return {outcome.budgetExhausted ? 422 : 200, simulateResponseBody(outcome)};
  } catch (const RequestError& e) {
    return errorResponse(400, e.kind(), e.errors());
  } catch (const ConfigError& e) {
    return errorResponse(400, "invalid config", issuesJson(e.issues()));
  }
}

Response handleParseAsm(const json& body) {
  if (!body.is_object() || !body.contains("program") || !body.at("program").is_string())
    return errorResponse(400, "invalid request", json::array({{{"field", "program"}, {"message", "missing required field"}}}));
  AssembleOptions options;
  if (body.contains("config")) {
    try {
      const auto config = configFromJson(body.at("config"));
      options.stackSize = config.callStackSize;
      options.memoryCapacity = config.memoryCapacity;
    } catch (const ConfigError& e) {
      return errorResponse(400, "invalid config", issuesJson(e.issues()));
    }
  }
  try {
    const auto program = assemble(body.at("program").get<std::string>(), options);
    json p = program;
    return {200, {{"ok", true}, {"errors", json::array()}, {"symbolTable", p["labels"]}, {"program", std::move(p)}}};
  } catch (const AsmError& e) {
    return {200, {{"ok", false}, {"errors", diagnosticsJson(e.diagnostics())}, {"symbolTable", json::object()}}};
  }
}

Response handleCompile(const json& body, const CompilerOptions& options) {
  if (!body.is_object() || !body.contains("cCode") || !body.at("cCode").is_string())
    return errorResponse(400, "invalid request", json::array({{{"field", "cCode"}, {"message", "missing required field"}}}));
  int level = 0;
  if (body.contains("optimizationLevel")) {
    const auto& l = body.at("optimizationLevel");
    if (l.is_number_integer()) level = l.get<int>();
    else if (l.is_string() && l.get<std::string>().size() == 2 && (l.get<std::string>()[0] == 'O' || l.get<std::string>()[0] == 'o'))
      level = l.get<std::string>()[1] - '0';
    else level = -1;
  }
  if (level < 0 || level > 3)
    return errorResponse(400, "invalid request",
                         json::array({{{"field", "optimizationLevel"}, {"message", "expected O0, O1, O2 or O3"}}}));

  const auto result = compileC(body.at("cCode").get<std::string>(), level, options);
  switch (result.status) {
    case CompileResult::Status::kUnavailable:
      return {503, {{"error", "compiler unavailable"}, {"errors", json::array()}}};
    case CompileResult::Status::kTimeout:
      return {504, {{"error", "compiler timed out"}, {"errors", json::array()}}};
    case CompileResult::Status::kErrors:
      return {200, {{"errors", diagnosticsJson(result.errors)}, {"mapping", json::array()}}};
    case CompileResult::Status::kOk:
      break;
  }
  json mapping = json::array();
  for (const auto& m : result.mapping) mapping.push_back({{"cLine", m.cLine}, {"asmLines", m.asmLines}});
  return {200, {{"asm", result.assembly}, {"errors", json::array()}, {"mapping", std::move(mapping)}}};
}

json schemaDocument() {
  const json uint{{"type", "integer"}, {"minimum", 0}};
  const json diagnostic{{"type", "object"},
                        {"properties", {{"line", {{"type", "integer"}}}, {"column", {{"type", "integer"}}}, {"message", {{"type", "string"}}}}},
                        {"required", {"line", "column", "message"}}};
  const json userArray{
      {"type", "object"},
      {"properties",
       {{"name", {{"type", "string"}}},
        {"dataType", {{"enum", {"byte", "hword", "word"}}}},
        {"alignment", uint},
        {"count", uint},
        {"values", {{"type", "array"}, {"items", {{"type", "integer"}}}}},
        {"fill", {{"type", "integer"}}},
        {"randomSeed", uint},
        {"randomMin", {{"type", "integer"}}},
        {"randomMax", {{"type", "integer"}}}}},
      {"required", {"name"}},
      {"additionalProperties", false}};
  const json simulateRequest{{"$schema", "http://json-schema.org/draft-07/schema#"},
                             {"type", "object"},
                             {"properties",
                              {{"config", configSchema()},
                               {"program", {{"type", "string"}}},
                               {"memory", {{"type", "array"}, {"items", userArray}}},
                               {"entry", {{"type", {"string", "null"}}}},
                               {"tick", {{"type", "integer"}, {"minimum", -1}}},
                               {"maxCycles", {{"type", "integer"}, {"minimum", 1}}}}},
                             {"required", {"config", "program"}},
                             {"additionalProperties", false}};
  const json simulateResponse{{"type", "object"},
                              {"properties",
                               {{"state", {{"type", "object"}}},
                                {"stats", {{"type", "object"}}},
                                {"log", {{"type", "array"}}},
                                {"halted", {{"type", "boolean"}}},
                                {"haltReason", {{"type", "string"}}},
                                {"cycle", uint},
                                {"budgetExhausted", {{"type", "boolean"}}},
                                {"registers", {{"type", "array"}, {"items", {{"type", "integer"}}}}},
                                {"memoryImage", {{"type", "string"}}}}},
                              {"required", {"state", "stats", "log", "halted", "cycle"}}};
  const json compileRequest{{"type", "object"},
                            {"properties",
                             {{"cCode", {{"type", "string"}}},
                              {"optimizationLevel", {{"enum", {"O0", "O1", "O2", "O3", 0, 1, 2, 3}}}}}},
                            {"required", {"cCode"}},
                            {"additionalProperties", false}};
  const json mappingEntry{{"type", "object"},
                          {"properties",
                           {{"cLine", {{"type", "integer"}}},
                            {"asmLines", {{"type", "array"}, {"items", {{"type", "integer"}}}}}}}};
  const json compileResponse{{"type", "object"},
                             {"properties",
                              {{"asm", {{"type", "string"}}},
                               {"errors", {{"type", "array"}, {"items", diagnostic}}},
                               {"mapping", {{"type", "array"}, {"items", mappingEntry}}}}},
                             {"required", {"errors"}}};
  const json parseRequest{{"type", "object"},
                          {"properties", {{"program", {{"type", "string"}}}, {"config", configSchema()}}},
                          {"required", {"program"}},
                          {"additionalProperties", false}};
  const json parseResponse{{"type", "object"},
                           {"properties",
                            {{"ok", {{"type", "boolean"}}},
                             {"errors", {{"type", "array"}, {"items", diagnostic}}},
                             {"symbolTable", {{"type", "object"}}}}},
                           {"required", {"ok", "errors", "symbolTable"}}};
  return {{"simulateRequest", simulateRequest},
          {"simulateResponse", simulateResponse},
          {"compileRequest", compileRequest},
          {"compileResponse", compileResponse},
          {"parseAsmRequest", parseRequest},
          {"parseAsmResponse", parseResponse},
          {"config", configSchema()},
          {"defaultConfig", configToJson(defaultConfig())}};
}

}  // namespace rvsim::service
