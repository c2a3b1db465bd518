#include "rvsim/stats.hpp"

#include <algorithm>

#include "rvsim/assembler.hpp"

namespace rvsim {

namespace {

constexpr std::pair<std::string_view, StatEvent> kEvents[] = {
    {"cycle", StatEvent::kCycle},
    {"fetch", StatEvent::kFetch},
    {"decode", StatEvent::kDecode},
    {"commit", StatEvent::kCommit},
    {"flush", StatEvent::kFlush},
    {"branchResolved", StatEvent::kBranchResolved},
    {"branchMispredicted", StatEvent::kBranchMispredicted},
    {"fuBusy", StatEvent::kFuBusy},
    {"cacheHit", StatEvent::kCacheHit},
    {"cacheMiss", StatEvent::kCacheMiss},
    {"bytesWritten", StatEvent::kBytesWritten},
    {"fpOpCommitted", StatEvent::kFpOpCommitted},
    {"exception", StatEvent::kException},
};

std::map<std::string, std::uint64_t> emptyMix() {
  std::map<std::string, std::uint64_t> mix;
  for (auto t : {InstructionType::kArithmetic, InstructionType::kLoadStore, InstructionType::kBranch, InstructionType::kJump})
    mix[std::string(toString(t))] = 0;
  return mix;
}

}  // namespace

std::string_view toString(StatEvent e) {
  for (const auto& [name, value] : kEvents)
    if (value == e) return name;
  return "?";
}

std::optional<StatEvent> statEventFromString(std::string_view name) {
  for (const auto& [text, value] : kEvents)
    if (text == name) return value;
  return std::nullopt;
}

void StatsCounters::record(StatEvent event, std::uint64_t amount, std::string_view key) {
  switch (event) {
    case StatEvent::kCycle: cycles += amount; break;
    case StatEvent::kFetch: fetched += amount; break;
    case StatEvent::kDecode: decoded += amount; break;
    case StatEvent::kCommit:
      committed += amount;
      if (!key.empty()) dynamicMix[std::string(key)] += amount;
      break;
    case StatEvent::kFlush: flushes += amount; break;
    case StatEvent::kBranchResolved: branchesResolved += amount; break;
    case StatEvent::kBranchMispredicted: branchesMispredicted += amount; break;
    case StatEvent::kFuBusy: fuBusyCycles[std::string(key)] += amount; break;
    case StatEvent::kCacheHit:
      cacheHits += amount;
      cacheAccesses += amount;
      break;
    case StatEvent::kCacheMiss:
      cacheMisses += amount;
      cacheAccesses += amount;
      break;
    case StatEvent::kBytesWritten: bytesWritten += amount; break;
    case StatEvent::kFpOpCommitted: fpOpsCommitted += amount; break;
    case StatEvent::kException: exceptions += amount; break;
  }
}

void StatsCounters::record(std::string_view eventName, std::uint64_t amount, std::string_view key) {
  auto e = statEventFromString(eventName);
  if (!e) throw StatsError("unknown statistics event '" + std::string(eventName) + "'");
  record(*e, amount, key);
}

void to_json(nlohmann::json& j, const StatsCounters& c) {
  j = nlohmann::json{{"cycles", c.cycles},
                     {"fetched", c.fetched},
                     {"decoded", c.decoded},
                     {"committed", c.committed},
                     {"flushes", c.flushes},
                     {"branchesResolved", c.branchesResolved},
                     {"branchesMispredicted", c.branchesMispredicted},
                     {"fuBusyCycles", c.fuBusyCycles},
                     {"cacheAccesses", c.cacheAccesses},
                     {"cacheHits", c.cacheHits},
                     {"cacheMisses", c.cacheMisses},
                     {"bytesWritten", c.bytesWritten},
                     {"staticMix", c.staticMix},
                     {"dynamicMix", c.dynamicMix},
                     {"fpOpsCommitted", c.fpOpsCommitted},
                     {"exceptions", c.exceptions}};
}

void from_json(const nlohmann::json& j, StatsCounters& c) {
  c.cycles = j.at("cycles").get<std::uint64_t>();
  c.fetched = j.at("fetched").get<std::uint64_t>();
  c.decoded = j.at("decoded").get<std::uint64_t>();
  c.committed = j.at("committed").get<std::uint64_t>();
  c.flushes = j.at("flushes").get<std::uint64_t>();
  c.branchesResolved = j.at("branchesResolved").get<std::uint64_t>();
  c.branchesMispredicted = j.at("branchesMispredicted").get<std::uint64_t>();
  c.fuBusyCycles = j.at("fuBusyCycles").get<std::map<std::string, std::uint64_t>>();
  c.cacheAccesses = j.at("cacheAccesses").get<std::uint64_t>();
  c.cacheHits = j.at("cacheHits").get<std::uint64_t>();
  c.cacheMisses = j.at("cacheMisses").get<std::uint64_t>();
  c.bytesWritten = j.at("bytesWritten").get<std::uint64_t>();
  c.staticMix = j.at("staticMix").get<std::map<std::string, std::uint64_t>>();
  c.dynamicMix = j.at("dynamicMix").get<std::map<std::string, std::uint64_t>>();
  c.fpOpsCommitted = j.at("fpOpsCommitted").get<std::uint64_t>();
  c.exceptions = j.at("exceptions").get<std::uint64_t>();
}

void to_json(nlohmann::json& j, const StatsReport& r) {
  j = nlohmann::json{{"counters", r.counters},
                     {"ipc", r.ipc},
                     {"predictionAccuracy", r.predictionAccuracy},
                     {"hitRate", r.hitRate},
                     {"flops", r.flops},
                     {"wallTimeSeconds", r.wallTimeSeconds},
                     {"perUnitUtilization", r.perUnitUtilization}};
}

StatsReport deriveReport(const StatsCounters& c, const CpuConfig& config) {
  StatsReport r;
  r.counters = c;
  const auto cycles = static_cast<double>(c.cycles);
  r.ipc = c.cycles == 0 ? 0.0 : static_cast<double>(c.committed) / cycles;
  r.predictionAccuracy =
      1.0 - static_cast<double>(c.branchesMispredicted) / static_cast<double>(std::max<std::uint64_t>(c.branchesResolved, 1));
  r.hitRate = static_cast<double>(c.cacheHits) / static_cast<double>(std::max<std::uint64_t>(c.cacheAccesses, 1));
  r.wallTimeSeconds = config.coreHz > 0 ? cycles / config.coreHz : 0.0;
  r.flops = r.wallTimeSeconds > 0 ? static_cast<double>(c.fpOpsCommitted) / r.wallTimeSeconds : 0.0;
  for (const auto& fu : config.fuList) {
    auto it = c.fuBusyCycles.find(fu.name);
    const double busy = it == c.fuBusyCycles.end() ? 0.0 : static_cast<double>(it->second);
    r.perUnitUtilization[fu.name] = c.cycles == 0 ? 0.0 : busy / cycles;
  }
  return r;
}

std::map<std::string, std::uint64_t> staticMix(const AsmProgram& program) {
  auto mix = emptyMix();
  for (const auto& i : program.instructions) ++mix[std::string(toString(i.def->instructionType))];
  return mix;
}

}  // namespace rvsim
