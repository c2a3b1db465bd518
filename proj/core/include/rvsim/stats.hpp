#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "rvsim/config.hpp"

namespace rvsim {

struct AsmProgram;

enum class StatEvent {
  kCycle,
  kFetch,
  kDecode,
  kCommit,       // key = instruction type name
  kFlush,
  kBranchResolved,
  kBranchMispredicted,
  kFuBusy,       // key = unit name
  kCacheHit,
  kCacheMiss,
  kBytesWritten,
  kFpOpCommitted,
  kException,
};

std::string_view toString(StatEvent e);
std::optional<StatEvent> statEventFromString(std::string_view name);

class StatsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct StatsCounters {
  std::uint64_t cycles = 0;
  std::uint64_t fetched = 0;
  std::uint64_t decoded = 0;
  std::uint64_t committed = 0;
  std::uint64_t flushes = 0;
  std::uint64_t branchesResolved = 0;
  std::uint64_t branchesMispredicted = 0;
  std::map<std::string, std::uint64_t> fuBusyCycles;
  std::uint64_t cacheAccesses = 0;
  std::uint64_t cacheHits = 0;
  std::uint64_t cacheMisses = 0;
  std::uint64_t bytesWritten = 0;
  std::map<std::string, std::uint64_t> staticMix;
  std::map<std::string, std::uint64_t> dynamicMix;
  std::uint64_t fpOpsCommitted = 0;
  std::uint64_t exceptions = 0;

  void record(StatEvent event, std::uint64_t amount = 1, std::string_view key = {});
  /// Throws StatsError for names outside the event catalogue.
  void record(std::string_view eventName, std::uint64_t amount = 1, std::string_view key = {});

  bool operator==(const StatsCounters&) const = default;
};

void to_json(nlohmann::json& j, const StatsCounters& c);
void from_json(const nlohmann::json& j, StatsCounters& c);

struct StatsReport {
  StatsCounters counters;
  double ipc = 0;
  double predictionAccuracy = 0;
  double hitRate = 0;
  double flops = 0;
  double wallTimeSeconds = 0;
  std::map<std::string, double> perUnitUtilization;
  bool operator==(const StatsReport&) const = default;
};

void to_json(nlohmann::json& j, const StatsReport& r);

StatsReport deriveReport(const StatsCounters& counters, const CpuConfig& config);

/// Counts by instruction type over the program text; every type is present.
std::map<std::string, std::uint64_t> staticMix(const AsmProgram& program);

}  // namespace rvsim
