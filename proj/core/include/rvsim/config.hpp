#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rvsim/isa.hpp"

namespace rvsim {

enum class ReplacementPolicy { kLRU, kFIFO, kRandom };
enum class WritePolicy { kWriteBack, kWriteThrough };
enum class PredictorType { kZeroBit, kOneBit, kTwoBit };
enum class HistoryKind { kLocal, kGlobal };

std::string_view toString(ReplacementPolicy p);
std::string_view toString(WritePolicy p);
std::string_view toString(PredictorType t);
std::string_view toString(HistoryKind h);

struct CacheConfig {
  bool enabled = true;
  std::uint32_t lineCount = 16;
  std::uint32_t lineSize = 32;
  std::uint32_t associativity = 2;
  ReplacementPolicy replacement = ReplacementPolicy::kLRU;
  WritePolicy writePolicy = WritePolicy::kWriteBack;
  std::uint32_t accessDelay = 1;
  std::uint32_t lineReplacementDelay = 10;

  [[nodiscard]] std::uint32_t setCount() const { return associativity == 0 ? 0 : lineCount / associativity; }
  bool operator==(const CacheConfig&) const = default;
};

struct PredictorConfig {
  std::uint32_t btbSize = 16;
  std::uint32_t phtSize = 16;
  PredictorType predictorType = PredictorType::kTwoBit;
  // zero-bit: 0 = always not taken, 1 = always taken
  int defaultState = 1;
  HistoryKind history = HistoryKind::kGlobal;
  bool operator==(const PredictorConfig&) const = default;
};

struct FunctionalUnitConfig {
  FuClass fuClass = FuClass::kFX;
  std::string name;
  std::uint32_t latency = 1;
  std::map<std::string, std::uint32_t> latencyTable;
  std::vector<std::string> supportedOps;  // empty = every operation of the class

  [[nodiscard]] bool supports(const InstructionDefinition& def) const;
  [[nodiscard]] std::uint32_t latencyFor(std::string_view mnemonic) const;
  bool operator==(const FunctionalUnitConfig&) const = default;
};

struct CpuConfig {
  std::string name = "default";
  double coreHz = 100'000'000;
  double memHz = 100'000'000;
  std::uint32_t robSize = 32;
  std::uint32_t fetchWidth = 2;
  std::uint32_t commitWidth = 2;
  std::uint32_t flushPenalty = 1;
  std::uint32_t jumpsPerCycle = 1;
  std::vector<FunctionalUnitConfig> fuList;
  CacheConfig cache;
  std::uint32_t loadBufferSize = 8;
  std::uint32_t storeBufferSize = 8;
  std::uint32_t loadLatency = 8;   // memory-clock cycles
  std::uint32_t storeLatency = 8;  // memory-clock cycles
  std::uint32_t callStackSize = 512;
  std::uint32_t renameFileSize = 32;
  PredictorConfig predictor;
  std::uint32_t memoryCapacity = 64 * 1024;
  std::uint64_t prngSeed = 42;

  /// ceil(latency * coreHz / memHz)
  [[nodiscard]] std::uint32_t toCoreCycles(std::uint32_t memoryCycles) const;

  bool operator==(const CpuConfig&) const = default;
};

struct ConfigIssue {
  std::string field;
  std::string message;
  bool operator==(const ConfigIssue&) const = default;
};

void to_json(nlohmann::json& j, const ConfigIssue& issue);

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<ConfigIssue> issues);
  [[nodiscard]] const std::vector<ConfigIssue>& issues() const { return issues_; }

 private:
  std::vector<ConfigIssue> issues_;
};

CpuConfig defaultConfig();

/// Every violation, empty when valid.
std::vector<ConfigIssue> validate(const CpuConfig& config, const IsaDefinitions& isa = defaultIsa());

/// Strict: unknown and missing fields are schema errors naming the field
/// path. Does not run validate().
CpuConfig configFromJson(const nlohmann::json& j);
CpuConfig parseConfig(std::string_view text);
nlohmann::json configToJson(const CpuConfig& config);

/// JSON Schema document describing the config format.
nlohmann::json configSchema();

}  // namespace rvsim
