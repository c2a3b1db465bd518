#pragma once

// Cycle-level out-of-order pipeline. All dynamic state lives in SimState so a
// simulation can be copied, serialized and replayed; the configuration and
// program are shared immutable inputs.

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rvsim/assembler.hpp"
#include "rvsim/config.hpp"
#include "rvsim/memsys.hpp"
#include "rvsim/predictor.hpp"
#include "rvsim/registers.hpp"
#include "rvsim/stats.hpp"

namespace rvsim {

struct Stamps {
  std::optional<std::uint64_t> fetch;
  std::optional<std::uint64_t> decode;
  std::optional<std::uint64_t> issue;
  std::optional<std::uint64_t> executeStart;
  std::optional<std::uint64_t> executeDone;
  std::optional<std::uint64_t> writeback;
  std::optional<std::uint64_t> commit;
  bool operator==(const Stamps&) const = default;
};

/// A register source: either already holding a value or waiting on a
/// speculative register (whose reference it holds until read).
struct SourceOperand {
  int argIndex = -1;
  int arch = 0;
  std::optional<int> specId;
  bool read = false;  // value captured, reference released
  bool operator==(const SourceOperand&) const = default;
};

struct SimCode {
  std::uint64_t id = 0;
  std::size_t programIndex = 0;
  std::uint32_t pc = 0;
  std::vector<std::int64_t> operands;  // immediates, then register values as they are read
  std::vector<SourceOperand> sources;
  int destArch = -1;
  std::optional<int> destSpec;
  std::optional<int> prevMapping;
  std::uint64_t prevProducer = 0;

  bool predictedTaken = false;
  std::uint32_t predictedNext = 0;
  bool actualTaken = false;
  std::uint32_t actualNext = 0;

  std::optional<std::uint32_t> address;  // loads and stores, after address generation
  std::uint64_t storeValue = 0;
  std::optional<std::int64_t> result;

  Stamps stamps;
  bool busy = false;  // occupying a functional unit
  bool done = false;  // may commit
  std::optional<SimException> exception;

  bool operator==(const SimCode&) const = default;
};

struct FunctionalUnitState {
  std::string name;
  FuClass fuClass = FuClass::kFX;
  std::uint64_t busyUntil = 0;
  std::optional<std::uint64_t> current;
  bool operator==(const FunctionalUnitState&) const = default;
};

struct LoadEntry {
  std::uint64_t id = 0;
  bool issued = false;
  bool forwarded = false;
  std::uint64_t completionCycle = 0;
  std::int64_t value = 0;
  bool operator==(const LoadEntry&) const = default;
};

struct StoreEntry {
  std::uint64_t id = 0;
  bool committed = false;
  std::uint64_t completionCycle = 0;  // memory transaction, once committed
  bool operator==(const StoreEntry&) const = default;
};

struct LogEntry {
  std::uint64_t cycle = 0;
  std::string message;
  bool operator==(const LogEntry&) const = default;
};

enum class HaltReason { kNone, kProgramEnd, kReturned, kException };
std::string_view toString(HaltReason r);

struct SimState {
  std::shared_ptr<const CpuConfig> config;
  std::shared_ptr<const AsmProgram> program;

  std::uint64_t cycle = 0;
  std::uint32_t pcFetch = 0;
  bool fetchExhausted = false;
  std::uint64_t fetchResumeCycle = 0;
  std::uint64_t nextId = 1;
  int callDepth = 0;
  std::uint32_t initialStackPointer = 0;

  std::map<std::uint64_t, SimCode> inFlight;
  std::deque<std::uint64_t> fetchQueue;
  std::deque<std::uint64_t> rob;
  std::map<FuClass, std::vector<std::uint64_t>> windows;
  std::vector<FunctionalUnitState> units;
  std::vector<LoadEntry> loadBuffer;
  std::vector<StoreEntry> storeBuffer;

  RegisterFile registers;
  MemorySystem memory;
  BranchPredictor predictor;
  StatsCounters stats;
  std::vector<LogEntry> log;

  bool halted = false;
  HaltReason haltReason = HaltReason::kNone;
  std::optional<SimException> fatalException;

  // Per-cycle observations for invariant checks.
  std::uint32_t lastCommits = 0;
  std::uint32_t lastFetches = 0;
  std::uint64_t lastCommittedId = 0;

  bool operator==(const SimState& o) const;
};

inline constexpr std::size_t kLogLimit = 1000;
inline constexpr std::uint64_t kDefaultMaxCycles = 10'000'000;

/// Validates the configuration, loads memory (optional base image, then
/// program data), sets x2 to the stack top and the fetch pc to the entry.
/// Throws ConfigError.
SimState initSimulation(const CpuConfig& config, std::shared_ptr<const AsmProgram> program,
                        const std::vector<std::uint8_t>* baseImage = nullptr);

/// Advances one core clock cycle. No-op once halted.
void step(SimState& state);
SimState stepped(SimState state);

/// Squashes every in-flight instruction younger than `fromId`, redirects
/// fetch to `redirect` and stalls it for `penalty` cycles.
void flush(SimState& state, std::uint64_t fromId, std::uint32_t redirect, std::uint32_t penalty);

[[nodiscard]] bool terminationCheck(const SimState& state);

enum class RunOutcome { kHalted, kBudgetExhausted };

/// Steps until halted or until the cycle counter reaches maxCycles.
RunOutcome runToEnd(SimState& state, std::uint64_t maxCycles = kDefaultMaxCycles);

/// Fresh initialization followed by t steps (stops early at halt).
SimState stateAt(const CpuConfig& config, std::shared_ptr<const AsmProgram> program,
                 const std::vector<std::uint8_t>* baseImage, std::uint64_t t);

nlohmann::json serializeState(const SimState& state);
SimState deserializeState(const nlohmann::json& j, const CpuConfig& config, std::shared_ptr<const AsmProgram> program);

/// Architectural register values x0..x31 as 32-bit signed integers.
std::vector<std::int32_t> archRegisterValues(const SimState& state);

}  // namespace rvsim
