#include "testing.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rvsim::testing {

std::string samplePath(const std::string& relative) { return std::string(RVSIM_SAMPLES_DIR) + "/" + relative; }

std::string readFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string readSample(const std::string& relative) { return readFile(samplePath(relative)); }

CpuConfig randomConfig(std::mt19937_64& rng) {
  auto pick = [&](std::uint32_t lo, std::uint32_t hi) {
    return std::uniform_int_distribution<std::uint32_t>(lo, hi)(rng);
  };
  CpuConfig c = defaultConfig();
  c.name = "random";
  c.fetchWidth = pick(1, 4);
  c.commitWidth = pick(1, 4);
  c.robSize = pick(2, 48);
  c.renameFileSize = pick(2, 48);
  c.flushPenalty = pick(0, 4);
  c.jumpsPerCycle = pick(1, 3);
  c.loadBufferSize = pick(1, 8);
  c.storeBufferSize = pick(1, 8);
  c.loadLatency = pick(1, 12);
  c.storeLatency = pick(1, 12);
  c.memHz = c.coreHz / static_cast<double>(pick(1, 3));
  c.callStackSize = 1024;
  c.prngSeed = rng();

  c.fuList.clear();
  const std::uint32_t fx = pick(1, 3);
  for (std::uint32_t i = 0; i < fx; ++i) {
    FunctionalUnitConfig fu;
    fu.fuClass = FuClass::kFX;
    fu.name = "FX" + std::to_string(i);
    fu.latency = pick(1, 3);
    fu.latencyTable = {{"mul", pick(1, 6)}, {"div", pick(1, 20)}, {"rem", pick(1, 20)}, {"divu", pick(1, 20)}};
    c.fuList.push_back(fu);
  }
  for (std::uint32_t i = 0, n = pick(1, 2); i < n; ++i)
    c.fuList.push_back({FuClass::kBranch, "Branch" + std::to_string(i), pick(1, 3), {}, {}});
  for (std::uint32_t i = 0, n = pick(1, 2); i < n; ++i)
    c.fuList.push_back({FuClass::kLS, "LS" + std::to_string(i), pick(1, 3), {}, {}});

  c.cache.enabled = pick(0, 4) != 0;
  c.cache.lineSize = 1U << pick(2, 6);
  c.cache.associativity = 1U << pick(0, 2);
  c.cache.lineCount = c.cache.associativity * (1U << pick(0, 4));
  c.cache.replacement = static_cast<ReplacementPolicy>(pick(0, 2));
  c.cache.writePolicy = static_cast<WritePolicy>(pick(0, 1));
  c.cache.accessDelay = pick(0, 3);
  c.cache.lineReplacementDelay = pick(0, 12);

  c.predictor.btbSize = 1U << pick(0, 6);
  c.predictor.phtSize = 1U << pick(0, 8);
  c.predictor.predictorType = static_cast<PredictorType>(pick(0, 2));
  c.predictor.defaultState = static_cast<int>(pick(0, c.predictor.predictorType == PredictorType::kTwoBit ? 3 : 1));
  c.predictor.history = static_cast<HistoryKind>(pick(0, 1));
  return c;
}

std::shared_ptr<const AsmProgram> assembleFor(const CpuConfig& config, const std::string& source) {
  AssembleOptions options;
  options.stackSize = config.callStackSize;
  options.memoryCapacity = config.memoryCapacity;
  return std::make_shared<const AsmProgram>(assemble(source, options));
}

CheckedRun runChecked(const CpuConfig& config, std::shared_ptr<const AsmProgram> program, std::uint64_t maxCycles) {
  CheckedRun run{initSimulation(config, std::move(program)), RunOutcome::kHalted};
  while (!run.state.halted) {
    if (run.state.cycle >= maxCycles) {
      run.outcome = RunOutcome::kBudgetExhausted;
      break;
    }
    step(run.state);
    run.maxCommitsPerCycle = std::max(run.maxCommitsPerCycle, run.state.lastCommits);
    run.maxRobOccupancy = std::max(run.maxRobOccupancy, run.state.rob.size());
    run.commitWidthRespected &= run.state.lastCommits <= config.commitWidth;
    run.robBoundRespected &= run.state.rob.size() <= config.robSize;
  }
  return run;
}

std::string compareWithReference(const SimState& state, const ReferenceResult& ref) {
  std::ostringstream out;
  const auto regs = archRegisterValues(state);
  for (std::size_t i = 0; i < regs.size(); ++i)
    if (regs[i] != ref.registers[i]) out << "x" << i << ": sim " << regs[i] << " ref " << ref.registers[i] << "\n";
  const auto memory = state.memory.snapshot();
  if (memory.size() != ref.memory.size()) {
    out << "memory size differs\n";
  } else {
    int shown = 0;
    for (std::size_t a = 0; a < memory.size() && shown < 8; ++a)
      if (memory[a] != ref.memory[a]) {
        out << "mem[" << a << "]: sim " << int(memory[a]) << " ref " << int(ref.memory[a]) << "\n";
        ++shown;
      }
  }
  return out.str();
}

std::string independentAdds(int count) {
  std::ostringstream s;
  for (int i = 0; i < count; ++i) {
    const int rd = 5 + i % 8;  // sources x3/x4 are never written
    s << "  add x" << rd << ", x3, x4\n";
  }
  return s.str();
}

std::string dependentChain(int count) {
  std::ostringstream s;
  for (int i = 0; i < count; ++i) s << "  add x5, x5, x3\n";
  return s.str();
}

}  // namespace rvsim::testing
