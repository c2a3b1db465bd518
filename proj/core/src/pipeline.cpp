#include "rvsim/pipeline.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace rvsim {

namespace {

std::string hex(std::uint32_t v) {
  std::ostringstream out;
  out << "0x" << std::hex << v;
  return out.str();
}

const ProgramInstruction& instructionOf(const SimState& s, const SimCode& c) {
  return s.program->instructions[c.programIndex];
}

const InstructionDefinition& defOf(const SimState& s, const SimCode& c) { return *instructionOf(s, c).def; }

void addLog(SimState& s, std::string message) {
  s.log.push_back({s.cycle, std::move(message)});
  if (s.log.size() > kLogLimit) s.log.erase(s.log.begin(), s.log.begin() + static_cast<std::ptrdiff_t>(s.log.size() - kLogLimit));
}

void halt(SimState& s, HaltReason reason, const std::string& message) {
  s.halted = true;
  s.haltReason = reason;
  addLog(s, message);
}

void recordLineAccesses(SimState& s, const MemoryTransaction& tx) {
  for (const auto& a : tx.lineAccesses) s.stats.record(a.hit ? StatEvent::kCacheHit : StatEvent::kCacheMiss);
}

std::int64_t extendLoaded(std::uint64_t raw, const MemoryAccess& access) {
  const int bits = access.size * 8;
  if (bits >= 64) return static_cast<std::int64_t>(raw);
  const std::uint64_t mask = (std::uint64_t{1} << bits) - 1;
  raw &= mask;
  if (access.signExtend && (raw >> (bits - 1)) & 1) raw |= ~mask;
  return static_cast<std::int64_t>(raw);
}

std::uint64_t littleEndian(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < bytes.size() && i < 8; ++i) v |= std::uint64_t{bytes[i]} << (8 * i);
  return v;
}

bool anyUnitSupports(const SimState& s, const InstructionDefinition& def) {
  return std::any_of(s.config->fuList.begin(), s.config->fuList.end(), [&](const auto& fu) { return fu.supports(def); });
}

const FunctionalUnitConfig& unitConfig(const SimState& s, std::size_t index) { return s.config->fuList[index]; }

bool sourcesReady(const SimState& s, const SimCode& c) {
  return std::all_of(c.sources.begin(), c.sources.end(), [&](const SourceOperand& src) {
    return src.read || !src.specId || s.registers.spec(*src.specId).valid;
  });
}

void produce(SimState& s, SimCode& c, std::int64_t value) {
  c.result = value;
  if (!c.destSpec) return;
  const auto& def = defOf(s, c);
  const int wb = def.writeBackIndex();
  const DataType tag = wb >= 0 ? def.arguments[static_cast<std::size_t>(wb)].type : DataType::kInt32;
  s.registers.produce(*c.destSpec, RegisterValue{static_cast<std::uint64_t>(value), tag});
}

void execute(SimState& s, SimCode& c) {
  const auto& def = defOf(s, c);
  c.stamps.executeDone = s.cycle;
  c.actualNext = c.pc + 4;
  const InterpretResult res = interpretInstruction(def, c.operands, c.pc);

  if (def.memory) {
    const std::int64_t address = res.leftover.value_or(0);
    const std::uint32_t size = static_cast<std::uint32_t>(def.memory->size);
    if (address < 0 || static_cast<std::uint64_t>(address) + size > s.memory.capacity()) {
      c.exception = SimException{ExceptionKind::kMemoryFault,
                                 "access of " + std::to_string(size) + " bytes at " + std::to_string(address) +
                                     " outside memory"};
      if (def.isLoad()) produce(s, c, 0);
      c.done = true;
      c.stamps.writeback = s.cycle;
      return;
    }
    c.address = static_cast<std::uint32_t>(address);
    if (def.isStore()) {
      c.storeValue = static_cast<std::uint64_t>(c.operands[0]);
      c.done = true;
      c.stamps.writeback = s.cycle;
    }
    return;
  }

  if (res.exception) c.exception = res.exception;
  const int wb = def.writeBackIndex();
  for (const auto& w : res.writes)
    if (w.argIndex == wb) c.result = w.value.asInt64();
  if (def.instructionType == InstructionType::kBranch) {
    c.actualTaken = res.leftover.value_or(0) != 0;
    if (c.actualTaken) c.actualNext = static_cast<std::uint32_t>(branchTarget(def, c.operands, c.pc));
  } else if (def.instructionType == InstructionType::kJump) {
    c.actualTaken = true;
    c.actualNext = static_cast<std::uint32_t>(res.leftover.value_or(0));
  }
  if (c.destSpec) produce(s, c, c.result.value_or(0));
  c.done = true;
  c.stamps.writeback = s.cycle;
}

void commitStage(SimState& s) {
  for (std::uint32_t n = 0; n < s.config->commitWidth && !s.rob.empty(); ++n) {
    const std::uint64_t id = s.rob.front();
    SimCode& c = s.inFlight.at(id);
    if (!c.done) break;
    const auto& pi = instructionOf(s, c);
    const auto& def = *pi.def;

    if (c.exception && c.exception->kind != ExceptionKind::kDivideByZero) {
      s.stats.record(StatEvent::kException);
      s.fatalException = c.exception;
      flush(s, id - 1, c.pc, 0);
      halt(s, HaltReason::kException,
           "exception " + std::string(toString(s.fatalException->kind)) + " at pc " + hex(pi.address) + ": " +
               s.fatalException->detail);
      return;
    }
    if (c.exception) {
      s.stats.record(StatEvent::kException);
      addLog(s, "divide by zero at pc " + hex(pi.address));
    }

    if (def.isStore()) {
      const auto size = static_cast<std::uint32_t>(def.memory->size);
      std::vector<std::uint8_t> bytes(size);
      for (std::uint32_t i = 0; i < size; ++i) bytes[i] = static_cast<std::uint8_t>(c.storeValue >> (8 * i));
      const MemoryTransaction tx = s.memory.request(*c.address, size, true, bytes, s.cycle, id);
      if (tx.fault) {
        s.stats.record(StatEvent::kException);
        s.fatalException = SimException{ExceptionKind::kMemoryFault, "store outside memory"};
        flush(s, id - 1, c.pc, 0);
        halt(s, HaltReason::kException, "exception memory fault at pc " + hex(pi.address));
        return;
      }
      recordLineAccesses(s, tx);
      s.stats.record(StatEvent::kBytesWritten, size);
      for (auto& e : s.storeBuffer) {
        if (e.id != id) continue;
        e.committed = true;
        e.completionCycle = tx.completionCycle;
      }
    }
    if (def.isLoad())
      std::erase_if(s.loadBuffer, [id](const LoadEntry& e) { return e.id == id; });
    if (c.destSpec) {
      s.registers.commit(*c.destSpec);
      s.registers.release(*c.destSpec);
    }

    bool mispredicted = false;
    bool returned = false;
    if (def.instructionType == InstructionType::kBranch) {
      s.predictor.update(c.pc, c.actualTaken, c.actualNext);
      s.stats.record(StatEvent::kBranchResolved);
      mispredicted = c.predictedNext != c.actualNext;
    } else if (def.instructionType == InstructionType::kJump) {
      const bool direct = def.pcRelativeIndex() >= 0;
      if (!direct) {
        s.predictor.updateTarget(c.pc, c.actualNext);
        s.stats.record(StatEvent::kBranchResolved);
      }
      mispredicted = c.predictedNext != c.actualNext;
      const int rd = static_cast<int>(pi.operands.at(0));
      const bool isReturn = !direct && rd == 0 && pi.operands.size() > 1 && pi.operands[1] == kReturnAddress;
      if (rd == kReturnAddress) {
        ++s.callDepth;
      } else if (isReturn) {
        if (s.callDepth > 0) --s.callDepth;
        else if (s.registers.arch(kStackPointer).value.asUInt32() >= s.initialStackPointer) returned = true;
      }
    }
    if (mispredicted) s.stats.record(StatEvent::kBranchMispredicted);

    if (id <= s.lastCommittedId) throw std::logic_error("commit out of program order");
    s.lastCommittedId = id;
    c.stamps.commit = s.cycle;
    s.stats.record(StatEvent::kCommit, 1, toString(def.instructionType));
    ++s.lastCommits;
    const std::uint32_t pc = c.pc;
    const std::uint32_t next = c.actualNext;
    s.rob.pop_front();
    s.inFlight.erase(id);

    if (returned) {
      flush(s, id, next, 0);
      halt(s, HaltReason::kReturned, "returned from entry routine at pc " + hex(pc));
      return;
    }
    if (mispredicted) {
      s.stats.record(StatEvent::kFlush);
      addLog(s, "misprediction at pc " + hex(pc) + ", refetch from " + hex(next));
      flush(s, id, next, s.config->flushPenalty);
      return;
    }
  }
}

void completeStage(SimState& s) {
  for (auto& u : s.units) {
    if (!u.current || u.busyUntil > s.cycle) continue;
    SimCode& c = s.inFlight.at(*u.current);
    c.busy = false;
    u.current.reset();
    execute(s, c);
  }
  for (auto& e : s.loadBuffer) {
    if (!e.issued) continue;
    SimCode& c = s.inFlight.at(e.id);
    if (c.done || e.completionCycle > s.cycle) continue;
    produce(s, c, e.value);
    c.done = true;
    c.stamps.writeback = s.cycle;
  }
  std::erase_if(s.storeBuffer, [&](const StoreEntry& e) { return e.committed && e.completionCycle <= s.cycle; });
}

void issueStage(SimState& s) {
  for (std::size_t u = 0; u < s.units.size(); ++u) {
    auto& unit = s.units[u];
    if (unit.current || unit.busyUntil > s.cycle) continue;
    const auto& fu = unitConfig(s, u);
    auto& window = s.windows[unit.fuClass];
    for (auto it = window.begin(); it != window.end(); ++it) {
      SimCode& c = s.inFlight.at(*it);
      const auto& def = defOf(s, c);
      if (!fu.supports(def) || !sourcesReady(s, c)) continue;
      for (auto& src : c.sources) {
        if (src.read) continue;
        c.operands[static_cast<std::size_t>(src.argIndex)] = s.registers.spec(*src.specId).value.asInt64();
        s.registers.release(*src.specId);
        src.read = true;
      }
      unit.current = c.id;
      unit.busyUntil = s.cycle + fu.latencyFor(def.name);
      c.busy = true;
      c.stamps.issue = s.cycle;
      c.stamps.executeStart = s.cycle;
      window.erase(it);
      break;
    }
  }
  for (const auto& unit : s.units)
    if (unit.current) s.stats.record(StatEvent::kFuBusy, 1, unit.name);
}

void memoryStage(SimState& s) {
  for (auto& e : s.loadBuffer) {
    if (e.issued) continue;
    SimCode& c = s.inFlight.at(e.id);
    if (!c.address || c.done) continue;
    const auto& access = *defOf(s, c).memory;
    const std::uint64_t lo = *c.address;
    const std::uint64_t hi = lo + static_cast<std::uint64_t>(access.size);

    bool blocked = false;
    const SimCode* youngestOverlap = nullptr;
    for (const auto& st : s.storeBuffer) {
      if (st.id >= e.id || st.committed) continue;
      const SimCode& sc = s.inFlight.at(st.id);
      if (!sc.address) {
        blocked = true;
        break;
      }
      const std::uint64_t slo = *sc.address;
      const std::uint64_t shi = slo + static_cast<std::uint64_t>(defOf(s, sc).memory->size);
      if (slo < hi && lo < shi) youngestOverlap = &sc;
    }
    if (blocked) continue;
    if (youngestOverlap != nullptr) {
      const auto& storeAccess = *defOf(s, *youngestOverlap).memory;
      if (*youngestOverlap->address != *c.address || storeAccess.size != access.size) continue;
      e.value = extendLoaded(youngestOverlap->storeValue, access);
      e.forwarded = true;
      e.completionCycle = s.cycle + 1;
    } else {
      const MemoryTransaction tx =
          s.memory.request(*c.address, static_cast<std::uint32_t>(access.size), false, {}, s.cycle, c.id);
      recordLineAccesses(s, tx);
      if (tx.fault) {
        c.exception = SimException{ExceptionKind::kMemoryFault, "load outside memory"};
        e.value = 0;
      } else {
        e.value = extendLoaded(littleEndian(tx.data), access);
      }
      e.completionCycle = tx.completionCycle;
    }
    e.issued = true;
    break;  // one load per cycle
  }
}

void decodeStage(SimState& s) {
  const auto& cfg = *s.config;
  for (std::uint32_t n = 0; n < cfg.fetchWidth && !s.fetchQueue.empty(); ++n) {
    SimCode& c = s.inFlight.at(s.fetchQueue.front());
    const auto& pi = instructionOf(s, c);
    const auto& def = *pi.def;
    if (s.rob.size() >= cfg.robSize) break;
    const bool supported = anyUnitSupports(s, def);
    if (supported && def.isLoad() && s.loadBuffer.size() >= cfg.loadBufferSize) break;
    if (supported && def.isStore() && s.storeBuffer.size() >= cfg.storeBufferSize) break;
    const int wb = def.writeBackIndex();
    const int destArch = wb >= 0 ? static_cast<int>(pi.operands[static_cast<std::size_t>(wb)]) : -1;
    const bool rename = supported && destArch > 0;
    if (rename && s.registers.freeCount() == 0) break;

    s.fetchQueue.pop_front();
    c.operands.assign(def.arguments.size(), 0);
    for (std::size_t i = 0; i < def.arguments.size(); ++i)
      if (def.arguments[i].isImmediate) c.operands[i] = pi.operands[i];
    c.stamps.decode = s.cycle;
    s.stats.record(StatEvent::kDecode);
    s.rob.push_back(c.id);

    if (!supported) {
      c.exception = SimException{ExceptionKind::kUnsupportedInstruction, "no functional unit executes '" + def.name + "'"};
      c.done = true;
      continue;
    }
    for (std::size_t i = 0; i < def.arguments.size(); ++i) {
      const auto& arg = def.arguments[i];
      if (arg.isImmediate || arg.writeBack) continue;
      SourceOperand src;
      src.argIndex = static_cast<int>(i);
      src.arch = static_cast<int>(pi.operands[i]);
      if (src.arch == 0) {
        src.read = true;
      } else if (auto mapped = s.registers.mapping(src.arch)) {
        src.specId = *mapped;
        s.registers.addRef(*mapped);
      } else {
        c.operands[i] = s.registers.arch(src.arch).value.asInt64();
        src.read = true;
      }
      c.sources.push_back(src);
    }
    if (rename) {
      c.destArch = destArch;
      c.prevMapping = s.registers.mapping(destArch);
      c.prevProducer = c.prevMapping ? s.registers.spec(*c.prevMapping).producer : 0;
      c.destSpec = s.registers.allocate(destArch, c.id);
    }
    s.windows[def.fuClass].push_back(c.id);
    if (def.isLoad()) s.loadBuffer.push_back({c.id});
    if (def.isStore()) s.storeBuffer.push_back({c.id});
  }
}

void fetchStage(SimState& s) {
  if (s.cycle < s.fetchResumeCycle) return;
  const auto& cfg = *s.config;
  std::uint32_t jumps = 0;
  while (s.lastFetches < cfg.fetchWidth && s.fetchQueue.size() < cfg.fetchWidth) {
    const ProgramInstruction* pi = s.program->at(s.pcFetch);
    if (pi == nullptr) {
      s.fetchExhausted = true;
      break;
    }
    const auto& def = *pi->def;
    SimCode c;
    c.id = s.nextId++;
    c.programIndex = s.pcFetch / 4;
    c.pc = s.pcFetch;
    c.stamps.fetch = s.cycle;
    std::uint32_t next = c.pc + 4;
    if (def.instructionType == InstructionType::kBranch) {
      const Prediction p = s.predictor.predict(c.pc);
      c.predictedTaken = p.taken;
      if (p.taken && p.btbHit) next = p.target;
    } else if (def.instructionType == InstructionType::kJump) {
      const int rel = def.pcRelativeIndex();
      if (rel >= 0) {
        next = static_cast<std::uint32_t>(static_cast<std::int64_t>(c.pc) + pi->operands[static_cast<std::size_t>(rel)]);
        c.predictedTaken = true;
      } else {
        const Prediction p = s.predictor.predictTarget(c.pc);
        c.predictedTaken = p.btbHit;
        next = p.target;
      }
    }
    c.predictedNext = next;
    s.fetchQueue.push_back(c.id);
    s.inFlight.emplace(c.id, std::move(c));
    ++s.lastFetches;
    s.stats.record(StatEvent::kFetch);
    const std::uint32_t pc = s.pcFetch;
    s.pcFetch = next;
    if (next != pc + 4 && ++jumps >= cfg.jumpsPerCycle) break;
  }
}

}  // namespace

std::string_view toString(HaltReason r) {
  switch (r) {
    case HaltReason::kNone: return "none";
    case HaltReason::kProgramEnd: return "program end";
    case HaltReason::kReturned: return "returned";
    case HaltReason::kException: return "exception";
  }
  return "none";
}

bool SimState::operator==(const SimState& o) const {
  auto tie = [](const SimState& s) {
    return std::tie(s.cycle, s.pcFetch, s.fetchExhausted, s.fetchResumeCycle, s.nextId, s.callDepth,
                    s.initialStackPointer, s.inFlight, s.fetchQueue, s.rob, s.windows, s.units, s.loadBuffer,
                    s.storeBuffer, s.registers, s.memory, s.predictor, s.stats, s.log, s.halted, s.haltReason,
                    s.fatalException, s.lastCommits, s.lastFetches, s.lastCommittedId);
  };
  return tie(*this) == tie(o);
}

SimState initSimulation(const CpuConfig& config, std::shared_ptr<const AsmProgram> program,
                        const std::vector<std::uint8_t>* baseImage) {
  if (auto issues = validate(config); !issues.empty()) throw ConfigError(std::move(issues));
  if (!program) throw std::invalid_argument("no program");
  if (program->layout.stackTop != config.callStackSize)
    throw std::invalid_argument("program was laid out for a different call stack size");
  if (program->layout.dataEnd > config.memoryCapacity) throw std::invalid_argument("program data exceeds memory capacity");

  SimState s;
  s.config = std::make_shared<const CpuConfig>(config);
  s.program = std::move(program);
  s.memory = MemorySystem::fromConfig(config);
  if (baseImage != nullptr) {
    if (baseImage->size() > config.memoryCapacity) throw std::invalid_argument("memory image exceeds memory capacity");
    s.memory.debugWrite(0, *baseImage);
  }
  s.memory.debugWrite(s.program->layout.dataStart, s.program->dataImage);
  s.registers = RegisterFile(static_cast<int>(config.renameFileSize));
  s.initialStackPointer = s.program->layout.stackTop;
  s.registers.setArch(kStackPointer, RegisterValue::fromInt32(static_cast<std::int32_t>(s.initialStackPointer)));
  s.predictor = BranchPredictor(config.predictor);
  for (const auto& fu : config.fuList) s.units.push_back({fu.name, fu.fuClass, 0, std::nullopt});
  for (auto cls : {FuClass::kFX, FuClass::kFP, FuClass::kLS, FuClass::kBranch}) s.windows[cls];
  s.pcFetch = s.program->entryPoint;
  s.stats.staticMix = staticMix(*s.program);
  for (const auto& [type, _] : s.stats.staticMix) s.stats.dynamicMix[type] = 0;
  for (const auto& fu : config.fuList) s.stats.fuBusyCycles[fu.name] = 0;
  return s;
}

void step(SimState& s) {
  if (s.halted) return;
  s.lastCommits = 0;
  s.lastFetches = 0;
  commitStage(s);
  if (!s.halted) {
    completeStage(s);
    issueStage(s);
    memoryStage(s);
    decodeStage(s);
    fetchStage(s);
  }
  ++s.cycle;
  s.stats.record(StatEvent::kCycle);
  if (!s.halted && terminationCheck(s)) halt(s, HaltReason::kProgramEnd, "program end");
}

SimState stepped(SimState state) {
  step(state);
  return state;
}

void flush(SimState& s, std::uint64_t fromId, std::uint32_t redirect, std::uint32_t penalty) {
  for (auto it = s.inFlight.rbegin(); it != s.inFlight.rend() && it->first > fromId; ++it) {
    SimCode& c = it->second;
    for (const auto& src : c.sources)
      if (!src.read && src.specId) s.registers.release(*src.specId);
    if (c.destSpec) {
      s.registers.restoreMapping(c.destArch, c.prevMapping, c.prevProducer);
      s.registers.release(*c.destSpec);
    }
    for (auto& u : s.units) {
      if (u.current == c.id) {
        u.current.reset();
        u.busyUntil = s.cycle;
      }
    }
  }
  auto younger = [fromId](std::uint64_t id) { return id > fromId; };
  std::erase_if(s.fetchQueue, younger);
  std::erase_if(s.rob, younger);
  for (auto& [_, window] : s.windows) std::erase_if(window, younger);
  std::erase_if(s.loadBuffer, [&](const LoadEntry& e) { return younger(e.id); });
  std::erase_if(s.storeBuffer, [&](const StoreEntry& e) { return younger(e.id); });
  s.inFlight.erase(s.inFlight.upper_bound(fromId), s.inFlight.end());
  s.pcFetch = redirect;
  s.fetchExhausted = false;
  s.fetchResumeCycle = s.cycle + penalty;
}

bool terminationCheck(const SimState& s) {
  if (s.halted) return true;
  return s.fetchExhausted && s.fetchQueue.empty() && s.rob.empty() && s.loadBuffer.empty() && s.storeBuffer.empty() &&
         std::all_of(s.units.begin(), s.units.end(), [](const auto& u) { return !u.current; });
}

RunOutcome runToEnd(SimState& state, std::uint64_t maxCycles) {
  if (maxCycles == 0) throw std::invalid_argument("maxCycles must be positive");
  while (!state.halted && state.cycle < maxCycles) step(state);
  return state.halted ? RunOutcome::kHalted : RunOutcome::kBudgetExhausted;
}

SimState stateAt(const CpuConfig& config, std::shared_ptr<const AsmProgram> program,
                 const std::vector<std::uint8_t>* baseImage, std::uint64_t t) {
  SimState s = initSimulation(config, std::move(program), baseImage);
  for (std::uint64_t i = 0; i < t && !s.halted; ++i) step(s);
  return s;
}

std::vector<std::int32_t> archRegisterValues(const SimState& state) {
  std::vector<std::int32_t> out;
  for (const auto& r : state.registers.archRegisters()) out.push_back(r.value.asInt32());
  return out;
}

// Serialization

namespace {

template <typename T>
nlohmann::json opt(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

template <typename T>
std::optional<T> getOpt(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<T>();
}

nlohmann::json stampsJson(const Stamps& st) {
  return {{"fetch", opt(st.fetch)},         {"decode", opt(st.decode)},       {"issue", opt(st.issue)},
          {"executeStart", opt(st.executeStart)}, {"executeDone", opt(st.executeDone)}, {"writeback", opt(st.writeback)},
          {"commit", opt(st.commit)}};
}

Stamps stampsFrom(const nlohmann::json& j) {
  return {getOpt<std::uint64_t>(j, "fetch"),       getOpt<std::uint64_t>(j, "decode"),
          getOpt<std::uint64_t>(j, "issue"),       getOpt<std::uint64_t>(j, "executeStart"),
          getOpt<std::uint64_t>(j, "executeDone"), getOpt<std::uint64_t>(j, "writeback"),
          getOpt<std::uint64_t>(j, "commit")};
}

nlohmann::json exceptionJson(const std::optional<SimException>& e) {
  if (!e) return nullptr;
  return {{"kind", std::string(toString(e->kind))}, {"detail", e->detail}};
}

std::optional<SimException> exceptionFrom(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  auto kind = exceptionKindFromString(j.at("kind").get<std::string>());
  if (!kind) throw std::invalid_argument("unknown exception kind");
  return SimException{*kind, j.at("detail").get<std::string>()};
}

nlohmann::json simCodeJson(const SimState& s, const SimCode& c) {
  nlohmann::json sources = nlohmann::json::array();
  for (const auto& src : c.sources)
    sources.push_back({{"argIndex", src.argIndex}, {"arch", src.arch}, {"specId", opt(src.specId)}, {"read", src.read}});
  const auto& pi = instructionOf(s, c);
  return {{"id", c.id},
          {"programIndex", c.programIndex},
          {"pc", c.pc},
          {"mnemonic", pi.def->name},
          {"text", renderInstruction(pi)},
          {"operands", c.operands},
          {"sources", std::move(sources)},
          {"destArch", c.destArch},
          {"destSpec", opt(c.destSpec)},
          {"prevMapping", opt(c.prevMapping)},
          {"prevProducer", c.prevProducer},
          {"predictedTaken", c.predictedTaken},
          {"predictedNext", c.predictedNext},
          {"actualTaken", c.actualTaken},
          {"actualNext", c.actualNext},
          {"address", opt(c.address)},
          {"storeValue", c.storeValue},
          {"result", opt(c.result)},
          {"stamps", stampsJson(c.stamps)},
          {"busy", c.busy},
          {"done", c.done},
          {"speculative", !c.stamps.commit},
          {"exception", exceptionJson(c.exception)}};
}

SimCode simCodeFrom(const nlohmann::json& j, const AsmProgram& program) {
  SimCode c;
  c.id = j.at("id").get<std::uint64_t>();
  c.programIndex = j.at("programIndex").get<std::size_t>();
  if (c.programIndex >= program.instructions.size()) throw std::invalid_argument("instruction index outside program");
  c.pc = j.at("pc").get<std::uint32_t>();
  c.operands = j.at("operands").get<std::vector<std::int64_t>>();
  for (const auto& src : j.at("sources"))
    c.sources.push_back({src.at("argIndex").get<int>(), src.at("arch").get<int>(), getOpt<int>(src, "specId"),
                         src.at("read").get<bool>()});
  c.destArch = j.at("destArch").get<int>();
  c.destSpec = getOpt<int>(j, "destSpec");
  c.prevMapping = getOpt<int>(j, "prevMapping");
  c.prevProducer = j.at("prevProducer").get<std::uint64_t>();
  c.predictedTaken = j.at("predictedTaken").get<bool>();
  c.predictedNext = j.at("predictedNext").get<std::uint32_t>();
  c.actualTaken = j.at("actualTaken").get<bool>();
  c.actualNext = j.at("actualNext").get<std::uint32_t>();
  c.address = getOpt<std::uint32_t>(j, "address");
  c.storeValue = j.at("storeValue").get<std::uint64_t>();
  c.result = getOpt<std::int64_t>(j, "result");
  c.stamps = stampsFrom(j.at("stamps"));
  c.busy = j.at("busy").get<bool>();
  c.done = j.at("done").get<bool>();
  c.exception = exceptionFrom(j.at("exception"));
  return c;
}

}  // namespace

nlohmann::json serializeState(const SimState& s) {
  nlohmann::json inFlight = nlohmann::json::array();
  for (const auto& [_, c] : s.inFlight) inFlight.push_back(simCodeJson(s, c));
  nlohmann::json windows = nlohmann::json::object();
  for (const auto& [cls, ids] : s.windows) windows[std::string(toString(cls))] = ids;
  nlohmann::json units = nlohmann::json::array();
  for (const auto& u : s.units)
    units.push_back({{"name", u.name},
                     {"class", std::string(toString(u.fuClass))},
                     {"busyUntil", u.busyUntil},
                     {"current", opt(u.current)}});
  nlohmann::json loads = nlohmann::json::array();
  for (const auto& e : s.loadBuffer)
    loads.push_back({{"id", e.id},
                     {"issued", e.issued},
                     {"forwarded", e.forwarded},
                     {"completionCycle", e.completionCycle},
                     {"value", e.value}});
  nlohmann::json stores = nlohmann::json::array();
  for (const auto& e : s.storeBuffer)
    stores.push_back({{"id", e.id}, {"committed", e.committed}, {"completionCycle", e.completionCycle}});
  nlohmann::json log = nlohmann::json::array();
  for (const auto& e : s.log) log.push_back({{"cycle", e.cycle}, {"message", e.message}});

  return {{"cycle", s.cycle},
          {"pcFetch", s.pcFetch},
          {"fetchExhausted", s.fetchExhausted},
          {"fetchResumeCycle", s.fetchResumeCycle},
          {"nextId", s.nextId},
          {"callDepth", s.callDepth},
          {"initialStackPointer", s.initialStackPointer},
          {"inFlight", std::move(inFlight)},
          {"fetchQueue", s.fetchQueue},
          {"rob", s.rob},
          {"windows", std::move(windows)},
          {"units", std::move(units)},
          {"loadBuffer", std::move(loads)},
          {"storeBuffer", std::move(stores)},
          {"registers", s.registers},
          {"memory", s.memory},
          {"predictor", s.predictor},
          {"stats", s.stats},
          {"log", std::move(log)},
          {"halted", s.halted},
          {"haltReason", std::string(toString(s.haltReason))},
          {"fatalException", exceptionJson(s.fatalException)},
          {"lastCommits", s.lastCommits},
          {"lastFetches", s.lastFetches},
          {"lastCommittedId", s.lastCommittedId}};
}

SimState deserializeState(const nlohmann::json& j, const CpuConfig& config, std::shared_ptr<const AsmProgram> program) {
  SimState s = initSimulation(config, program, nullptr);
  s.cycle = j.at("cycle").get<std::uint64_t>();
  s.pcFetch = j.at("pcFetch").get<std::uint32_t>();
  s.fetchExhausted = j.at("fetchExhausted").get<bool>();
  s.fetchResumeCycle = j.at("fetchResumeCycle").get<std::uint64_t>();
  s.nextId = j.at("nextId").get<std::uint64_t>();
  s.callDepth = j.at("callDepth").get<int>();
  s.initialStackPointer = j.at("initialStackPointer").get<std::uint32_t>();
  for (const auto& c : j.at("inFlight")) {
    SimCode code = simCodeFrom(c, *s.program);
    s.inFlight.emplace(code.id, std::move(code));
  }
  s.fetchQueue = j.at("fetchQueue").get<std::deque<std::uint64_t>>();
  s.rob = j.at("rob").get<std::deque<std::uint64_t>>();
  for (const auto& [name, ids] : j.at("windows").items()) {
    auto cls = fuClassFromString(name);
    if (!cls) throw std::invalid_argument("unknown window class '" + name + "'");
    s.windows[*cls] = ids.get<std::vector<std::uint64_t>>();
  }
  const auto& units = j.at("units");
  if (units.size() != s.units.size()) throw std::invalid_argument("functional unit count does not match configuration");
  for (std::size_t i = 0; i < s.units.size(); ++i) {
    s.units[i].busyUntil = units[i].at("busyUntil").get<std::uint64_t>();
    s.units[i].current = getOpt<std::uint64_t>(units[i], "current");
  }
  s.loadBuffer.clear();
  for (const auto& e : j.at("loadBuffer"))
    s.loadBuffer.push_back({e.at("id").get<std::uint64_t>(), e.at("issued").get<bool>(), e.at("forwarded").get<bool>(),
                            e.at("completionCycle").get<std::uint64_t>(), e.at("value").get<std::int64_t>()});
  s.storeBuffer.clear();
  for (const auto& e : j.at("storeBuffer"))
    s.storeBuffer.push_back(
        {e.at("id").get<std::uint64_t>(), e.at("committed").get<bool>(), e.at("completionCycle").get<std::uint64_t>()});
  s.registers = j.at("registers").get<RegisterFile>();
  s.memory.restore(j.at("memory"));
  s.predictor.restore(j.at("predictor"));
  s.stats = j.at("stats").get<StatsCounters>();
  s.log.clear();
  for (const auto& e : j.at("log")) s.log.push_back({e.at("cycle").get<std::uint64_t>(), e.at("message").get<std::string>()});
  s.halted = j.at("halted").get<bool>();
  const auto reason = j.at("haltReason").get<std::string>();
  s.haltReason = HaltReason::kNone;
  for (auto r : {HaltReason::kNone, HaltReason::kProgramEnd, HaltReason::kReturned, HaltReason::kException})
    if (toString(r) == reason) s.haltReason = r;
  s.fatalException = exceptionFrom(j.at("fatalException"));
  s.lastCommits = j.at("lastCommits").get<std::uint32_t>();
  s.lastFetches = j.at("lastFetches").get<std::uint32_t>();
  s.lastCommittedId = j.at("lastCommittedId").get<std::uint64_t>();
  return s;
}

}  // namespace rvsim
