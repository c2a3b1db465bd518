// Acceptance gate: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cache_model.hpp"
#include "cli.hpp"
#include "programs.hpp"
#include "rvsim/assembler.hpp"
#include "rvsim/predictor.hpp"
#include "server.hpp"
#include "testing.hpp"

using namespace rvsim;
using nlohmann::json;
namespace fs = std::filesystem;
namespace rt = rvsim::testing;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double secondsSince(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

std::string fmt(double v, int digits = 3) {
  std::ostringstream s;
  s.precision(digits);
  s << std::fixed << v;
  return s.str();
}

// Every checked pipeline run in this binary feeds the commit-width and ROB
// bound criterion.
struct BoundTally {
  std::size_t runs = 0;
  std::size_t commitViolations = 0;
  std::size_t robViolations = 0;
  std::size_t ipcViolations = 0;
} tally;

rt::CheckedRun checkedRun(const CpuConfig& cfg, std::shared_ptr<const AsmProgram> program) {
  auto run = rt::runChecked(cfg, std::move(program));
  ++tally.runs;
  tally.commitViolations += !run.commitWidthRespected;
  tally.robViolations += !run.robBoundRespected;
  const auto& s = run.state.stats;
  if (s.cycles > 0 && static_cast<double>(s.committed) / static_cast<double>(s.cycles) > cfg.commitWidth) ++tally.ipcViolations;
  return run;
}

Verdict goldenModel() {
  const char* samples[] = {"asm/quicksort.s", "asm/linked_list.s", "asm/dispatch.s", "asm/listing2.s"};
  std::mt19937_64 rng(7001);
  const auto start = Clock::now();
  int runs = 0, mismatches = 0;
  std::string first;
  for (int k = 0; k < 25; ++k) {
    const auto cfg = k == 0 ? defaultConfig() : rt::randomConfig(rng);
    for (const char* name : samples) {
      const auto program = rt::assembleFor(cfg, rt::readSample(name));
      const auto run = checkedRun(cfg, program);
      const auto ref = rt::runReference(*program, cfg.memoryCapacity);
      const auto diff = run.state.halted ? rt::compareWithReference(run.state, ref) : "did not halt";
      ++runs;
      if (!diff.empty()) {
        ++mismatches;
        if (first.empty()) first = std::string(name) + " config " + std::to_string(k) + ": " + diff.substr(0, 120);
      }
    }
  }
  const double t = secondsSince(start);
  return {mismatches == 0 && t < 30.0, "4 samples x 25 configs (" + std::to_string(runs) + " runs), " +
                                            std::to_string(mismatches) + " mismatches, " + fmt(t, 2) + " s (limit 30 s)" +
                                            (first.empty() ? "" : "; " + first)};
}

Verdict perInstruction() {
  rt::ProgramGenerator g(7002);
  std::mt19937_64 cfgRng(7003);
  int tested = 0, failed = 0;
  std::string first;
  auto check = [&](const std::string& what, const std::string& source) {
    for (int k = 0; k < 2; ++k) {
      const auto cfg = k == 0 ? defaultConfig() : rt::randomConfig(cfgRng);
      const auto program = rt::assembleFor(cfg, source);
      const auto run = checkedRun(cfg, program);
      const auto ref = rt::runReference(*program, cfg.memoryCapacity);
      std::string diff = !run.state.halted                                 ? "did not halt"
                         : run.state.haltReason == HaltReason::kException ? "exception"
                         : ref.fault                                       ? "reference fault"
                                                                           : rt::compareWithReference(run.state, ref);
      if (!diff.empty()) {
        ++failed;
        if (first.empty()) first = what + ": " + diff.substr(0, 120);
      }
    }
  };
  int mnemonics = 0, pseudos = 0;
  for (const auto& [name, def] : defaultIsa().instructions()) {
    ++mnemonics;
    for (int i = 0; i < 5; ++i, ++tested) check(name, g.forInstruction(def));
  }
  for (const auto& p : defaultIsa().pseudos()) {
    ++pseudos;
    for (int i = 0; i < 5; ++i, ++tested) check(p.name, g.forPseudo(p));
  }
  return {failed == 0 && mnemonics == 45, std::to_string(mnemonics) + " instructions + " + std::to_string(pseudos) +
                                              " pseudo-instructions, " + std::to_string(tested) +
                                              " programs x 2 configs, " + std::to_string(failed) + " mismatches" +
                                              (first.empty() ? "" : "; " + first)};
}

Verdict replay() {
  const char* samples[] = {"asm/quicksort.s", "asm/linked_list.s", "asm/dispatch.s", "asm/listing2.s"};
  std::mt19937_64 rng(7004);
  int bad = 0;
  for (int triple = 0; triple < 50; ++triple) {
    const auto cfg = rt::randomConfig(rng);
    const auto program = rt::assembleFor(cfg, rt::readSample(samples[triple % 4]));
    auto full = initSimulation(cfg, program);
    runToEnd(full);
    const std::uint64_t t = 1 + rng() % (full.cycle + 5);
    const auto at = serializeState(stateAt(cfg, program, nullptr, t)).dump();
    const auto fromPrevious = serializeState(stepped(stateAt(cfg, program, nullptr, t - 1))).dump();
    auto independent = initSimulation(cfg, program);
    for (std::uint64_t i = 0; i < t && !independent.halted; ++i) step(independent);
    bad += at != fromPrevious || at != serializeState(independent).dump();
  }
  return {bad == 0, "50 (program, config, t) triples, " + std::to_string(bad) + " byte differences"};
}

std::vector<std::uint8_t> bytesOf(std::uint32_t value, std::uint32_t size) {
  std::vector<std::uint8_t> b(size);
  for (std::uint32_t i = 0; i < size; ++i) b[i] = static_cast<std::uint8_t>(value >> (8 * i));
  return b;
}

Verdict cacheOracle() {
  std::mt19937 rng(7005);
  int geometries = 0, mismatches = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const std::uint32_t ways = 1u << (rng() % 4);
    const CacheConfig cfg{.enabled = true,
                          .lineCount = ways * (1u << (rng() % 4)),
                          .lineSize = 4u << (rng() % 4),
                          .associativity = ways,
                          .replacement = trial % 2 ? ReplacementPolicy::kLRU : ReplacementPolicy::kFIFO,
                          .writePolicy = rng() % 2 ? WritePolicy::kWriteBack : WritePolicy::kWriteThrough,
                          .accessDelay = 1,
                          .lineReplacementDelay = 10};
    MemorySystem m(2048, cfg, 3, 2, 1);
    rt::ModelCache model(cfg);
    ++geometries;
    for (int i = 0; i < 10'000; ++i) {
      const std::uint32_t size = 1u << (rng() % 3);
      const std::uint32_t address = rng() % (2048 - size + 1);
      const bool isStore = rng() % 3 == 0;
      const auto tx = m.request(address, size, isStore, bytesOf(static_cast<std::uint32_t>(rng()), size), 0);
      for (const auto& la : tx.lineAccesses) mismatches += la.hit != model.access(la.lineAddress, isStore);
    }
  }

  int policyDiffs = 0;
  for (int trial = 0; trial < 20; ++trial) {
    CacheConfig c{.enabled = true, .lineCount = 8, .lineSize = 16, .associativity = 2, .accessDelay = 1, .lineReplacementDelay = 4};
    c.replacement = trial % 2 ? ReplacementPolicy::kLRU : ReplacementPolicy::kFIFO;
    c.writePolicy = WritePolicy::kWriteBack;
    MemorySystem wb(1024, c, 2, 2, 1);
    c.writePolicy = WritePolicy::kWriteThrough;
    MemorySystem wt(1024, c, 2, 2, 1);
    for (int i = 0; i < 3000; ++i) {
      const std::uint32_t size = 1u << (rng() % 3);
      const std::uint32_t address = rng() % (1024 - size + 1);
      const bool isStore = rng() % 2 == 0;
      const auto data = bytesOf(static_cast<std::uint32_t>(rng()), size);
      (void)wb.request(address, size, isStore, data, 0);
      (void)wt.request(address, size, isStore, data, 0);
    }
    (void)wb.flushCache(0);
    (void)wt.flushCache(0);
    policyDiffs += wb.mainMemory() != wt.mainMemory();
  }
  return {mismatches == 0 && policyDiffs == 0,
          std::to_string(geometries) + " LRU/FIFO geometries x 10,000 accesses, " + std::to_string(mismatches) +
              " hit/miss mismatches; write-back vs write-through after flush: " + std::to_string(policyDiffs) +
              " of 20 differ"};
}

Verdict predictorOracle() {
  auto enumerate = [](int state, int n) {
    int misses = 0;
    for (int i = 0; i < n; ++i) {
      const bool taken = i + 1 < n;
      misses += (state >= 2) != taken;
      state = std::clamp(state + (taken ? 1 : -1), 0, 3);
    }
    return misses;
  };
  auto simulateLoop = [](int state, int n, int* warmup) {
    BranchPredictor p(PredictorConfig{.phtSize = 1, .predictorType = PredictorType::kTwoBit, .defaultState = state});
    int misses = 0;
    for (int i = 0; i < n; ++i) {
      const bool taken = i + 1 < n;
      misses += p.predict(64).taken != taken;
      if (i + 2 == n && warmup) *warmup = misses;
      p.update(64, taken, 32);
    }
    return misses;
  };
  bool ok = true;
  int fromThree = -1, fromZero = -1, warm = -1;
  for (int n = 3; n <= 64; ++n) {
    int w = 0;
    const int a = simulateLoop(3, n, nullptr);
    const int b = simulateLoop(0, n, &w);
    ok = ok && a == enumerate(3, n) && b == enumerate(0, n) && a == 1 && w == 2;
    fromThree = a;
    fromZero = b;
    warm = w;
  }

  std::mt19937 rng(7006);
  bool saturated = true;
  for (int trial = 0; trial < 100; ++trial) {
    const auto type = static_cast<PredictorType>(rng() % 3);
    const int max = type == PredictorType::kTwoBit ? 3 : 1;
    BranchPredictor p(PredictorConfig{.btbSize = 16,
                                      .phtSize = 1 + static_cast<std::uint32_t>(rng() % 64),
                                      .predictorType = type,
                                      .defaultState = static_cast<int>(rng() % (max + 1)),
                                      .history = rng() % 2 ? HistoryKind::kGlobal : HistoryKind::kLocal});
    for (int i = 0; i < 2000; ++i) {
      p.update((rng() % 256) * 4, rng() % 4 != 0, rng());
      for (int c : p.counters()) saturated = saturated && c >= 0 && c <= max;
    }
  }
  return {ok && saturated, "n = 3..64, matches enumeration: state 3 -> " + std::to_string(fromThree) +
                               " miss (exit); state 0 -> " + std::to_string(warm) + " warm-up misses + exit = " +
                               std::to_string(fromZero) + " total; counters within bounds on 100 random streams: " +
                               (saturated ? "yes" : "no")};
}

Verdict superscalar() {
  auto cfg = defaultConfig();
  cfg.fetchWidth = 2;
  cfg.commitWidth = 2;
  int fx = 0;
  for (const auto& fu : cfg.fuList) fx += fu.fuClass == FuClass::kFX;
  const auto wide = checkedRun(cfg, rt::assembleFor(cfg, rt::independentAdds(200)));
  const auto chain = checkedRun(cfg, rt::assembleFor(cfg, rt::dependentChain(200)));
  auto ipc = [](const SimState& s) { return static_cast<double>(s.stats.committed) / static_cast<double>(s.stats.cycles); };
  const double a = ipc(wide.state), b = ipc(chain.state);
  return {fx == 2 && a >= 1.8 && b <= 1.05, "fetch = commit = 2, " + std::to_string(fx) + " FX units: independent adds IPC " +
                                                fmt(a) + " (>= 1.8), dependent chain IPC " + fmt(b) + " (<= 1.05)"};
}

Verdict bounds() {
  // Extra stress: narrow machines with tiny ROBs over all samples.
  std::mt19937_64 rng(7007);
  for (int k = 0; k < 12; ++k) {
    auto cfg = rt::randomConfig(rng);
    cfg.robSize = 2 + static_cast<std::uint32_t>(k);
    cfg.commitWidth = 1 + static_cast<std::uint32_t>(k % 3);
    for (const char* name : {"asm/quicksort.s", "asm/dispatch.s", "asm/linked_list.s"})
      (void)checkedRun(cfg, rt::assembleFor(cfg, rt::readSample(name)));
  }
  const bool ok = tally.commitViolations == 0 && tally.robViolations == 0 && tally.ipcViolations == 0;
  return {ok, std::to_string(tally.runs) + " checked runs, per-cycle commits > commitWidth: " +
                  std::to_string(tally.commitViolations) + ", ROB occupancy > robSize: " + std::to_string(tally.robViolations) +
                  ", IPC > commitWidth: " + std::to_string(tally.ipcViolations)};
}

Verdict assembler() {
  const auto p = assemble(rt::readSample("asm/listing2.s"));
  const auto& arr = p.labels.at("arr");
  const auto& hello = p.labels.at("hello");
  const auto& x = p.labels.at("x");
  auto byteAt = [&](std::uint32_t a) { return p.dataImage.at(a - p.layout.dataStart); };
  const std::string helloText(p.dataImage.begin() + (hello.address - p.layout.dataStart),
                              p.dataImage.begin() + (hello.address - p.layout.dataStart + hello.size));
  const bool arrOk = arr.address % 16 == 0;
  const bool helloOk = hello.size == 12 && helloText == std::string("Hello World\0", 12);
  const bool xOk = byteAt(x.address) == 5 && byteAt(x.address + 1) == 0 && byteAt(x.address + 2) == 0 && byteAt(x.address + 3) == 0;

  int fixtures = 0, filterFailures = 0;
  for (const auto& entry : fs::directory_iterator(fs::path(RVSIM_TEST_DATA_DIR) / "compiler")) {
    if (entry.path().extension() != ".s") continue;
    ++fixtures;
    const auto once = filterCompilerOutput(rt::readFile(entry.path().string()));
    const auto twice = filterCompilerOutput(once);
    try {
      const AssembleOptions options{.stackSize = 1024, .entry = "main"};
      filterFailures += once != twice || !(assemble(once, options) == assemble(twice, options));
    } catch (const AsmError&) {
      ++filterFailures;
    }
  }
  return {arrOk && helloOk && xOk && fixtures >= 20 && filterFailures == 0,
          "listing2.s: arr at " + std::to_string(arr.address) + (arrOk ? " (16-aligned)" : " (misaligned)") + ", hello " +
              std::to_string(hello.size) + " bytes" + (helloOk ? " \"Hello World\\0\"" : " (wrong)") + ", x = 5 little-endian " +
              (xOk ? "yes" : "no") + "; filter idempotent and re-assembly-equivalent on " + std::to_string(fixtures) +
              " compiler outputs, " + std::to_string(filterFailures) + " failures"};
}

Verdict cliContract() {
  const auto dir = fs::temp_directory_path() / ("rvsim-acceptance-" + std::to_string(std::random_device{}()));
  fs::create_directories(dir);
  const auto loop = (dir / "loop.s").string();
  std::ofstream(loop) << "l: j l\n";
  const auto badAsm = (dir / "bad.s").string();
  std::ofstream(badAsm) << "addd x1, x2, x3\n";
  const auto cpu = rt::samplePath("configs/default.json");
  const auto prog = rt::samplePath("asm/quicksort.s");

  auto run = [](std::vector<std::string> args, std::string* out = nullptr) {
    std::ostringstream o, e;
    const int code = cli::run(args, o, e);
    if (out) *out = o.str();
    return code;
  };
  std::vector<std::string> problems;
  auto expect = [&](const std::string& what, int got, int want) {
    if (got != want) problems.push_back(what + " gave " + std::to_string(got));
  };
  expect("missing --program", run({"--cpu", cpu}), 1);
  expect("missing --cpu", run({"--program", prog}), 1);
  expect("halting program", run({"--program", prog, "--cpu", cpu}), 0);
  expect("exhausted budget", run({"--program", loop, "--cpu", cpu, "--max-cycles", "1000"}), 2);
  expect("assembly error", run({"--program", badAsm, "--cpu", cpu}), 1);
  expect("missing file", run({"--program", (dir / "none.s").string(), "--cpu", cpu}), 1);
  std::string a, b;
  run({"--program", prog, "--cpu", cpu, "--format", "json", "--verbosity", "2"}, &a);
  run({"--program", prog, "--cpu", cpu, "--format", "json", "--verbosity", "2"}, &b);
  if (a != b || a.empty()) problems.push_back("JSON output differs between runs");
  fs::remove_all(dir);
  std::string detail = "mandatory --program/--cpu, exit codes 0/1/2, JSON byte-stable";
  for (const auto& p : problems) detail += "; " + p;
  return {problems.empty(), detail};
}

Verdict serverContract() {
  server::ServerOptions options;
  auto srv = server::makeServer(options);
  const int port = srv->bind_to_any_port("127.0.0.1");
  std::thread thread([&] { srv->listen_after_bind(); });
  srv->wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  client.set_read_timeout(60, 0);
  json request{{"config", configToJson(defaultConfig())}, {"program", "l: addi t0, t0, 1\nlw t1, 0(sp)\nj l\n"}, {"tick", 10'000}};
  double worst = 0;
  bool identical = true, okStatus = true;
  std::string first;
  for (const auto& program : {request["program"].get<std::string>(), rt::readSample("asm/quicksort.s")}) {
    request["program"] = program;
    for (int i = 0; i < 3; ++i) {
      const auto start = Clock::now();
      const auto res = client.Post("/api/simulate", request.dump(), "application/json");
      worst = std::max(worst, secondsSince(start));
      okStatus = okStatus && res && res->status == 200;
      if (!res) continue;
      if (i == 0) first = res->body;
      else identical = identical && res->body == first;
    }
  }
  srv->stop();
  thread.join();
  return {okStatus && identical && worst < 1.0, "/api/simulate tick 10,000 on the default config: slowest of 6 requests " +
                                                    fmt(worst, 3) + " s (limit 1 s); identical requests " +
                                                    (identical ? "gave identical bodies" : "DIFFERED")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"golden-model equivalence", goldenModel},
      {"per-instruction end state", perInstruction},
      {"replay determinism", replay},
      {"cache oracle", cacheOracle},
      {"predictor oracle", predictorOracle},
      {"superscalar sanity", superscalar},
      {"IPC and ROB bounds", bounds},
      {"assembler", assembler},
      {"CLI contract", cliContract},
      {"server latency and determinism", serverContract},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failures += !v.pass;
    std::printf("%s  %s: %s\n", v.pass ? "PASS" : "FAIL", name.c_str(), v.detail.c_str());
    std::fflush(stdout);
  }
  return failures;
}
