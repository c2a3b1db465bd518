#include <benchmark/benchmark.h>

#include <fstream>
#include <memory>
#include <random>
#include <sstream>

#include "rvsim/assembler.hpp"
#include "rvsim/memsys.hpp"
#include "rvsim/pipeline.hpp"
#include "rvsim/predictor.hpp"
#include "rvsim/service.hpp"

using namespace rvsim;

namespace {

std::string sample(const std::string& name) {
  std::ifstream in(std::string(RVSIM_SAMPLES_DIR) + "/" + name);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::shared_ptr<const AsmProgram> program(const CpuConfig& cfg, const std::string& name) {
  return std::make_shared<const AsmProgram>(service::assembleFor(cfg, sample(name)));
}

void BM_RunToEnd(benchmark::State& st, const char* name) {
  const auto cfg = defaultConfig();
  const auto p = program(cfg, name);
  std::uint64_t cycles = 0;
  for (auto _ : st) {
    auto s = initSimulation(cfg, p);
    runToEnd(s);
    cycles += s.cycle;
    benchmark::DoNotOptimize(s.cycle);
  }
  st.counters["cycles/s"] = benchmark::Counter(static_cast<double>(cycles), benchmark::Counter::kIsRate);
}
BENCHMARK_CAPTURE(BM_RunToEnd, quicksort, "asm/quicksort.s")->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_RunToEnd, linked_list, "asm/linked_list.s")->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_RunToEnd, dispatch, "asm/dispatch.s")->Unit(benchmark::kMillisecond);

void BM_StateAt(benchmark::State& st) {
  const auto cfg = defaultConfig();
  const auto p = program(cfg, "asm/quicksort.s");
  const auto t = static_cast<std::uint64_t>(st.range(0));
  for (auto _ : st) benchmark::DoNotOptimize(stateAt(cfg, p, nullptr, t).cycle);
}
BENCHMARK(BM_StateAt)->Arg(100)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);

void BM_SerializeState(benchmark::State& st) {
  const auto cfg = defaultConfig();
  const auto s = stateAt(cfg, program(cfg, "asm/quicksort.s"), nullptr, 2000);
  for (auto _ : st) benchmark::DoNotOptimize(serializeState(s).size());
}
BENCHMARK(BM_SerializeState)->Unit(benchmark::kMicrosecond);

void BM_HandleSimulate(benchmark::State& st) {
  const nlohmann::json body{{"config", configToJson(defaultConfig())},
                            {"program", "l: addi t0, t0, 1\nlw t1, 0(sp)\nj l\n"},
                            {"tick", st.range(0)}};
  for (auto _ : st) benchmark::DoNotOptimize(service::handleSimulate(body).body.dump().size());
}
BENCHMARK(BM_HandleSimulate)->Arg(0)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_Assemble(benchmark::State& st) {
  const auto source = sample("asm/quicksort.s");
  for (auto _ : st) benchmark::DoNotOptimize(assemble(source).instructions.size());
}
BENCHMARK(BM_Assemble)->Unit(benchmark::kMicrosecond);

void BM_CacheAccess(benchmark::State& st) {
  auto cfg = defaultConfig();
  cfg.cache.replacement = static_cast<ReplacementPolicy>(st.range(0));
  auto m = MemorySystem::fromConfig(cfg);
  std::mt19937 rng(1);
  std::vector<std::uint32_t> trace(4096);
  for (auto& a : trace) a = (rng() % 8192) & ~3u;
  std::size_t i = 0;
  for (auto _ : st) {
    benchmark::DoNotOptimize(m.request(trace[i++ % trace.size()], 4, false, {}, 0).completionCycle);
  }
}
BENCHMARK(BM_CacheAccess)->Arg(0)->Arg(1)->Arg(2);

void BM_PredictUpdate(benchmark::State& st) {
  BranchPredictor p(defaultConfig().predictor);
  std::mt19937 rng(2);
  for (auto _ : st) {
    const std::uint32_t pc = (rng() % 256) * 4;
    benchmark::DoNotOptimize(p.predict(pc).taken);
    p.update(pc, rng() % 3 != 0, pc + 64);
  }
}
BENCHMARK(BM_PredictUpdate);

}  // namespace

BENCHMARK_MAIN();
