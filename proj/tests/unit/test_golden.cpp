#include <gtest/gtest.h>

#include <chrono>
#include <random>

#include "rvsim/pipeline.hpp"
#include "testing.hpp"

// Golden-model equivalence: each sample program on random machines ends in
// the same registers and memory as the in-order reference interpreter.

using namespace rvsim;

namespace {

constexpr int kConfigsPerSample = 25;

class GoldenSample : public ::testing::TestWithParam<const char*> {};

}  // namespace

TEST_P(GoldenSample, MatchesReferenceOnRandomMachines) {
  const auto source = rvsim::testing::readSample(GetParam());
  std::mt19937_64 rng(std::hash<std::string>{}(GetParam()));
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < kConfigsPerSample; ++i) {
    const auto cfg = i == 0 ? defaultConfig() : rvsim::testing::randomConfig(rng);
    const auto program = rvsim::testing::assembleFor(cfg, source);
    const auto run = rvsim::testing::runChecked(cfg, program);
    ASSERT_EQ(run.outcome, RunOutcome::kHalted) << "config " << i << "\n" << configToJson(cfg).dump();
    EXPECT_NE(run.state.haltReason, HaltReason::kException);
    EXPECT_TRUE(run.commitWidthRespected);
    EXPECT_TRUE(run.robBoundRespected);
    const auto ref = rvsim::testing::runReference(*program, cfg.memoryCapacity);
    ASSERT_EQ(rvsim::testing::compareWithReference(run.state, ref), "")
        << "config " << i << "\n" << configToJson(cfg).dump();
  }
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 30.0);
}

INSTANTIATE_TEST_SUITE_P(Samples, GoldenSample,
                         ::testing::Values("asm/quicksort.s", "asm/linked_list.s", "asm/dispatch.s", "asm/listing2.s"),
                         [](const auto& info) {
                           std::string n = info.param;
                           return n.substr(4, n.size() - 6);
                         });

// The compiled C fixtures exercise compiler idioms (%hi/%lo, jump tables,
// stack frames) the hand-written samples do not.
TEST(GoldenCompiled, FixturesMatchReference) {
  std::mt19937_64 rng(77);
  for (const char* name : {"fib-O0", "fib-O2", "bubble-O1", "bubble-O3", "strings-O2", "dispatch-O0", "dispatch-O2",
                           "list-O1", "list-O3"}) {
    const auto raw = rvsim::testing::readFile(std::string(RVSIM_TEST_DATA_DIR) + "/compiler/" + name + ".s");
    for (int i = 0; i < 4; ++i) {
      auto cfg = rvsim::testing::randomConfig(rng);
      const auto program = std::make_shared<const AsmProgram>(
          assemble(filterCompilerOutput(raw), AssembleOptions{.stackSize = cfg.callStackSize,
                                                              .memoryCapacity = cfg.memoryCapacity,
                                                              .entry = "main"}));
      const auto run = rvsim::testing::runChecked(cfg, program);
      ASSERT_EQ(run.outcome, RunOutcome::kHalted) << name;
      EXPECT_EQ(run.state.haltReason, HaltReason::kReturned) << name;
      const auto ref = rvsim::testing::runReference(*program, cfg.memoryCapacity);
      ASSERT_EQ(rvsim::testing::compareWithReference(run.state, ref), "") << name;
    }
  }
}
