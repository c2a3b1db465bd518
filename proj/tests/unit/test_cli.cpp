#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "cli.hpp"
#include "rvsim/service.hpp"
#include "testing.hpp"

using namespace rvsim;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
};

// Runs the installed binary; stderr is discarded.
Outcome runBinary(const std::string& args) {
  const std::string command = std::string(RVSIM_CLI_PATH) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(command.c_str(), "r");
  Outcome o;
  if (!pipe) return o;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) o.out.append(buf, n);
  const int status = pclose(pipe);
  o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return o;
}

struct InProcess {
  int code;
  std::string out;
  std::string err;
};

InProcess runInProcess(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    std::random_device rd;
    dir_ = fs::temp_directory_path() / ("rvsim-cli-" + std::to_string(rd()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write(const std::string& name, const std::string& content) const {
    const auto p = (dir_ / name).string();
    std::ofstream(p, std::ios::binary) << content;
    return p;
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

std::string sample(const std::string& rel) { return rvsim::testing::samplePath(rel); }

}  // namespace

TEST_F(CliTest, HaltedProgramExitsZero) {
  const auto r = runBinary("--program " + sample("asm/quicksort.s") + " --cpu " + sample("configs/default.json"));
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("returned"), std::string::npos);
  EXPECT_NE(r.out.find("IPC"), std::string::npos);
}

TEST_F(CliTest, ExhaustedBudgetExitsTwo) {
  const auto prog = write("loop.s", "l: j l\n");
  const auto r = runBinary("--program " + prog + " --cpu " + sample("configs/default.json") + " --max-cycles 1000");
  EXPECT_EQ(r.code, 2);
}

TEST_F(CliTest, InputErrorsExitOne) {
  const auto cpu = sample("configs/default.json");
  EXPECT_EQ(runBinary("--program " + path("missing.s") + " --cpu " + cpu).code, 1);
  EXPECT_EQ(runBinary("--program " + write("bad.s", "addd x1, x2, x3\n") + " --cpu " + cpu).code, 1);
  EXPECT_EQ(runBinary("--program " + sample("asm/listing2.s") + " --cpu " + write("bad.json", "{\"robSize\": 4}")).code, 1);
  EXPECT_EQ(runBinary("--cpu " + cpu).code, 1);
  EXPECT_EQ(runBinary("--program " + sample("asm/listing2.s") + " --cpu " + cpu + " --format xml").code, 1);
  EXPECT_EQ(runBinary("--program " + sample("asm/listing2.s") + " --cpu " + cpu + " --memory " + write("m.csv", "0,1\nx,y\n")).code,
            1);
}

TEST_F(CliTest, AssemblyErrorsNameFileAndLine) {
  const auto prog = write("bad.s", "nop\naddd x1, x2, x3\n");
  const auto r = runInProcess({"--program", prog, "--cpu", sample("configs/default.json")});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find(prog + ":2:"), std::string::npos) << r.err;
}

TEST_F(CliTest, ConfigErrorsNameTheField) {
  json cfg = configToJson(defaultConfig());
  cfg.erase("robSize");
  const auto r = runInProcess({"--program", sample("asm/listing2.s"), "--cpu", write("c.json", cfg.dump())});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("robSize"), std::string::npos) << r.err;
}

TEST_F(CliTest, OutputIsByteStable) {
  for (const char* format : {"text", "json"}) {
    const std::string args =
        "--program " + sample("asm/dispatch.s") + " --cpu " + sample("configs/wide.json") + " --verbosity 2 --format " + format;
    const auto a = runBinary(args);
    const auto b = runBinary(args);
    EXPECT_EQ(a.code, 0);
    EXPECT_EQ(a.out, b.out) << format;
    EXPECT_FALSE(a.out.empty());
  }
}

TEST_F(CliTest, JsonReportMatchesTheServerStats) {
  for (const char* name : {"quicksort-run.json", "dispatch-run.json"}) {
    const auto request = json::parse(rvsim::testing::readSample(std::string("requests/") + name));
    const auto cpu = write("cpu.json", request.at("config").dump());
    const auto prog = write("p.s", request.at("program").get<std::string>());
    const auto r = runInProcess({"--program", prog, "--cpu", cpu, "--format", "json"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto report = json::parse(r.out);
    const auto server = service::handleSimulate(request);
    EXPECT_EQ(report.at("stats"), server.body.at("stats")) << name;
    EXPECT_EQ(report.at("cycle"), server.body.at("cycle")) << name;
    EXPECT_EQ(report.at("haltReason"), server.body.at("haltReason")) << name;
  }
}

TEST_F(CliTest, VerbosityAddsRegistersAndLog) {
  const auto base = std::vector<std::string>{"--program", sample("asm/listing2.s"), "--cpu", sample("configs/default.json"),
                                             "--format", "json"};
  auto args = base;
  auto r = runInProcess(args);
  EXPECT_FALSE(json::parse(r.out).contains("registers"));
  args.insert(args.end(), {"--verbosity", "1"});
  r = runInProcess(args);
  EXPECT_EQ(json::parse(r.out).at("registers").size(), 32u);
  EXPECT_FALSE(json::parse(r.out).contains("log"));
  args = base;
  args.insert(args.end(), {"--verbosity", "2"});
  r = runInProcess(args);
  EXPECT_TRUE(json::parse(r.out).contains("log"));
}

TEST_F(CliTest, DumpMemoryWritesTheProgramView) {
  const auto bin = path("out.bin");
  const auto csv = path("out.csv");
  const auto prog = write("st.s", "li a0, 0x11223344\nla a1, v\nsw a0, 0(a1)\nret\nv: .word 0\n");
  const auto cpu = sample("configs/default.json");
  ASSERT_EQ(runInProcess({"--program", prog, "--cpu", cpu, "--dump-memory", bin}).code, 0);
  ASSERT_EQ(runInProcess({"--program", prog, "--cpu", cpu, "--dump-memory", csv}).code, 0);

  const auto config = parseConfig(rvsim::testing::readFile(cpu));
  const auto program = service::assembleFor(config, rvsim::testing::readFile(prog));
  const auto v = program.labels.at("v").address;
  const auto raw = rvsim::testing::readFile(bin);
  ASSERT_EQ(raw.size(), config.memoryCapacity);
  EXPECT_EQ(static_cast<std::uint8_t>(raw[v]), 0x44);
  EXPECT_EQ(static_cast<std::uint8_t>(raw[v + 3]), 0x11);
  const auto fromCsv = importCsv(rvsim::testing::readFile(csv), config.memoryCapacity);
  EXPECT_EQ(std::string(fromCsv.begin(), fromCsv.end()), raw);
}

TEST_F(CliTest, MemoryImageAndArraysAreLoaded) {
  const auto cpu = sample("configs/default.json");
  const auto prog = write("sum.s", "la a0, vals\nlw a1, 0(a0)\nlw a2, 4(a0)\nadd a0, a1, a2\nret\n");
  const auto arrays = write("arr.json", R"([{"name": "vals", "dataType": "word", "values": [40, 2]}])");
  auto r = runInProcess({"--program", prog, "--cpu", cpu, "--memory", arrays, "--format", "json", "--verbosity", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out).at("registers")[10], 42);

  r = runInProcess({"--program", prog, "--cpu", cpu, "--memory", R"([{"name": "vals", "dataType": "word", "values": [5, 6]}])",
                    "--format", "json", "--verbosity", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out).at("registers")[10], 11);

  // A raw image sits underneath the program: address 0x3000 holds 7.
  std::vector<std::uint8_t> image(0x3004, 0);
  image[0x3000] = 7;
  const auto img = write("img.bin", std::string(image.begin(), image.end()));
  const auto load = write("load.s", "li a1, 0x3000\nlw a0, 0(a1)\nret\n");
  r = runInProcess({"--program", load, "--cpu", cpu, "--memory", img, "--format", "json", "--verbosity", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out).at("registers")[10], 7);
}

TEST_F(CliTest, CompilesCSources) {
  if (std::system("clang --version > /dev/null 2>&1") != 0) GTEST_SKIP() << "no clang";
  const auto asmOut = path("fib.s");
  const auto r = runInProcess({"--program", asmOut, "--cpu", sample("configs/default.json"), "--c-source",
                               std::string(RVSIM_TEST_DATA_DIR) + "/c/fib.c",
                               "--opt-level", "2", "--format", "json", "--verbosity", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out).at("registers")[10], 55);
  EXPECT_TRUE(fs::exists(asmOut));

  const auto bad = write("bad.c", "int main(void) { return ; }\nint x = ;\n");
  const auto e = runInProcess({"--program", path("bad.s"), "--cpu", sample("configs/default.json"), "--c-source", bad});
  EXPECT_EQ(e.code, 1);
  EXPECT_NE(e.err.find(bad + ":2:"), std::string::npos) << e.err;
}

TEST_F(CliTest, HelpExitsZero) {
  const auto r = runInProcess({"--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("--program"), std::string::npos);
}
