#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <random>
#include <set>

#include "reference.hpp"
#include "rvsim/assembler.hpp"
#include "testing.hpp"

using namespace rvsim;
namespace fs = std::filesystem;

namespace {

std::int32_t wordAt(const AsmProgram& p, std::uint32_t address) {
  std::int32_t v = 0;
  std::memcpy(&v, p.dataImage.data() + (address - p.layout.dataStart), 4);
  return v;
}

rvsim::testing::ReferenceResult runRef(const AsmProgram& p) {
  return rvsim::testing::runReference(p, p.layout.capacity);
}

std::vector<Diagnostic> diagnosticsOf(std::string_view source) {
  try {
    (void)assemble(source);
  } catch (const AsmError& e) {
    return e.diagnostics();
  }
  return {};
}

std::vector<fs::path> compilerFixtures() {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(fs::path(RVSIM_TEST_DATA_DIR) / "compiler"))
    if (e.path().extension() == ".s") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(Tokenizer, KindsAndPositions) {
  const auto tokens = tokenize("loop: addi x1, x1, -1 # dec\n  .word 0x10\n");
  ASSERT_GE(tokens.size(), 10u);
  EXPECT_EQ(tokens[0].kind, TokenKind::kLabelDef);
  EXPECT_EQ(tokens[1].kind, TokenKind::kSymbol);
  EXPECT_EQ(tokens[1].text, "addi");
  EXPECT_EQ(tokens[1].column, 7);
  bool sawComment = false, sawDirective = false;
  for (const auto& t : tokens) {
    sawComment |= t.kind == TokenKind::kComment;
    if (t.kind == TokenKind::kDirective) {
      sawDirective = true;
      EXPECT_EQ(t.text, ".word");
      EXPECT_EQ(t.line, 2);
    }
  }
  EXPECT_TRUE(sawComment);
  EXPECT_TRUE(sawDirective);
}

TEST(Tokenizer, StringWithEscapedQuote) {
  const auto tokens = tokenize(R"(.ascii "a\"b")");
  ASSERT_EQ(tokens.size(), 2u);
  EXPECT_EQ(tokens[1].kind, TokenKind::kStringLit);
  EXPECT_EQ(tokens[1].text, R"("a\"b")");
}

TEST(Tokenizer, UnterminatedStringIsAnError) {
  EXPECT_THROW(tokenize(".ascii \"abc\n"), AsmError);
}

TEST(Tokenizer, TotalOnArbitraryBytes) {
  std::mt19937 rng(3);
  for (int i = 0; i < 500; ++i) {
    std::string s(rng() % 80, ' ');
    for (auto& c : s) {
      c = static_cast<char>(rng() % 128);
      if (c == '"') c = '\'';
    }
    EXPECT_NO_THROW(tokenize(s));
  }
}

TEST(AssemblerDataSample, DataLayout) {
  const auto p = assemble(rvsim::testing::readSample("asm/listing2.s"));
  const auto& x = p.labels.at("x");
  const auto& arr = p.labels.at("arr");
  const auto& hello = p.labels.at("hello");
  EXPECT_EQ(x.segment, Segment::kData);
  EXPECT_EQ(x.address, p.layout.dataStart);
  EXPECT_EQ(wordAt(p, x.address), 5);
  EXPECT_EQ(arr.address % 16, 0u);
  EXPECT_GT(arr.address, x.address);
  EXPECT_EQ(arr.size, 64u);
  EXPECT_EQ(hello.address, arr.address + 64);
  EXPECT_EQ(hello.size, 12u);
  const char* text = reinterpret_cast<const char*>(p.dataImage.data() + (hello.address - p.layout.dataStart));
  EXPECT_EQ(std::string(text, 12), std::string("Hello World\0", 12));
  EXPECT_EQ(p.labels.at("main").segment, Segment::kCode);
  EXPECT_EQ(p.labels.at("main").address, 0u);
}

TEST(AssemblerDataSample, CodeSeesTheLayout) {
  const auto p = assemble(rvsim::testing::readSample("asm/listing2.s"));
  const auto ref = runRef(p);
  ASSERT_FALSE(ref.fault) << ref.reason;
  EXPECT_EQ(static_cast<std::uint32_t>(ref.registers[10]), p.labels.at("x").address);
  EXPECT_EQ(ref.registers[11], 5);
  EXPECT_EQ(static_cast<std::uint32_t>(ref.registers[4]), p.labels.at("arr").address + 64);
  EXPECT_EQ(ref.registers[14], 'H');
}

TEST(AssemblerLayout, StackBelowDataBelowUserArrays) {
  AssembleOptions options;
  options.stackSize = 256;
  options.userArrays.push_back(UserArray{.name = "buf", .type = ElementType::kHalf, .alignment = 32, .values = {1, -2, 3}});
  const auto p = assemble("lw a0, 0(sp)\nv: .byte 1\n", options);
  EXPECT_EQ(p.layout.stackBottom, 0u);
  EXPECT_EQ(p.layout.stackTop, 256u);
  EXPECT_EQ(p.layout.dataStart, 256u);
  EXPECT_EQ(p.labels.at("v").address, 256u);
  const auto& buf = p.labels.at("buf");
  EXPECT_EQ(buf.address % 32, 0u);
  EXPECT_GT(buf.address, 256u);
  EXPECT_EQ(buf.size, 6u);
  const auto off = buf.address - p.layout.dataStart;
  std::int16_t h[3];
  std::memcpy(h, p.dataImage.data() + off, 6);
  EXPECT_EQ(h[0], 1);
  EXPECT_EQ(h[1], -2);
  EXPECT_EQ(h[2], 3);
}

TEST(AssemblerUserArrays, FillAndRandom) {
  UserArray fill{.name = "z", .type = ElementType::kWord, .count = 5, .fill = 7};
  EXPECT_EQ(fill.materialize(), std::vector<std::int64_t>(5, 7));
  UserArray rnd{.name = "r", .type = ElementType::kByte, .count = 200, .randomSeed = 9, .randomMin = -5, .randomMax = 5};
  const auto a = rnd.materialize();
  EXPECT_EQ(a, rnd.materialize()) << "seeded values are reproducible";
  ASSERT_EQ(a.size(), 200u);
  std::set<std::int64_t> seen(a.begin(), a.end());
  EXPECT_GE(*seen.begin(), -5);
  EXPECT_LT(*seen.rbegin(), 5);
  EXPECT_GT(seen.size(), 5u);
  const nlohmann::json j = rnd;
  EXPECT_EQ(j.get<UserArray>().materialize(), a);
}

TEST(AssemblerUserArrays, DuplicateNameWithLabelIsAnError) {
  AssembleOptions options;
  options.userArrays.push_back(UserArray{.name = "v", .values = {1}});
  EXPECT_THROW(assemble("v: .word 2\n", options), AsmError);
}

TEST(AssemblerErrors, CarryLineNumbers) {
  auto d = diagnosticsOf("nop\nnop\nfrobnicate x1, x2\n");
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].line, 3);
  EXPECT_NE(d[0].message.find("frobnicate"), std::string::npos);

  d = diagnosticsOf("addi x1, x2\n");
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].line, 1);

  d = diagnosticsOf("nop\nbeq x1, x2, nowhere\n");
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].line, 2);
  EXPECT_NE(d[0].message.find("nowhere"), std::string::npos);

  d = diagnosticsOf("add x1, x2, x99\n");
  ASSERT_FALSE(d.empty());
  EXPECT_EQ(d[0].line, 1);
}

TEST(AssemblerErrors, ReportsEveryBadLine) {
  const auto d = diagnosticsOf("bogus1\nnop\nbogus2 x1\nl: nop\nl: nop\n");
  std::set<int> lines;
  for (const auto& x : d) lines.insert(x.line);
  EXPECT_TRUE(lines.count(1));
  EXPECT_TRUE(lines.count(3));
  EXPECT_TRUE(lines.count(5)) << "duplicate label";
}

TEST(AssemblerErrors, EntryMustBeACodeLabel) {
  AssembleOptions options;
  options.entry = "missing";
  EXPECT_THROW(assemble("nop\n", options), AsmError);
  options.entry = "d";
  EXPECT_THROW(assemble("nop\nd: .word 1\n", options), AsmError);
  options.entry = "second";
  EXPECT_EQ(assemble("nop\nsecond: nop\n", options).entryPoint, 4u);
}

TEST(AssemblerDirectives, SizesAndAlignment) {
  const auto p = assemble(
      "a: .byte 1, 2, 3\n"
      ".align 2\n"
      "b: .hword -1\n"
      "c: .word 0x12345678\n"
      "d: .skip 3\n"
      ".balign 8\n"
      "e: .ascii \"ab\"\n"
      "f: .string \"q\\n\"\n"
      "g: .word a + 1\n");
  const auto addr = [&](const char* n) { return p.labels.at(n).address; };
  EXPECT_EQ(addr("b"), addr("a") + 4);
  EXPECT_EQ(addr("c"), addr("b") + 4) << "word placed at the next multiple of 4";
  EXPECT_EQ(addr("d"), addr("c") + 4);
  EXPECT_EQ(addr("e") % 8, 0u);
  EXPECT_EQ(addr("f"), addr("e") + 2);
  EXPECT_EQ(p.labels.at("f").size, 3u);
  EXPECT_EQ(static_cast<std::uint32_t>(wordAt(p, addr("c"))), 0x12345678u);
  EXPECT_EQ(static_cast<std::uint32_t>(wordAt(p, addr("g"))), addr("a") + 1);
  EXPECT_EQ(p.dataImage[addr("f") - p.layout.dataStart + 1], '\n');
}

// Each pseudo-instruction is checked by running it on the reference
// interpreter and comparing against the plain instruction sequence it stands for.
TEST(AssemblerPseudo, ExpansionsBehaveLikeTheirBaseForms) {
  struct Case {
    const char* pseudo;
    const char* base;
  };
  const std::vector<Case> cases = {
      {"li a0, 0x12345", "lui a0, 0x12\naddi a0, a0, 0x345"},
      {"li a0, -2048", "addi a0, x0, -2048"},
      {"li a0, 0x7ffff800", "lui a0, 0x80000\naddi a0, a0, -2048"},
      {"li t0, 9\nmv a0, t0", "addi t0, x0, 9\naddi a0, t0, 0"},
      {"li t0, 9\nnot a0, t0", "addi t0, x0, 9\nxori a0, t0, -1"},
      {"li t0, 9\nneg a0, t0", "addi t0, x0, 9\nsub a0, x0, t0"},
      {"li t0, 0\nseqz a0, t0", "addi t0, x0, 0\nsltiu a0, t0, 1"},
      {"li t0, 4\nsnez a0, t0", "addi t0, x0, 4\nsltu a0, x0, t0"},
      {"li t0, -4\nsltz a0, t0", "addi t0, x0, -4\nslt a0, t0, x0"},
      {"li t0, 4\nsgtz a0, t0", "addi t0, x0, 4\nslt a0, x0, t0"},
      {"li t0, 4\nli t1, 3\nsgt a0, t0, t1", "addi t0, x0, 4\naddi t1, x0, 3\nslt a0, t1, t0"},
      {"li t0, -1\nli t1, 3\nsgtu a0, t0, t1", "addi t0, x0, -1\naddi t1, x0, 3\nsltu a0, t1, t0"},
      {"li a0, 1\nj skip\nli a0, 2\nskip: nop", "addi a0, x0, 1\njal x0, skip\naddi a0, x0, 2\nskip: nop"},
      {"li a0, 1\nbeqz x0, s\nli a0, 2\ns: nop", "addi a0, x0, 1\nbeq x0, x0, s\naddi a0, x0, 2\ns: nop"},
      {"li a0, 1\nbnez a0, s\nli a0, 2\ns: nop", "addi a0, x0, 1\nbne a0, x0, s\naddi a0, x0, 2\ns: nop"},
      {"li a0, 0\nblez a0, s\nli a0, 2\ns: nop", "addi a0, x0, 0\nbge x0, a0, s\naddi a0, x0, 2\ns: nop"},
      {"li a0, 0\nbgez a0, s\nli a0, 2\ns: nop", "addi a0, x0, 0\nbge a0, x0, s\naddi a0, x0, 2\ns: nop"},
      {"li a0, -1\nbltz a0, s\nli a0, 2\ns: nop", "addi a0, x0, -1\nblt a0, x0, s\naddi a0, x0, 2\ns: nop"},
      {"li a0, 1\nbgtz a0, s\nli a0, 2\ns: nop", "addi a0, x0, 1\nblt x0, a0, s\naddi a0, x0, 2\ns: nop"},
      {"li a0, 5\nli a1, 3\nbgt a0, a1, s\nli a0, 2\ns: nop", "addi a0, x0, 5\naddi a1, x0, 3\nblt a1, a0, s\naddi a0, x0, 2\ns: nop"},
      {"li a0, 3\nli a1, 3\nble a0, a1, s\nli a0, 2\ns: nop", "addi a0, x0, 3\naddi a1, x0, 3\nbge a1, a0, s\naddi a0, x0, 2\ns: nop"},
      {"li a0, -1\nli a1, 3\nbgtu a0, a1, s\nli a0, 2\ns: nop", "addi a0, x0, -1\naddi a1, x0, 3\nbltu a1, a0, s\naddi a0, x0, 2\ns: nop"},
      {"li a0, 1\nli a1, 3\nbleu a0, a1, s\nli a0, 2\ns: nop", "addi a0, x0, 1\naddi a1, x0, 3\nbgeu a1, a0, s\naddi a0, x0, 2\ns: nop"},
      {"jal f\nj end\nf: li a0, 7\nret\nend: nop", "jal ra, f\njal x0, end\nf: addi a0, x0, 7\njalr x0, 0(ra)\nend: nop"},
      {"call f\nj end\nf: li a0, 7\nret\nend: nop", "jal ra, f\njal x0, end\nf: addi a0, x0, 7\njalr x0, 0(ra)\nend: nop"},
      {"la t0, f\njalr t0\nj end\nf: li a0, 7\njr ra\nend: nop",
       "auipc t0, 0\naddi t0, t0, 16\njalr ra, 0(t0)\njal x0, end\nf: addi a0, x0, 7\njalr x0, 0(ra)\nend: nop"},
      {"tail f\nli a0, 1\nf: li a1, 7", "jal x0, f\naddi a0, x0, 1\nf: addi a1, x0, 7"},
      {"la a0, v\nlw a1, 0(a0)\nv: .word 77", "lui a0, %hi(v)\naddi a0, a0, %lo(v)\nlw a1, 0(a0)\nv: .word 77"},
  };
  for (const auto& c : cases) {
    const auto a = assemble(c.pseudo);
    const auto b = assemble(c.base);
    const auto ra = runRef(a);
    const auto rb = runRef(b);
    ASSERT_FALSE(ra.fault) << c.pseudo << ": " << ra.reason;
    ASSERT_FALSE(rb.fault) << c.base << ": " << rb.reason;
    // Return addresses differ when the expansions have different lengths.
    auto regsA = ra.registers, regsB = rb.registers;
    regsA[1] = regsB[1] = 0;
    regsA[5] = regsB[5] = 0;
    EXPECT_EQ(regsA, regsB) << c.pseudo;
  }
}

TEST(AssemblerPseudo, NopIsAddiZero) {
  const auto p = assemble("nop\n");
  ASSERT_EQ(p.instructions.size(), 1u);
  EXPECT_EQ(p.instructions[0].def->name, "addi");
  EXPECT_EQ(p.instructions[0].operands, (std::vector<std::int64_t>{0, 0, 0}));
}

TEST(AssemblerExpressions, HiLoReassembleAnyAddress) {
  std::mt19937 rng(5);
  for (int i = 0; i < 2000; ++i) {
    const std::int64_t v = static_cast<std::int64_t>(rng());
    const std::map<std::string, Symbol> none;
    const auto hi = evalOperandExpression("%hi(" + std::to_string(v) + ")", none, 0, false);
    const auto lo = evalOperandExpression("%lo(" + std::to_string(v) + ")", none, 0, false);
    EXPECT_GE(lo, -2048);
    EXPECT_LT(lo, 2048);
    EXPECT_EQ(static_cast<std::uint32_t>((hi << 12) + lo), static_cast<std::uint32_t>(v));
  }
}

TEST(AssemblerExpressions, LabelsArithmeticAndPcRelative) {
  const std::map<std::string, Symbol> syms = {{"a", {Segment::kData, 0x900, 4}}, {"f", {Segment::kCode, 40, 0}}};
  EXPECT_EQ(evalOperandExpression("a+4*2", syms, 0, false), 0x908);
  EXPECT_EQ(evalOperandExpression("-(a - 0x100)", syms, 0, false), -0x800);
  EXPECT_EQ(evalOperandExpression("f", syms, 12, true), 28);
  EXPECT_EQ(evalOperandExpression("%lo(a)", syms, 0, false), -0x700);
  EXPECT_THROW(evalOperandExpression("nope", syms, 0, false), AsmError);
}

TEST(AssemblerExpressions, HiLoAboveSignBoundary) {
  const auto p = assemble(
      "lui a0, %hi(v)\naddi a0, a0, %lo(v)\nlw a1, %lo(v)(a2)\n"
      "pad: .skip 3000\nv: .word 4242\n",
      AssembleOptions{.stackSize = 64});
  const auto v = p.labels.at("v").address;
  ASSERT_GE(v & 0xFFF, 0x800u) << "the case where %lo is negative";
  const auto ref = runRef(p);
  EXPECT_EQ(static_cast<std::uint32_t>(ref.registers[10]), v);
}

TEST(AssemblerRender, RoundTripsSamples) {
  for (const char* name : {"asm/quicksort.s", "asm/linked_list.s", "asm/dispatch.s", "asm/listing2.s"}) {
    const auto p = assemble(rvsim::testing::readSample(name));
    const auto text = renderProgram(p);
    const auto q = assemble(text, AssembleOptions{.stackSize = p.layout.stackTop});
    EXPECT_EQ(p.instructions, q.instructions) << name;
    EXPECT_EQ(p.dataImage, q.dataImage) << name;
    EXPECT_EQ(p.labels, q.labels) << name;
  }
}

TEST(AssemblerFilter, DropsNoiseKeepsCode) {
  const std::string raw =
      "\t.text\n\t.file\t\"x.c\"\n\t.globl\tmain\n\t.p2align\t2\n\t.type\tmain,@function\n"
      "main:\n.Lfunc_begin0:\n\t.loc\t1 2 0\n\t.cfi_startproc\n\taddi\tsp, sp, -16\n"
      ".Ltmp0:\n\tj .LBB0_2\n.LBB0_2:\n\taddi\tsp, sp, 16\n\tret\n.Lfunc_end0:\n"
      "\t.size\tmain, .Lfunc_end0-main\n\t.section\t.debug_abbrev,\"\",@progbits\n\t.byte\t1\n"
      "\t.ident\t\"clang\"\n";
  const auto out = filterCompilerOutput(raw);
  EXPECT_EQ(out.find(".cfi"), std::string::npos);
  EXPECT_EQ(out.find(".loc"), std::string::npos);
  EXPECT_EQ(out.find(".Ltmp0"), std::string::npos);
  EXPECT_EQ(out.find(".Lfunc_end0"), std::string::npos);
  EXPECT_NE(out.find(".LBB0_2:"), std::string::npos) << "referenced local label kept";
  EXPECT_EQ(out.find(".byte"), std::string::npos) << "debug section content dropped";
  const auto p = assemble(out);
  EXPECT_EQ(p.instructions.size(), 4u);
  EXPECT_TRUE(p.dataImage.empty());
}

TEST(AssemblerFilter, LineMapPointsIntoOriginal) {
  const std::string raw = "\t.file \"a\"\nmain:\n\t.cfi_startproc\n\tnop\n\tret\n";
  const auto f = filterCompilerOutputWithLines(raw);
  std::vector<std::string> rawLines, outLines;
  std::istringstream a(raw), b(f.text);
  for (std::string l; std::getline(a, l);) rawLines.push_back(l);
  for (std::string l; std::getline(b, l);) outLines.push_back(l);
  ASSERT_EQ(outLines.size(), f.originalLines.size());
  for (std::size_t i = 0; i < outLines.size(); ++i) {
    const auto& orig = rawLines.at(static_cast<std::size_t>(f.originalLines[i] - 1));
    EXPECT_NE(orig.find(outLines[i].substr(outLines[i].find_first_not_of(" \t"))), std::string::npos);
  }
}

TEST(AssemblerFilter, IdempotentAndEquivalentOnCompilerOutput) {
  const auto fixtures = compilerFixtures();
  ASSERT_GE(fixtures.size(), 20u);
  for (const auto& path : fixtures) {
    const auto raw = rvsim::testing::readFile(path.string());
    const auto once = filterCompilerOutput(raw);
    const auto twice = filterCompilerOutput(once);
    EXPECT_EQ(once, twice) << path.filename();
    AsmProgram a, b;
    ASSERT_NO_THROW(a = assemble(once, AssembleOptions{.entry = "main"})) << path.filename();
    ASSERT_NO_THROW(b = assemble(twice, AssembleOptions{.entry = "main"})) << path.filename();
    EXPECT_EQ(a.instructions, b.instructions) << path.filename();
    EXPECT_EQ(a.dataImage, b.dataImage) << path.filename();
    EXPECT_EQ(a.entryPoint, b.entryPoint) << path.filename();
  }
}

// Every fixture is a C program with a known result; the filtered output must
// compute it on the reference interpreter at every optimisation level.
TEST(AssemblerFilter, CompiledProgramsComputeTheirResults) {
  const std::map<std::string, std::int32_t> expected = {
      {"fib", 55}, {"bubble", -19}, {"strings", 11}, {"dispatch", -5}, {"list", 13}};
  for (const auto& path : compilerFixtures()) {
    const auto stem = path.stem().string();
    const auto program = stem.substr(0, stem.rfind('-'));
    ASSERT_TRUE(expected.count(program)) << stem;
    const auto p = assemble(filterCompilerOutput(rvsim::testing::readFile(path.string())),
                            AssembleOptions{.stackSize = 1024, .entry = "main"});
    const auto ref = runRef(p);
    ASSERT_FALSE(ref.fault) << stem << ": " << ref.reason;
    ASSERT_TRUE(ref.halted) << stem;
    EXPECT_EQ(ref.registers[10], expected.at(program)) << stem;
  }
}

TEST(AssemblerJson, ProgramSerialization) {
  const auto p = assemble(rvsim::testing::readSample("asm/listing2.s"));
  const nlohmann::json j = p;
  ASSERT_TRUE(j.contains("instructions"));
  EXPECT_EQ(j["instructions"].size(), p.instructions.size());
  EXPECT_TRUE(j.contains("labels") || j.contains("symbols"));
}

TEST(AssemblerLayout, WordAfterUnalignedBytes) {
  const auto p = assemble("a: .byte 1, 2, 3\nw: .word 1\n");
  const auto w = p.labels.at("w").address;
  EXPECT_EQ(w, (p.labels.at("a").address + 3 + 3) / 4 * 4);
  EXPECT_EQ(p.dataImage[w - p.layout.dataStart], 1);
  EXPECT_EQ(p.dataImage[w - p.layout.dataStart - 1], 0) << "padding";
}

TEST(AssemblerLayout, NoDataLeavesOnlyStackBounds) {
  const auto p = assemble("nop\n");
  EXPECT_TRUE(p.dataImage.empty());
  EXPECT_EQ(p.layout.dataStart, p.layout.dataEnd);
  EXPECT_EQ(p.layout.stackTop, 512u);
  for (const auto& [name, sym] : p.layout.symbols) EXPECT_NE(sym.segment, Segment::kData) << name;
}
