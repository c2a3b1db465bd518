#pragma once

// Two-pass RV32IM assembler. Pass one tokenizes, links mnemonics to their
// definitions, expands pseudo-instructions and records labels; memory is
// laid out next; pass two resolves every operand expression to a constant.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rvsim/isa.hpp"

namespace rvsim {

struct Diagnostic {
  int line = 0;
  int column = 0;
  std::string message;
  bool operator==(const Diagnostic&) const = default;
};

void to_json(nlohmann::json& j, const Diagnostic& d);

class AsmError : public std::runtime_error {
 public:
  explicit AsmError(std::vector<Diagnostic> diagnostics);
  explicit AsmError(Diagnostic diagnostic) : AsmError(std::vector<Diagnostic>{std::move(diagnostic)}) {}
  [[nodiscard]] const std::vector<Diagnostic>& diagnostics() const { return diagnostics_; }

 private:
  std::vector<Diagnostic> diagnostics_;
};

enum class TokenKind { kSymbol, kDirective, kLabelDef, kComma, kNewline, kComment, kStringLit, kNumber, kParen, kOperator };

struct Token {
  TokenKind kind = TokenKind::kSymbol;
  std::string text;  // exact source slice
  int line = 1;
  int column = 1;
  std::size_t offset = 0;
  bool operator==(const Token&) const = default;
};

/// Total over any input except an unterminated string literal.
std::vector<Token> tokenize(std::string_view source);

enum class DirectiveKind { kByte, kHword, kWord, kDword, kAlign, kAscii, kAsciiz, kString, kSkip, kZero, kBalign };

std::string_view toString(DirectiveKind kind);

struct DataDirective {
  DirectiveKind kind = DirectiveKind::kByte;
  std::vector<std::vector<Token>> args;  // one token run per comma-separated argument
  std::vector<std::string> labels;       // labels bound to this item's start address
  int line = 0;
  int column = 0;
};

struct Operand {
  bool isRegister = false;
  int reg = 0;
  std::vector<Token> expr;
  std::string text;
};

struct PartialInstruction {
  const InstructionDefinition* def = nullptr;
  std::vector<Operand> operands;
  std::string sourceText;
  int line = 0;
  int column = 0;
};

struct PassOneResult {
  std::vector<PartialInstruction> instructions;
  std::map<std::string, std::uint32_t> codeLabels;      // label -> byte address
  std::map<std::string, std::size_t> dataLabelItems;    // label -> index into directives
  std::vector<DataDirective> directives;
  std::vector<std::string> trailingLabels;              // labels with nothing after them
};

/// Throws AsmError carrying every diagnostic found.
PassOneResult passOne(const std::vector<Token>& tokens, const IsaDefinitions& isa = defaultIsa());

enum class ElementType { kByte, kHalf, kWord };
std::uint32_t elementSize(ElementType t);
std::optional<ElementType> elementTypeFromString(std::string_view s);
std::string_view toString(ElementType t);

/// A memory-editor array: explicit values, a repeated constant, or seeded
/// random values in [randomMin, randomMax).
struct UserArray {
  std::string name;
  ElementType type = ElementType::kWord;
  std::uint32_t alignment = 0;  // bytes; 0 = natural
  std::uint32_t count = 0;      // used with fill/randomSeed; values set their own count
  std::vector<std::int64_t> values;
  std::optional<std::int64_t> fill;
  std::optional<std::uint64_t> randomSeed;
  std::int64_t randomMin = 0;
  std::int64_t randomMax = 100;

  [[nodiscard]] std::uint32_t elementCount() const;
  [[nodiscard]] std::vector<std::int64_t> materialize() const;
};

void to_json(nlohmann::json& j, const UserArray& a);
void from_json(const nlohmann::json& j, UserArray& a);

enum class Segment { kCode, kData };

struct Symbol {
  Segment segment = Segment::kCode;
  std::uint32_t address = 0;
  std::uint32_t size = 0;
  bool operator==(const Symbol&) const = default;
};

struct MemoryLayout {
  std::uint32_t stackBottom = 0;
  std::uint32_t stackTop = 0;  // initial x2
  std::uint32_t dataStart = 0;
  std::uint32_t dataEnd = 0;
  std::uint32_t capacity = 0;
  std::map<std::string, Symbol> symbols;
  std::vector<std::uint32_t> directiveAddresses;  // parallel to PassOneResult::directives
  bool operator==(const MemoryLayout&) const = default;
};

MemoryLayout layoutMemory(const PassOneResult& partial, const std::vector<UserArray>& userArrays,
                          std::uint32_t stackSize, std::uint32_t capacity);

/// Evaluates an operand expression over the symbol table: integers, labels,
/// + - * unary minus, parentheses, %hi() and %lo(). Pc-relative operands
/// have the instruction address subtracted.
std::int64_t evalOperandExpression(std::string_view expr, const std::map<std::string, Symbol>& symbols,
                                   std::uint32_t instrAddress, bool isPcRelative);

struct ProgramInstruction {
  const InstructionDefinition* def = nullptr;
  std::vector<std::int64_t> operands;  // register index or resolved constant
  std::uint32_t address = 0;
  int line = 0;
  std::string sourceText;

  bool operator==(const ProgramInstruction& o) const {
    return def == o.def && operands == o.operands && address == o.address;
  }
};

struct AsmProgram {
  std::vector<ProgramInstruction> instructions;
  std::map<std::string, Symbol> labels;
  MemoryLayout layout;
  std::vector<std::uint8_t> dataImage;  // bytes of [layout.dataStart, layout.dataEnd)
  std::uint32_t entryPoint = 0;

  [[nodiscard]] std::uint32_t codeSize() const { return static_cast<std::uint32_t>(instructions.size() * 4); }
  [[nodiscard]] const ProgramInstruction* at(std::int64_t address) const;

  bool operator==(const AsmProgram& o) const {
    return instructions == o.instructions && labels == o.labels && dataImage == o.dataImage &&
           entryPoint == o.entryPoint && layout.dataStart == o.layout.dataStart && layout.stackTop == o.layout.stackTop;
  }
};

AsmProgram passTwo(const PassOneResult& partial, const MemoryLayout& layout, std::optional<std::string> entry);

struct AssembleOptions {
  std::vector<UserArray> userArrays;
  std::uint32_t stackSize = 512;
  std::uint32_t memoryCapacity = 64 * 1024;
  std::optional<std::string> entry;
};

/// tokenize -> passOne -> layoutMemory -> passTwo. Throws AsmError.
AsmProgram assemble(std::string_view source, const AssembleOptions& options = {},
                    const IsaDefinitions& isa = defaultIsa());

/// Renders a program back to assembly text that re-assembles to the same
/// image. User arrays are not rendered.
std::string renderProgram(const AsmProgram& program);

/// Renders one instruction with resolved operands, e.g. "addi x3, x0, 42".
std::string renderInstruction(const ProgramInstruction& instr);

struct FilteredAsm {
  std::string text;
  std::vector<int> originalLines;  // 1-based source line for each output line
};

/// Drops no-op directives, non-allocated sections and unreferenced local
/// labels from compiler output.
std::string filterCompilerOutput(std::string_view asmText);
FilteredAsm filterCompilerOutputWithLines(std::string_view asmText);

void to_json(nlohmann::json& j, const AsmProgram& p);

}  // namespace rvsim
