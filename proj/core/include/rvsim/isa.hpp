#pragma once

// Instruction-set model: data-driven instruction definitions and the
// postfix expression interpreter that gives each instruction its meaning.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace rvsim {

/// Display interpretation of a register's bit pattern. Never changes semantics.
enum class DataType { kInt32, kUInt32, kInt64, kChar, kBool };

std::string_view toString(DataType t);
DataType dataTypeFromString(std::string_view s);

/// 64-bit register contents. 32-bit views are pure functions of `raw`.
struct RegisterValue {
  std::uint64_t raw = 0;
  DataType typeTag = DataType::kInt32;

  [[nodiscard]] std::int32_t asInt32() const { return static_cast<std::int32_t>(static_cast<std::uint32_t>(raw)); }
  [[nodiscard]] std::uint32_t asUInt32() const { return static_cast<std::uint32_t>(raw); }
  [[nodiscard]] std::int64_t asInt64() const { return static_cast<std::int64_t>(raw); }

  static RegisterValue fromInt32(std::int32_t v, DataType tag = DataType::kInt32) {
    return {static_cast<std::uint64_t>(static_cast<std::int64_t>(v)), tag};
  }

  bool operator==(const RegisterValue&) const = default;
};

enum class InstructionType { kArithmetic, kLoadStore, kBranch, kJump };
enum class FuClass { kFX, kFP, kBranch, kLS };

std::string_view toString(InstructionType t);
std::string_view toString(FuClass c);
std::optional<InstructionType> instructionTypeFromString(std::string_view s);
std::optional<FuClass> fuClassFromString(std::string_view s);

class IsaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ExprError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Operator {
  kAdd, kSub, kMul, kMulH, kMulHSU, kMulHU,
  kDiv, kDivU, kRem, kRemU,
  kAnd, kOr, kXor, kShl, kSra, kSrl,
  kLt, kLtU, kLe, kLeU, kGe, kGeU, kEq, kNe,
  kSext8, kSext16, kZext8, kZext16,
  kAssign,
};

std::string_view toString(Operator op);
int arity(Operator op);

struct ExprToken {
  enum class Kind { kOperandRef, kLiteral, kOperator };
  Kind kind = Kind::kLiteral;
  std::string name;            // kOperandRef
  std::int64_t constant = 0;   // kLiteral
  Operator op = Operator::kAdd;  // kOperator
  int argIndex = -1;           // resolved argument slot, -1 for \pc or unresolved

  bool operator==(const ExprToken&) const = default;
};

/// Splits a whitespace-separated postfix expression. `\name` tokens are
/// operand references, integers are literals, everything else must be a
/// known operator symbol.
std::vector<ExprToken> tokenizeExpression(std::string_view expr);

enum class ExceptionKind { kDivideByZero, kMemoryFault, kUnsupportedInstruction };
std::string_view toString(ExceptionKind k);
std::optional<ExceptionKind> exceptionKindFromString(std::string_view s);

struct SimException {
  ExceptionKind kind = ExceptionKind::kMemoryFault;
  std::string detail;
  bool operator==(const SimException&) const = default;
};

struct RegisterWrite {
  std::string target;
  int argIndex = -1;
  RegisterValue value;
  bool operator==(const RegisterWrite&) const = default;
};

struct InterpretResult {
  std::optional<std::int64_t> leftover;
  std::vector<RegisterWrite> writes;
  std::optional<SimException> exception;
};

using Bindings = std::map<std::string, std::int64_t, std::less<>>;

/// Evaluates postfix tokens against named bindings. `\pc` resolves to `pc`.
/// Bindings are never modified; all effects are returned.
InterpretResult evalExpression(std::span<const ExprToken> tokens, const Bindings& bindings, std::int64_t pc);

struct ArgumentSpec {
  std::string name;
  DataType type = DataType::kInt32;
  bool writeBack = false;
  bool isImmediate = false;
  bool pcRelative = false;

  bool operator==(const ArgumentSpec&) const = default;
};

struct MemoryAccess {
  int size = 4;
  bool signExtend = true;
  bool isStore = false;
  bool operator==(const MemoryAccess&) const = default;
};

struct InstructionDefinition {
  std::string name;
  InstructionType instructionType = InstructionType::kArithmetic;
  std::vector<ArgumentSpec> arguments;
  std::string interpretableAs;
  FuClass fuClass = FuClass::kFX;
  std::optional<MemoryAccess> memory;
  std::vector<ExprToken> tokens;

  [[nodiscard]] int argumentIndex(std::string_view argName) const;
  /// Index of the written register argument, or -1.
  [[nodiscard]] int writeBackIndex() const;
  [[nodiscard]] int pcRelativeIndex() const;
  [[nodiscard]] bool isLoad() const { return memory && !memory->isStore; }
  [[nodiscard]] bool isStore() const { return memory && memory->isStore; }

  bool operator==(const InstructionDefinition& o) const {
    return name == o.name && instructionType == o.instructionType && arguments == o.arguments &&
           interpretableAs == o.interpretableAs && fuClass == o.fuClass && memory == o.memory;
  }
};

/// A mnemonic that expands into one or more real instructions. Expansion
/// lines reference arguments with `\name`.
struct PseudoInstruction {
  std::string name;
  std::vector<ArgumentSpec> arguments;
  std::vector<std::string> expansion;
  bool operator==(const PseudoInstruction&) const = default;
};

class IsaDefinitions {
 public:
  [[nodiscard]] const InstructionDefinition* find(std::string_view name) const;
  [[nodiscard]] const PseudoInstruction* findPseudo(std::string_view name, std::size_t arity) const;
  [[nodiscard]] bool knowsMnemonic(std::string_view name) const;

  [[nodiscard]] const std::map<std::string, InstructionDefinition, std::less<>>& instructions() const {
    return instructions_;
  }
  [[nodiscard]] const std::vector<PseudoInstruction>& pseudos() const { return pseudos_; }
  [[nodiscard]] std::size_t size() const { return instructions_.size(); }
  [[nodiscard]] bool empty() const { return instructions_.empty() && pseudos_.empty(); }

  void add(InstructionDefinition def);
  void addPseudo(PseudoInstruction p);

  bool operator==(const IsaDefinitions&) const = default;

 private:
  std::map<std::string, InstructionDefinition, std::less<>> instructions_;
  std::vector<PseudoInstruction> pseudos_;
};

/// Parses a JSON array of instruction and pseudo-instruction definitions.
/// Throws IsaError on duplicate mnemonics, undeclared operand references,
/// assignment to non-writeBack arguments, or unknown enum values.
IsaDefinitions loadIsaDefinitions(std::string_view document);
std::string serializeIsaDefinitions(const IsaDefinitions& defs);

/// The shipped RV32IM definition set.
const IsaDefinitions& defaultIsa();
std::string_view defaultIsaDocument();

/// Binds operand values positionally and evaluates the definition's
/// expression. Branches leave the taken condition, jumps the target address,
/// loads and stores the effective address.
InterpretResult interpretInstruction(const InstructionDefinition& def, std::span<const std::int64_t> operands,
                                     std::int64_t pc);

/// pc + the pc-relative operand, for conditional branches.
std::int64_t branchTarget(const InstructionDefinition& def, std::span<const std::int64_t> operands, std::int64_t pc);

}  // namespace rvsim
