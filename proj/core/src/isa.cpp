#include "rvsim/isa.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <limits>
#include <set>
#include <utility>

namespace rvsim {

namespace {

using json = nlohmann::json;

struct DataTypeName {
  DataType type;
  std::string_view name;
};

constexpr std::array kDataTypeNames{
    DataTypeName{DataType::kInt32, "kInt"},  DataTypeName{DataType::kUInt32, "kUInt"},
    DataTypeName{DataType::kInt64, "kLong"}, DataTypeName{DataType::kChar, "kChar"},
    DataTypeName{DataType::kBool, "kBool"},
};

struct OperatorName {
  Operator op;
  std::string_view symbol;
  int arity;
};

constexpr std::array kOperators{
    OperatorName{Operator::kAdd, "+", 2},        OperatorName{Operator::kSub, "-", 2},
    OperatorName{Operator::kMul, "*", 2},        OperatorName{Operator::kMulH, "mulh", 2},
    OperatorName{Operator::kMulHSU, "mulhsu", 2}, OperatorName{Operator::kMulHU, "mulhu", 2},
    OperatorName{Operator::kDiv, "/", 2},        OperatorName{Operator::kDivU, "/u", 2},
    OperatorName{Operator::kRem, "%", 2},        OperatorName{Operator::kRemU, "%u", 2},
    OperatorName{Operator::kAnd, "&", 2},        OperatorName{Operator::kOr, "|", 2},
    OperatorName{Operator::kXor, "^", 2},        OperatorName{Operator::kShl, "<<", 2},
    OperatorName{Operator::kSra, ">>", 2},       OperatorName{Operator::kSrl, ">>>", 2},
    OperatorName{Operator::kLt, "<", 2},         OperatorName{Operator::kLtU, "<u", 2},
    OperatorName{Operator::kLe, "<=", 2},        OperatorName{Operator::kLeU, "<=u", 2},
    OperatorName{Operator::kGe, ">=", 2},        OperatorName{Operator::kGeU, ">=u", 2},
    OperatorName{Operator::kEq, "==", 2},        OperatorName{Operator::kNe, "!=", 2},
    OperatorName{Operator::kSext8, "sext8", 1},  OperatorName{Operator::kSext16, "sext16", 1},
    OperatorName{Operator::kZext8, "zext8", 1},  OperatorName{Operator::kZext16, "zext16", 1},
    OperatorName{Operator::kAssign, "=", 2},
};

std::int64_t sx(std::uint32_t v) { return static_cast<std::int32_t>(v); }

struct StackItem {
  std::int64_t value = 0;
  bool hasValue = false;
  bool isRef = false;
  std::string_view name;
  int argIndex = -1;
};

// Applies one non-assignment operator with RV32 semantics. Values are
// sign-extended 32-bit quantities.
std::int64_t applyOperator(Operator op, std::int64_t lhs, std::int64_t rhs, std::optional<SimException>& exception) {
  const auto a = static_cast<std::int32_t>(lhs);
  const auto b = static_cast<std::int32_t>(rhs);
  const auto ua = static_cast<std::uint32_t>(a);
  const auto ub = static_cast<std::uint32_t>(b);
  const auto shamt = ub & 31U;
  constexpr auto kMin = std::numeric_limits<std::int32_t>::min();
  switch (op) {
    case Operator::kAdd: return sx(ua + ub);
    case Operator::kSub: return sx(ua - ub);
    case Operator::kMul: return sx(ua * ub);
    case Operator::kMulH:
      return sx(static_cast<std::uint32_t>(static_cast<std::uint64_t>(std::int64_t{a} * std::int64_t{b}) >> 32));
    case Operator::kMulHSU:
      return sx(static_cast<std::uint32_t>(static_cast<std::uint64_t>(std::int64_t{a} * std::int64_t{ub}) >> 32));
    case Operator::kMulHU:
      return sx(static_cast<std::uint32_t>((std::uint64_t{ua} * std::uint64_t{ub}) >> 32));
    case Operator::kDiv:
      if (b == 0) {
        exception = SimException{ExceptionKind::kDivideByZero, "division by zero"};
        return -1;
      }
      if (a == kMin && b == -1) return kMin;
      return a / b;
    case Operator::kDivU:
      if (ub == 0) {
        exception = SimException{ExceptionKind::kDivideByZero, "division by zero"};
        return -1;
      }
      return sx(ua / ub);
    case Operator::kRem:
      if (b == 0) {
        exception = SimException{ExceptionKind::kDivideByZero, "division by zero"};
        return a;
      }
      if (a == kMin && b == -1) return 0;
      return a % b;
    case Operator::kRemU:
      if (ub == 0) {
        exception = SimException{ExceptionKind::kDivideByZero, "division by zero"};
        return a;
      }
      return sx(ua % ub);
    case Operator::kAnd: return a & b;
    case Operator::kOr: return a | b;
    case Operator::kXor: return a ^ b;
    case Operator::kShl: return sx(ua << shamt);
    case Operator::kSra: return a >> shamt;
    case Operator::kSrl: return sx(ua >> shamt);
    case Operator::kLt: return a < b ? 1 : 0;
    case Operator::kLtU: return ua < ub ? 1 : 0;
    case Operator::kLe: return a <= b ? 1 : 0;
    case Operator::kLeU: return ua <= ub ? 1 : 0;
    case Operator::kGe: return a >= b ? 1 : 0;
    case Operator::kGeU: return ua >= ub ? 1 : 0;
    case Operator::kEq: return a == b ? 1 : 0;
    case Operator::kNe: return a != b ? 1 : 0;
    case Operator::kSext8: return static_cast<std::int8_t>(a);
    case Operator::kSext16: return static_cast<std::int16_t>(a);
    case Operator::kZext8: return ua & 0xFFU;
    case Operator::kZext16: return ua & 0xFFFFU;
    case Operator::kAssign: break;
  }
  throw ExprError("operator has no value semantics");
}

// Shared evaluator; `resolve` maps an operand-ref token to its bound value.
template <typename Resolve>
InterpretResult evaluate(std::span<const ExprToken> tokens, std::int64_t pc, Resolve&& resolve,
                         const std::vector<ArgumentSpec>* args) {
  InterpretResult result;
  std::vector<StackItem> stack;
  stack.reserve(8);

  auto popValue = [&](const ExprToken& at) -> std::int64_t {
    if (stack.empty()) throw ExprError("stack underflow at operator '" + std::string(toString(at.op)) + "'");
    StackItem item = stack.back();
    stack.pop_back();
    if (!item.hasValue) throw ExprError("unresolvable operand \\" + std::string(item.name));
    return item.value;
  };

  for (const auto& token : tokens) {
    switch (token.kind) {
      case ExprToken::Kind::kLiteral:
        stack.push_back({token.constant, true, false, {}, -1});
        break;
      case ExprToken::Kind::kOperandRef: {
        StackItem item{0, false, true, token.name, token.argIndex};
        if (token.name == "pc") {
          item.value = pc;
          item.hasValue = true;
        } else if (auto v = resolve(token)) {
          item.value = *v;
          item.hasValue = true;
        }
        stack.push_back(item);
        break;
      }
      case ExprToken::Kind::kOperator: {
        if (token.op == Operator::kAssign) {
          if (stack.size() < 2) throw ExprError("stack underflow at '='");
          StackItem target = stack.back();
          stack.pop_back();
          if (!target.isRef || target.name == "pc") throw ExprError("assignment target is not a register reference");
          const std::int64_t value = popValue(token);
          DataType tag = DataType::kInt32;
          if (args != nullptr && target.argIndex >= 0) tag = (*args)[static_cast<std::size_t>(target.argIndex)].type;
          result.writes.push_back(
              {std::string(target.name), target.argIndex, RegisterValue::fromInt32(static_cast<std::int32_t>(value), tag)});
          break;
        }
        if (arity(token.op) == 1) {
          const std::int64_t v = popValue(token);
          stack.push_back({applyOperator(token.op, v, 0, result.exception), true, false, {}, -1});
        } else {
          const std::int64_t rhs = popValue(token);
          const std::int64_t lhs = popValue(token);
          stack.push_back({applyOperator(token.op, lhs, rhs, result.exception), true, false, {}, -1});
        }
        break;
      }
    }
  }
  if (!stack.empty()) {
    if (!stack.back().hasValue) throw ExprError("unresolvable operand \\" + std::string(stack.back().name));
    result.leftover = stack.back().value;
  }
  return result;
}

std::optional<std::int64_t> parseInteger(std::string_view text) {
  bool negative = false;
  std::string_view digits = text;
  if (!digits.empty() && (digits.front() == '-' || digits.front() == '+')) {
    negative = digits.front() == '-';
    digits.remove_prefix(1);
  }
  int base = 10;
  if (digits.size() > 2 && digits[0] == '0' && (digits[1] == 'x' || digits[1] == 'X')) {
    base = 16;
    digits.remove_prefix(2);
  }
  if (digits.empty()) return std::nullopt;
  std::uint64_t magnitude = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), magnitude, base);
  if (ec != std::errc{} || ptr != digits.data() + digits.size()) return std::nullopt;
  const auto value = static_cast<std::int64_t>(magnitude);
  return negative ? -value : value;
}

// JSON decoding turns "\rs1" into CR + "s1". Expression and expansion text
// never legitimately contains control characters, so map them back.
std::string restoreEscapes(const std::string& text) {
  std::string out;
  out.reserve(text.size() + 4);
  for (char c : text) {
    switch (c) {
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\b': out += "\\b"; break;
      case '\f': out += "\\f"; break;
      default: out += c;
    }
  }
  return out;
}

ArgumentSpec parseArgument(const json& j, const std::string& owner) {
  if (!j.is_object() || !j.contains("name") || !j["name"].is_string())
    throw IsaError("'" + owner + "': argument without a name");
  ArgumentSpec arg;
  arg.name = j["name"].get<std::string>();
  if (j.contains("type")) arg.type = dataTypeFromString(j["type"].get<std::string>());
  arg.writeBack = j.value("writeBack", false);
  arg.isImmediate = j.value("isImmediate", false);
  arg.pcRelative = j.value("pcRelative", false);
  if (arg.writeBack && arg.isImmediate)
    throw IsaError("'" + owner + "': immediate argument '" + arg.name + "' cannot be written");
  return arg;
}

json argumentToJson(const ArgumentSpec& a) {
  json j{{"name", a.name}, {"type", std::string(toString(a.type))}};
  if (a.writeBack) j["writeBack"] = true;
  if (a.isImmediate) j["isImmediate"] = true;
  if (a.pcRelative) j["pcRelative"] = true;
  return j;
}

// Checks operand references and that the assignment targets are exactly the
// writeBack arguments. Resolves argument slots in place.
void validateExpression(InstructionDefinition& def) {
  std::vector<std::pair<bool, std::string>> stack;  // (isRef, name)
  std::set<std::string> assigned;
  for (auto& token : def.tokens) {
    if (token.kind == ExprToken::Kind::kOperandRef) {
      if (token.name != "pc") {
        token.argIndex = def.argumentIndex(token.name);
        if (token.argIndex < 0)
          throw IsaError("'" + def.name + "': expression references undeclared argument \\" + token.name);
      }
      stack.emplace_back(true, token.name);
    } else if (token.kind == ExprToken::Kind::kLiteral) {
      stack.emplace_back(false, "");
    } else {
      const int n = arity(token.op);
      if (stack.size() < static_cast<std::size_t>(n)) throw IsaError("'" + def.name + "': malformed expression (stack underflow)");
      if (token.op == Operator::kAssign) {
        auto [isRef, name] = stack.back();
        if (!isRef || name == "pc") throw IsaError("'" + def.name + "': assignment target must be an argument");
        const auto& arg = def.arguments[static_cast<std::size_t>(def.argumentIndex(name))];
        if (arg.isImmediate) throw IsaError("'" + def.name + "': assignment to immediate argument '" + name + "'");
        if (!arg.writeBack) throw IsaError("'" + def.name + "': assignment to argument '" + name + "' not flagged writeBack");
        assigned.insert(name);
        stack.pop_back();
        stack.pop_back();
      } else {
        for (int i = 0; i < n; ++i) stack.pop_back();
        stack.emplace_back(false, "");
      }
    }
  }
  for (const auto& arg : def.arguments) {
    if (arg.writeBack && !def.memory && !assigned.contains(arg.name))
      throw IsaError("'" + def.name + "': writeBack argument '" + arg.name + "' is never assigned");
  }
}

}  // namespace

std::string_view toString(DataType t) {
  for (const auto& [type, name] : kDataTypeNames)
    if (type == t) return name;
  return "kInt";
}

DataType dataTypeFromString(std::string_view s) {
  for (const auto& [type, name] : kDataTypeNames)
    if (name == s) return type;
  throw IsaError("unknown argument type '" + std::string(s) + "'");
}

std::string_view toString(InstructionType t) {
  switch (t) {
    case InstructionType::kArithmetic: return "kArithmetic";
    case InstructionType::kLoadStore: return "kLoadStore";
    case InstructionType::kBranch: return "kBranch";
    case InstructionType::kJump: return "kJump";
  }
  return "kArithmetic";
}

std::optional<InstructionType> instructionTypeFromString(std::string_view s) {
  for (auto t : {InstructionType::kArithmetic, InstructionType::kLoadStore, InstructionType::kBranch, InstructionType::kJump})
    if (toString(t) == s) return t;
  return std::nullopt;
}

std::string_view toString(FuClass c) {
  switch (c) {
    case FuClass::kFX: return "FX";
    case FuClass::kFP: return "FP";
    case FuClass::kBranch: return "Branch";
    case FuClass::kLS: return "LS";
  }
  return "FX";
}

std::optional<FuClass> fuClassFromString(std::string_view s) {
  for (auto c : {FuClass::kFX, FuClass::kFP, FuClass::kBranch, FuClass::kLS})
    if (toString(c) == s) return c;
  return std::nullopt;
}

std::string_view toString(Operator op) {
  for (const auto& o : kOperators)
    if (o.op == op) return o.symbol;
  return "?";
}

int arity(Operator op) {
  for (const auto& o : kOperators)
    if (o.op == op) return o.arity;
  return 2;
}

std::string_view toString(ExceptionKind k) {
  switch (k) {
    case ExceptionKind::kDivideByZero: return "divide-by-zero";
    case ExceptionKind::kMemoryFault: return "memory-fault";
    case ExceptionKind::kUnsupportedInstruction: return "unsupported-instruction";
  }
  return "memory-fault";
}

std::optional<ExceptionKind> exceptionKindFromString(std::string_view s) {
  for (auto k : {ExceptionKind::kDivideByZero, ExceptionKind::kMemoryFault, ExceptionKind::kUnsupportedInstruction})
    if (toString(k) == s) return k;
  return std::nullopt;
}

std::vector<ExprToken> tokenizeExpression(std::string_view expr) {
  std::vector<ExprToken> tokens;
  std::size_t pos = 0;
  while (pos < expr.size()) {
    while (pos < expr.size() && std::isspace(static_cast<unsigned char>(expr[pos]))) ++pos;
    if (pos >= expr.size()) break;
    const std::size_t start = pos;
    while (pos < expr.size() && !std::isspace(static_cast<unsigned char>(expr[pos]))) ++pos;
    const std::string_view word = expr.substr(start, pos - start);

    ExprToken token;
    if (word.front() == '\\') {
      const std::string_view name = word.substr(1);
      const bool valid = !name.empty() && (std::isalpha(static_cast<unsigned char>(name.front())) || name.front() == '_') &&
                         std::all_of(name.begin(), name.end(), [](char c) {
                           return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
                         });
      if (!valid) throw ExprError("malformed operand reference '" + std::string(word) + "'");
      token.kind = ExprToken::Kind::kOperandRef;
      token.name = std::string(name);
    } else if (auto literal = parseInteger(word)) {
      token.kind = ExprToken::Kind::kLiteral;
      token.constant = *literal;
    } else {
      auto it = std::find_if(kOperators.begin(), kOperators.end(), [&](const auto& o) { return o.symbol == word; });
      if (it == kOperators.end()) throw ExprError("unknown operator '" + std::string(word) + "'");
      token.kind = ExprToken::Kind::kOperator;
      token.op = it->op;
    }
    tokens.push_back(std::move(token));
  }
  return tokens;
}

InterpretResult evalExpression(std::span<const ExprToken> tokens, const Bindings& bindings, std::int64_t pc) {
  return evaluate(
      tokens, pc,
      [&](const ExprToken& t) -> std::optional<std::int64_t> {
        if (auto it = bindings.find(t.name); it != bindings.end()) return it->second;
        return std::nullopt;
      },
      nullptr);
}

int InstructionDefinition::argumentIndex(std::string_view argName) const {
  for (std::size_t i = 0; i < arguments.size(); ++i)
    if (arguments[i].name == argName) return static_cast<int>(i);
  return -1;
}

int InstructionDefinition::writeBackIndex() const {
  for (std::size_t i = 0; i < arguments.size(); ++i)
    if (arguments[i].writeBack) return static_cast<int>(i);
  return -1;
}

int InstructionDefinition::pcRelativeIndex() const {
  for (std::size_t i = 0; i < arguments.size(); ++i)
    if (arguments[i].pcRelative) return static_cast<int>(i);
  return -1;
}

const InstructionDefinition* IsaDefinitions::find(std::string_view name) const {
  auto it = instructions_.find(name);
  return it == instructions_.end() ? nullptr : &it->second;
}

const PseudoInstruction* IsaDefinitions::findPseudo(std::string_view name, std::size_t arity) const {
  for (const auto& p : pseudos_)
    if (p.name == name && p.arguments.size() == arity) return &p;
  return nullptr;
}

bool IsaDefinitions::knowsMnemonic(std::string_view name) const {
  return find(name) != nullptr ||
         std::any_of(pseudos_.begin(), pseudos_.end(), [&](const auto& p) { return p.name == name; });
}

void IsaDefinitions::add(InstructionDefinition def) {
  if (instructions_.contains(def.name)) throw IsaError("duplicate mnemonic '" + def.name + "'");
  for (const auto& p : pseudos_)
    if (p.name == def.name && p.arguments.size() == def.arguments.size())
      throw IsaError("duplicate mnemonic '" + def.name + "'");
  std::string key = def.name;
  instructions_.emplace(std::move(key), std::move(def));
}

void IsaDefinitions::addPseudo(PseudoInstruction p) {
  if (findPseudo(p.name, p.arguments.size()) != nullptr) throw IsaError("duplicate mnemonic '" + p.name + "'");
  if (const auto* real = find(p.name); real != nullptr && real->arguments.size() == p.arguments.size())
    throw IsaError("duplicate mnemonic '" + p.name + "'");
  pseudos_.push_back(std::move(p));
}

IsaDefinitions loadIsaDefinitions(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw IsaError(std::string("instruction definitions: ") + e.what());
  }
  if (!doc.is_array()) throw IsaError("instruction definitions must be a JSON array");

  IsaDefinitions defs;
  for (const auto& entry : doc) {
    if (!entry.is_object() || !entry.contains("name") || !entry["name"].is_string())
      throw IsaError("definition without a name");
    const auto name = entry["name"].get<std::string>();
    std::vector<ArgumentSpec> args;
    for (const auto& a : entry.value("arguments", json::array())) args.push_back(parseArgument(a, name));

    if (entry.contains("expansion")) {
      PseudoInstruction pseudo{name, std::move(args), {}};
      for (const auto& line : entry["expansion"]) pseudo.expansion.push_back(restoreEscapes(line.get<std::string>()));
      if (pseudo.expansion.empty()) throw IsaError("'" + name + "': empty expansion");
      defs.addPseudo(std::move(pseudo));
      continue;
    }

    InstructionDefinition def;
    def.name = name;
    def.arguments = std::move(args);
    const auto typeName = entry.value("instructionType", std::string{});
    auto type = instructionTypeFromString(typeName);
    if (!type) throw IsaError("'" + name + "': unknown instructionType '" + typeName + "'");
    def.instructionType = *type;
    switch (def.instructionType) {
      case InstructionType::kArithmetic: def.fuClass = FuClass::kFX; break;
      case InstructionType::kLoadStore: def.fuClass = FuClass::kLS; break;
      case InstructionType::kBranch:
      case InstructionType::kJump: def.fuClass = FuClass::kBranch; break;
    }
    if (entry.contains("fuClass")) {
      auto cls = fuClassFromString(entry["fuClass"].get<std::string>());
      if (!cls) throw IsaError("'" + name + "': unknown fuClass");
      def.fuClass = *cls;
    }
    if (entry.contains("memory")) {
      const auto& m = entry["memory"];
      MemoryAccess access;
      access.size = m.value("size", 4);
      access.signExtend = m.value("signed", false);
      access.isStore = def.writeBackIndex() < 0;
      if (access.size != 1 && access.size != 2 && access.size != 4) throw IsaError("'" + name + "': bad access size");
      def.memory = access;
    }
    def.interpretableAs = restoreEscapes(entry.value("interpretableAs", std::string{}));
    try {
      def.tokens = tokenizeExpression(def.interpretableAs);
    } catch (const ExprError& e) {
      throw IsaError("'" + name + "': " + e.what());
    }
    validateExpression(def);
    defs.add(std::move(def));
  }
  return defs;
}

std::string serializeIsaDefinitions(const IsaDefinitions& defs) {
  json out = json::array();
  for (const auto& [name, def] : defs.instructions()) {
    json j{{"name", def.name}, {"instructionType", std::string(toString(def.instructionType))}};
    j["arguments"] = json::array();
    for (const auto& a : def.arguments) j["arguments"].push_back(argumentToJson(a));
    j["interpretableAs"] = def.interpretableAs;
    j["fuClass"] = std::string(toString(def.fuClass));
    if (def.memory) j["memory"] = {{"size", def.memory->size}, {"signed", def.memory->signExtend}};
    out.push_back(std::move(j));
  }
  for (const auto& p : defs.pseudos()) {
    json j{{"name", p.name}, {"arguments", json::array()}, {"expansion", p.expansion}};
    for (const auto& a : p.arguments) j["arguments"].push_back(argumentToJson(a));
    out.push_back(std::move(j));
  }
  return out.dump(2);
}

const IsaDefinitions& defaultIsa() {
  static const IsaDefinitions defs = loadIsaDefinitions(defaultIsaDocument());
  return defs;
}

InterpretResult interpretInstruction(const InstructionDefinition& def, std::span<const std::int64_t> operands,
                                     std::int64_t pc) {
  if (operands.size() != def.arguments.size())
    throw ExprError("'" + def.name + "' expects " + std::to_string(def.arguments.size()) + " operands");
  return evaluate(
      def.tokens, pc,
      [&](const ExprToken& t) -> std::optional<std::int64_t> {
        if (t.argIndex < 0) return std::nullopt;
        return operands[static_cast<std::size_t>(t.argIndex)];
      },
      &def.arguments);
}

std::int64_t branchTarget(const InstructionDefinition& def, std::span<const std::int64_t> operands, std::int64_t pc) {
  const int idx = def.pcRelativeIndex();
  if (idx < 0) return pc + 4;
  return static_cast<std::int32_t>(static_cast<std::uint32_t>(pc) +
                                   static_cast<std::uint32_t>(operands[static_cast<std::size_t>(idx)]));
}

}  // namespace rvsim
