#include "rvsim/assembler.hpp"

#include <algorithm>
#include <cctype>
#include <random>
#include <set>
#include <sstream>

#include "rvsim/registers.hpp"

namespace rvsim {

namespace {

bool isIdentStart(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '$'; }
bool isIdentChar(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '$'; }

struct DirectiveName {
  std::string_view name;
  DirectiveKind kind;
};

constexpr DirectiveName kDataDirectives[] = {
    {".byte", DirectiveKind::kByte},   {".hword", DirectiveKind::kHword},  {".half", DirectiveKind::kHword},
    {".2byte", DirectiveKind::kHword}, {".short", DirectiveKind::kHword},  {".word", DirectiveKind::kWord},
    {".4byte", DirectiveKind::kWord},  {".long", DirectiveKind::kWord},    {".dword", DirectiveKind::kDword},
    {".quad", DirectiveKind::kDword},  {".8byte", DirectiveKind::kDword},  {".align", DirectiveKind::kAlign},
    {".p2align", DirectiveKind::kAlign}, {".balign", DirectiveKind::kBalign}, {".ascii", DirectiveKind::kAscii},
    {".asciiz", DirectiveKind::kAsciiz}, {".asciz", DirectiveKind::kAsciiz}, {".string", DirectiveKind::kString},
    {".skip", DirectiveKind::kSkip},   {".space", DirectiveKind::kSkip},   {".zero", DirectiveKind::kZero},
};

constexpr std::string_view kIgnoredDirectives[] = {
    ".file", ".loc",  ".globl", ".global", ".local", ".weak",    ".hidden",   ".type",        ".size",
    ".ident", ".option", ".attribute", ".addrsig", ".addrsig_sym", ".text", ".data", ".bss", ".rodata", ".section",
};

constexpr std::string_view kSkippedSectionPrefixes[] = {".debug", ".note", ".comment", ".riscv.attributes",
                                                         ".llvm_addrsig"};

std::optional<DirectiveKind> dataDirective(std::string_view name) {
  for (const auto& d : kDataDirectives)
    if (d.name == name) return d.kind;
  return std::nullopt;
}

bool isIgnoredDirective(std::string_view name) {
  if (name.starts_with(".cfi_")) return true;
  return std::find(std::begin(kIgnoredDirectives), std::end(kIgnoredDirectives), name) != std::end(kIgnoredDirectives);
}

bool isSectionSwitch(std::string_view name) {
  return name == ".section" || name == ".text" || name == ".data" || name == ".bss" || name == ".rodata";
}

// Whether the statement switches into a section whose content is not
// loaded (debug info, notes). Only meaningful for section switches.
bool entersSkippedSection(std::string_view directive, const std::vector<Token>& args) {
  if (directive != ".section") return false;
  if (args.empty()) return false;
  const std::string& name = args.front().text;
  return std::any_of(std::begin(kSkippedSectionPrefixes), std::end(kSkippedSectionPrefixes),
                     [&](std::string_view p) { return std::string_view(name).starts_with(p); });
}

std::string decodeString(const Token& token) {
  std::string out;
  const std::string& t = token.text;
  for (std::size_t i = 1; i + 1 < t.size(); ++i) {
    char c = t[i];
    if (c != '\\') {
      out += c;
      continue;
    }
    ++i;
    if (i + 1 > t.size() - 1) break;
    c = t[i];
    switch (c) {
      case 'n': out += '\n'; break;
      case 't': out += '\t'; break;
      case 'r': out += '\r'; break;
      case 'b': out += '\b'; break;
      case 'f': out += '\f'; break;
      case 'v': out += '\v'; break;
      case 'a': out += '\a'; break;
      case 'x': {
        int value = 0;
        while (i + 1 < t.size() - 1 + 1 && i + 1 < t.size() && std::isxdigit(static_cast<unsigned char>(t[i + 1])) &&
               i + 1 < t.size() - 1) {
          ++i;
          value = value * 16 + (std::isdigit(static_cast<unsigned char>(t[i])) ? t[i] - '0' : (std::tolower(t[i]) - 'a' + 10));
        }
        out += static_cast<char>(value & 0xFF);
        break;
      }
      default:
        if (c >= '0' && c <= '7') {
          int value = c - '0';
          for (int k = 0; k < 2 && i + 1 < t.size() - 1 && t[i + 1] >= '0' && t[i + 1] <= '7'; ++k) {
            ++i;
            value = value * 8 + (t[i] - '0');
          }
          out += static_cast<char>(value & 0xFF);
        } else {
          out += c;
        }
    }
  }
  return out;
}

std::optional<std::int64_t> parseNumberToken(const Token& token) {
  const std::string& t = token.text;
  if (t.size() >= 3 && t.front() == '\'') {
    if (t[1] == '\\' && t.size() == 4) {
      switch (t[2]) {
        case 'n': return '\n';
        case 't': return '\t';
        case 'r': return '\r';
        case '0': return 0;
        default: return static_cast<unsigned char>(t[2]);
      }
    }
    if (t.size() == 3) return static_cast<unsigned char>(t[1]);
    return std::nullopt;
  }
  int base = 10;
  std::size_t pos = 0;
  if (t.size() > 2 && t[0] == '0' && (t[1] == 'x' || t[1] == 'X')) {
    base = 16;
    pos = 2;
  } else if (t.size() > 2 && t[0] == '0' && (t[1] == 'b' || t[1] == 'B')) {
    base = 2;
    pos = 2;
  }
  if (pos >= t.size()) return std::nullopt;
  std::uint64_t value = 0;
  for (; pos < t.size(); ++pos) {
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(t[pos])));
    int digit = -1;
    if (c >= '0' && c <= '9') digit = c - '0';
    else if (c >= 'a' && c <= 'f') digit = c - 'a' + 10;
    if (digit < 0 || digit >= base) return std::nullopt;
    value = value * static_cast<std::uint64_t>(base) + static_cast<std::uint64_t>(digit);
  }
  return static_cast<std::int64_t>(value);
}

Diagnostic diagAt(const Token& t, std::string message) { return {t.line, t.column, std::move(message)}; }

// Recursive-descent evaluator for operand expressions.
class ExprParser {
 public:
  ExprParser(const std::vector<Token>& tokens, const std::map<std::string, Symbol>* symbols)
      : tokens_(tokens), symbols_(symbols) {}

  std::int64_t parse() {
    if (tokens_.empty()) throw AsmError(Diagnostic{0, 0, "empty expression"});
    const std::int64_t value = sum();
    if (pos_ != tokens_.size()) fail(tokens_[pos_], "unexpected '" + tokens_[pos_].text + "' in expression");
    return value;
  }

 private:
  [[noreturn]] void fail(const Token& at, std::string message) { throw AsmError(diagAt(at, std::move(message))); }

  const Token* peek() const { return pos_ < tokens_.size() ? &tokens_[pos_] : nullptr; }

  const Token& next() {
    if (pos_ >= tokens_.size()) fail(tokens_.back(), "unexpected end of expression");
    return tokens_[pos_++];
  }

  std::int64_t sum() {
    std::int64_t value = product();
    while (const Token* t = peek()) {
      if (t->kind != TokenKind::kOperator || (t->text != "+" && t->text != "-")) break;
      ++pos_;
      const std::int64_t rhs = product();
      value = t->text == "+" ? value + rhs : value - rhs;
    }
    return value;
  }

  std::int64_t product() {
    std::int64_t value = unary();
    while (const Token* t = peek()) {
      if (t->kind != TokenKind::kOperator || t->text != "*") break;
      ++pos_;
      value *= unary();
    }
    return value;
  }

  std::int64_t unary() {
    const Token* t = peek();
    if (t != nullptr && t->kind == TokenKind::kOperator && (t->text == "-" || t->text == "+")) {
      ++pos_;
      const std::int64_t v = unary();
      return t->text == "-" ? -v : v;
    }
    return primary();
  }

  std::int64_t parenthesized() {
    const Token& open = next();
    if (open.kind != TokenKind::kParen || open.text != "(") fail(open, "expected '('");
    const std::int64_t v = sum();
    const Token& close = next();
    if (close.kind != TokenKind::kParen || close.text != ")") fail(close, "expected ')'");
    return v;
  }

  std::int64_t primary() {
    const Token& t = next();
    switch (t.kind) {
      case TokenKind::kNumber: {
        auto v = parseNumberToken(t);
        if (!v) fail(t, "malformed number '" + t.text + "'");
        return *v;
      }
      case TokenKind::kParen:
        if (t.text == "(") {
          --pos_;
          return parenthesized();
        }
        fail(t, "unexpected ')'");
      case TokenKind::kSymbol: {
        if (t.text == "%hi") {
          const std::int64_t v = parenthesized();
          return ((v + 0x800) >> 12) & 0xFFFFF;
        }
        if (t.text == "%lo") {
          const std::int64_t v = parenthesized();
          return ((v & 0xFFF) ^ 0x800) - 0x800;
        }
        if (parseRegisterName(t.text)) fail(t, "non-constant expression: register '" + t.text + "'");
        if (symbols_ == nullptr) fail(t, "label '" + t.text + "' not allowed here");
        auto it = symbols_->find(t.text);
        if (it == symbols_->end()) fail(t, "undefined label '" + t.text + "'");
        return it->second.address;
      }
      default: fail(t, "unexpected '" + t.text + "' in expression");
    }
  }

  const std::vector<Token>& tokens_;
  const std::map<std::string, Symbol>* symbols_;
  std::size_t pos_ = 0;
};

std::int64_t evalTokens(const std::vector<Token>& tokens, const std::map<std::string, Symbol>* symbols) {
  return ExprParser(tokens, symbols).parse();
}

std::string sliceText(std::string_view source, const std::vector<Token>& tokens) {
  if (tokens.empty()) return {};
  const std::size_t begin = tokens.front().offset;
  const std::size_t end = tokens.back().offset + tokens.back().text.size();
  return std::string(source.substr(begin, end - begin));
}

struct Statement {
  std::vector<Token> labels;
  std::vector<Token> body;  // first token is the mnemonic or directive
};

std::vector<Statement> splitStatements(const std::vector<Token>& tokens) {
  std::vector<Statement> out;
  Statement current;
  auto flush = [&] {
    if (!current.labels.empty() || !current.body.empty()) out.push_back(std::move(current));
    current = {};
  };
  for (const auto& t : tokens) {
    if (t.kind == TokenKind::kNewline) {
      flush();
      continue;
    }
    if (t.kind == TokenKind::kComment) continue;
    if (t.kind == TokenKind::kLabelDef && current.body.empty()) {
      current.labels.push_back(t);
      continue;
    }
    current.body.push_back(t);
  }
  flush();
  return out;
}

std::vector<std::vector<Token>> splitArgs(const std::vector<Token>& body, std::size_t from) {
  std::vector<std::vector<Token>> args;
  if (from >= body.size()) return args;
  args.emplace_back();
  for (std::size_t i = from; i < body.size(); ++i) {
    if (body[i].kind == TokenKind::kComma) {
      args.emplace_back();
      continue;
    }
    args.back().push_back(body[i]);
  }
  return args;
}

std::string labelName(const Token& t) { return t.text.substr(0, t.text.size() - 1); }

class PassOne {
 public:
  PassOne(const IsaDefinitions& isa, std::string_view source) : isa_(isa), source_(source) {}

  PassOneResult run(const std::vector<Token>& tokens) {
    bool skipping = false;
    for (const auto& st : splitStatements(tokens)) {
      if (!st.body.empty() && st.body.front().kind == TokenKind::kDirective && isSectionSwitch(st.body.front().text)) {
        std::vector<Token> args(st.body.begin() + 1, st.body.end());
        skipping = entersSkippedSection(st.body.front().text, args);
        continue;
      }
      if (skipping) continue;
      for (const auto& l : st.labels) defineLabel(l);
      if (st.body.empty()) continue;
      const Token& head = st.body.front();
      try {
        if (head.kind == TokenKind::kDirective) {
          directive(st);
        } else if (head.kind == TokenKind::kSymbol) {
          instruction(st.body, source_);
        } else {
          diagnostics_.push_back(diagAt(head, "unexpected '" + head.text + "' at start of statement"));
        }
      } catch (const AsmError& e) {
        diagnostics_.insert(diagnostics_.end(), e.diagnostics().begin(), e.diagnostics().end());
      }
    }
    result_.trailingLabels = pending_;
    for (const auto& name : pending_) result_.codeLabels[name] = static_cast<std::uint32_t>(result_.instructions.size() * 4);
    if (!diagnostics_.empty()) throw AsmError(diagnostics_);
    return std::move(result_);
  }

 private:
  void defineLabel(const Token& t) {
    const std::string name = labelName(t);
    if (!seen_.insert(name).second) {
      diagnostics_.push_back(diagAt(t, "duplicate label '" + name + "'"));
      return;
    }
    pending_.push_back(name);
  }

  void directive(const Statement& st) {
    const Token& head = st.body.front();
    if (isIgnoredDirective(head.text)) return;
    auto kind = dataDirective(head.text);
    if (!kind) throw AsmError(diagAt(head, "unknown directive '" + head.text + "'"));
    DataDirective d;
    d.kind = *kind;
    d.line = head.line;
    d.column = head.column;
    d.args = splitArgs(st.body, 1);
    for (const auto& a : d.args)
      if (a.empty()) throw AsmError(diagAt(head, "empty argument to " + head.text));

    const bool isString = d.kind == DirectiveKind::kAscii || d.kind == DirectiveKind::kAsciiz || d.kind == DirectiveKind::kString;
    if (d.args.empty()) throw AsmError(diagAt(head, head.text + " expects at least one argument"));
    if (isString) {
      for (const auto& a : d.args)
        if (a.size() != 1 || a.front().kind != TokenKind::kStringLit)
          throw AsmError(diagAt(a.front(), head.text + " expects string literals"));
    } else {
      for (const auto& a : d.args)
        for (const auto& t : a)
          if (t.kind == TokenKind::kStringLit) throw AsmError(diagAt(t, head.text + " does not take strings"));
    }
    const std::size_t maxArgs = (d.kind == DirectiveKind::kAlign || d.kind == DirectiveKind::kBalign) ? 3
                                : (d.kind == DirectiveKind::kSkip) ? 2
                                : (d.kind == DirectiveKind::kZero) ? 1
                                                                   : SIZE_MAX;
    if (d.args.size() > maxArgs) throw AsmError(diagAt(head, "too many arguments to " + head.text));
    // Sizes must be known before layout.
    if (d.kind == DirectiveKind::kAlign || d.kind == DirectiveKind::kBalign || d.kind == DirectiveKind::kSkip ||
        d.kind == DirectiveKind::kZero) {
      const std::int64_t n = evalTokens(d.args.front(), nullptr);
      if (n < 0 || (d.kind == DirectiveKind::kAlign && n > 16)) throw AsmError(diagAt(head, "bad argument to " + head.text));
    }
    if (d.kind != DirectiveKind::kAlign && d.kind != DirectiveKind::kBalign) {
      d.labels = std::move(pending_);
      pending_.clear();
      for (const auto& l : d.labels) result_.dataLabelItems[l] = result_.directives.size();
    }
    result_.directives.push_back(std::move(d));
  }

  static std::vector<Operand> parseOperands(const std::vector<Token>& body, std::string_view source) {
    std::vector<Operand> ops;
    for (auto& arg : splitArgs(body, 1)) {
      if (arg.empty()) throw AsmError(diagAt(body.front(), "empty operand"));
      if (arg.size() == 1 && arg.front().kind == TokenKind::kSymbol) {
        if (auto reg = parseRegisterName(arg.front().text)) {
          ops.push_back({true, *reg, {}, arg.front().text});
          continue;
        }
      }
      // offset(reg) memory form
      if (arg.size() >= 3 && arg.back().kind == TokenKind::kParen && arg.back().text == ")" &&
          arg[arg.size() - 3].kind == TokenKind::kParen && arg[arg.size() - 3].text == "(" &&
          arg[arg.size() - 2].kind == TokenKind::kSymbol) {
        if (auto reg = parseRegisterName(arg[arg.size() - 2].text)) {
          std::vector<Token> offset(arg.begin(), arg.end() - 3);
          Operand imm;
          if (offset.empty()) {
            Token zero{TokenKind::kNumber, "0", arg.front().line, arg.front().column, 0};
            imm.expr = {zero};
            imm.text = "0";
          } else {
            imm.text = sliceText(source, offset);
            imm.expr = std::move(offset);
          }
          ops.push_back(std::move(imm));
          ops.push_back({true, *reg, {}, arg[arg.size() - 2].text});
          continue;
        }
      }
      Operand expr;
      expr.text = sliceText(source, arg);
      expr.expr = std::move(arg);
      ops.push_back(std::move(expr));
    }
    return ops;
  }

  void instruction(const std::vector<Token>& body, std::string_view source, const Token* origin = nullptr,
                   const std::string* originText = nullptr) {
    const Token& head = origin != nullptr ? *origin : body.front();
    const std::string& mnemonic = body.front().text;
    std::vector<Operand> ops = parseOperands(body, source);
    const std::string text = originText != nullptr ? *originText : sliceText(source, body);

    const InstructionDefinition* def = isa_.find(mnemonic);
    if (def != nullptr && def->arguments.size() == ops.size()) {
      emit(*def, std::move(ops), head, text);
      return;
    }
    if (origin == nullptr) {
      if (const PseudoInstruction* pseudo = isa_.findPseudo(mnemonic, ops.size())) {
        expand(*pseudo, ops, head, text);
        return;
      }
    }
    if (isa_.knowsMnemonic(mnemonic))
      throw AsmError(diagAt(head, "wrong operand count for '" + mnemonic + "'"));
    throw AsmError(diagAt(head, "unknown mnemonic '" + mnemonic + "'"));
  }

  void emit(const InstructionDefinition& def, std::vector<Operand> ops, const Token& head, const std::string& text) {
    // jalr rd, off(rs1) arrives as (rd, off, rs1); the definition wants (rd, rs1, off).
    for (std::size_t i = 0; i + 1 < ops.size(); ++i) {
      if (!ops[i].isRegister && ops[i + 1].isRegister && !def.arguments[i].isImmediate && def.arguments[i + 1].isImmediate)
        std::swap(ops[i], ops[i + 1]);
    }
    for (std::size_t i = 0; i < ops.size(); ++i) {
      const auto& arg = def.arguments[i];
      if (arg.isImmediate && ops[i].isRegister)
        throw AsmError(diagAt(head, "'" + def.name + "': operand " + std::to_string(i + 1) + " must be an immediate"));
      if (!arg.isImmediate && !ops[i].isRegister)
        throw AsmError(diagAt(head, "'" + def.name + "': operand " + std::to_string(i + 1) + " must be a register, got '" +
                                        ops[i].text + "'"));
    }
    const auto address = static_cast<std::uint32_t>(result_.instructions.size() * 4);
    for (const auto& l : pending_) result_.codeLabels[l] = address;
    pending_.clear();
    result_.instructions.push_back({&def, std::move(ops), text, head.line, head.column});
  }

  void expand(const PseudoInstruction& pseudo, const std::vector<Operand>& ops, const Token& head,
              const std::string& text) {
    for (const auto& templ : pseudo.expansion) {
      std::string line;
      for (std::size_t i = 0; i < templ.size(); ++i) {
        if (templ[i] != '\\') {
          line += templ[i];
          continue;
        }
        std::size_t j = i + 1;
        while (j < templ.size() && (std::isalnum(static_cast<unsigned char>(templ[j])) || templ[j] == '_')) ++j;
        const std::string name = templ.substr(i + 1, j - i - 1);
        auto it = std::find_if(pseudo.arguments.begin(), pseudo.arguments.end(), [&](const auto& a) { return a.name == name; });
        if (it == pseudo.arguments.end()) throw AsmError(diagAt(head, "bad expansion of '" + pseudo.name + "'"));
        const auto& op = ops[static_cast<std::size_t>(it - pseudo.arguments.begin())];
        if (it->isImmediate == op.isRegister)
          throw AsmError(diagAt(head, "'" + pseudo.name + "': operand '" + op.text + "' has the wrong kind"));
        line += op.text;
        i = j - 1;
      }
      auto expanded = tokenize(line);
      std::vector<Token> body;
      for (auto& t : expanded)
        if (t.kind != TokenKind::kNewline && t.kind != TokenKind::kComment) body.push_back(t);
      if (body.empty()) continue;
      instruction(body, line, &head, &text);
    }
  }

  const IsaDefinitions& isa_;
  std::string_view source_;
  PassOneResult result_;
  std::vector<std::string> pending_;
  std::set<std::string> seen_;
  std::vector<Diagnostic> diagnostics_;
};

std::uint32_t alignUp(std::uint32_t value, std::uint32_t alignment) {
  if (alignment <= 1) return value;
  return (value + alignment - 1) / alignment * alignment;
}

std::uint32_t directiveSize(const DataDirective& d) {
  switch (d.kind) {
    case DirectiveKind::kByte: return static_cast<std::uint32_t>(d.args.size());
    case DirectiveKind::kHword: return static_cast<std::uint32_t>(d.args.size() * 2);
    case DirectiveKind::kWord: return static_cast<std::uint32_t>(d.args.size() * 4);
    case DirectiveKind::kDword: return static_cast<std::uint32_t>(d.args.size() * 8);
    case DirectiveKind::kAscii:
    case DirectiveKind::kAsciiz:
    case DirectiveKind::kString: {
      std::uint32_t n = 0;
      for (const auto& a : d.args)
        n += static_cast<std::uint32_t>(decodeString(a.front()).size()) + (d.kind == DirectiveKind::kAscii ? 0 : 1);
      return n;
    }
    case DirectiveKind::kSkip:
    case DirectiveKind::kZero: return static_cast<std::uint32_t>(evalTokens(d.args.front(), nullptr));
    case DirectiveKind::kAlign:
    case DirectiveKind::kBalign: return 0;
  }
  return 0;
}

std::uint32_t naturalAlignment(const DataDirective& d) {
  switch (d.kind) {
    case DirectiveKind::kHword: return 2;
    case DirectiveKind::kWord: return 4;
    case DirectiveKind::kDword: return 8;
    default: return 1;
  }
}

void putLittleEndian(std::vector<std::uint8_t>& image, std::size_t offset, std::uint64_t value, int size) {
  for (int i = 0; i < size; ++i) image[offset + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(value >> (8 * i));
}

}  // namespace

AsmError::AsmError(std::vector<Diagnostic> diagnostics)
    : std::runtime_error(diagnostics.empty() ? std::string("assembly failed")
                                             : "line " + std::to_string(diagnostics.front().line) + ":" +
                                                   std::to_string(diagnostics.front().column) + ": " +
                                                   diagnostics.front().message),
      diagnostics_(std::move(diagnostics)) {}

void to_json(nlohmann::json& j, const Diagnostic& d) {
  j = nlohmann::json{{"line", d.line}, {"column", d.column}, {"message", d.message}};
}

std::vector<Token> tokenize(std::string_view src) {
  std::vector<Token> tokens;
  int line = 1;
  int column = 1;
  bool statementStart = true;
  std::size_t i = 0;
  auto push = [&](TokenKind kind, std::size_t begin, std::size_t end) {
    tokens.push_back({kind, std::string(src.substr(begin, end - begin)), line, column, begin});
    column += static_cast<int>(end - begin);
    i = end;
  };
  while (i < src.size()) {
    const char c = src[i];
    if (c == '\n') {
      push(TokenKind::kNewline, i, i + 1);
      ++line;
      column = 1;
      statementStart = true;
    } else if (c == ' ' || c == '\t' || c == '\r') {
      ++i;
      ++column;
    } else if (c == '#') {
      std::size_t end = src.find('\n', i);
      if (end == std::string_view::npos) end = src.size();
      push(TokenKind::kComment, i, end);
    } else if (c == ',') {
      push(TokenKind::kComma, i, i + 1);
    } else if (c == '(' || c == ')') {
      push(TokenKind::kParen, i, i + 1);
    } else if (c == '"') {
      std::size_t j = i + 1;
      while (j < src.size() && src[j] != '"' && src[j] != '\n') j += (src[j] == '\\' && j + 1 < src.size()) ? 2 : 1;
      if (j >= src.size() || src[j] != '"') throw AsmError(Diagnostic{line, column, "unterminated string literal"});
      push(TokenKind::kStringLit, i, j + 1);
      statementStart = false;
    } else if (c == '\'') {
      std::size_t j = i + 1;
      if (j < src.size() && src[j] == '\\') ++j;
      ++j;
      if (j < src.size() && src[j] == '\'') ++j;
      push(TokenKind::kNumber, i, std::min(j, src.size()));
      statementStart = false;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      while (j < src.size() && std::isalnum(static_cast<unsigned char>(src[j]))) ++j;
      push(TokenKind::kNumber, i, j);
      statementStart = false;
    } else if (c == '+' || c == '-' || c == '*') {
      push(TokenKind::kOperator, i, i + 1);
      statementStart = false;
    } else if (c == '%' || isIdentStart(c)) {
      std::size_t j = i + 1;
      while (j < src.size() && isIdentChar(src[j])) ++j;
      if (c != '%' && j < src.size() && src[j] == ':') {
        push(TokenKind::kLabelDef, i, j + 1);
      } else {
        push(statementStart && c == '.' ? TokenKind::kDirective : TokenKind::kSymbol, i, j);
        statementStart = false;
      }
    } else {
      push(TokenKind::kSymbol, i, i + 1);
      statementStart = false;
    }
  }
  return tokens;
}

std::string_view toString(DirectiveKind kind) {
  switch (kind) {
    case DirectiveKind::kByte: return ".byte";
    case DirectiveKind::kHword: return ".hword";
    case DirectiveKind::kWord: return ".word";
    case DirectiveKind::kDword: return ".dword";
    case DirectiveKind::kAlign: return ".align";
    case DirectiveKind::kAscii: return ".ascii";
    case DirectiveKind::kAsciiz: return ".asciiz";
    case DirectiveKind::kString: return ".string";
    case DirectiveKind::kSkip: return ".skip";
    case DirectiveKind::kZero: return ".zero";
    case DirectiveKind::kBalign: return ".balign";
  }
  return ".byte";
}

PassOneResult passOne(const std::vector<Token>& tokens, const IsaDefinitions& isa) {
  // Operand text is sliced from the original source, which we rebuild from
  // token offsets.
  std::string source;
  for (const auto& t : tokens) {
    if (source.size() < t.offset) source.resize(t.offset, ' ');
    source.replace(t.offset, t.text.size(), t.text);
  }
  return PassOne(isa, source).run(tokens);
}

std::uint32_t elementSize(ElementType t) {
  switch (t) {
    case ElementType::kByte: return 1;
    case ElementType::kHalf: return 2;
    case ElementType::kWord: return 4;
  }
  return 4;
}

std::optional<ElementType> elementTypeFromString(std::string_view s) {
  if (s == "byte" || s == "char" || s == "int8") return ElementType::kByte;
  if (s == "hword" || s == "half" || s == "short" || s == "int16") return ElementType::kHalf;
  if (s == "word" || s == "int" || s == "unsigned" || s == "int32") return ElementType::kWord;
  return std::nullopt;
}

std::string_view toString(ElementType t) {
  switch (t) {
    case ElementType::kByte: return "byte";
    case ElementType::kHalf: return "hword";
    case ElementType::kWord: return "word";
  }
  return "word";
}

std::uint32_t UserArray::elementCount() const {
  return values.empty() ? count : static_cast<std::uint32_t>(values.size());
}

std::vector<std::int64_t> UserArray::materialize() const {
  if (!values.empty()) return values;
  std::vector<std::int64_t> out(count, fill.value_or(0));
  if (randomSeed) {
    std::mt19937_64 rng(*randomSeed);
    const auto span = static_cast<std::uint64_t>(std::max<std::int64_t>(randomMax - randomMin, 1));
    for (auto& v : out) v = randomMin + static_cast<std::int64_t>(rng() % span);
  }
  return out;
}

void to_json(nlohmann::json& j, const UserArray& a) {
  j = nlohmann::json{{"name", a.name}, {"dataType", std::string(toString(a.type))}, {"alignment", a.alignment}};
  if (!a.values.empty()) {
    j["values"] = a.values;
  } else {
    j["count"] = a.count;
    if (a.fill) j["fill"] = *a.fill;
    if (a.randomSeed) {
      j["randomSeed"] = *a.randomSeed;
      j["randomMin"] = a.randomMin;
      j["randomMax"] = a.randomMax;
    }
  }
}

void from_json(const nlohmann::json& j, UserArray& a) {
  a = UserArray{};
  a.name = j.at("name").get<std::string>();
  const auto typeName = j.value("dataType", std::string("word"));
  auto type = elementTypeFromString(typeName);
  if (!type) throw std::invalid_argument("unknown array dataType '" + typeName + "'");
  a.type = *type;
  a.alignment = j.value("alignment", 0U);
  if (j.contains("values")) a.values = j["values"].get<std::vector<std::int64_t>>();
  a.count = j.value("count", 0U);
  if (j.contains("fill")) a.fill = j["fill"].get<std::int64_t>();
  if (j.contains("randomSeed")) a.randomSeed = j["randomSeed"].get<std::uint64_t>();
  a.randomMin = j.value("randomMin", std::int64_t{0});
  a.randomMax = j.value("randomMax", std::int64_t{100});
}

MemoryLayout layoutMemory(const PassOneResult& partial, const std::vector<UserArray>& userArrays,
                          std::uint32_t stackSize, std::uint32_t capacity) {
  MemoryLayout layout;
  layout.stackBottom = 0;
  layout.stackTop = stackSize;
  layout.dataStart = stackSize;
  layout.capacity = capacity;
  std::uint64_t cursor = stackSize;

  for (const auto& [name, address] : partial.codeLabels) layout.symbols[name] = {Segment::kCode, address, 0};

  for (const auto& d : partial.directives) {
    if (d.kind == DirectiveKind::kAlign) {
      cursor = alignUp(static_cast<std::uint32_t>(cursor), 1U << evalTokens(d.args.front(), nullptr));
      layout.directiveAddresses.push_back(static_cast<std::uint32_t>(cursor));
      continue;
    }
    if (d.kind == DirectiveKind::kBalign) {
      cursor = alignUp(static_cast<std::uint32_t>(cursor), static_cast<std::uint32_t>(evalTokens(d.args.front(), nullptr)));
      layout.directiveAddresses.push_back(static_cast<std::uint32_t>(cursor));
      continue;
    }
    cursor = alignUp(static_cast<std::uint32_t>(cursor), naturalAlignment(d));
    const std::uint32_t size = directiveSize(d);
    layout.directiveAddresses.push_back(static_cast<std::uint32_t>(cursor));
    for (const auto& l : d.labels) layout.symbols[l] = {Segment::kData, static_cast<std::uint32_t>(cursor), size};
    cursor += size;
    if (cursor > capacity) throw AsmError(Diagnostic{d.line, d.column, "program data exceeds memory capacity"});
  }

  for (const auto& a : userArrays) {
    if (layout.symbols.contains(a.name)) throw AsmError(Diagnostic{0, 0, "array '" + a.name + "' clashes with a label"});
    const std::uint32_t elem = elementSize(a.type);
    cursor = alignUp(static_cast<std::uint32_t>(cursor), a.alignment == 0 ? elem : a.alignment);
    const std::uint32_t size = elem * a.elementCount();
    layout.symbols[a.name] = {Segment::kData, static_cast<std::uint32_t>(cursor), size};
    cursor += size;
    if (cursor > capacity) throw AsmError(Diagnostic{0, 0, "array '" + a.name + "' exceeds memory capacity"});
  }
  if (stackSize > capacity) throw AsmError(Diagnostic{0, 0, "call stack exceeds memory capacity"});
  layout.dataEnd = static_cast<std::uint32_t>(cursor);
  return layout;
}

std::int64_t evalOperandExpression(std::string_view expr, const std::map<std::string, Symbol>& symbols,
                                   std::uint32_t instrAddress, bool isPcRelative) {
  std::vector<Token> tokens;
  for (auto& t : tokenize(expr))
    if (t.kind != TokenKind::kNewline && t.kind != TokenKind::kComment) tokens.push_back(std::move(t));
  // A leading '.'-symbol tokenizes as a directive; it is a label here.
  for (auto& t : tokens)
    if (t.kind == TokenKind::kDirective) t.kind = TokenKind::kSymbol;
  const std::int64_t value = evalTokens(tokens, &symbols);
  return isPcRelative ? value - static_cast<std::int64_t>(instrAddress) : value;
}

AsmProgram passTwo(const PassOneResult& partial, const MemoryLayout& layout, std::optional<std::string> entry) {
  AsmProgram program;
  program.layout = layout;
  program.labels = layout.symbols;
  std::vector<Diagnostic> diagnostics;

  for (std::size_t i = 0; i < partial.instructions.size(); ++i) {
    const auto& pi = partial.instructions[i];
    ProgramInstruction instr;
    instr.def = pi.def;
    instr.address = static_cast<std::uint32_t>(i * 4);
    instr.line = pi.line;
    instr.sourceText = pi.sourceText;
    for (std::size_t k = 0; k < pi.operands.size(); ++k) {
      const auto& op = pi.operands[k];
      if (op.isRegister) {
        instr.operands.push_back(op.reg);
        continue;
      }
      try {
        std::int64_t v = evalTokens(op.expr, &layout.symbols);
        if (pi.def->arguments[k].pcRelative) v -= instr.address;
        instr.operands.push_back(v);
      } catch (const AsmError& e) {
        for (auto d : e.diagnostics()) {
          if (d.line == 0) d = {pi.line, pi.column, d.message};
          diagnostics.push_back(d);
        }
        instr.operands.push_back(0);
      }
    }
    program.instructions.push_back(std::move(instr));
  }

  program.dataImage.assign(layout.dataEnd - layout.dataStart, 0);
  for (std::size_t i = 0; i < partial.directives.size(); ++i) {
    const auto& d = partial.directives[i];
    std::size_t offset = layout.directiveAddresses[i] - layout.dataStart;
    try {
      switch (d.kind) {
        case DirectiveKind::kByte:
        case DirectiveKind::kHword:
        case DirectiveKind::kWord:
        case DirectiveKind::kDword: {
          const int size = d.kind == DirectiveKind::kByte    ? 1
                           : d.kind == DirectiveKind::kHword ? 2
                           : d.kind == DirectiveKind::kWord  ? 4
                                                             : 8;
          for (const auto& a : d.args) {
            putLittleEndian(program.dataImage, offset, static_cast<std::uint64_t>(evalTokens(a, &layout.symbols)), size);
            offset += static_cast<std::size_t>(size);
          }
          break;
        }
        case DirectiveKind::kAscii:
        case DirectiveKind::kAsciiz:
        case DirectiveKind::kString:
          for (const auto& a : d.args) {
            for (char c : decodeString(a.front())) program.dataImage[offset++] = static_cast<std::uint8_t>(c);
            if (d.kind != DirectiveKind::kAscii) program.dataImage[offset++] = 0;
          }
          break;
        case DirectiveKind::kSkip: {
          const std::int64_t n = evalTokens(d.args.front(), nullptr);
          const std::int64_t fill = d.args.size() > 1 ? evalTokens(d.args[1], nullptr) : 0;
          for (std::int64_t k = 0; k < n; ++k) program.dataImage[offset++] = static_cast<std::uint8_t>(fill);
          break;
        }
        case DirectiveKind::kZero:
        case DirectiveKind::kAlign:
        case DirectiveKind::kBalign: break;
      }
    } catch (const AsmError& e) {
      for (auto diag : e.diagnostics()) diagnostics.push_back(diag.line == 0 ? Diagnostic{d.line, d.column, diag.message} : diag);
    }
  }

  if (entry && !entry->empty()) {
    auto it = layout.symbols.find(*entry);
    if (it == layout.symbols.end()) {
      diagnostics.push_back({0, 0, "undefined entry label '" + *entry + "'"});
    } else if (it->second.segment != Segment::kCode) {
      diagnostics.push_back({0, 0, "entry label '" + *entry + "' is not in the code segment"});
    } else {
      program.entryPoint = it->second.address;
    }
  }
  if (!diagnostics.empty()) throw AsmError(diagnostics);
  return program;
}

AsmProgram assemble(std::string_view source, const AssembleOptions& options, const IsaDefinitions& isa) {
  const auto tokens = tokenize(source);
  const auto partial = passOne(tokens, isa);
  const auto layout = layoutMemory(partial, options.userArrays, options.stackSize, options.memoryCapacity);
  AsmProgram program = passTwo(partial, layout, options.entry);
  for (const auto& a : options.userArrays) {
    const auto& sym = program.labels.at(a.name);
    const std::uint32_t elem = elementSize(a.type);
    std::size_t offset = sym.address - layout.dataStart;
    for (std::int64_t v : a.materialize()) {
      putLittleEndian(program.dataImage, offset, static_cast<std::uint64_t>(v), static_cast<int>(elem));
      offset += elem;
    }
  }
  return program;
}

const ProgramInstruction* AsmProgram::at(std::int64_t address) const {
  if (address < 0 || address % 4 != 0) return nullptr;
  const auto index = static_cast<std::size_t>(address / 4);
  return index < instructions.size() ? &instructions[index] : nullptr;
}

std::string renderInstruction(const ProgramInstruction& instr) {
  std::ostringstream out;
  out << instr.def->name;
  if (instr.def->memory && instr.operands.size() == 3) {
    out << " " << registerName(static_cast<int>(instr.operands[0])) << ", " << instr.operands[1] << "("
        << registerName(static_cast<int>(instr.operands[2])) << ")";
    return out.str();
  }
  for (std::size_t i = 0; i < instr.operands.size(); ++i) {
    out << (i == 0 ? " " : ", ");
    const auto& arg = instr.def->arguments[i];
    if (!arg.isImmediate) {
      out << registerName(static_cast<int>(instr.operands[i]));
    } else if (arg.pcRelative) {
      out << static_cast<std::int64_t>(instr.address) + instr.operands[i];
    } else {
      out << instr.operands[i];
    }
  }
  return out.str();
}

std::string renderProgram(const AsmProgram& program) {
  std::ostringstream out;
  std::multimap<std::uint32_t, std::string> codeLabels;
  std::multimap<std::uint32_t, std::string> dataLabels;
  for (const auto& [name, sym] : program.labels) (sym.segment == Segment::kCode ? codeLabels : dataLabels).emplace(sym.address, name);

  for (const auto& instr : program.instructions) {
    auto [lo, hi] = codeLabels.equal_range(instr.address);
    for (auto it = lo; it != hi; ++it) out << it->second << ":\n";
    out << "  " << renderInstruction(instr) << "\n";
  }
  auto [tlo, thi] = codeLabels.equal_range(program.codeSize());
  for (auto it = tlo; it != thi; ++it) out << it->second << ":\n";

  const std::uint32_t start = program.layout.dataStart;
  const std::uint32_t end = start + static_cast<std::uint32_t>(program.dataImage.size());
  std::uint32_t addr = start;
  const auto emitBytes = [&](std::uint32_t from, std::uint32_t to, std::uint32_t perLine) {
    for (std::uint32_t a = from; a < to; a += perLine) {
      out << "  .byte ";
      for (std::uint32_t k = a; k < std::min(to, a + perLine); ++k) {
        if (k != a) out << ", ";
        out << static_cast<int>(program.dataImage[k - start]);
      }
      out << "\n";
    }
  };
  while (addr < end) {
    auto [lo, hi] = dataLabels.equal_range(addr);
    auto next = dataLabels.upper_bound(addr);
    const std::uint32_t stop = next == dataLabels.end() ? end : std::min(end, next->first);
    // A label's size is that of the item it binds to, so the labelled item is
    // one directive and any padding after it is a separate one.
    std::uint32_t itemEnd = addr;
    for (auto it = lo; it != hi; ++it) {
      out << it->second << ":\n";
      itemEnd = std::max(itemEnd, std::min(stop, addr + program.labels.at(it->second).size));
    }
    if (itemEnd > addr) emitBytes(addr, itemEnd, itemEnd - addr);
    emitBytes(itemEnd, stop, 16);
    addr = stop;
  }
  auto [elo, ehi] = dataLabels.equal_range(end);
  for (auto it = elo; it != ehi; ++it) out << it->second << ":\n  .zero 0\n";
  return out.str();
}

FilteredAsm filterCompilerOutputWithLines(std::string_view asmText) {
  struct Kept {
    std::string text;
    int line;
    std::vector<Token> labels;
    std::size_t bodyOffset;  // offset of the first non-label character in text
    bool hasBody;
  };
  std::vector<Kept> kept;
  std::set<std::string> referenced;
  bool skipping = false;

  std::vector<std::string_view> lines;
  for (std::size_t pos = 0;;) {
    const std::size_t nl = asmText.find('\n', pos);
    if (nl == std::string_view::npos) {
      if (pos < asmText.size()) lines.push_back(asmText.substr(pos));
      break;
    }
    lines.push_back(asmText.substr(pos, nl - pos));
    pos = nl + 1;
  }

  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::string_view line = lines[n];
    std::vector<Token> tokens;
    try {
      tokens = tokenize(line);
    } catch (const AsmError&) {
      if (!skipping) kept.push_back({std::string(line), static_cast<int>(n + 1), {}, 0, true});
      continue;
    }
    std::vector<Token> labels;
    std::vector<Token> body;
    for (const auto& t : tokens) {
      if (t.kind == TokenKind::kComment) continue;
      if (t.kind == TokenKind::kLabelDef && body.empty()) labels.push_back(t);
      else body.push_back(t);
    }
    if (!body.empty() && body.front().kind == TokenKind::kDirective && isSectionSwitch(body.front().text)) {
      skipping = entersSkippedSection(body.front().text, std::vector<Token>(body.begin() + 1, body.end()));
      continue;
    }
    if (skipping) continue;
    bool dropBody = !body.empty() && body.front().kind == TokenKind::kDirective && isIgnoredDirective(body.front().text);
    if (dropBody && labels.empty()) continue;

    Kept k{std::string(line), static_cast<int>(n + 1), labels, 0, !body.empty() && !dropBody};
    if (dropBody) {
      const auto& last = labels.back();
      k.text = std::string(line.substr(0, last.offset + last.text.size()));
    }
    if (!labels.empty()) k.bodyOffset = labels.back().offset + labels.back().text.size();
    if (k.hasBody)
      for (const auto& t : body)
        if (t.kind == TokenKind::kSymbol) referenced.insert(t.text);
    kept.push_back(std::move(k));
  }

  FilteredAsm out;
  auto isLocal = [](const std::string& name) { return name.starts_with(".L"); };
  for (const auto& k : kept) {
    if (k.labels.empty()) {
      out.text += k.text + "\n";
      out.originalLines.push_back(k.line);
      continue;
    }
    std::string rebuilt;
    std::size_t cursor = 0;
    bool anyLabel = false;
    for (const auto& l : k.labels) {
      const std::string name = labelName(l);
      const bool keep = !isLocal(name) || referenced.contains(name);
      if (keep) {
        rebuilt += k.text.substr(cursor, l.offset + l.text.size() - cursor);
        anyLabel = true;
      }
      cursor = l.offset + l.text.size();
    }
    std::string rest = k.text.substr(std::min(cursor, k.text.size()));
    if (!anyLabel) {
      const auto first = rest.find_first_not_of(" \t");
      if (first == std::string::npos) continue;
      if (rest[first] == '#' && !k.hasBody) continue;
      rest = "\t" + rest.substr(first);
    }
    out.text += rebuilt + rest + "\n";
    out.originalLines.push_back(k.line);
  }
  if (!asmText.empty() && asmText.back() != '\n' && !out.text.empty()) out.text.pop_back();
  return out;
}

std::string filterCompilerOutput(std::string_view asmText) { return filterCompilerOutputWithLines(asmText).text; }

void to_json(nlohmann::json& j, const AsmProgram& p) {
  j = nlohmann::json::object();
  auto& instrs = j["instructions"] = nlohmann::json::array();
  for (const auto& i : p.instructions)
    instrs.push_back({{"address", i.address},
                      {"mnemonic", i.def->name},
                      {"operands", i.operands},
                      {"text", renderInstruction(i)},
                      {"source", i.sourceText},
                      {"line", i.line}});
  auto& labels = j["labels"] = nlohmann::json::object();
  for (const auto& [name, s] : p.labels)
    labels[name] = {{"segment", s.segment == Segment::kCode ? "code" : "data"}, {"address", s.address}, {"size", s.size}};
  j["stack"] = {{"bottom", p.layout.stackBottom}, {"top", p.layout.stackTop}};
  j["data"] = {{"start", p.layout.dataStart}, {"end", p.layout.dataEnd}};
  j["entryPoint"] = p.entryPoint;
}

}  // namespace rvsim
