// External C compiler invocation and .loc based line mapping.

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include "rvsim/service.hpp"

namespace rvsim::service {

namespace fs = std::filesystem;

namespace {

std::string readFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string shellQuote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  return out + "'";
}

std::string substitute(std::string text, const std::string& key, const std::string& value) {
  for (std::size_t pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size()))
    text.replace(pos, key.size(), value);
  return text;
}

struct ProcessResult {
  bool timedOut = false;
  int exitCode = -1;
};

ProcessResult runShell(const std::string& command, const fs::path& logFile, std::chrono::milliseconds timeout) {
  const pid_t pid = fork();
  if (pid < 0) return {};
  if (pid == 0) {
    setpgid(0, 0);
    const int fd = open(logFile.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd >= 0) {
      dup2(fd, STDOUT_FILENO);
      dup2(fd, STDERR_FILENO);
      close(fd);
    }
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  int status = 0;
  for (;;) {
    const pid_t r = waitpid(pid, &status, WNOHANG);
    if (r == pid) break;
    if (std::chrono::steady_clock::now() >= deadline) {
      kill(-pid, SIGKILL);
      waitpid(pid, &status, 0);
      return {true, -1};
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  return {false, WIFEXITED(status) ? WEXITSTATUS(status) : -1};
}

std::vector<Diagnostic> parseDiagnostics(const std::string& text, const std::string& inputName) {
  static const std::regex pattern(R"(^(.*):(\d+):(\d+):\s*(?:fatal\s+)?error:\s*(.*)$)");
  std::vector<Diagnostic> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::smatch m;
    if (!std::regex_match(line, m, pattern)) continue;
    if (!m[1].str().ends_with(inputName)) continue;
    out.push_back({std::stoi(m[2]), std::stoi(m[3]), m[4]});
  }
  return out;
}

bool isInstructionLine(std::string_view line) {
  std::vector<Token> tokens;
  try {
    tokens = tokenize(line);
  } catch (const AsmError&) {
    return false;
  }
  for (const auto& t : tokens) {
    if (t.kind == TokenKind::kLabelDef || t.kind == TokenKind::kComment) continue;
    return t.kind == TokenKind::kSymbol;
  }
  return false;
}

}  // namespace

CompilerOptions compilerOptionsFromEnv() {
  CompilerOptions options;
  const char* env = std::getenv("RVSIM_COMPILER");
  options.commandTemplate = env != nullptr && *env != '\0' ? env : std::string(kDefaultCompilerTemplate);
  return options;
}

std::vector<LineMapping> extractLineMapping(std::string_view rawAsm, const FilteredAsm& filtered) {
  static const std::regex fileDirective(R"(^\s*\.file\s+(\d+)\s+(.*)$)");
  static const std::regex locDirective(R"(^\s*\.loc\s+(\d+)\s+(\d+))");

  std::vector<std::string> raw;
  {
    std::istringstream in{std::string(rawAsm)};
    std::string line;
    while (std::getline(in, line)) raw.push_back(line);
  }
  // Only markers for the translation unit itself; headers would misattribute.
  std::set<int> mainFiles;
  for (const auto& line : raw) {
    std::smatch m;
    if (std::regex_match(line, m, fileDirective) && m[2].str().find(".h\"") == std::string::npos)
      mainFiles.insert(std::stoi(m[1]));
  }
  std::vector<int> active(raw.size(), 0);
  int current = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    std::smatch m;
    if (std::regex_search(raw[i], m, locDirective)) {
      const int file = std::stoi(m[1]);
      current = mainFiles.empty() || mainFiles.contains(file) ? std::stoi(m[2]) : 0;
    }
    active[i] = current;
  }

  std::map<int, std::vector<int>> grouped;
  std::istringstream out(filtered.text);
  std::string line;
  for (std::size_t k = 0; std::getline(out, line) && k < filtered.originalLines.size(); ++k) {
    const int original = filtered.originalLines[k];
    if (original < 1 || static_cast<std::size_t>(original) > active.size()) continue;
    const int cLine = active[original - 1];
    if (cLine > 0 && isInstructionLine(line)) grouped[cLine].push_back(static_cast<int>(k + 1));
  }
  std::vector<LineMapping> mapping;
  for (auto& [cLine, lines] : grouped) mapping.push_back({cLine, std::move(lines)});
  return mapping;
}

CompileResult compileC(std::string_view cCode, int level, const CompilerOptions& options) {
  std::string dirTemplate = (fs::temp_directory_path() / "rvsim-cc-XXXXXX").string();
  if (mkdtemp(dirTemplate.data()) == nullptr) return {CompileResult::Status::kUnavailable, {}, {}, {}};
  const fs::path dir = dirTemplate;
  const fs::path input = dir / "input.c";
  const fs::path output = dir / "output.s";
  const fs::path log = dir / "compiler.log";
  {
    std::ofstream f(input, std::ios::binary);
    f << cCode;
  }

  std::string command = options.commandTemplate;
  command = substitute(command, "{input}", shellQuote(input.string()));
  command = substitute(command, "{output}", shellQuote(output.string()));
  command = substitute(command, "{level}", std::to_string(level));

  const auto run = runShell(command, log, options.timeout);
  CompileResult result;
  if (run.timedOut) {
    result.status = CompileResult::Status::kTimeout;
  } else if (run.exitCode == 126 || run.exitCode == 127) {
    result.status = CompileResult::Status::kUnavailable;
  } else if (run.exitCode != 0 || !fs::exists(output)) {
    result.status = CompileResult::Status::kErrors;
    const std::string diagnostics = readFile(log);
    result.errors = parseDiagnostics(diagnostics, "input.c");
    if (result.errors.empty())
      result.errors.push_back({0, 0, diagnostics.empty() ? "compiler failed" : diagnostics});
  } else {
    const std::string raw = readFile(output);
    const auto filtered = filterCompilerOutputWithLines(raw);
    result.assembly = filtered.text;
    result.mapping = extractLineMapping(raw, filtered);
  }
  std::error_code ignored;
  fs::remove_all(dir, ignored);
  return result;
}

}  // namespace rvsim::service
