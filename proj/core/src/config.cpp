#include "rvsim/config.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace rvsim {

namespace {

template <typename Enum, std::size_t N>
std::optional<Enum> lookup(const std::pair<std::string_view, Enum> (&table)[N], std::string_view name) {
  for (const auto& [text, value] : table)
    if (text == name) return value;
  return std::nullopt;
}

template <typename Enum, std::size_t N>
std::string_view nameOf(const std::pair<std::string_view, Enum> (&table)[N], Enum value) {
  for (const auto& [text, v] : table)
    if (v == value) return text;
  return "?";
}

constexpr std::pair<std::string_view, ReplacementPolicy> kReplacement[] = {
    {"LRU", ReplacementPolicy::kLRU}, {"FIFO", ReplacementPolicy::kFIFO}, {"Random", ReplacementPolicy::kRandom}};
constexpr std::pair<std::string_view, WritePolicy> kWritePolicy[] = {
    {"write-back", WritePolicy::kWriteBack}, {"write-through", WritePolicy::kWriteThrough}};
constexpr std::pair<std::string_view, PredictorType> kPredictorType[] = {
    {"zero-bit", PredictorType::kZeroBit}, {"one-bit", PredictorType::kOneBit}, {"two-bit", PredictorType::kTwoBit}};
constexpr std::pair<std::string_view, HistoryKind> kHistory[] = {{"local", HistoryKind::kLocal},
                                                                 {"global", HistoryKind::kGlobal}};

// Walks one JSON object, collecting schema issues instead of throwing so a
// single parse reports every problem.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string path, std::vector<ConfigIssue>& issues)
      : j_(j), path_(std::move(path)), issues_(issues) {
    if (!j_.is_object()) issue(path_, "expected an object");
  }

  ~ObjectReader() {
    if (!j_.is_object()) return;
    for (const auto& [key, _] : j_.items())
      if (!seen_.contains(key)) issue(join(key), "unknown field");
  }

  ObjectReader(const ObjectReader&) = delete;
  ObjectReader& operator=(const ObjectReader&) = delete;

  const nlohmann::json* field(const std::string& key, bool required = true) {
    seen_.insert(key);
    if (!j_.is_object()) return nullptr;
    auto it = j_.find(key);
    if (it == j_.end()) {
      if (required) issue(join(key), "missing required field");
      return nullptr;
    }
    return &*it;
  }

  template <typename T>
  void unsignedField(const std::string& key, T& out, bool required = true) {
    const auto* v = field(key, required);
    if (v == nullptr) return;
    if (!v->is_number_unsigned()) {
      issue(join(key), "expected a non-negative integer");
      return;
    }
    const auto raw = v->get<std::uint64_t>();
    if (raw > std::numeric_limits<T>::max()) {
      issue(join(key), "value too large");
      return;
    }
    out = static_cast<T>(raw);
  }

  void intField(const std::string& key, int& out) {
    const auto* v = field(key);
    if (v == nullptr) return;
    if (!v->is_number_integer()) {
      issue(join(key), "expected an integer");
      return;
    }
    out = v->get<int>();
  }

  void numberField(const std::string& key, double& out) {
    const auto* v = field(key);
    if (v == nullptr) return;
    if (!v->is_number()) {
      issue(join(key), "expected a number");
      return;
    }
    out = v->get<double>();
  }

  void boolField(const std::string& key, bool& out) {
    const auto* v = field(key);
    if (v == nullptr) return;
    if (!v->is_boolean()) {
      issue(join(key), "expected a boolean");
      return;
    }
    out = v->get<bool>();
  }

  void stringField(const std::string& key, std::string& out, bool required = true) {
    const auto* v = field(key, required);
    if (v == nullptr) return;
    if (!v->is_string()) {
      issue(join(key), "expected a string");
      return;
    }
    out = v->get<std::string>();
  }

  template <typename Enum, std::size_t N>
  void enumField(const std::string& key, Enum& out, const std::pair<std::string_view, Enum> (&table)[N]) {
    std::string text;
    const auto* v = field(key);
    if (v == nullptr) return;
    if (!v->is_string()) {
      issue(join(key), "expected a string");
      return;
    }
    text = v->get<std::string>();
    if (auto e = lookup(table, text)) {
      out = *e;
      return;
    }
    std::string allowed;
    for (const auto& [name, _] : table) allowed += (allowed.empty() ? "" : ", ") + std::string(name);
    issue(join(key), "unknown value '" + text + "' (expected one of " + allowed + ")");
  }

  [[nodiscard]] std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  void issue(std::string field, std::string message) { issues_.push_back({std::move(field), std::move(message)}); }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::vector<ConfigIssue>& issues_;
  std::set<std::string> seen_;
};

bool isPowerOfTwo(std::uint32_t v) { return v != 0 && (v & (v - 1)) == 0; }

}  // namespace

std::string_view toString(ReplacementPolicy p) { return nameOf(kReplacement, p); }
std::string_view toString(WritePolicy p) { return nameOf(kWritePolicy, p); }
std::string_view toString(PredictorType t) { return nameOf(kPredictorType, t); }
std::string_view toString(HistoryKind h) { return nameOf(kHistory, h); }

bool FunctionalUnitConfig::supports(const InstructionDefinition& def) const {
  if (def.fuClass != fuClass) return false;
  return supportedOps.empty() || std::find(supportedOps.begin(), supportedOps.end(), def.name) != supportedOps.end();
}

std::uint32_t FunctionalUnitConfig::latencyFor(std::string_view mnemonic) const {
  auto it = latencyTable.find(std::string(mnemonic));
  return it == latencyTable.end() ? latency : it->second;
}

std::uint32_t CpuConfig::toCoreCycles(std::uint32_t memoryCycles) const {
  if (memHz <= 0) return memoryCycles;
  const double scaled = static_cast<double>(memoryCycles) * coreHz / memHz;
  return static_cast<std::uint32_t>(std::ceil(scaled - 1e-9));
}

void to_json(nlohmann::json& j, const ConfigIssue& issue) {
  j = nlohmann::json{{"field", issue.field}, {"message", issue.message}};
}

ConfigError::ConfigError(std::vector<ConfigIssue> issues)
    : std::runtime_error(issues.empty() ? std::string("invalid configuration")
                                        : "invalid configuration: " + issues.front().field + ": " + issues.front().message),
      issues_(std::move(issues)) {}

CpuConfig defaultConfig() {
  CpuConfig c;
  FunctionalUnitConfig fx;
  fx.fuClass = FuClass::kFX;
  fx.latency = 1;
  for (const char* m : {"mul", "mulh", "mulhsu", "mulhu"}) fx.latencyTable[m] = 3;
  for (const char* m : {"div", "divu", "rem", "remu"}) fx.latencyTable[m] = 10;
  fx.name = "FX0";
  c.fuList.push_back(fx);
  fx.name = "FX1";
  c.fuList.push_back(fx);
  c.fuList.push_back({FuClass::kBranch, "Branch0", 1, {}, {}});
  c.fuList.push_back({FuClass::kLS, "LS0", 1, {}, {}});
  return c;
}

std::vector<ConfigIssue> validate(const CpuConfig& c, const IsaDefinitions& isa) {
  std::vector<ConfigIssue> issues;
  auto atLeast = [&](const std::string& field, std::uint64_t value, std::uint64_t min) {
    if (value < min) issues.push_back({field, "must be at least " + std::to_string(min)});
  };
  if (!(c.coreHz > 0) || !std::isfinite(c.coreHz)) issues.push_back({"coreHz", "must be positive"});
  if (!(c.memHz > 0) || !std::isfinite(c.memHz)) issues.push_back({"memHz", "must be positive"});
  atLeast("robSize", c.robSize, 1);
  atLeast("fetchWidth", c.fetchWidth, 1);
  atLeast("commitWidth", c.commitWidth, 1);
  atLeast("jumpsPerCycle", c.jumpsPerCycle, 1);
  atLeast("loadBufferSize", c.loadBufferSize, 1);
  atLeast("storeBufferSize", c.storeBufferSize, 1);
  atLeast("callStackSize", c.callStackSize, 1);
  atLeast("renameFileSize", c.renameFileSize, 1);
  atLeast("memoryCapacity", c.memoryCapacity, 1);
  if (c.memoryCapacity > (1U << 28)) issues.push_back({"memoryCapacity", "must not exceed 268435456 bytes"});
  if (c.callStackSize > c.memoryCapacity) issues.push_back({"callStackSize", "exceeds memoryCapacity"});

  if (c.cache.enabled) {
    atLeast("cache.lineCount", c.cache.lineCount, 1);
    atLeast("cache.associativity", c.cache.associativity, 1);
    if (!isPowerOfTwo(c.cache.lineSize)) issues.push_back({"cache.lineSize", "must be a power of two"});
    if (c.cache.associativity != 0 && c.cache.lineCount % c.cache.associativity != 0)
      issues.push_back({"cache.lineCount", "must be divisible by cache.associativity"});
  }

  atLeast("predictor.btbSize", c.predictor.btbSize, 1);
  atLeast("predictor.phtSize", c.predictor.phtSize, 1);
  const int maxState = c.predictor.predictorType == PredictorType::kTwoBit ? 3 : 1;
  if (c.predictor.defaultState < 0 || c.predictor.defaultState > maxState)
    issues.push_back({"predictor.defaultState", "must be within 0.." + std::to_string(maxState)});

  bool hasFx = false, hasLs = false, hasBranch = false;
  for (std::size_t i = 0; i < c.fuList.size(); ++i) {
    const auto& fu = c.fuList[i];
    const std::string path = "fuList[" + std::to_string(i) + "]";
    hasFx |= fu.fuClass == FuClass::kFX;
    hasLs |= fu.fuClass == FuClass::kLS;
    hasBranch |= fu.fuClass == FuClass::kBranch;
    atLeast(path + ".latency", fu.latency, 1);
    for (const auto& [mnemonic, latency] : fu.latencyTable) {
      if (isa.find(mnemonic) == nullptr) issues.push_back({path + ".latencyTable." + mnemonic, "unknown mnemonic"});
      atLeast(path + ".latencyTable." + mnemonic, latency, 1);
    }
    for (const auto& op : fu.supportedOps)
      if (isa.find(op) == nullptr) issues.push_back({path + ".supportedOps", "unknown mnemonic '" + op + "'"});
  }
  if (!hasFx) issues.push_back({"fuList", "needs at least one FX unit"});
  if (!hasLs) issues.push_back({"fuList", "needs at least one LS unit"});
  if (!hasBranch) issues.push_back({"fuList", "needs at least one Branch unit"});
  return issues;
}

CpuConfig configFromJson(const nlohmann::json& j) {
  CpuConfig c;
  c.fuList.clear();
  std::vector<ConfigIssue> issues;
  {
    ObjectReader r(j, "", issues);
    r.stringField("name", c.name, false);
    r.numberField("coreHz", c.coreHz);
    r.numberField("memHz", c.memHz);
    r.unsignedField("robSize", c.robSize);
    r.unsignedField("fetchWidth", c.fetchWidth);
    r.unsignedField("commitWidth", c.commitWidth);
    r.unsignedField("flushPenalty", c.flushPenalty);
    r.unsignedField("jumpsPerCycle", c.jumpsPerCycle);
    r.unsignedField("loadBufferSize", c.loadBufferSize);
    r.unsignedField("storeBufferSize", c.storeBufferSize);
    r.unsignedField("loadLatency", c.loadLatency);
    r.unsignedField("storeLatency", c.storeLatency);
    r.unsignedField("callStackSize", c.callStackSize);
    r.unsignedField("renameFileSize", c.renameFileSize);
    r.unsignedField("memoryCapacity", c.memoryCapacity);
    r.unsignedField("prngSeed", c.prngSeed);

    if (const auto* cache = r.field("cache")) {
      ObjectReader cr(*cache, "cache", issues);
      cr.boolField("enabled", c.cache.enabled);
      cr.unsignedField("lineCount", c.cache.lineCount);
      cr.unsignedField("lineSize", c.cache.lineSize);
      cr.unsignedField("associativity", c.cache.associativity);
      cr.enumField("replacement", c.cache.replacement, kReplacement);
      cr.enumField("writePolicy", c.cache.writePolicy, kWritePolicy);
      cr.unsignedField("accessDelay", c.cache.accessDelay);
      cr.unsignedField("lineReplacementDelay", c.cache.lineReplacementDelay);
    }
    if (const auto* pred = r.field("predictor")) {
      ObjectReader pr(*pred, "predictor", issues);
      pr.unsignedField("btbSize", c.predictor.btbSize);
      pr.unsignedField("phtSize", c.predictor.phtSize);
      pr.enumField("predictorType", c.predictor.predictorType, kPredictorType);
      pr.intField("defaultState", c.predictor.defaultState);
      pr.enumField("history", c.predictor.history, kHistory);
    }
    if (const auto* fus = r.field("fuList")) {
      if (!fus->is_array()) {
        issues.push_back({"fuList", "expected an array"});
      } else {
        for (std::size_t i = 0; i < fus->size(); ++i) {
          const std::string path = "fuList[" + std::to_string(i) + "]";
          FunctionalUnitConfig fu;
          ObjectReader fr((*fus)[i], path, issues);
          const auto* cls = fr.field("class");
          if (cls != nullptr) {
            auto parsed = cls->is_string() ? fuClassFromString(cls->get<std::string>()) : std::nullopt;
            if (parsed) fu.fuClass = *parsed;
            else issues.push_back({path + ".class", "expected one of FX, FP, LS, Branch"});
          }
          fr.stringField("name", fu.name, false);
          if (fu.name.empty()) fu.name = std::string(toString(fu.fuClass)) + std::to_string(i);
          fr.unsignedField("latency", fu.latency);
          if (const auto* table = fr.field("latencyTable", false)) {
            if (!table->is_object()) {
              issues.push_back({path + ".latencyTable", "expected an object"});
            } else {
              for (const auto& [mnemonic, value] : table->items()) {
                if (!value.is_number_unsigned()) {
                  issues.push_back({path + ".latencyTable." + mnemonic, "expected a non-negative integer"});
                  continue;
                }
                fu.latencyTable[mnemonic] = value.get<std::uint32_t>();
              }
            }
          }
          if (const auto* ops = fr.field("supportedOps", false)) {
            if (!ops->is_array() || !std::all_of(ops->begin(), ops->end(), [](const auto& o) { return o.is_string(); }))
              issues.push_back({path + ".supportedOps", "expected an array of mnemonics"});
            else
              fu.supportedOps = ops->get<std::vector<std::string>>();
          }
          c.fuList.push_back(std::move(fu));
        }
      }
    }
  }
  if (!issues.empty()) throw ConfigError(std::move(issues));
  return c;
}

CpuConfig parseConfig(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError({{"", std::string("malformed JSON at byte ") + std::to_string(e.byte) + ": " + e.what()}});
  }
  return configFromJson(j);
}

nlohmann::json configToJson(const CpuConfig& c) {
  nlohmann::json fus = nlohmann::json::array();
  for (const auto& fu : c.fuList) {
    nlohmann::json f{{"class", std::string(toString(fu.fuClass))}, {"name", fu.name}, {"latency", fu.latency}};
    if (!fu.latencyTable.empty()) f["latencyTable"] = fu.latencyTable;
    if (!fu.supportedOps.empty()) f["supportedOps"] = fu.supportedOps;
    fus.push_back(std::move(f));
  }
  return nlohmann::json{
      {"name", c.name},
      {"coreHz", c.coreHz},
      {"memHz", c.memHz},
      {"robSize", c.robSize},
      {"fetchWidth", c.fetchWidth},
      {"commitWidth", c.commitWidth},
      {"flushPenalty", c.flushPenalty},
      {"jumpsPerCycle", c.jumpsPerCycle},
      {"fuList", fus},
      {"cache",
       {{"enabled", c.cache.enabled},
        {"lineCount", c.cache.lineCount},
        {"lineSize", c.cache.lineSize},
        {"associativity", c.cache.associativity},
        {"replacement", std::string(toString(c.cache.replacement))},
        {"writePolicy", std::string(toString(c.cache.writePolicy))},
        {"accessDelay", c.cache.accessDelay},
        {"lineReplacementDelay", c.cache.lineReplacementDelay}}},
      {"loadBufferSize", c.loadBufferSize},
      {"storeBufferSize", c.storeBufferSize},
      {"loadLatency", c.loadLatency},
      {"storeLatency", c.storeLatency},
      {"callStackSize", c.callStackSize},
      {"renameFileSize", c.renameFileSize},
      {"predictor",
       {{"btbSize", c.predictor.btbSize},
        {"phtSize", c.predictor.phtSize},
        {"predictorType", std::string(toString(c.predictor.predictorType))},
        {"defaultState", c.predictor.defaultState},
        {"history", std::string(toString(c.predictor.history))}}},
      {"memoryCapacity", c.memoryCapacity},
      {"prngSeed", c.prngSeed},
  };
}

nlohmann::json configSchema() {
  const nlohmann::json uint{{"type", "integer"}, {"minimum", 0}};
  const nlohmann::json positive{{"type", "number"}, {"exclusiveMinimum", 0}};
  auto closed = [](nlohmann::json properties, std::vector<std::string> required) {
    return nlohmann::json{{"type", "object"},
                          {"properties", std::move(properties)},
                          {"required", std::move(required)},
                          {"additionalProperties", false}};
  };
  const auto fu = closed({{"class", {{"enum", {"FX", "FP", "LS", "Branch"}}}},
                          {"name", {{"type", "string"}}},
                          {"latency", uint},
                          {"latencyTable", {{"type", "object"}, {"additionalProperties", uint}}},
                          {"supportedOps", {{"type", "array"}, {"items", {{"type", "string"}}}}}},
                         {"class", "latency"});
  const auto cache = closed({{"enabled", {{"type", "boolean"}}},
                             {"lineCount", uint},
                             {"lineSize", uint},
                             {"associativity", uint},
                             {"replacement", {{"enum", {"LRU", "FIFO", "Random"}}}},
                             {"writePolicy", {{"enum", {"write-back", "write-through"}}}},
                             {"accessDelay", uint},
                             {"lineReplacementDelay", uint}},
                            {"enabled", "lineCount", "lineSize", "associativity", "replacement", "writePolicy",
                             "accessDelay", "lineReplacementDelay"});
  const auto predictor = closed({{"btbSize", uint},
                                 {"phtSize", uint},
                                 {"predictorType", {{"enum", {"zero-bit", "one-bit", "two-bit"}}}},
                                 {"defaultState", {{"type", "integer"}}},
                                 {"history", {{"enum", {"local", "global"}}}}},
                                {"btbSize", "phtSize", "predictorType", "defaultState", "history"});
  return closed({{"name", {{"type", "string"}}},
                 {"coreHz", positive},
                 {"memHz", positive},
                 {"robSize", uint},
                 {"fetchWidth", uint},
                 {"commitWidth", uint},
                 {"flushPenalty", uint},
                 {"jumpsPerCycle", uint},
                 {"fuList", {{"type", "array"}, {"items", fu}}},
                 {"cache", cache},
                 {"loadBufferSize", uint},
                 {"storeBufferSize", uint},
                 {"loadLatency", uint},
                 {"storeLatency", uint},
                 {"callStackSize", uint},
                 {"renameFileSize", uint},
                 {"predictor", predictor},
                 {"memoryCapacity", uint},
                 {"prngSeed", uint}},
                {"coreHz", "memHz", "robSize", "fetchWidth", "commitWidth", "flushPenalty", "jumpsPerCycle", "fuList",
                 "cache", "loadBufferSize", "storeBufferSize", "loadLatency", "storeLatency", "callStackSize",
                 "renameFileSize", "predictor", "memoryCapacity", "prngSeed"});
}

}  // namespace rvsim
