#include "rvsim/registers.hpp"

#include <algorithm>
#include <array>
#include <stdexcept>

namespace rvsim {

namespace {

constexpr std::array<std::string_view, kArchRegisterCount> kAbiNames{
    "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "s0", "s1", "a0",  "a1",  "a2", "a3", "a4", "a5",
    "a6",   "a7", "s2", "s3", "s4", "s5", "s6", "s7", "s8", "s9", "s10", "s11", "t3", "t4", "t5", "t6",
};

}  // namespace

std::optional<int> parseRegisterName(std::string_view name) {
  if (name.size() >= 2 && name.size() <= 3 && name.front() == 'x') {
    int value = 0;
    for (char c : name.substr(1)) {
      if (c < '0' || c > '9') return std::nullopt;
      value = value * 10 + (c - '0');
    }
    if (name.size() == 3 && name[1] == '0') return std::nullopt;
    if (value < kArchRegisterCount) return value;
    return std::nullopt;
  }
  if (name == "fp") return 8;
  for (int i = 0; i < kArchRegisterCount; ++i)
    if (kAbiNames[static_cast<std::size_t>(i)] == name) return i;
  return std::nullopt;
}

std::string registerName(int index) { return "x" + std::to_string(index); }

std::string_view abiName(int index) { return kAbiNames.at(static_cast<std::size_t>(index)); }

RegisterFile::RegisterFile(int renameFileSize)
    : arch_(kArchRegisterCount), spec_(static_cast<std::size_t>(std::max(renameFileSize, 0))), map_(kArchRegisterCount, -1) {
  for (int i = 0; i < kArchRegisterCount; ++i) {
    arch_[static_cast<std::size_t>(i)].name = registerName(i);
    arch_[static_cast<std::size_t>(i)].index = i;
  }
  for (std::size_t i = 0; i < spec_.size(); ++i) spec_[i].id = static_cast<int>(i);
}

void RegisterFile::setArch(int index, RegisterValue value) {
  if (index == 0) return;
  arch_.at(static_cast<std::size_t>(index)).value = value;
}

std::optional<int> RegisterFile::mapping(int arch) const {
  const int id = map_.at(static_cast<std::size_t>(arch));
  if (id < 0) return std::nullopt;
  return id;
}

std::optional<int> RegisterFile::allocate(int arch, std::uint64_t producer) {
  if (arch <= 0 || arch >= kArchRegisterCount) throw std::out_of_range("cannot rename x0 or an invalid register");
  auto it = std::find_if(spec_.begin(), spec_.end(), [](const SpeculativeRegister& r) { return !r.allocated; });
  if (it == spec_.end()) return std::nullopt;
  it->allocated = true;
  it->archTarget = arch;
  it->valid = false;
  it->value = RegisterValue{};
  it->refCount = 1;
  it->producer = producer;
  map_[static_cast<std::size_t>(arch)] = it->id;
  arch_[static_cast<std::size_t>(arch)].renamedCopies.push_back(it->id);
  return it->id;
}

void RegisterFile::addRef(int id) {
  auto& reg = spec_.at(static_cast<std::size_t>(id));
  if (!reg.allocated) throw std::logic_error("reference to a free speculative register");
  ++reg.refCount;
}

void RegisterFile::release(int id) {
  auto& reg = spec_.at(static_cast<std::size_t>(id));
  if (!reg.allocated || reg.refCount <= 0) throw std::logic_error("release of an unreferenced speculative register");
  if (--reg.refCount == 0) reclaim(id);
}

void RegisterFile::produce(int id, RegisterValue value) {
  auto& reg = spec_.at(static_cast<std::size_t>(id));
  reg.value = value;
  reg.valid = true;
}

void RegisterFile::commit(int id) {
  const auto& reg = spec_.at(static_cast<std::size_t>(id));
  setArch(reg.archTarget, reg.value);
  if (map_[static_cast<std::size_t>(reg.archTarget)] == id) map_[static_cast<std::size_t>(reg.archTarget)] = -1;
}

void RegisterFile::restoreMapping(int arch, std::optional<int> previous, std::uint64_t previousProducer) {
  int restored = -1;
  if (previous) {
    const auto& reg = spec_.at(static_cast<std::size_t>(*previous));
    if (reg.allocated && reg.producer == previousProducer && reg.archTarget == arch) restored = *previous;
  }
  map_.at(static_cast<std::size_t>(arch)) = restored;
}

int RegisterFile::freeCount() const {
  return static_cast<int>(std::count_if(spec_.begin(), spec_.end(), [](const auto& r) { return !r.allocated; }));
}

void RegisterFile::reclaim(int id) {
  auto& reg = spec_.at(static_cast<std::size_t>(id));
  auto& copies = arch_.at(static_cast<std::size_t>(reg.archTarget)).renamedCopies;
  copies.erase(std::remove(copies.begin(), copies.end(), id), copies.end());
  if (map_[static_cast<std::size_t>(reg.archTarget)] == id) map_[static_cast<std::size_t>(reg.archTarget)] = -1;
  reg = SpeculativeRegister{};
  reg.id = id;
}

void to_json(nlohmann::json& j, const RegisterValue& v) {
  j = nlohmann::json{{"raw", v.raw}, {"type", std::string(toString(v.typeTag))}};
}

void from_json(const nlohmann::json& j, RegisterValue& v) {
  v.raw = j.at("raw").get<std::uint64_t>();
  v.typeTag = dataTypeFromString(j.at("type").get<std::string>());
}

void to_json(nlohmann::json& j, const RegisterFile& rf) {
  j = nlohmann::json::object();
  auto& arch = j["arch"] = nlohmann::json::array();
  for (const auto& r : rf.arch_)
    arch.push_back({{"name", r.name}, {"abi", std::string(abiName(r.index))}, {"value", r.value}, {"renamedCopies", r.renamedCopies}});
  auto& spec = j["speculative"] = nlohmann::json::array();
  for (const auto& r : rf.spec_)
    spec.push_back({{"id", r.id},
                    {"archTarget", r.archTarget},
                    {"value", r.value},
                    {"valid", r.valid},
                    {"refCount", r.refCount},
                    {"allocated", r.allocated},
                    {"producer", r.producer}});
  j["renameMap"] = rf.map_;
}

void from_json(const nlohmann::json& j, RegisterFile& rf) {
  const auto& spec = j.at("speculative");
  rf = RegisterFile(static_cast<int>(spec.size()));
  const auto& arch = j.at("arch");
  for (std::size_t i = 0; i < rf.arch_.size(); ++i) {
    rf.arch_[i].value = arch.at(i).at("value").get<RegisterValue>();
    rf.arch_[i].renamedCopies = arch.at(i).at("renamedCopies").get<std::vector<int>>();
  }
  for (std::size_t i = 0; i < rf.spec_.size(); ++i) {
    const auto& s = spec.at(i);
    auto& r = rf.spec_[i];
    r.archTarget = s.at("archTarget").get<int>();
    r.value = s.at("value").get<RegisterValue>();
    r.valid = s.at("valid").get<bool>();
    r.refCount = s.at("refCount").get<int>();
    r.allocated = s.at("allocated").get<bool>();
    r.producer = s.at("producer").get<std::uint64_t>();
  }
  rf.map_ = j.at("renameMap").get<std::vector<int>>();
}

}  // namespace rvsim
