#include "rvsim/memsys.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

namespace rvsim {

MemorySystem::MemorySystem(std::uint32_t capacity, const CacheConfig& cache, std::uint32_t loadLatency,
                           std::uint32_t storeLatency, std::uint64_t seed)
    : memory_(capacity, 0),
      cache_(cache),
      loadLatency_(loadLatency),
      storeLatency_(storeLatency),
      rng_(static_cast<std::minstd_rand::result_type>(seed % std::minstd_rand::modulus)) {
  if (cache_.enabled) {
    if (cache_.associativity == 0 || cache_.lineCount % cache_.associativity != 0 || cache_.lineSize == 0 ||
        (cache_.lineSize & (cache_.lineSize - 1)) != 0)
      throw MemoryError("invalid cache geometry");
    lines_.resize(cache_.lineCount);
    for (auto& l : lines_) l.data.assign(cache_.lineSize, 0);
  }
}

MemorySystem MemorySystem::fromConfig(const CpuConfig& config) {
  return MemorySystem(config.memoryCapacity, config.cache, config.toCoreCycles(config.loadLatency),
                      config.toCoreCycles(config.storeLatency), config.prngSeed);
}

MemoryTransaction MemorySystem::request(std::uint32_t address, std::uint32_t size, bool isStore,
                                        std::span<const std::uint8_t> storeData, std::uint64_t now,
                                        std::optional<std::uint64_t> owner) {
  MemoryTransaction tx;
  tx.id = nextTransactionId_++;
  tx.address = address;
  tx.size = size;
  tx.isStore = isStore;
  tx.requestCycle = now;
  tx.completionCycle = now;
  tx.owner = owner;
  const std::uint64_t end = std::uint64_t{address} + size;
  if (size == 0 || end > memory_.size() || (isStore && storeData.size() < size)) {
    tx.fault = true;
    return tx;
  }
  if (isStore) tx.data.assign(storeData.begin(), storeData.begin() + size);
  else tx.data.assign(size, 0);

  if (!cache_.enabled) {
    if (isStore) {
      std::copy(tx.data.begin(), tx.data.end(), memory_.begin() + address);
      tx.completionCycle = now + storeLatency_;
    } else {
      std::copy(memory_.begin() + address, memory_.begin() + static_cast<std::ptrdiff_t>(end), tx.data.begin());
      tx.completionCycle = now + loadLatency_;
    }
    return tx;
  }

  std::uint64_t cost = 0;
  std::uint32_t pos = address;
  while (pos < end) {
    const std::uint32_t lineAddress = pos & ~(cache_.lineSize - 1);
    const std::uint32_t chunk = static_cast<std::uint32_t>(std::min<std::uint64_t>(end, std::uint64_t{lineAddress} + cache_.lineSize) - pos);
    bool hit = false;
    cost += accessLine(lineAddress, pos - lineAddress, chunk, isStore, tx.data.data() + (pos - address),
                       tx.data.data() + (pos - address), hit);
    tx.lineAccesses.push_back({lineAddress, hit});
    pos += chunk;
  }
  tx.completionCycle = now + cost;
  return tx;
}

std::uint32_t MemorySystem::accessLine(std::uint32_t lineAddress, std::uint32_t offset, std::uint32_t size,
                                       bool isStore, const std::uint8_t* storeData, std::uint8_t* loadData,
                                       bool& hit) {
  const std::uint32_t sets = cache_.setCount();
  const std::uint32_t block = lineAddress / cache_.lineSize;
  const std::uint32_t set = block % sets;
  const std::uint32_t tag = block / sets;
  const bool writeBack = cache_.writePolicy == WritePolicy::kWriteBack;
  ++stamp_;

  for (std::uint32_t way = 0; way < cache_.associativity; ++way) {
    CacheLine& l = line(set, way);
    if (!l.valid || l.tag != tag) continue;
    hit = true;
    l.usedAt = stamp_;
    if (isStore) {
      std::copy(storeData, storeData + size, l.data.begin() + offset);
      if (writeBack) l.dirty = true;
      else std::copy(storeData, storeData + size, memory_.begin() + lineAddress + offset);
    } else {
      std::copy(l.data.begin() + offset, l.data.begin() + offset + size, loadData);
    }
    return cache_.accessDelay;
  }

  hit = false;
  if (isStore && !writeBack) {
    std::copy(storeData, storeData + size, memory_.begin() + lineAddress + offset);
    return cache_.accessDelay + storeLatency_;
  }

  const std::uint32_t way = chooseVictim(set, true);
  CacheLine& l = line(set, way);
  std::uint32_t cost = cache_.accessDelay + cache_.lineReplacementDelay + loadLatency_;
  if (l.valid && l.dirty) {
    const std::uint64_t victimAddress = (std::uint64_t{l.tag} * sets + set) * cache_.lineSize;
    const auto n = static_cast<std::size_t>(std::min<std::uint64_t>(cache_.lineSize, memory_.size() - victimAddress));
    std::copy_n(l.data.begin(), n, memory_.begin() + static_cast<std::ptrdiff_t>(victimAddress));
    cost += storeLatency_;
  }
  const auto n = static_cast<std::size_t>(std::min<std::uint64_t>(cache_.lineSize, memory_.size() - lineAddress));
  std::fill(l.data.begin(), l.data.end(), 0);
  std::copy_n(memory_.begin() + lineAddress, n, l.data.begin());
  l.tag = tag;
  l.valid = true;
  l.dirty = false;
  l.insertedAt = stamp_;
  l.usedAt = stamp_;
  if (isStore) {
    std::copy(storeData, storeData + size, l.data.begin() + offset);
    l.dirty = true;
  } else {
    std::copy(l.data.begin() + offset, l.data.begin() + offset + size, loadData);
  }
  return cost;
}

std::uint32_t MemorySystem::chooseVictim(std::uint32_t set, bool advanceRng) {
  for (std::uint32_t way = 0; way < cache_.associativity; ++way)
    if (!line(set, way).valid) return way;
  std::uint32_t best = 0;
  switch (cache_.replacement) {
    case ReplacementPolicy::kLRU:
      for (std::uint32_t way = 1; way < cache_.associativity; ++way)
        if (line(set, way).usedAt < line(set, best).usedAt) best = way;
      return best;
    case ReplacementPolicy::kFIFO:
      for (std::uint32_t way = 1; way < cache_.associativity; ++way)
        if (line(set, way).insertedAt < line(set, best).insertedAt) best = way;
      return best;
    case ReplacementPolicy::kRandom: {
      if (advanceRng) return static_cast<std::uint32_t>(rng_() % cache_.associativity);
      auto copy = rng_;
      return static_cast<std::uint32_t>(copy() % cache_.associativity);
    }
  }
  return best;
}

CacheLookup MemorySystem::cacheLookup(std::uint32_t address) const {
  CacheLookup out;
  if (!cache_.enabled) return out;
  const std::uint32_t sets = cache_.setCount();
  const std::uint32_t block = address / cache_.lineSize;
  out.set = block % sets;
  const std::uint32_t tag = block / sets;
  for (std::uint32_t way = 0; way < cache_.associativity; ++way) {
    if (line(out.set, way).valid && line(out.set, way).tag == tag) {
      out.hit = true;
      out.way = way;
      return out;
    }
  }
  out.way = const_cast<MemorySystem*>(this)->chooseVictim(out.set, false);
  if (line(out.set, out.way).valid) out.victim = line(out.set, out.way);
  return out;
}

std::vector<MemoryTransaction> MemorySystem::flushCache(std::uint64_t now) {
  std::vector<MemoryTransaction> out;
  const std::uint32_t sets = cache_.setCount();
  for (std::uint32_t set = 0; set < sets; ++set) {
    for (std::uint32_t way = 0; way < cache_.associativity; ++way) {
      CacheLine& l = line(set, way);
      if (l.valid && l.dirty) {
        const std::uint64_t address = (std::uint64_t{l.tag} * sets + set) * cache_.lineSize;
        const auto n = static_cast<std::size_t>(std::min<std::uint64_t>(cache_.lineSize, memory_.size() - address));
        std::copy_n(l.data.begin(), n, memory_.begin() + static_cast<std::ptrdiff_t>(address));
        MemoryTransaction tx;
        tx.id = nextTransactionId_++;
        tx.address = static_cast<std::uint32_t>(address);
        tx.size = cache_.lineSize;
        tx.isStore = true;
        tx.data = l.data;
        tx.requestCycle = now;
        tx.completionCycle = now + storeLatency_;
        tx.isCacheLineFlush = true;
        out.push_back(std::move(tx));
      }
      const auto id = l.data.size();
      l = CacheLine{};
      l.data.assign(id, 0);
    }
  }
  return out;
}

std::vector<std::uint8_t> MemorySystem::debugRead(std::uint32_t address, std::uint32_t size) const {
  const std::uint64_t end = std::uint64_t{address} + size;
  if (end > memory_.size()) throw MemoryError("debug read outside memory: " + std::to_string(address));
  std::vector<std::uint8_t> out(memory_.begin() + address, memory_.begin() + static_cast<std::ptrdiff_t>(end));
  if (!cache_.enabled) return out;
  const std::uint32_t sets = cache_.setCount();
  for (std::uint32_t set = 0; set < sets; ++set) {
    for (std::uint32_t way = 0; way < cache_.associativity; ++way) {
      const CacheLine& l = line(set, way);
      if (!l.valid) continue;
      const std::uint64_t base = (std::uint64_t{l.tag} * sets + set) * cache_.lineSize;
      const std::uint64_t lo = std::max<std::uint64_t>(base, address);
      const std::uint64_t hi = std::min<std::uint64_t>(base + cache_.lineSize, end);
      for (std::uint64_t a = lo; a < hi; ++a) out[a - address] = l.data[a - base];
    }
  }
  return out;
}

void MemorySystem::debugWrite(std::uint32_t address, std::span<const std::uint8_t> bytes) {
  const std::uint64_t end = std::uint64_t{address} + bytes.size();
  if (end > memory_.size()) throw MemoryError("debug write outside memory: " + std::to_string(address));
  std::copy(bytes.begin(), bytes.end(), memory_.begin() + address);
  if (!cache_.enabled) return;
  const std::uint32_t sets = cache_.setCount();
  for (std::uint32_t set = 0; set < sets; ++set) {
    for (std::uint32_t way = 0; way < cache_.associativity; ++way) {
      CacheLine& l = line(set, way);
      if (!l.valid) continue;
      const std::uint64_t base = (std::uint64_t{l.tag} * sets + set) * cache_.lineSize;
      const std::uint64_t lo = std::max<std::uint64_t>(base, address);
      const std::uint64_t hi = std::min<std::uint64_t>(base + cache_.lineSize, end);
      for (std::uint64_t a = lo; a < hi; ++a) l.data[a - base] = bytes[a - address];
    }
  }
}

std::vector<std::uint8_t> MemorySystem::snapshot() const { return debugRead(0, capacity()); }

bool MemorySystem::operator==(const MemorySystem& o) const {
  return memory_ == o.memory_ && cache_ == o.cache_ && loadLatency_ == o.loadLatency_ &&
         storeLatency_ == o.storeLatency_ && lines_ == o.lines_ && rng_ == o.rng_ && stamp_ == o.stamp_ &&
         nextTransactionId_ == o.nextTransactionId_;
}

void to_json(nlohmann::json& j, const MemorySystem& m) {
  std::ostringstream rng;
  rng << m.rng_;
  nlohmann::json lines = nlohmann::json::array();
  for (const auto& l : m.lines_)
    lines.push_back({{"tag", l.tag},
                     {"valid", l.valid},
                     {"dirty", l.dirty},
                     {"data", toHex(l.data)},
                     {"insertedAt", l.insertedAt},
                     {"usedAt", l.usedAt}});
  j = nlohmann::json{{"memory", toHex(m.memory_)},
                     {"lines", std::move(lines)},
                     {"rng", rng.str()},
                     {"stamp", m.stamp_},
                     {"nextTransactionId", m.nextTransactionId_}};
}

void MemorySystem::restore(const nlohmann::json& j) {
  auto memory = fromHex(j.at("memory").get<std::string>());
  if (memory.size() != memory_.size()) throw MemoryError("memory image size does not match capacity");
  memory_ = std::move(memory);
  const auto& lines = j.at("lines");
  if (lines.size() != lines_.size()) throw MemoryError("cache line count does not match configuration");
  for (std::size_t i = 0; i < lines_.size(); ++i) {
    auto& l = lines_[i];
    const auto& s = lines[i];
    l.tag = s.at("tag").get<std::uint32_t>();
    l.valid = s.at("valid").get<bool>();
    l.dirty = s.at("dirty").get<bool>();
    l.data = fromHex(s.at("data").get<std::string>());
    l.insertedAt = s.at("insertedAt").get<std::uint64_t>();
    l.usedAt = s.at("usedAt").get<std::uint64_t>();
  }
  std::istringstream rng(j.at("rng").get<std::string>());
  rng >> rng_;
  stamp_ = j.at("stamp").get<std::uint64_t>();
  nextTransactionId_ = j.at("nextTransactionId").get<std::uint64_t>();
}

void to_json(nlohmann::json& j, const MemoryTransaction& t) {
  nlohmann::json accesses = nlohmann::json::array();
  for (const auto& a : t.lineAccesses) accesses.push_back({{"line", a.lineAddress}, {"hit", a.hit}});
  j = nlohmann::json{{"id", t.id},
                     {"address", t.address},
                     {"size", t.size},
                     {"isStore", t.isStore},
                     {"data", toHex(t.data)},
                     {"requestCycle", t.requestCycle},
                     {"completionCycle", t.completionCycle},
                     {"isCacheLineFlush", t.isCacheLineFlush},
                     {"owner", t.owner ? nlohmann::json(*t.owner) : nlohmann::json(nullptr)},
                     {"fault", t.fault},
                     {"lineAccesses", std::move(accesses)}};
}

void from_json(const nlohmann::json& j, MemoryTransaction& t) {
  t.id = j.at("id").get<std::uint64_t>();
  t.address = j.at("address").get<std::uint32_t>();
  t.size = j.at("size").get<std::uint32_t>();
  t.isStore = j.at("isStore").get<bool>();
  t.data = fromHex(j.at("data").get<std::string>());
  t.requestCycle = j.at("requestCycle").get<std::uint64_t>();
  t.completionCycle = j.at("completionCycle").get<std::uint64_t>();
  t.isCacheLineFlush = j.at("isCacheLineFlush").get<bool>();
  t.owner = j.at("owner").is_null() ? std::nullopt : std::optional<std::uint64_t>(j.at("owner").get<std::uint64_t>());
  t.fault = j.at("fault").get<bool>();
  t.lineAccesses.clear();
  for (const auto& a : j.at("lineAccesses")) t.lineAccesses.push_back({a.at("line").get<std::uint32_t>(), a.at("hit").get<bool>()});
}

std::string exportCsv(std::span<const std::uint8_t> image) {
  std::string out;
  for (std::size_t i = 0; i < image.size(); ++i)
    if (image[i] != 0) out += std::to_string(i) + "," + std::to_string(image[i]) + "\n";
  return out;
}

std::vector<std::uint8_t> importCsv(std::string_view text, std::uint32_t capacity) {
  std::vector<std::uint8_t> image(capacity, 0);
  std::size_t row = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++row;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    const auto comma = line.find(',');
    auto fail = [&](const std::string& why) {
      throw MemoryError("CSV row " + std::to_string(row) + ": " + why + " ('" + std::string(line) + "')");
    };
    if (comma == std::string_view::npos) fail("expected address,byte");
    auto parse = [&](std::string_view field, const char* what) {
      while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
      while (!field.empty() && (field.back() == ' ' || field.back() == '\t')) field.remove_suffix(1);
      std::uint64_t value = 0;
      auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
      if (field.empty() || ec != std::errc{} || end != field.data() + field.size()) fail(std::string("malformed ") + what);
      return value;
    };
    const auto address = parse(line.substr(0, comma), "address");
    const auto value = parse(line.substr(comma + 1), "byte");
    if (address >= capacity) fail("address outside memory");
    if (value > 255) fail("byte value above 255");
    image[address] = static_cast<std::uint8_t>(value);
  }
  return image;
}

std::vector<std::uint8_t> importBinary(std::span<const std::uint8_t> payload, std::uint32_t capacity) {
  if (payload.size() > capacity)
    throw MemoryError("memory image of " + std::to_string(payload.size()) + " bytes exceeds capacity " +
                      std::to_string(capacity));
  std::vector<std::uint8_t> image(capacity, 0);
  std::copy(payload.begin(), payload.end(), image.begin());
  return image;
}

std::string toHex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out += kDigits[b >> 4];
    out += kDigits[b & 0xF];
  }
  return out;
}

std::vector<std::uint8_t> fromHex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw MemoryError("odd-length hex string");
  auto digit = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw MemoryError(std::string("bad hex digit '") + c + "'");
  };
  std::vector<std::uint8_t> out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<std::uint8_t>(digit(hex[2 * i]) << 4 | digit(hex[2 * i + 1]));
  return out;
}

}  // namespace rvsim
