#pragma once

// Main memory (a flat byte array), the L1 cache and the transaction timing
// model. Data effects happen when a transaction is registered; the returned
// completion cycle tells the pipeline when the result may be used.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rvsim/config.hpp"

namespace rvsim {

class MemoryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LineAccess {
  std::uint32_t lineAddress = 0;
  bool hit = false;
  bool operator==(const LineAccess&) const = default;
};

struct MemoryTransaction {
  std::uint64_t id = 0;
  std::uint32_t address = 0;
  std::uint32_t size = 0;
  bool isStore = false;
  std::vector<std::uint8_t> data;
  std::uint64_t requestCycle = 0;
  std::uint64_t completionCycle = 0;
  bool isCacheLineFlush = false;
  std::optional<std::uint64_t> owner;
  bool fault = false;
  std::vector<LineAccess> lineAccesses;  // empty when the cache is bypassed

  bool operator==(const MemoryTransaction&) const = default;
};

void to_json(nlohmann::json& j, const MemoryTransaction& t);
void from_json(const nlohmann::json& j, MemoryTransaction& t);

struct CacheLine {
  std::uint32_t tag = 0;
  bool valid = false;
  bool dirty = false;
  std::vector<std::uint8_t> data;
  std::uint64_t insertedAt = 0;  // FIFO order
  std::uint64_t usedAt = 0;      // LRU order
  bool operator==(const CacheLine&) const = default;
};

struct CacheLookup {
  bool hit = false;
  std::uint32_t set = 0;
  std::uint32_t way = 0;              // hit way, or the way a miss would fill
  std::optional<CacheLine> victim;    // valid line a miss would evict
};

class MemorySystem {
 public:
  /// Latencies are in core cycles.
  MemorySystem(std::uint32_t capacity, const CacheConfig& cache, std::uint32_t loadLatency, std::uint32_t storeLatency,
               std::uint64_t seed);
  MemorySystem() : MemorySystem(0, CacheConfig{.enabled = false}, 0, 0, 0) {}
  static MemorySystem fromConfig(const CpuConfig& config);

  /// Registers a transaction at cycle `now`: performs the data movement and
  /// fills in the completion cycle. Out-of-range accesses come back with
  /// `fault` set and no effect.
  MemoryTransaction request(std::uint32_t address, std::uint32_t size, bool isStore,
                            std::span<const std::uint8_t> storeData, std::uint64_t now,
                            std::optional<std::uint64_t> owner = std::nullopt);

  /// Where `address` would land; does not change any state.
  [[nodiscard]] CacheLookup cacheLookup(std::uint32_t address) const;

  /// Writes back dirty lines and invalidates everything.
  std::vector<MemoryTransaction> flushCache(std::uint64_t now);

  /// Untimed access. Reads merge cached copies over main memory.
  [[nodiscard]] std::vector<std::uint8_t> debugRead(std::uint32_t address, std::uint32_t size) const;
  void debugWrite(std::uint32_t address, std::span<const std::uint8_t> bytes);
  /// Whole address space as seen by the program.
  [[nodiscard]] std::vector<std::uint8_t> snapshot() const;

  [[nodiscard]] std::uint32_t capacity() const { return static_cast<std::uint32_t>(memory_.size()); }
  [[nodiscard]] const std::vector<std::uint8_t>& mainMemory() const { return memory_; }
  [[nodiscard]] const CacheConfig& cacheConfig() const { return cache_; }
  [[nodiscard]] const std::vector<CacheLine>& lines() const { return lines_; }  // set-major
  [[nodiscard]] std::uint32_t loadLatency() const { return loadLatency_; }
  [[nodiscard]] std::uint32_t storeLatency() const { return storeLatency_; }

  bool operator==(const MemorySystem& o) const;

  friend void to_json(nlohmann::json& j, const MemorySystem& m);
  /// Restores dynamic state into a system built from the same configuration.
  void restore(const nlohmann::json& j);

 private:
  std::uint32_t accessLine(std::uint32_t lineAddress, std::uint32_t offset, std::uint32_t size, bool isStore,
                           const std::uint8_t* storeData, std::uint8_t* loadData, bool& hit);
  std::uint32_t chooseVictim(std::uint32_t set, bool advanceRng);
  CacheLine& line(std::uint32_t set, std::uint32_t way) { return lines_[set * cache_.associativity + way]; }
  [[nodiscard]] const CacheLine& line(std::uint32_t set, std::uint32_t way) const {
    return lines_[set * cache_.associativity + way];
  }

  std::vector<std::uint8_t> memory_;
  CacheConfig cache_;
  std::uint32_t loadLatency_;
  std::uint32_t storeLatency_;
  std::vector<CacheLine> lines_;
  std::minstd_rand rng_;
  std::uint64_t stamp_ = 0;
  std::uint64_t nextTransactionId_ = 1;
};

// Dump formats. CSV rows are "address,byte" in decimal, nonzero bytes only.
std::string exportCsv(std::span<const std::uint8_t> image);
std::vector<std::uint8_t> importCsv(std::string_view text, std::uint32_t capacity);
std::vector<std::uint8_t> importBinary(std::span<const std::uint8_t> payload, std::uint32_t capacity);

std::string toHex(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> fromHex(std::string_view hex);

}  // namespace rvsim
