#pragma once

#include <algorithm>
#include <cstdint>
#include <list>
#include <vector>

#include "rvsim/memsys.hpp"

namespace rvsim::testing {

// Brute-force cache model: per set, a list of block numbers ordered by the
// policy (front = next victim). Knows nothing of tags, stamps or ways.
class ModelCache {
 public:
  explicit ModelCache(const CacheConfig& c) : c_(c), sets_(c.lineCount / c.associativity) {}

  bool access(std::uint32_t lineAddress, bool isStore) {
    const std::uint32_t block = lineAddress / c_.lineSize;
    auto& s = sets_[block % sets_.size()];
    auto it = std::find(s.begin(), s.end(), block);
    if (it != s.end()) {
      if (c_.replacement == ReplacementPolicy::kLRU) {
        s.erase(it);
        s.push_back(block);
      }
      return true;
    }
    if (isStore && c_.writePolicy == WritePolicy::kWriteThrough) return false;
    if (s.size() == c_.associativity) s.pop_front();
    s.push_back(block);
    return false;
  }

 private:
  CacheConfig c_;
  std::vector<std::list<std::uint32_t>> sets_;
};

}  // namespace rvsim::testing
