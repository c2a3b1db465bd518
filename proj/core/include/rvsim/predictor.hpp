#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "rvsim/config.hpp"

namespace rvsim {

struct Prediction {
  bool taken = false;      // counter direction
  bool btbHit = false;
  std::uint32_t target = 0;  // BTB target when taken and hit, else pc + 4
  bool operator==(const Prediction&) const = default;
};

struct BtbEntry {
  bool valid = false;
  std::uint32_t tag = 0;
  std::uint32_t target = 0;
  bool operator==(const BtbEntry&) const = default;
};

/// Direct-mapped BTB plus a pattern history table of saturating counters
/// indexed by (pc/4 xor history) mod phtSize. History is one global shift
/// register or one register per PHT slot.
class BranchPredictor {
 public:
  explicit BranchPredictor(const PredictorConfig& config = {});

  [[nodiscard]] Prediction predict(std::uint32_t pc) const;
  /// BTB-only prediction for indirect jumps.
  [[nodiscard]] Prediction predictTarget(std::uint32_t pc) const;

  /// Conditional branch outcome, in commit order.
  void update(std::uint32_t pc, bool taken, std::uint32_t actualTarget);
  /// Indirect jump target; counters and history are untouched.
  void updateTarget(std::uint32_t pc, std::uint32_t target);

  [[nodiscard]] std::uint32_t phtIndex(std::uint32_t pc) const;
  [[nodiscard]] const std::vector<int>& counters() const { return counters_; }
  [[nodiscard]] std::uint32_t globalHistory() const { return globalHistory_; }
  [[nodiscard]] const std::vector<std::uint32_t>& localHistories() const { return localHistories_; }
  [[nodiscard]] const std::vector<BtbEntry>& btb() const { return btb_; }
  [[nodiscard]] const PredictorConfig& config() const { return config_; }
  [[nodiscard]] int maxCounter() const;

  [[nodiscard]] BranchPredictor snapshot() const { return *this; }
  void restore(const BranchPredictor& snapshot) { *this = snapshot; }

  bool operator==(const BranchPredictor&) const = default;

  friend void to_json(nlohmann::json& j, const BranchPredictor& p);
  /// Restores tables into a predictor built from the same configuration.
  void restore(const nlohmann::json& j);

 private:
  [[nodiscard]] bool counterTaken(int counter) const;

  PredictorConfig config_;
  std::uint32_t historyMask_ = 0;
  std::vector<int> counters_;
  std::uint32_t globalHistory_ = 0;
  std::vector<std::uint32_t> localHistories_;
  std::vector<BtbEntry> btb_;
};

}  // namespace rvsim
