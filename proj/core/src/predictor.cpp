#include "rvsim/predictor.hpp"

#include <algorithm>
#include <stdexcept>

namespace rvsim {

BranchPredictor::BranchPredictor(const PredictorConfig& config)
    : config_(config),
      counters_(std::max<std::uint32_t>(config.phtSize, 1), config.defaultState),
      localHistories_(config.history == HistoryKind::kLocal ? std::max<std::uint32_t>(config.phtSize, 1) : 0, 0),
      btb_(std::max<std::uint32_t>(config.btbSize, 1)) {
  int bits = 0;
  while ((std::uint64_t{1} << bits) < counters_.size()) ++bits;
  historyMask_ = static_cast<std::uint32_t>((std::uint64_t{1} << bits) - 1);
  if (config_.predictorType == PredictorType::kZeroBit) std::fill(counters_.begin(), counters_.end(), config.defaultState);
}

int BranchPredictor::maxCounter() const { return config_.predictorType == PredictorType::kTwoBit ? 3 : 1; }

bool BranchPredictor::counterTaken(int counter) const {
  switch (config_.predictorType) {
    case PredictorType::kZeroBit: return config_.defaultState != 0;
    case PredictorType::kOneBit: return counter != 0;
    case PredictorType::kTwoBit: return counter >= 2;
  }
  return false;
}

std::uint32_t BranchPredictor::phtIndex(std::uint32_t pc) const {
  const std::uint32_t word = pc / 4;
  const auto size = static_cast<std::uint32_t>(counters_.size());
  const std::uint32_t history =
      config_.history == HistoryKind::kGlobal ? globalHistory_ : localHistories_[word % size];
  return (word ^ history) % size;
}

Prediction BranchPredictor::predict(std::uint32_t pc) const {
  Prediction p = predictTarget(pc);
  p.taken = counterTaken(counters_[phtIndex(pc)]);
  if (!p.taken) p.target = pc + 4;
  return p;
}

Prediction BranchPredictor::predictTarget(std::uint32_t pc) const {
  const std::uint32_t word = pc / 4;
  const auto size = static_cast<std::uint32_t>(btb_.size());
  const BtbEntry& e = btb_[word % size];
  Prediction p;
  p.btbHit = e.valid && e.tag == word / size;
  p.taken = p.btbHit;
  p.target = p.btbHit ? e.target : pc + 4;
  return p;
}

void BranchPredictor::update(std::uint32_t pc, bool taken, std::uint32_t actualTarget) {
  int& counter = counters_[phtIndex(pc)];
  switch (config_.predictorType) {
    case PredictorType::kZeroBit: break;
    case PredictorType::kOneBit: counter = taken ? 1 : 0; break;
    case PredictorType::kTwoBit: counter = std::clamp(counter + (taken ? 1 : -1), 0, 3); break;
  }
  const std::uint32_t bit = taken ? 1 : 0;
  if (config_.history == HistoryKind::kGlobal) {
    globalHistory_ = ((globalHistory_ << 1) | bit) & historyMask_;
  } else {
    auto& h = localHistories_[(pc / 4) % localHistories_.size()];
    h = ((h << 1) | bit) & historyMask_;
  }
  if (taken) updateTarget(pc, actualTarget);
}

void BranchPredictor::updateTarget(std::uint32_t pc, std::uint32_t target) {
  const std::uint32_t word = pc / 4;
  const auto size = static_cast<std::uint32_t>(btb_.size());
  btb_[word % size] = {true, word / size, target};
}

void to_json(nlohmann::json& j, const BranchPredictor& p) {
  nlohmann::json btb = nlohmann::json::array();
  for (const auto& e : p.btb_) btb.push_back({{"valid", e.valid}, {"tag", e.tag}, {"target", e.target}});
  j = nlohmann::json{{"counters", p.counters_},
                     {"globalHistory", p.globalHistory_},
                     {"localHistories", p.localHistories_},
                     {"btb", std::move(btb)}};
}

void BranchPredictor::restore(const nlohmann::json& j) {
  auto counters = j.at("counters").get<std::vector<int>>();
  auto local = j.at("localHistories").get<std::vector<std::uint32_t>>();
  const auto& btb = j.at("btb");
  if (counters.size() != counters_.size() || local.size() != localHistories_.size() || btb.size() != btb_.size())
    throw std::invalid_argument("predictor state does not match configuration");
  counters_ = std::move(counters);
  localHistories_ = std::move(local);
  globalHistory_ = j.at("globalHistory").get<std::uint32_t>();
  for (std::size_t i = 0; i < btb_.size(); ++i)
    btb_[i] = {btb[i].at("valid").get<bool>(), btb[i].at("tag").get<std::uint32_t>(),
               btb[i].at("target").get<std::uint32_t>()};
}

}  // namespace rvsim
