#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rvsim/isa.hpp"

namespace rvsim {

inline constexpr int kArchRegisterCount = 32;
inline constexpr int kStackPointer = 2;
inline constexpr int kReturnAddress = 1;

/// Accepts x0..x31, ABI names (zero, ra, sp, ..., t6) and fp.
std::optional<int> parseRegisterName(std::string_view name);
std::string registerName(int index);
std::string_view abiName(int index);

struct ArchRegister {
  std::string name;
  int index = 0;
  RegisterValue value;
  std::vector<int> renamedCopies;  // live speculative ids, allocation order

  bool operator==(const ArchRegister&) const = default;
};

struct SpeculativeRegister {
  int id = 0;
  int archTarget = -1;
  RegisterValue value;
  bool valid = false;
  int refCount = 0;
  bool allocated = false;
  std::uint64_t producer = 0;  // uniqueId of the writing instruction

  bool operator==(const SpeculativeRegister&) const = default;
};

/// Architectural registers, the rename file and the rename map.
///
/// A speculative register is held by its producer until the producer
/// commits or is squashed, and by each consumer until that consumer has read
/// its operand. It returns to the free pool when its count drops to zero.
class RegisterFile {
 public:
  explicit RegisterFile(int renameFileSize = 32);

  [[nodiscard]] const ArchRegister& arch(int index) const { return arch_.at(static_cast<std::size_t>(index)); }
  [[nodiscard]] const std::vector<ArchRegister>& archRegisters() const { return arch_; }
  [[nodiscard]] const SpeculativeRegister& spec(int id) const { return spec_.at(static_cast<std::size_t>(id)); }
  [[nodiscard]] const std::vector<SpeculativeRegister>& speculativeRegisters() const { return spec_; }
  [[nodiscard]] int renameFileSize() const { return static_cast<int>(spec_.size()); }

  /// Writes to x0 are discarded.
  void setArch(int index, RegisterValue value);

  /// Speculative id currently standing in for `arch`, if renamed.
  [[nodiscard]] std::optional<int> mapping(int arch) const;
  [[nodiscard]] const std::vector<int>& renameMap() const { return map_; }

  /// Allocates a fresh speculative register for `arch` and points the rename
  /// map at it. Returns nullopt when the rename file is exhausted.
  std::optional<int> allocate(int arch, std::uint64_t producer);
  void addRef(int id);
  void release(int id);
  void produce(int id, RegisterValue value);

  /// Copies the speculative value into the architectural register. The map
  /// entry is cleared when it still names `id`.
  void commit(int id);

  /// Reinstates a previous map entry during squash. A previous entry whose
  /// register was reclaimed or reassigned falls back to the architectural
  /// value.
  void restoreMapping(int arch, std::optional<int> previous, std::uint64_t previousProducer);

  [[nodiscard]] int freeCount() const;
  [[nodiscard]] int liveCount() const { return renameFileSize() - freeCount(); }

  bool operator==(const RegisterFile&) const = default;

  friend void to_json(nlohmann::json& j, const RegisterFile& rf);
  friend void from_json(const nlohmann::json& j, RegisterFile& rf);

 private:
  void reclaim(int id);

  std::vector<ArchRegister> arch_;
  std::vector<SpeculativeRegister> spec_;
  std::vector<int> map_;  // arch index -> spec id or -1
};

void to_json(nlohmann::json& j, const RegisterValue& v);
void from_json(const nlohmann::json& j, RegisterValue& v);

}  // namespace rvsim
