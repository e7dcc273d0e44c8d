#pragma once

// Counter-based random numbers (Philox4x32-10).
//
// A stream is identified by (master seed, replicate, lane); the value at a
// given counter is a pure function of those four integers, so any scheduling
// of replicates or coefficients reproduces the same draws.

#include <array>
#include <cstddef>
#include <cstdint>

namespace bc {

using PhiloxBlock = std::array<std::uint32_t, 4>;

PhiloxBlock philox4x32(PhiloxBlock counter, std::array<std::uint32_t, 2> key);

// Lane identifiers. Coefficient lanes carry the 1-based coefficient index;
// auxiliary lanes are tagged in the top bits so they never collide.
namespace lane {
inline constexpr std::uint32_t kTagShift = 28;
inline constexpr std::uint32_t kIndexMask = (1u << kTagShift) - 1;

constexpr std::uint32_t coefficient(std::uint32_t k) { return k & kIndexMask; }
constexpr std::uint32_t bridge_crossing(std::uint32_t block_start) {
  return (1u << kTagShift) | (block_start & kIndexMask);
}
constexpr std::uint32_t bridge_maximum(std::uint32_t block_start) {
  return (2u << kTagShift) | (block_start & kIndexMask);
}
constexpr std::uint32_t first_passage() { return 3u << kTagShift; }
constexpr std::uint32_t auxiliary(std::uint32_t i) {
  return (4u << kTagShift) | (i & kIndexMask);
}
}  // namespace lane

class CounterStream {
 public:
  CounterStream(std::uint64_t seed, std::uint64_t replicate, std::uint32_t lane);

  // 128 random bits for the given counter.
  PhiloxBlock block(std::uint64_t counter) const;

  // Uniform on the open interval (0, 1), 53 bits of resolution.
  double uniform(std::uint64_t counter) const;

  // The i-th standard normal of the stream: ziggurat over the words of
  // block i, continuing into blocks i + j 2^56 (j >= 1) on rejection.
  double normal(std::uint64_t i) const;
  // Normals first .. first + count - 1 into out.
  void normals(std::uint64_t first, std::size_t count, double* out) const;

 private:
  std::array<std::uint32_t, 2> key_;
  std::uint32_t replicate_lo_;
  std::uint32_t lane_;
};

// Sequential reader over the normals of one stream. Refills several at a
// time so the independent Philox chains can overlap.
class NormalSequence {
 public:
  explicit NormalSequence(CounterStream stream) : stream_(stream) {}

  double next() {
    const std::size_t slot = index_ % kBuffered;
    if (slot == 0) refill();
    ++index_;
    return cached_[slot];
  }

  std::uint64_t position() const noexcept { return index_; }

 private:
  static constexpr std::size_t kBuffered = 16;

  void refill() {
    stream_.normals(index_, kBuffered, cached_.data());
  }

  CounterStream stream_;
  std::uint64_t index_ = 0;
  std::array<double, kBuffered> cached_{};
};

struct RngPolicy {
  std::uint64_t master_seed = 0;

  CounterStream stream(std::uint64_t replicate, std::uint32_t lane) const {
    return CounterStream(master_seed, replicate, lane);
  }
};

}  // namespace bc
