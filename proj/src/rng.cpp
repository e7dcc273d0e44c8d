#include "bc/rng.hpp"

#include <algorithm>
#include <cmath>

#include <boost/random/normal_distribution.hpp>

#include "bc/errors.hpp"

namespace bc {
namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                    std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline double to_open_unit(std::uint64_t bits) {
  // (bits >> 11) in [0, 2^53), shifted by one half so the result is never 0.
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

inline std::uint64_t join(std::uint32_t hi, std::uint32_t lo) {
  return (static_cast<std::uint64_t>(hi) << 32) | lo;
}

}  // namespace

PhiloxBlock philox4x32(PhiloxBlock ctr, std::array<std::uint32_t, 2> key) {
  std::uint32_t c0 = ctr[0], c1 = ctr[1], c2 = ctr[2], c3 = ctr[3];
  std::uint32_t k0 = key[0], k1 = key[1];
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, c0, hi0, lo0);
    mulhilo(kMul1, c2, hi1, lo1);
    c0 = hi1 ^ c1 ^ k0;
    c1 = lo1;
    c2 = hi0 ^ c3 ^ k1;
    c3 = lo0;
    k0 += kWeyl0;
    k1 += kWeyl1;
  }
  return {c0, c1, c2, c3};
}

CounterStream::CounterStream(std::uint64_t seed, std::uint64_t replicate,
                             std::uint32_t lane)
    : key_{static_cast<std::uint32_t>(seed),
           static_cast<std::uint32_t>(seed >> 32)},
      replicate_lo_(static_cast<std::uint32_t>(replicate)),
      lane_(lane) {
  if (replicate > 0xFFFFFFFFull) {
    throw DomainError("replicate index exceeds 32 bits");
  }
}

PhiloxBlock CounterStream::block(std::uint64_t counter) const {
  return philox4x32({static_cast<std::uint32_t>(counter),
                     static_cast<std::uint32_t>(counter >> 32), lane_,
                     replicate_lo_},
                    key_);
}

double CounterStream::uniform(std::uint64_t counter) const {
  const PhiloxBlock b = block(counter);
  return to_open_unit(join(b[1], b[0]));
}

namespace {

// Engine view of the words of one normal's blocks, for the ziggurat sampler.
class BlockWords {
 public:
  using result_type = std::uint32_t;
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return 0xFFFFFFFFu; }

  BlockWords(const CounterStream& stream, std::uint64_t index, const PhiloxBlock& first)
      : stream_(stream), index_(index), words_(first) {}

  result_type operator()() {
    if (used_ == words_.size()) {
      ++extra_;
      if (extra_ >= 256) throw DomainError("normal sampler exhausted its blocks");
      words_ = stream_.block(index_ + (extra_ << 56));
      used_ = 0;
    }
    return words_[used_++];
  }

 private:
  const CounterStream& stream_;
  std::uint64_t index_;
  PhiloxBlock words_;
  std::size_t used_ = 0;
  std::uint64_t extra_ = 0;
};

double ziggurat(const CounterStream& stream, std::uint64_t i, const PhiloxBlock& first) {
  if (i >> 56) throw DomainError("normal index exceeds 2^56");
  BlockWords words(stream, i, first);
  return boost::random::normal_distribution<double>()(words);
}

}  // namespace

double CounterStream::normal(std::uint64_t i) const {
  return ziggurat(*this, i, block(i));
}

void CounterStream::normals(std::uint64_t first, std::size_t count, double* out) const {
  constexpr std::size_t kChunk = 16;
  PhiloxBlock blocks[kChunk];
  for (std::size_t done = 0; done < count; done += kChunk) {
    const std::size_t n = std::min(kChunk, count - done);
    for (std::size_t j = 0; j < n; ++j) blocks[j] = block(first + done + j);
    for (std::size_t j = 0; j < n; ++j) out[done + j] = ziggurat(*this, first + done + j, blocks[j]);
  }
}

}  // namespace bc
