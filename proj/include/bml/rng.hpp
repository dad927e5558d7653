#pragma once

#include <cstdint>
#include <limits>

namespace bml {

struct SeedSpec {
  std::uint64_t master_seed = 0;
  std::uint64_t stream_id = 0;

  friend bool operator==(const SeedSpec&, const SeedSpec&) = default;
};

// A child seed for a named purpose (a training step, a run, an index stream).
SeedSpec derive(const SeedSpec& parent, std::uint64_t tag);

// xoshiro256++ seeded through splitmix64. Satisfies UniformRandomBitGenerator.
class Xoshiro256 {
 public:
  using result_type = std::uint64_t;

  explicit Xoshiro256(std::uint64_t seed);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();

 private:
  std::uint64_t s_[4];
};

// Engine for item `index` of a stream; depends only on (seed, index), so
// results do not depend on how items are split across chunks or threads.
Xoshiro256 stream_engine(const SeedSpec& seed, std::uint64_t index);

}  // namespace bml
