#pragma once

#include <cstdint>

namespace pathohr {

/// Counter-based, splittable random stream.
///
/// Draw k of stream (seed, stream_id) is a fixed integer hash of
/// (seed, stream_id, k), so sequences are identical on every platform and
/// independent of how many other streams exist. Floating-point draws are
/// derived by integer arithmetic only (no libm), which keeps them bit-exact.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Uniform integer in [0, bound); bound > 0.
  std::uint64_t below(std::uint64_t bound);

  /// Child stream keyed by (this stream's key, child_id). Does not advance
  /// this stream.
  RngStream split(std::uint64_t child_id) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// SplitMix64 finalizer; exposed for hashing seeds into sub-seeds.
std::uint64_t mix64(std::uint64_t x);

}  // namespace pathohr
