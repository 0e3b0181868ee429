#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace dermaug {

/// Deterministic pseudo-random stream. Two streams built from the same
/// (seed, stream_id) produce identical sequences; distinct stream ids are
/// decorrelated through a splitmix64 finalizer before seeding mt19937_64.
///
/// Only the engine's raw 64-bit output is used, and every distribution below
/// is implemented here, so sequences do not depend on the standard library.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  /// Stream whose id hashes a path of integers (e.g. {epoch, step, sample}).
  static RngStream derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on the open interval (0, 1).
  double uniform_open();
  /// Uniform on [lo, hi); returns lo when lo == hi.
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n); n must be positive. Unbiased (rejection).
  std::uint64_t below(std::uint64_t n);
  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  /// True with probability p. Always consumes exactly one draw.
  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t stream_id() const noexcept { return stream_id_; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t stream_id_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace dermaug
