#include "dermaug/rng.hpp"

#include <limits>

namespace dermaug {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : engine_(splitmix64(seed ^ splitmix64(stream_id ^ 0xD1B54A32D192ED03ULL))),
      stream_id_(stream_id) {}

RngStream RngStream::derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t id = 0x243F6A8885A308D3ULL;
  for (std::uint64_t p : path) id = splitmix64(id ^ p) + 0x13198A2E03707344ULL;
  return RngStream(seed, id);
}

double RngStream::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngStream::uniform_open() {
  return (static_cast<double>(engine_() >> 12) + 0.5) * 0x1.0p-52;
}

double RngStream::uniform(double lo, double hi) {
  if (lo == hi) {
    engine_();
    return lo;
  }
  const double v = lo + (hi - lo) * uniform();
  return v < hi ? v : lo;
}

std::uint64_t RngStream::below(std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v;
  do {
    v = engine_();
  } while (v >= limit);
  return v % n;
}

std::int64_t RngStream::uniform_int(std::int64_t lo, std::int64_t hi) {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(below(span));
}

}  // namespace dermaug
