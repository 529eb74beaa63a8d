#pragma once

#include <cstdint>
#include <string_view>

namespace hierpose {

/// Counter-based generator: every draw is a pure function of
/// (seed, stream, counter), so results never depend on call interleaving
/// across threads or on the standard library's distribution code.
class CounterRng {
public:
  CounterRng(uint64_t seed, uint64_t stream) : seed_(seed), stream_(stream) {}

  uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  /// Standard normal via Box-Muller (both halves consumed sequentially).
  double normal();
  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  [[nodiscard]] uint64_t counter() const { return counter_; }

private:
  uint64_t seed_;
  uint64_t stream_;
  uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

uint64_t mix64(uint64_t x);
/// FNV-1a over bytes, used to derive stream ids from names.
uint64_t hash_string(std::string_view s, uint64_t h = 1469598103934665603ULL);
uint64_t hash_combine(uint64_t a, uint64_t b);

}  // namespace hierpose
