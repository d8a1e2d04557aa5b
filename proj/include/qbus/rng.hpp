#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace qbus {

// Counter-based stream: a splitmix64 walk whose starting point is derived
// from (master seed, stream ids).  Every logical sampling site (tomography
// setting, bootstrap replicate, ...) gets its own stream, so results do not
// depend on thread scheduling, only on the master seed.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed,
                     std::initializer_list<std::uint64_t> ids = {});

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double next_double();

 private:
  std::uint64_t state_;
};

// Multinomial draw: `shots` samples over the (non-negative, normalized)
// probability vector, by CDF inversion.  Deterministic given the stream.
std::vector<long long> multinomial(const std::vector<double>& probs,
                                   long long shots, RngStream& rng);

}  // namespace qbus
