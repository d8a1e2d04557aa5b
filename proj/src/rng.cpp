#include "qbus/rng.hpp"

#include <algorithm>
#include <stdexcept>

namespace qbus {
namespace {

constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

std::uint64_t mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed,
                     std::initializer_list<std::uint64_t> ids) {
  state_ = mix(seed + kGamma);
  for (std::uint64_t id : ids) state_ = mix(state_ ^ mix(id + kGamma));
}

std::uint64_t RngStream::next_u64() {
  state_ += kGamma;
  return mix(state_);
}

double RngStream::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::vector<long long> multinomial(const std::vector<double>& probs,
                                   long long shots, RngStream& rng) {
  std::vector<double> cdf(probs.size());
  double acc = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += std::max(0.0, probs[i]);
    cdf[i] = acc;
  }
  if (acc <= 0) throw std::invalid_argument("multinomial: empty distribution");
  std::vector<long long> counts(probs.size(), 0);
  for (long long s = 0; s < shots; ++s) {
    double u = rng.next_double() * acc;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    std::size_t k = std::min<std::size_t>(it - cdf.begin(), probs.size() - 1);
    ++counts[k];
  }
  return counts;
}

}  // namespace qbus
