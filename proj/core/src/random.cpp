#include "dkf/random.hpp"

#include <cmath>
#include <numeric>

namespace dkf {

namespace {

__extension__ typedef unsigned __int128 uint128;

constexpr std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

RandomSource::RandomSource(std::uint64_t seed) : seed_(seed) {
  std::uint64_t sm = seed;
  for (auto& word : state_) word = splitmix64(sm);
}

std::uint64_t RandomSource::next_u64() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double RandomSource::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomSource::gaussian() {
  if (spare_gaussian_) {
    const double value = *spare_gaussian_;
    spare_gaussian_.reset();
    return value;
  }
  double u = 0.0;
  double v = 0.0;
  double s = 0.0;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double factor = std::sqrt(-2.0 * std::log(s) / s);
  spare_gaussian_ = v * factor;
  return u * factor;
}

int RandomSource::ternary() {
  return static_cast<int>(std::floor(3.0 * uniform())) - 1;
}

std::size_t RandomSource::index(std::size_t n) {
  const uint128 product = static_cast<uint128>(next_u64()) * static_cast<uint128>(n);
  return static_cast<std::size_t>(product >> 64);
}

int RandomSource::poisson(double rate) {
  if (!(rate > 0.0)) return 0;
  if (rate > 30.0) {
    const double draw = std::round(rate + std::sqrt(rate) * gaussian());
    return draw < 0.0 ? 0 : static_cast<int>(draw);
  }
  const double limit = std::exp(-rate);
  int count = 0;
  double product = uniform();
  while (product > limit) {
    ++count;
    product *= uniform();
  }
  return count;
}

RandomSource RandomSource::derive(std::uint64_t stream) const {
  std::uint64_t mix = seed_ ^ (0xd1b54a32d192ed03ULL * (stream + 1));
  return RandomSource(splitmix64(mix));
}

std::vector<std::size_t> RandomSource::permutation(std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = index(i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

}  // namespace dkf
