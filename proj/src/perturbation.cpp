#include "ensvar/perturbation.hpp"

#include <cmath>
#include <numbers>

namespace ensvar {

namespace {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t combine(std::uint64_t h, std::uint64_t v) {
  return splitmix64(h ^ splitmix64(v + 0x632be59bd9b4e019ULL));
}

std::uint64_t key_hash(std::uint64_t seed, const DrawKey& key) {
  std::uint64_t h = splitmix64(seed);
  h = combine(h, static_cast<std::uint64_t>(key.phase));
  h = combine(h, key.iteration);
  h = combine(h, key.time);
  h = combine(h, key.member);
  h = combine(h, static_cast<std::uint64_t>(key.kind));
  return h;
}

// Uniform on (0, 1]; never 0 so the logarithm below is finite.
double unit_open_low(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

}  // namespace

void DrawLog::record(const DrawKey& key, Index dim) {
  std::lock_guard lock(mutex_);
  records_.push_back({key, dim});
}

std::vector<DrawRecord> DrawLog::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

Vector PerturbationStream::draw(const DrawKey& key, Index dim) const {
  if (log_) log_->record(key, dim);
  const std::uint64_t base = key_hash(seed_, key);
  Vector z(dim);
  // Box-Muller, one pair of uniforms per pair of components.
  for (Index c = 0; c < dim; c += 2) {
    const auto pair = static_cast<std::uint64_t>(c / 2);
    const double u1 = unit_open_low(combine(base, 2 * pair));
    const double u2 = unit_open_low(combine(base, 2 * pair + 1));
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    z(c) = radius * std::cos(angle);
    if (c + 1 < dim) z(c + 1) = radius * std::sin(angle);
  }
  return z;
}

PerturbationStream PerturbationStream::derived(std::uint64_t index) const {
  return PerturbationStream(derive_seed(seed_, index)).with_log(log_);
}

PerturbationStream PerturbationStream::with_log(std::shared_ptr<DrawLog> log) const {
  PerturbationStream copy(seed_);
  copy.log_ = std::move(log);
  return copy;
}

Vector draw(const PerturbationStream& stream, const DrawKey& key, Index dim) {
  return stream.draw(key, dim);
}

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
  return combine(splitmix64(root ^ 0xd1b54a32d192ed03ULL), index);
}

}  // namespace ensvar
