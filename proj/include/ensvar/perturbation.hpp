#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <vector>

#include "ensvar/numerics.hpp"

namespace ensvar {

/// Which family of runs a draw belongs to. The tangent and finite-difference
/// LM variants both use Phase::lm so they consume identical draws.
enum class Phase : std::uint8_t {
  smoother = 0,    // EnKF / EnKS / reference ensemble
  lm = 1,          // LM-EnKS, tangent and finite-difference modes
  synthetic = 2,   // simulated truth and observations for toy problems
  validation = 3,  // linearity probes in validate_problem
};

enum class DrawKind : std::uint8_t { init = 0, model_noise = 1, obs_noise = 2 };

struct DrawKey {
  Phase phase = Phase::smoother;
  std::uint32_t iteration = 0;  // LM iteration j (0 outside LM)
  std::uint32_t time = 0;       // time index i
  std::uint64_t member = 0;     // ensemble member n
  DrawKind kind = DrawKind::init;

  friend bool operator==(const DrawKey&, const DrawKey&) = default;
};

struct DrawRecord {
  DrawKey key;
  Index dim = 0;
  friend bool operator==(const DrawRecord&, const DrawRecord&) = default;
};

/// Thread-safe append-only log of the keys a run consumed.
class DrawLog {
 public:
  void record(const DrawKey& key, Index dim);
  std::vector<DrawRecord> records() const;

 private:
  mutable std::mutex mutex_;
  std::vector<DrawRecord> records_;
};

/// Counter-based source of standard-normal vectors: the draw for a key is a
/// pure function of (seed, key), independent of call order.
class PerturbationStream {
 public:
  explicit PerturbationStream(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  /// Standard-normal vector of length dim. Component c of a key does not
  /// depend on dim, so a shorter draw is a prefix of a longer one.
  Vector draw(const DrawKey& key, Index dim) const;

  /// Independent stream for replicate `index`.
  PerturbationStream derived(std::uint64_t index) const;

  /// Copy of this stream that records every key it hands out.
  PerturbationStream with_log(std::shared_ptr<DrawLog> log) const;

 private:
  std::uint64_t seed_;
  std::shared_ptr<DrawLog> log_;
};

Vector draw(const PerturbationStream& stream, const DrawKey& key, Index dim);

/// hash(root, index) used for per-replicate seeds.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index);

/// mean + L z, with L the lower Cholesky factor of the covariance.
inline Vector color(const Vector& mean, const Matrix& lower_factor, const Vector& z) {
  return mean + lower_factor.triangularView<Eigen::Lower>() * z;
}

}  // namespace ensvar
