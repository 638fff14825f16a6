#pragma once

#include <vector>

#include "ensvar/problem.hpp"

namespace ensvar {

/// Per-step record of a filter or smoother analysis.
struct KalmanStepDiag {
  GaussianEstimate forecast;  // X_{i|i-1}, P_{i|i-1} (composite for the smoother)
  Matrix gain;                // m x d_i for the filter, m(i+1) x d_i for the smoother
  Vector innovation;          // y_i - H_i X_{i|i-1}
};

struct FilterResult {
  /// analyses[i] = (X_{i|i}, P_{i|i}) for i = 0..k; analyses[0] is (x_b, B).
  std::vector<GaussianEstimate> analyses;
  /// steps[i-1] describes step i.
  std::vector<KalmanStepDiag> steps;
};

struct SmootherResult {
  /// Composite (X_{0:k|k}, P_{0:k|k}), length m(k+1).
  GaussianEstimate composite;
  /// analyses[i] = (X_{0:i|i}, P_{0:i|i}) for i = 0..k.
  std::vector<GaussianEstimate> analyses;
  /// steps[i-1].forecast holds the exact composite P_{0:i|i-1}.
  std::vector<KalmanStepDiag> steps;
};

/// Kalman filter. Requires every operator flagged linear.
FilterResult kf_run(const AssimilationProblem& p);

/// Kalman smoother computed as the filter on the growing composite state
/// X_{0:i}; the gain uses only the trailing diagonal block of P_{0:i|i-1}.
SmootherResult ks_run(const AssimilationProblem& p);

/// Mean of the smoothing distribution obtained by assembling and solving the
/// block normal equations of the weighted least-squares problem directly.
Vector ks_least_squares_oracle(const AssimilationProblem& p);

}  // namespace ensvar
