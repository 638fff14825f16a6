#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ensvar/perturbation.hpp"
#include "ensvar/problem.hpp"

namespace ensvar {

enum class LMMode { exact, tangent, finite_difference };

std::string to_string(LMMode mode);
LMMode lm_mode_from_string(const std::string& name);

struct LMConfig {
  /// Penalty weight on |x_i - x_i^{j-1}|^2. Zero (Gauss-Newton) is allowed in
  /// exact mode only.
  double gamma = 1.0;
  /// Finite-difference step.
  double tau = 1e-3;
  /// N_j for j = 1, 2, ...; the last entry repeats.
  std::vector<std::size_t> ensemble_sizes{100};
  std::size_t max_iterations = 1;
  LMMode mode = LMMode::exact;
  /// x^0; the prior chain when absent.
  std::optional<Trajectory> initial;

  std::size_t ensemble_size(std::size_t iteration) const;
};

/// Throws ValidationError on out-of-range values for the configured mode.
void validate_config(const LMConfig& cfg, const AssimilationProblem& p);

/// Penalty terms written as extra independent observations: y~_i = (y_i, x_i^{j-1}),
/// H~_i(x) = (H_i(x), x), R~_i = diag(R_i, I/gamma).
struct AugmentedObservation {
  Vector value;
  Operator op;
  Matrix cov;
};

std::vector<AugmentedObservation> augment(const AssimilationProblem& p, const Trajectory& x_prev,
                                          double gamma);

/// Weak-constraint 4DVAR cost: background, model-error and observation misfits,
/// each weighted by its inverse covariance.
double objective(const AssimilationProblem& p, const Trajectory& x);

/// Linear system whose smoother mean is the LM iterate linearized at x_prev.
/// With gamma == 0 the penalty observations are omitted.
AssimilationProblem linearized_problem(const AssimilationProblem& p, const Trajectory& x_prev,
                                       double gamma);

struct LMRunResult {
  /// x^0..x^J (exact mode) or the sample means x~^0..x~^J (ensemble modes).
  std::vector<Trajectory> iterates;
  /// objective(iterates[j]).
  std::vector<double> objectives;
  /// Final composite analysis ensemble of each iteration j = 1..J, when retained.
  std::vector<EnsembleMatrix> ensembles;
  /// Largest composite member norm per iteration (ensemble modes).
  std::vector<double> max_member_norms;
};

/// One LM iterate: ks_run on the linearized problem.
Trajectory lm_exact_step(const AssimilationProblem& p, const Trajectory& x_prev, double gamma);

LMRunResult lm_exact_run(const AssimilationProblem& p, const LMConfig& cfg);

struct LMEnsembleOptions {
  /// Stream-key label per member slot (a permutation of 0..N_j-1); empty is identity.
  std::vector<std::size_t> member_labels;
  /// Start every iteration from N copies of x_b instead of N(x_b, B) draws.
  bool zero_initial_spread = false;
  bool retain_ensembles = false;
};

/// LM iterations solved approximately by an EnKS on the system linearized at
/// the previous sample mean, using exact Jacobians.
LMRunResult lm_enks_tangent_run(const AssimilationProblem& p, const LMConfig& cfg,
                                const PerturbationStream& stream,
                                const LMEnsembleOptions& options = {});

/// Same algorithm with each Jacobian-vector product replaced by a forward
/// difference around the previous sample mean. Draws are shared with the
/// tangent variant key for key.
LMRunResult enks_4dvar_run(const AssimilationProblem& p, const LMConfig& cfg,
                           const PerturbationStream& stream,
                           const LMEnsembleOptions& options = {});

/// (f(x + tau y) - f(x)) / tau.
Vector fd_directional(const std::function<Vector(const Vector&)>& f, const Vector& x,
                      const Vector& y, double tau);

}  // namespace ensvar
