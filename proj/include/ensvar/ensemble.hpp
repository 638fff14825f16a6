#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "ensvar/perturbation.hpp"
#include "ensvar/problem.hpp"

namespace ensvar {

struct EnsembleOptions {
  /// Label used in the stream keys of each member slot; must be a permutation
  /// of 0..N-1. Empty means slot n uses label n.
  std::vector<std::size_t> member_labels;
  /// Replaces the N(x_b, B) initial draws (m x N). Used to build degenerate
  /// zero-spread ensembles.
  std::optional<Matrix> initial_members;
  /// When false the forecast adds no model noise.
  bool model_noise = true;
  bool retain_forecasts = false;
};

struct EnsembleRunResult {
  /// Analysis ensembles for i = 0..k: single states for EnKF, composite
  /// states of length m(i+1) for EnKS.
  std::vector<EnsembleMatrix> analyses;
  /// Sample means of the analyses.
  std::vector<Vector> means;
  /// Forecast ensembles for i = 1..k when retained.
  std::vector<EnsembleMatrix> forecasts;
};

struct ReferenceRunResult {
  /// Reference members U_{0:i|i} for i = 0..k.
  std::vector<EnsembleMatrix> analyses;
  /// Exact composite forecast covariances P_{0:i|i-1}, i = 1..k.
  std::vector<Matrix> exact_forecast_covs;
};

/// The two products an analysis needs: P H~^T and H~ P H~^T.
struct CovarianceProducts {
  Matrix cross;
  Matrix obs;
};

/// Matrix-free sample products from forecast deviations and h_n = H~(X^n - mean)
/// (columns of obs_deviations). P^N itself is never formed.
CovarianceProducts sample_products(const EnsembleMatrix& forecast, const Matrix& obs_deviations);

/// Perturbed-observation analysis X^n += cross (obs + R)^{-1} innovation_n,
/// member by member.
void analysis_update(EnsembleMatrix& forecast, const CovarianceProducts& products,
                     const Matrix& obs_cov, const Matrix& innovations,
                     const std::string& name = "innovation covariance");

EnsembleRunResult enkf_run(const AssimilationProblem& p, std::size_t members,
                           const PerturbationStream& stream, const EnsembleOptions& options = {});

EnsembleRunResult enks_run(const AssimilationProblem& p, std::size_t members,
                           const PerturbationStream& stream, const EnsembleOptions& options = {});

/// EnKS driven by the same draws but updated with the exact covariances from
/// the Kalman smoother. Members are i.i.d. draws from the smoothing distribution.
ReferenceRunResult reference_enks_run(const AssimilationProblem& p, std::size_t members,
                                      const PerturbationStream& stream,
                                      const EnsembleOptions& options = {});

struct CoupledError {
  double estimate = 0.0;
  /// |X^1_{0:k|k} - U^1_{0:k|k}| per replicate.
  std::vector<double> raw;
};

/// L^p norm of the difference between the first EnKS member and the first
/// reference member, estimated over `replicates` coupled runs.
CoupledError coupled_enks_error(const AssimilationProblem& p, std::size_t members,
                                const PerturbationStream& stream, double p_norm,
                                std::size_t replicates);

namespace detail {

enum class Window { state, composite };

using ProductsProvider = std::function<CovarianceProducts(
    std::size_t step, const EnsembleMatrix& forecast, const Matrix& obs_deviations)>;

/// Shared driver behind enkf_run, enks_run and reference_enks_run.
EnsembleRunResult run_linear_ensemble(const AssimilationProblem& p, std::size_t members,
                                      const PerturbationStream& stream,
                                      const EnsembleOptions& options, Window window,
                                      const ProductsProvider& provider);

ProductsProvider sample_provider();

std::vector<std::size_t> resolve_labels(const std::vector<std::size_t>& labels, std::size_t members);

}  // namespace detail

}  // namespace ensvar
