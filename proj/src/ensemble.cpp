#include "ensvar/ensemble.hpp"

#include <algorithm>
#include <numeric>

#include "ensvar/errors.hpp"
#include "ensvar/kalman.hpp"

namespace ensvar {

CovarianceProducts sample_products(const EnsembleMatrix& forecast, const Matrix& obs_deviations) {
  const std::size_t n_members = forecast.size();
  if (n_members < 2) {
    throw ValidationError("members", "sample covariance products need at least 2 members");
  }
  if (static_cast<std::size_t>(obs_deviations.cols()) != n_members) {
    throw DimensionError("obs_deviations", "one column per member required");
  }
  const Vector mean = sample_mean(forecast);
  const Index d = obs_deviations.rows();
  CovarianceProducts out{Matrix::Zero(forecast.dim(), d), Matrix::Zero(d, d)};
  for (std::size_t n : forecast.canonical_order()) {
    const auto h = obs_deviations.col(static_cast<Index>(n));
    out.cross.noalias() += (forecast.member(n) - mean) * h.transpose();
    out.obs.noalias() += h * h.transpose();
  }
  const double scale = 1.0 / static_cast<double>(n_members - 1);
  out.cross *= scale;
  out.obs *= scale;
  return out;
}

void analysis_update(EnsembleMatrix& forecast, const CovarianceProducts& products,
                     const Matrix& obs_cov, const Matrix& innovations, const std::string& name) {
  if (static_cast<std::size_t>(innovations.cols()) != forecast.size()) {
    throw DimensionError("innovations", "one column per member required");
  }
  Matrix s = products.obs + obs_cov;
  s = 0.5 * (s + s.transpose());
  const SpdFactor factor(s, name);
  for (std::size_t n = 0; n < forecast.size(); ++n) {
    const Vector weights = factor.solve(Vector(innovations.col(static_cast<Index>(n))));
    forecast.member(n) += products.cross * weights;
  }
}

namespace detail {

std::vector<std::size_t> resolve_labels(const std::vector<std::size_t>& labels,
                                        std::size_t members) {
  if (labels.empty()) {
    std::vector<std::size_t> out(members);
    std::iota(out.begin(), out.end(), std::size_t{0});
    return out;
  }
  if (labels.size() != members) {
    throw DimensionError("member_labels", "one label per member required");
  }
  std::vector<std::size_t> sorted = labels;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i] != i) throw ValidationError("member_labels", "labels must permute 0..N-1");
  }
  return labels;
}

ProductsProvider sample_provider() {
  return [](std::size_t, const EnsembleMatrix& forecast, const Matrix& obs_deviations) {
    return sample_products(forecast, obs_deviations);
  };
}

EnsembleRunResult run_linear_ensemble(const AssimilationProblem& p, std::size_t members,
                                      const PerturbationStream& stream,
                                      const EnsembleOptions& options, Window window,
                                      const ProductsProvider& provider) {
  validate_problem(p);
  require_linear(p);
  if (members == 0) throw ValidationError("members", "ensemble needs at least one member");
  const Index m = p.state_dim();
  const auto labels = resolve_labels(options.member_labels, members);
  const auto n_cols = static_cast<Index>(members);

  Matrix init(m, n_cols);
  if (options.initial_members) {
    if (options.initial_members->rows() != m || options.initial_members->cols() != n_cols) {
      throw DimensionError("initial_members", "expected m x N");
    }
    init = *options.initial_members;
  } else {
    const Matrix lb = cholesky_spd(p.background_cov, "B");
    for (std::size_t n = 0; n < members; ++n) {
      const Vector z = stream.draw({Phase::smoother, 0, 0, labels[n], DrawKind::init}, m);
      init.col(static_cast<Index>(n)) = color(p.background_mean, lb, z);
    }
  }

  EnsembleRunResult out;
  EnsembleMatrix current(std::move(init), labels);
  out.means.push_back(sample_mean(current));
  out.analyses.push_back(current);

  for (std::size_t i = 1; i <= p.horizon(); ++i) {
    const auto& ms = p.model(i);
    const auto& os = p.observation(i);
    const Matrix& mi = ms.model.matrix();
    const Matrix& hi = os.op.matrix();
    const Matrix lq = cholesky_spd(ms.model_cov, indexed_field("Q", i));
    const Matrix lr = cholesky_spd(os.obs_cov, indexed_field("R", i));
    const auto step = static_cast<std::uint32_t>(i);

    // Forecast of the newest block.
    Matrix advanced(m, n_cols);
    for (std::size_t n = 0; n < members; ++n) {
      Vector x = mi * current.member(n).tail(m) + ms.forcing;
      if (options.model_noise) {
        x += lq.triangularView<Eigen::Lower>() *
             stream.draw({Phase::smoother, 0, step, labels[n], DrawKind::model_noise}, m);
      }
      advanced.col(static_cast<Index>(n)) = x;
    }
    EnsembleMatrix forecast;
    if (window == Window::composite) {
      Matrix stacked(current.dim() + m, n_cols);
      stacked.topRows(current.dim()) = current.members();
      stacked.bottomRows(m) = advanced;
      forecast = EnsembleMatrix(std::move(stacked), labels);
    } else {
      forecast = EnsembleMatrix(std::move(advanced), labels);
    }
    if (options.retain_forecasts) out.forecasts.push_back(forecast);

    // h_n = H_i (X_i^n - mean_i) and innovations y_i - W_i^n - H_i X_i^n.
    const EnsembleMatrix newest = forecast.block(forecast.dim() - m, m);
    const Vector newest_mean = sample_mean(newest);
    const Index d = hi.rows();
    Matrix obs_devs(d, n_cols);
    Matrix innovations(d, n_cols);
    for (std::size_t n = 0; n < members; ++n) {
      const auto col = static_cast<Index>(n);
      obs_devs.col(col) = hi * (newest.member(n) - newest_mean);
      const Vector w = lr.triangularView<Eigen::Lower>() *
                       stream.draw({Phase::smoother, 0, step, labels[n], DrawKind::obs_noise}, d);
      innovations.col(col) = os.value - w - hi * newest.member(n);
    }

    const CovarianceProducts products = provider(i, forecast, obs_devs);
    analysis_update(forecast, products, os.obs_cov, innovations,
                    indexed_field("innovation covariance", i));
    current = std::move(forecast);
    out.means.push_back(sample_mean(current));
    out.analyses.push_back(current);
  }
  return out;
}

}  // namespace detail

namespace {

void require_members(std::size_t members) {
  if (members < 2) throw ValidationError("members", "ensemble size N must be at least 2");
}

}  // namespace

EnsembleRunResult enkf_run(const AssimilationProblem& p, std::size_t members,
                           const PerturbationStream& stream, const EnsembleOptions& options) {
  require_members(members);
  return detail::run_linear_ensemble(p, members, stream, options, detail::Window::state,
                                     detail::sample_provider());
}

EnsembleRunResult enks_run(const AssimilationProblem& p, std::size_t members,
                           const PerturbationStream& stream, const EnsembleOptions& options) {
  require_members(members);
  return detail::run_linear_ensemble(p, members, stream, options, detail::Window::composite,
                                     detail::sample_provider());
}

ReferenceRunResult reference_enks_run(const AssimilationProblem& p, std::size_t members,
                                      const PerturbationStream& stream,
                                      const EnsembleOptions& options) {
  const SmootherResult exact = ks_run(p);
  const Index m = p.state_dim();
  auto exact_provider = [&](std::size_t i, const EnsembleMatrix&, const Matrix&) {
    const Matrix& fc = exact.steps.at(i - 1).forecast.covariance;
    const Matrix& hi = p.observation(i).op.matrix();
    CovarianceProducts products;
    products.cross = fc.rightCols(m) * hi.transpose();
    products.obs = hi * fc.bottomRightCorner(m, m) * hi.transpose();
    return products;
  };
  EnsembleRunResult run = detail::run_linear_ensemble(
      p, members, stream, options, detail::Window::composite, exact_provider);
  ReferenceRunResult out;
  out.analyses = std::move(run.analyses);
  for (const auto& s : exact.steps) out.exact_forecast_covs.push_back(s.forecast.covariance);
  return out;
}

CoupledError coupled_enks_error(const AssimilationProblem& p, std::size_t members,
                                const PerturbationStream& stream, double p_norm,
                                std::size_t replicates) {
  if (replicates == 0) throw ValidationError("replicates", "need at least one replicate");
  if (!(p_norm >= 1.0)) throw ValidationError("p_order", "p-norm order must be >= 1");
  CoupledError out;
  out.raw.reserve(replicates);
  for (std::size_t r = 0; r < replicates; ++r) {
    const PerturbationStream rs = stream.derived(r);
    const EnsembleRunResult ens = enks_run(p, members, rs);
    const ReferenceRunResult ref = reference_enks_run(p, members, rs);
    out.raw.push_back((ens.analyses.back().member(0) - ref.analyses.back().member(0)).norm());
  }
  out.estimate = empirical_lp_norm(std::span<const double>(out.raw), p_norm);
  return out;
}

}  // namespace ensvar
