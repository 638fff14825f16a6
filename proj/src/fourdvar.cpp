#include "ensvar/fourdvar.hpp"

#include <algorithm>
#include <cmath>

#include "ensvar/ensemble.hpp"
#include "ensvar/errors.hpp"
#include "ensvar/kalman.hpp"

namespace ensvar {

std::string to_string(LMMode mode) {
  switch (mode) {
    case LMMode::exact:
      return "exact";
    case LMMode::tangent:
      return "tangent";
    case LMMode::finite_difference:
      return "finite-difference";
  }
  return "unknown";
}

LMMode lm_mode_from_string(const std::string& name) {
  if (name == "exact") return LMMode::exact;
  if (name == "tangent") return LMMode::tangent;
  if (name == "finite-difference" || name == "fd") return LMMode::finite_difference;
  throw ValidationError("mode", "unknown LM mode '" + name + "'");
}

std::size_t LMConfig::ensemble_size(std::size_t iteration) const {
  if (ensemble_sizes.empty()) throw ValidationError("ensemble_sizes", "empty schedule");
  const std::size_t idx = std::min(iteration == 0 ? 0 : iteration - 1, ensemble_sizes.size() - 1);
  return ensemble_sizes[idx];
}

void validate_config(const LMConfig& cfg, const AssimilationProblem& p) {
  if (!(cfg.gamma >= 0.0) || !std::isfinite(cfg.gamma)) {
    throw ValidationError("gamma", "gamma must be finite and >= 0");
  }
  if (cfg.mode != LMMode::exact && !(cfg.gamma > 0.0)) {
    throw ValidationError("gamma", "ensemble LM modes require gamma > 0");
  }
  if (!(cfg.tau > 0.0)) throw ValidationError("tau", "tau must be > 0");
  if (cfg.max_iterations < 1) throw ValidationError("max_iterations", "need at least one iteration");
  if (cfg.mode != LMMode::exact) {
    if (cfg.ensemble_sizes.empty()) throw ValidationError("ensemble_sizes", "empty schedule");
    for (std::size_t n : cfg.ensemble_sizes) {
      if (n < 2) throw ValidationError("ensemble_sizes", "every N_j must be at least 2");
    }
  }
  if (cfg.initial) {
    if (cfg.initial->size() != p.horizon() + 1 ||
        (*cfg.initial)[0].size() != p.state_dim()) {
      throw DimensionError("initial_trajectory", "expected k+1 states of length m");
    }
  }
}

namespace {

void check_trajectory(const AssimilationProblem& p, const Trajectory& x, const std::string& name) {
  if (x.size() != p.horizon() + 1) throw DimensionError(name, "expected k+1 states");
  for (const auto& s : x.states()) {
    if (s.size() != p.state_dim()) throw DimensionError(name, "state length must be m");
  }
}

void require_gamma_positive(double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw ValidationError("gamma", "augmented observations need finite gamma > 0");
  }
}

Operator stacked_observation(const Operator& h, std::size_t i) {
  const Index m = h.input_dim();
  const Index d = h.output_dim();
  auto map = [h, d, m](const Vector& x) -> Vector {
    Vector out(d + m);
    out.head(d) = h.apply(x);
    out.tail(m) = x;
    return out;
  };
  std::optional<Operator::JacobianMap> jac;
  if (h.has_jacobian()) {
    jac = [h, d, m](const Vector& x) -> Matrix {
      Matrix out(d + m, m);
      out.topRows(d) = h.jacobian(x);
      out.bottomRows(m).setIdentity();
      return out;
    };
  }
  return Operator(indexed_field("H~", i), m, d + m, std::move(map), std::move(jac), h.is_linear());
}

Matrix augmented_cov(const Matrix& r, Index m, double gamma) {
  const Index d = r.rows();
  Matrix out = Matrix::Zero(d + m, d + m);
  out.topLeftCorner(d, d) = r;
  out.bottomRightCorner(m, m) = Matrix::Identity(m, m) / gamma;
  return out;
}

}  // namespace

std::vector<AugmentedObservation> augment(const AssimilationProblem& p, const Trajectory& x_prev,
                                          double gamma) {
  require_gamma_positive(gamma);
  check_trajectory(p, x_prev, "x_prev");
  const Index m = p.state_dim();
  std::vector<AugmentedObservation> out;
  for (std::size_t i = 1; i <= p.horizon(); ++i) {
    const auto& os = p.observation(i);
    AugmentedObservation a;
    a.value.resize(os.value.size() + m);
    a.value.head(os.value.size()) = os.value;
    a.value.tail(m) = x_prev[i];
    a.op = stacked_observation(os.op, i);
    a.cov = augmented_cov(os.obs_cov, m, gamma);
    SpdFactor(a.cov, indexed_field("R~", i));
    out.push_back(std::move(a));
  }
  return out;
}

double objective(const AssimilationProblem& p, const Trajectory& x) {
  validate_problem(p);
  check_trajectory(p, x, "trajectory");
  double total = SpdFactor(p.background_cov, "B").inverse_weighted_norm2(x[0] - p.background_mean);
  for (std::size_t i = 1; i <= p.horizon(); ++i) {
    const auto& ms = p.model(i);
    const auto& os = p.observation(i);
    total += SpdFactor(ms.model_cov, indexed_field("Q", i))
                 .inverse_weighted_norm2(x[i] - ms.model.apply(x[i - 1]) - ms.forcing);
    total += SpdFactor(os.obs_cov, indexed_field("R", i))
                 .inverse_weighted_norm2(os.value - os.op.apply(x[i]));
  }
  return total;
}

AssimilationProblem linearized_problem(const AssimilationProblem& p, const Trajectory& x_prev,
                                       double gamma) {
  validate_problem(p);
  check_trajectory(p, x_prev, "x_prev");
  if (!(gamma >= 0.0)) throw ValidationError("gamma", "gamma must be >= 0");
  const Index m = p.state_dim();
  AssimilationProblem lin;
  lin.background_mean = p.background_mean;
  lin.background_cov = p.background_cov;
  for (std::size_t i = 1; i <= p.horizon(); ++i) {
    const auto& ms = p.model(i);
    const Vector& center = x_prev[i - 1];
    const Matrix jm = ms.model.jacobian(center);
    lin.models.push_back({Operator::linear(indexed_field("M_lin", i), jm),
                          ms.model.apply(center) + ms.forcing - jm * center, ms.model_cov});

    const auto& os = p.observation(i);
    const Vector& xi = x_prev[i];
    const Matrix jh = os.op.jacobian(xi);
    const Vector shifted = os.value + jh * xi - os.op.apply(xi);
    if (gamma > 0.0) {
      const Index d = jh.rows();
      Matrix stacked(d + m, m);
      stacked.topRows(d) = jh;
      stacked.bottomRows(m).setIdentity();
      Vector value(d + m);
      // The identity block has H~'(x) x - H~(x) = 0, so its datum stays x_i^{j-1}.
      value.head(d) = shifted;
      value.tail(m) = xi;
      lin.observations.push_back({Operator::linear(indexed_field("H_lin", i), stacked),
                                  augmented_cov(os.obs_cov, m, gamma), value});
    } else {
      lin.observations.push_back(
          {Operator::linear(indexed_field("H_lin", i), jh), os.obs_cov, shifted});
    }
  }
  return lin;
}

Trajectory lm_exact_step(const AssimilationProblem& p, const Trajectory& x_prev, double gamma) {
  const SmootherResult ks = ks_run(linearized_problem(p, x_prev, gamma));
  return Trajectory::from_composite(ks.composite.mean, p.state_dim());
}

LMRunResult lm_exact_run(const AssimilationProblem& p, const LMConfig& cfg) {
  validate_problem(p);
  LMConfig exact = cfg;
  exact.mode = LMMode::exact;
  validate_config(exact, p);
  LMRunResult out;
  out.iterates.push_back(cfg.initial ? *cfg.initial : prior_chain(p));
  out.objectives.push_back(objective(p, out.iterates.back()));
  for (std::size_t j = 1; j <= cfg.max_iterations; ++j) {
    out.iterates.push_back(lm_exact_step(p, out.iterates.back(), cfg.gamma));
    out.objectives.push_back(objective(p, out.iterates.back()));
  }
  return out;
}

Vector fd_directional(const std::function<Vector(const Vector&)>& f, const Vector& x,
                      const Vector& y, double tau) {
  if (!(tau > 0.0)) throw ValidationError("tau", "finite-difference step must be > 0");
  return (f(x + tau * y) - f(x)) / tau;
}

namespace {

/// Directional derivative of an operator around a fixed center, either through
/// its Jacobian or by forward differences.
class Linearization {
 public:
  Linearization(const Operator& op, const Vector& center, LMMode mode, double tau)
      : op_(op), center_(center), value_(op.apply(center)), mode_(mode), tau_(tau) {
    if (mode_ == LMMode::tangent) jacobian_ = op.jacobian(center);
  }

  const Vector& value() const { return value_; }

  Vector derivative(const Vector& direction) const {
    if (mode_ == LMMode::tangent) return jacobian_ * direction;
    return fd_directional([this](const Vector& x) { return op_.apply(x); }, center_, direction,
                          tau_);
  }

 private:
  const Operator& op_;
  Vector center_;
  Vector value_;
  LMMode mode_;
  double tau_;
  Matrix jacobian_;
};

LMRunResult run_lm_ensemble(const AssimilationProblem& p, const LMConfig& cfg,
                            const PerturbationStream& stream, const LMEnsembleOptions& options,
                            LMMode mode) {
  validate_problem(p);
  LMConfig checked = cfg;
  checked.mode = mode;
  validate_config(checked, p);
  const Index m = p.state_dim();
  const Matrix lb = cholesky_spd(p.background_cov, "B");

  LMRunResult out;
  Trajectory center = cfg.initial ? *cfg.initial : prior_chain(p);
  out.iterates.push_back(center);
  out.objectives.push_back(objective(p, center));

  for (std::size_t j = 1; j <= cfg.max_iterations; ++j) {
    const std::size_t members = cfg.ensemble_size(j);
    const auto labels = detail::resolve_labels(options.member_labels, members);
    const auto n_cols = static_cast<Index>(members);
    const auto iter = static_cast<std::uint32_t>(j);
    const auto augmented = augment(p, center, cfg.gamma);

    // Initial ensemble centered at x_b (the background term of the linearized problem).
    Matrix init(m, n_cols);
    for (std::size_t n = 0; n < members; ++n) {
      init.col(static_cast<Index>(n)) =
          options.zero_initial_spread
              ? p.background_mean
              : color(p.background_mean, lb,
                      stream.draw({Phase::lm, iter, 0, labels[n], DrawKind::init}, m));
    }
    EnsembleMatrix current(std::move(init), labels);

    for (std::size_t i = 1; i <= p.horizon(); ++i) {
      const auto step = static_cast<std::uint32_t>(i);
      const auto& ms = p.model(i);
      const Matrix lq = cholesky_spd(ms.model_cov, indexed_field("Q", i));
      const Linearization model(ms.model, center[i - 1], mode, cfg.tau);

      Matrix stacked(current.dim() + m, n_cols);
      stacked.topRows(current.dim()) = current.members();
      for (std::size_t n = 0; n < members; ++n) {
        const Vector delta = current.member(n).tail(m) - center[i - 1];
        const Vector noise = lq.triangularView<Eigen::Lower>() *
                             stream.draw({Phase::lm, iter, step, labels[n], DrawKind::model_noise}, m);
        stacked.col(static_cast<Index>(n)).tail(m) =
            model.derivative(delta) + model.value() + ms.forcing + noise;
      }
      EnsembleMatrix forecast(std::move(stacked), labels);

      const auto& aug = augmented[i - 1];
      const Index d = aug.value.size();
      const Matrix lr = cholesky_spd(aug.cov, indexed_field("R~", i));
      const Linearization obs(aug.op, center[i], mode, cfg.tau);
      const EnsembleMatrix newest = forecast.block(forecast.dim() - m, m);
      const Vector newest_mean = sample_mean(newest);

      Matrix obs_devs(d, n_cols);
      Matrix innovations(d, n_cols);
      for (std::size_t n = 0; n < members; ++n) {
        const auto col = static_cast<Index>(n);
        const Vector x = newest.member(n);
        obs_devs.col(col) = obs.derivative(x - newest_mean);
        const Vector w = lr.triangularView<Eigen::Lower>() *
                         stream.draw({Phase::lm, iter, step, labels[n], DrawKind::obs_noise}, d);
        innovations.col(col) = aug.value - w - obs.value() - obs.derivative(x - center[i]);
      }
      analysis_update(forecast, sample_products(forecast, obs_devs), aug.cov, innovations,
                      indexed_field("innovation covariance", i));
      current = std::move(forecast);
    }

    double max_norm = 0.0;
    for (std::size_t n = 0; n < members; ++n) max_norm = std::max(max_norm, current.member(n).norm());
    out.max_member_norms.push_back(max_norm);
    center = Trajectory::from_composite(sample_mean(current), m);
    out.iterates.push_back(center);
    out.objectives.push_back(objective(p, center));
    if (options.retain_ensembles) out.ensembles.push_back(current);
  }
  return out;
}

}  // namespace

LMRunResult lm_enks_tangent_run(const AssimilationProblem& p, const LMConfig& cfg,
                                const PerturbationStream& stream,
                                const LMEnsembleOptions& options) {
  return run_lm_ensemble(p, cfg, stream, options, LMMode::tangent);
}

LMRunResult enks_4dvar_run(const AssimilationProblem& p, const LMConfig& cfg,
                           const PerturbationStream& stream, const LMEnsembleOptions& options) {
  return run_lm_ensemble(p, cfg, stream, options, LMMode::finite_difference);
}

}  // namespace ensvar
