#include "ensvar/kalman.hpp"

#include "ensvar/errors.hpp"

namespace ensvar {

namespace {

Matrix symmetrized(const Matrix& c) { return 0.5 * (c + c.transpose()); }

/// K = cross * S^{-1} for symmetric S, computed as (S^{-1} cross^T)^T.
Matrix gain_from(const Matrix& cross, const Matrix& innovation_cov, const std::string& name) {
  const SpdFactor s(innovation_cov, name);
  return s.solve(Matrix(cross.transpose())).transpose();
}

}  // namespace

FilterResult kf_run(const AssimilationProblem& p) {
  validate_problem(p);
  require_linear(p);
  FilterResult out;
  Vector mean = p.background_mean;
  Matrix cov = p.background_cov;
  out.analyses.push_back({mean, cov});
  for (std::size_t i = 1; i <= p.horizon(); ++i) {
    const auto& ms = p.model(i);
    const auto& os = p.observation(i);
    const Matrix& m = ms.model.matrix();
    const Matrix& h = os.op.matrix();

    KalmanStepDiag diag;
    diag.forecast.mean = m * mean + ms.forcing;
    diag.forecast.covariance = symmetrized(m * cov * m.transpose() + ms.model_cov);
    const Matrix pht = diag.forecast.covariance * h.transpose();
    diag.gain = gain_from(pht, h * pht + os.obs_cov, indexed_field("innovation covariance", i));
    diag.innovation = os.value - h * diag.forecast.mean;

    mean = diag.forecast.mean + diag.gain * diag.innovation;
    const Index dim = p.state_dim();
    cov = symmetrized((Matrix::Identity(dim, dim) - diag.gain * h) * diag.forecast.covariance);
    out.analyses.push_back({mean, cov});
    out.steps.push_back(std::move(diag));
  }
  return out;
}

SmootherResult ks_run(const AssimilationProblem& p) {
  validate_problem(p);
  require_linear(p);
  const Index m = p.state_dim();
  SmootherResult out;
  Vector mean = p.background_mean;
  Matrix cov = p.background_cov;
  out.analyses.push_back({mean, cov});
  for (std::size_t i = 1; i <= p.horizon(); ++i) {
    const auto& ms = p.model(i);
    const auto& os = p.observation(i);
    const Matrix& mi = ms.model.matrix();
    const Matrix& hi = os.op.matrix();
    const Index prev = mean.size();
    const Index next = prev + m;

    // Forecast of the composite state: old blocks unchanged, new block M_i x_{i-1} + mu_i.
    KalmanStepDiag diag;
    diag.forecast.mean.resize(next);
    diag.forecast.mean.head(prev) = mean;
    diag.forecast.mean.tail(m) = mi * mean.tail(m) + ms.forcing;

    // M~_i P_{0:i-1|i-1} touches only the trailing block row.
    const Matrix mp = mi * cov.bottomRows(m);
    Matrix& fc = diag.forecast.covariance;
    fc.resize(next, next);
    fc.topLeftCorner(prev, prev) = cov;
    fc.topRightCorner(prev, m) = mp.transpose();
    fc.bottomLeftCorner(m, prev) = mp;
    fc.bottomRightCorner(m, m) = mp.rightCols(m) * mi.transpose() + ms.model_cov;
    fc = symmetrized(fc);

    // H~_i = [0 ... H_i]: products only involve the trailing block column.
    const Matrix pht = fc.rightCols(m) * hi.transpose();
    const Matrix s = os.obs_cov + hi * fc.bottomRightCorner(m, m) * hi.transpose();
    diag.gain = gain_from(pht, s, indexed_field("innovation covariance", i));
    diag.innovation = os.value - hi * diag.forecast.mean.tail(m);

    mean = diag.forecast.mean + diag.gain * diag.innovation;
    // (I - K H~) P = P - K (H~ P), with H~ P = H_i P[last block rows].
    cov = symmetrized(fc - diag.gain * (hi * fc.bottomRows(m)));
    out.analyses.push_back({mean, cov});
    out.steps.push_back(std::move(diag));
  }
  out.composite = out.analyses.back();
  return out;
}

Vector ks_least_squares_oracle(const AssimilationProblem& p) {
  validate_problem(p);
  require_linear(p);
  const Index m = p.state_dim();
  const auto k = static_cast<Index>(p.horizon());
  const Index n = m * (k + 1);
  Matrix normal = Matrix::Zero(n, n);
  Vector rhs = Vector::Zero(n);

  // Adds the residual J x - c weighted by W^{-1}.
  auto accumulate = [&](const Matrix& jac, const Vector& c, const Matrix& weight_cov,
                        const std::string& name) {
    const SpdFactor w(weight_cov, name);
    const Matrix wj = w.solve(jac);
    normal.noalias() += jac.transpose() * wj;
    rhs.noalias() += wj.transpose() * c;
  };

  Matrix jb = Matrix::Zero(m, n);
  jb.leftCols(m).setIdentity();
  accumulate(jb, p.background_mean, p.background_cov, "B");

  for (Index i = 1; i <= k; ++i) {
    const auto& ms = p.model(static_cast<std::size_t>(i));
    Matrix jm = Matrix::Zero(m, n);
    jm.middleCols((i - 1) * m, m) = -ms.model.matrix();
    jm.middleCols(i * m, m).setIdentity();
    accumulate(jm, ms.forcing, ms.model_cov, indexed_field("Q", static_cast<std::size_t>(i)));

    const auto& os = p.observation(static_cast<std::size_t>(i));
    Matrix jh = Matrix::Zero(os.op.output_dim(), n);
    jh.middleCols(i * m, m) = os.op.matrix();
    accumulate(jh, os.value, os.obs_cov, indexed_field("R", static_cast<std::size_t>(i)));
  }
  return spd_solve(0.5 * (normal + normal.transpose()), rhs, "normal equations");
}

}  // namespace ensvar
