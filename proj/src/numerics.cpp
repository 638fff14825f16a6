#include "ensvar/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "ensvar/errors.hpp"

namespace ensvar {

SpdFactor::SpdFactor(const Matrix& a, const std::string& name) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw DimensionError(name, "expected a nonempty square matrix");
  }
  if (!a.allFinite()) throw NotSpdError(name);
  const double scale = a.cwiseAbs().maxCoeff();
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(scale, 1.0)) {
    throw NotSpdError(name);
  }
  llt_.compute(a);
  if (llt_.info() != Eigen::Success) throw NotSpdError(name);
  // LLT reports success on some tiny pivots; insist on strictly positive ones.
  const auto diag = llt_.matrixLLT().diagonal();
  if ((diag.array() <= 0.0).any() || !diag.allFinite()) throw NotSpdError(name);
}

double SpdFactor::inverse_weighted_norm2(const Vector& v) const {
  const Vector w = llt_.matrixL().solve(v);
  return w.squaredNorm();
}

Matrix cholesky_spd(const Matrix& a, const std::string& name) {
  return SpdFactor(a, name).lower();
}

Vector spd_solve(const Matrix& a, const Vector& b, const std::string& name) {
  if (b.size() != a.rows()) throw DimensionError(name, "right-hand side length");
  return SpdFactor(a, name).solve(b);
}

Matrix spd_solve(const Matrix& a, const Matrix& b, const std::string& name) {
  if (b.rows() != a.rows()) throw DimensionError(name, "right-hand side rows");
  return SpdFactor(a, name).solve(b);
}

namespace {

std::vector<std::size_t> iota_labels(std::size_t n) {
  std::vector<std::size_t> labels(n);
  std::iota(labels.begin(), labels.end(), std::size_t{0});
  return labels;
}

}  // namespace

EnsembleMatrix::EnsembleMatrix(Matrix members)
    : EnsembleMatrix(std::move(members), {}) {}

EnsembleMatrix::EnsembleMatrix(Matrix members, std::vector<std::size_t> labels)
    : members_(std::move(members)), labels_(std::move(labels)) {
  if (labels_.empty()) labels_ = iota_labels(size());
  if (labels_.size() != size()) {
    throw DimensionError("ensemble labels", "one label per member required");
  }
  order_ = iota_labels(size());
  std::sort(order_.begin(), order_.end(),
            [this](std::size_t a, std::size_t b) { return labels_[a] < labels_[b]; });
  for (std::size_t i = 1; i < order_.size(); ++i) {
    if (labels_[order_[i]] == labels_[order_[i - 1]]) {
      throw ValidationError("ensemble labels", "member labels must be distinct");
    }
  }
}

EnsembleMatrix EnsembleMatrix::block(Index offset, Index count) const {
  EnsembleMatrix out;
  out.members_ = members_.middleRows(offset, count);
  out.labels_ = labels_;
  out.order_ = order_;
  return out;
}

Vector sample_mean(const EnsembleMatrix& e) {
  if (e.size() == 0) throw ValidationError("ensemble", "empty ensemble");
  Vector sum = Vector::Zero(e.dim());
  for (std::size_t n : e.canonical_order()) sum += e.member(n);
  return sum / static_cast<double>(e.size());
}

Matrix sample_covariance(const EnsembleMatrix& e) {
  if (e.size() < 2) {
    throw ValidationError("ensemble", "sample covariance needs at least 2 members");
  }
  const Vector mean = sample_mean(e);
  Matrix cov = Matrix::Zero(e.dim(), e.dim());
  for (std::size_t n : e.canonical_order()) {
    const Vector dev = e.member(n) - mean;
    cov.noalias() += dev * dev.transpose();
  }
  cov /= static_cast<double>(e.size() - 1);
  // Exact symmetry; the rank-one sums can differ in the last bit across triangles.
  return 0.5 * (cov + cov.transpose());
}

double empirical_lp_norm(std::span<const double> samples, double p) {
  if (!(p >= 1.0)) throw ValidationError("p", "p-norm order must be >= 1");
  if (samples.empty()) throw ValidationError("samples", "no samples");
  double acc = 0.0;
  for (double s : samples) acc += std::pow(std::abs(s), p);
  return std::pow(acc / static_cast<double>(samples.size()), 1.0 / p);
}

double empirical_lp_norm(std::span<const Vector> samples, double p) {
  std::vector<double> norms;
  norms.reserve(samples.size());
  for (const auto& v : samples) norms.push_back(v.norm());
  return empirical_lp_norm(std::span<const double>(norms), p);
}

LogLogFit fit_loglog_slope(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw DimensionError("ys", "one y per x required");
  if (xs.size() < 2) throw ValidationError("xs", "slope fit needs at least 2 points");
  const auto n = static_cast<double>(xs.size());
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0)) {
      throw ValidationError("xs/ys", "log-log fit needs positive inputs");
    }
    sx += std::log(xs[i]);
    sy += std::log(ys[i]);
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = std::log(xs[i]) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(ys[i]) - my);
  }
  if (sxx == 0.0) throw ValidationError("xs", "log-log fit needs distinct x values");
  LogLogFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

bool is_symmetric_psd(const Matrix& c, double sym_tol, double psd_tol) {
  if (c.rows() != c.cols()) return false;
  if (c.size() == 0) return true;
  const double scale = c.norm();
  if ((c - c.transpose()).norm() > sym_tol * scale) return false;
  if (scale == 0.0) return true;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (c + c.transpose()), Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff() >= -psd_tol * scale;
}

double relative_difference(const Vector& a, const Vector& b) {
  const double denom = std::max(b.norm(), std::numeric_limits<double>::min());
  return (a - b).norm() / denom;
}

double relative_difference(const Matrix& a, const Matrix& b) {
  const double denom = std::max(b.norm(), std::numeric_limits<double>::min());
  return (a - b).norm() / denom;
}

}  // namespace ensvar
