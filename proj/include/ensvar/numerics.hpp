#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

namespace ensvar {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Cholesky factorization of a symmetric positive definite matrix. Every
/// inverse in the library goes through one of these; no explicit inverses.
class SpdFactor {
 public:
  /// Throws NotSpdError(name) if a pivot is not strictly positive.
  explicit SpdFactor(const Matrix& a, const std::string& name = "matrix");

  Index dim() const { return llt_.rows(); }
  Matrix lower() const { return llt_.matrixL(); }
  Vector solve(const Vector& b) const { return llt_.solve(b); }
  Matrix solve(const Matrix& b) const { return llt_.solve(b); }
  /// |v|^2 weighted by the inverse of the factored matrix.
  double inverse_weighted_norm2(const Vector& v) const;

 private:
  Eigen::LLT<Matrix> llt_;
};

/// Lower-triangular L with A = L L^T.
Matrix cholesky_spd(const Matrix& a, const std::string& name = "matrix");

Vector spd_solve(const Matrix& a, const Vector& b, const std::string& name = "matrix");
Matrix spd_solve(const Matrix& a, const Matrix& b, const std::string& name = "matrix");

/// N members of equal length q, stored as the columns of a q x N matrix.
///
/// Each member carries a label (by default its slot index). Sample statistics
/// always sum in ascending label order, so relabelling the members of a run
/// and permuting the slots the same way gives bit-identical statistics.
class EnsembleMatrix {
 public:
  EnsembleMatrix() = default;
  explicit EnsembleMatrix(Matrix members);
  EnsembleMatrix(Matrix members, std::vector<std::size_t> labels);

  std::size_t size() const { return static_cast<std::size_t>(members_.cols()); }
  Index dim() const { return members_.rows(); }

  const Matrix& members() const { return members_; }
  Matrix& members() { return members_; }
  auto member(std::size_t n) const { return members_.col(static_cast<Index>(n)); }
  auto member(std::size_t n) { return members_.col(static_cast<Index>(n)); }

  const std::vector<std::size_t>& labels() const { return labels_; }
  /// Slot indices sorted by ascending label.
  const std::vector<std::size_t>& canonical_order() const { return order_; }

  /// Rows [offset, offset+count) of every member, labels preserved.
  EnsembleMatrix block(Index offset, Index count) const;

 private:
  Matrix members_;
  std::vector<std::size_t> labels_;
  std::vector<std::size_t> order_;
};

Vector sample_mean(const EnsembleMatrix& e);

/// Unbiased (1/(N-1)) sample covariance. Requires N >= 2.
Matrix sample_covariance(const EnsembleMatrix& e);

/// ((1/R) sum_r |v_r|^p)^(1/p) with |.| the Euclidean norm.
double empirical_lp_norm(std::span<const Vector> samples, double p);
double empirical_lp_norm(std::span<const double> samples, double p);

struct LogLogFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Ordinary least squares of log(y) on log(x).
LogLogFit fit_loglog_slope(std::span<const double> xs, std::span<const double> ys);

/// max |C - C^T| relative check and eigenvalue check used by GaussianEstimate.
bool is_symmetric_psd(const Matrix& c, double sym_tol = 1e-12, double psd_tol = 1e-10);

/// |a - b| / max(|b|, tiny), Euclidean.
double relative_difference(const Vector& a, const Vector& b);
double relative_difference(const Matrix& a, const Matrix& b);

}  // namespace ensvar
