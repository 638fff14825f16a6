#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ensvar/numerics.hpp"

namespace ensvar {

/// A model or observation operator R^in -> R^out with an optional exact Jacobian.
///
/// Operators flagged linear also expose their matrix. Algorithms that need a
/// Jacobian call jacobian(), which throws MissingJacobianError when none was
/// registered; nothing falls back to finite differences silently.
class Operator {
 public:
  using Map = std::function<Vector(const Vector&)>;
  using JacobianMap = std::function<Matrix(const Vector&)>;

  Operator() = default;
  Operator(std::string name, Index input_dim, Index output_dim, Map map,
           std::optional<JacobianMap> jacobian = std::nullopt, bool linear = false);

  static Operator linear(std::string name, Matrix a);
  static Operator identity(std::string name, Index dim);
  static Operator zero(std::string name, Index input_dim, Index output_dim);

  const std::string& name() const { return name_; }
  Index input_dim() const { return input_dim_; }
  Index output_dim() const { return output_dim_; }
  bool is_linear() const { return linear_; }
  bool has_jacobian() const { return linear_ || jacobian_.has_value(); }

  Vector apply(const Vector& x) const;
  Vector operator()(const Vector& x) const { return apply(x); }
  Matrix jacobian(const Vector& at) const;
  /// Matrix of a linear operator; throws NonlinearOperatorError otherwise.
  const Matrix& matrix() const;

 private:
  std::string name_;
  Index input_dim_ = 0;
  Index output_dim_ = 0;
  Map map_;
  std::optional<JacobianMap> jacobian_;
  bool linear_ = false;
  std::optional<Matrix> matrix_;
};

/// Transition from time i-1 to time i: x_i = M_i(x_{i-1}) + mu_i + V_i, V_i ~ N(0, Q_i).
struct ModelStep {
  Operator model;
  Vector forcing;
  Matrix model_cov;
};

/// y_i = H_i(x_i) + W_i, W_i ~ N(0, R_i).
struct ObservationStep {
  Operator op;
  Matrix obs_cov;
  Vector value;
};

/// The stochastic system: X_0 ~ N(x_b, B), then k model steps each followed
/// by an observation. Steps are stored 0-based: models[i-1] is M_i.
struct AssimilationProblem {
  Vector background_mean;
  Matrix background_cov;
  std::vector<ModelStep> models;
  std::vector<ObservationStep> observations;

  Index state_dim() const { return background_mean.size(); }
  std::size_t horizon() const { return models.size(); }
  /// M_i for i = 1..k.
  const ModelStep& model(std::size_t i) const { return models.at(i - 1); }
  /// H_i, R_i, y_i for i = 1..k.
  const ObservationStep& observation(std::size_t i) const { return observations.at(i - 1); }
  bool is_linear() const;
};

/// Composite state x_0..x_k.
class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(std::vector<Vector> states);
  /// Splits a stacked composite vector into `count` blocks of length `dim`.
  static Trajectory from_composite(const Vector& stacked, Index dim);

  std::size_t size() const { return states_.size(); }
  const Vector& operator[](std::size_t i) const { return states_.at(i); }
  const std::vector<Vector>& states() const { return states_; }
  Vector composite() const;

 private:
  std::vector<Vector> states_;
};

struct GaussianEstimate {
  Vector mean;
  Matrix covariance;
};

/// Returns p unchanged when every invariant holds; throws DimensionError or
/// NotSpdError naming the offending field otherwise.
const AssimilationProblem& validate_problem(const AssimilationProblem& p);

/// Throws NonlinearOperatorError unless every M_i and H_i is flagged linear.
void require_linear(const AssimilationProblem& p);

/// x_0 = x_b, x_i = M_i(x_{i-1}) + mu_i.
Trajectory prior_chain(const AssimilationProblem& p);

/// Field names used in error messages, e.g. "R[1]" for R_1.
std::string indexed_field(const std::string& base, std::size_t i);

}  // namespace ensvar
