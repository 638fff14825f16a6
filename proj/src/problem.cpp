#include "ensvar/problem.hpp"

#include <algorithm>
#include <cmath>

#include "ensvar/errors.hpp"
#include "ensvar/perturbation.hpp"

namespace ensvar {

Operator::Operator(std::string name, Index input_dim, Index output_dim, Map map,
                   std::optional<JacobianMap> jacobian, bool linear)
    : name_(std::move(name)),
      input_dim_(input_dim),
      output_dim_(output_dim),
      map_(std::move(map)),
      jacobian_(std::move(jacobian)),
      linear_(linear) {
  if (!map_) throw ValidationError(name_, "operator has no map");
  if (linear_) {
    // Columns are the images of the unit vectors.
    Matrix a(output_dim_, input_dim_);
    for (Index c = 0; c < input_dim_; ++c) {
      const Vector image = map_(Vector::Unit(input_dim_, c));
      if (image.size() != output_dim_) {
        throw DimensionError(name_, "operator output length");
      }
      a.col(c) = image;
    }
    matrix_ = std::move(a);
  }
}

Operator Operator::linear(std::string name, Matrix a) {
  const Index in = a.cols(), out = a.rows();
  Operator op(std::move(name), in, out, [a](const Vector& x) -> Vector { return a * x; },
              std::nullopt, true);
  op.matrix_ = std::move(a);
  return op;
}

Operator Operator::identity(std::string name, Index dim) {
  return linear(std::move(name), Matrix::Identity(dim, dim));
}

Operator Operator::zero(std::string name, Index input_dim, Index output_dim) {
  return linear(std::move(name), Matrix::Zero(output_dim, input_dim));
}

Vector Operator::apply(const Vector& x) const {
  if (x.size() != input_dim_) throw DimensionError(name_, "operator input length");
  Vector y = map_(x);
  if (y.size() != output_dim_) throw DimensionError(name_, "operator output length");
  return y;
}

Matrix Operator::jacobian(const Vector& at) const {
  if (linear_) return *matrix_;
  if (!jacobian_) throw MissingJacobianError(name_);
  if (at.size() != input_dim_) throw DimensionError(name_, "Jacobian point length");
  Matrix j = (*jacobian_)(at);
  if (j.rows() != output_dim_ || j.cols() != input_dim_) {
    throw DimensionError(name_, "Jacobian shape");
  }
  return j;
}

const Matrix& Operator::matrix() const {
  if (!linear_) throw NonlinearOperatorError(name_);
  return *matrix_;
}

bool AssimilationProblem::is_linear() const {
  return std::all_of(models.begin(), models.end(), [](const auto& s) { return s.model.is_linear(); }) &&
         std::all_of(observations.begin(), observations.end(),
                     [](const auto& s) { return s.op.is_linear(); });
}

Trajectory::Trajectory(std::vector<Vector> states) : states_(std::move(states)) {
  for (const auto& s : states_) {
    if (!s.allFinite()) throw ValidationError("trajectory", "non-finite trajectory entry");
    if (s.size() != states_.front().size()) {
      throw DimensionError("trajectory", "states must share one length");
    }
  }
}

Trajectory Trajectory::from_composite(const Vector& stacked, Index dim) {
  if (dim <= 0 || stacked.size() % dim != 0) {
    throw DimensionError("trajectory", "composite length not a multiple of the state dimension");
  }
  std::vector<Vector> states;
  for (Index offset = 0; offset < stacked.size(); offset += dim) {
    states.emplace_back(stacked.segment(offset, dim));
  }
  return Trajectory(std::move(states));
}

Vector Trajectory::composite() const {
  if (states_.empty()) return {};
  const Index dim = states_.front().size();
  Vector out(dim * static_cast<Index>(states_.size()));
  for (std::size_t i = 0; i < states_.size(); ++i) {
    out.segment(static_cast<Index>(i) * dim, dim) = states_[i];
  }
  return out;
}

std::string indexed_field(const std::string& base, std::size_t i) {
  return base + "[" + std::to_string(i) + "]";
}

namespace {

void check_square(const Matrix& a, Index dim, const std::string& field) {
  if (a.rows() != dim || a.cols() != dim) {
    throw DimensionError(field, "expected " + std::to_string(dim) + "x" + std::to_string(dim) +
                                    ", got " + std::to_string(a.rows()) + "x" +
                                    std::to_string(a.cols()));
  }
  SpdFactor(a, field);
}

void check_length(const Vector& v, Index dim, const std::string& field) {
  if (v.size() != dim) {
    throw DimensionError(field, "expected length " + std::to_string(dim) + ", got " +
                                    std::to_string(v.size()));
  }
  if (!v.allFinite()) throw ValidationError(field, field + " has non-finite entries");
}

void check_linearity(const Operator& op, const std::string& field, std::uint32_t tag) {
  const PerturbationStream probe(0x5eed'0f'11'aeULL);
  for (std::uint64_t trial = 0; trial < 3; ++trial) {
    const Vector u = probe.draw({Phase::validation, tag, 0, trial, DrawKind::init}, op.input_dim());
    const Vector v =
        probe.draw({Phase::validation, tag, 1, trial, DrawKind::init}, op.input_dim());
    const Vector ab = probe.draw({Phase::validation, tag, 2, trial, DrawKind::init}, 2);
    const double alpha = ab(0), beta = ab(1);
    const Vector fu = op.apply(u), fv = op.apply(v);
    const Vector lhs = op.apply(alpha * u + beta * v);
    const Vector rhs = alpha * fu + beta * fv;
    const double scale = std::abs(alpha) * fu.norm() + std::abs(beta) * fv.norm() + lhs.norm();
    if ((lhs - rhs).norm() > 1e-12 * std::max(scale, 1e-300)) {
      throw ValidationError(field, field + " is flagged linear but fails the linearity check");
    }
  }
}

}  // namespace

const AssimilationProblem& validate_problem(const AssimilationProblem& p) {
  const Index m = p.state_dim();
  if (m <= 0) throw DimensionError("state_dim", "state dimension must be positive");
  if (p.horizon() == 0) throw DimensionError("horizon", "horizon must be positive");
  if (p.observations.size() != p.horizon()) {
    throw DimensionError("observations", "one observation step per model step required");
  }
  check_length(p.background_mean, m, "x_b");
  check_square(p.background_cov, m, "B");
  for (std::size_t i = 1; i <= p.horizon(); ++i) {
    const auto& ms = p.model(i);
    if (ms.model.input_dim() != m || ms.model.output_dim() != m) {
      throw DimensionError(indexed_field("M", i), "model operator must map R^m to R^m");
    }
    check_length(ms.forcing, m, indexed_field("mu", i));
    check_square(ms.model_cov, m, indexed_field("Q", i));
    if (ms.model.is_linear()) check_linearity(ms.model, indexed_field("M", i), 2 * i);

    const auto& os = p.observation(i);
    const Index d = os.op.output_dim();
    if (os.op.input_dim() != m) {
      throw DimensionError(indexed_field("H", i), "observation operator input must be R^m");
    }
    if (d <= 0) throw DimensionError(indexed_field("H", i), "observation dimension must be positive");
    check_length(os.value, d, indexed_field("y", i));
    check_square(os.obs_cov, d, indexed_field("R", i));
    if (os.op.is_linear()) check_linearity(os.op, indexed_field("H", i), 2 * i + 1);
  }
  return p;
}

void require_linear(const AssimilationProblem& p) {
  for (std::size_t i = 1; i <= p.horizon(); ++i) {
    if (!p.model(i).model.is_linear()) throw NonlinearOperatorError(indexed_field("M", i));
    if (!p.observation(i).op.is_linear()) throw NonlinearOperatorError(indexed_field("H", i));
  }
}

Trajectory prior_chain(const AssimilationProblem& p) {
  std::vector<Vector> states{p.background_mean};
  for (std::size_t i = 1; i <= p.horizon(); ++i) {
    states.push_back(p.model(i).model.apply(states.back()) + p.model(i).forcing);
  }
  return Trajectory(std::move(states));
}

}  // namespace ensvar
