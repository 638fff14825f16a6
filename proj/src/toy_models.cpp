#include "ensvar/toy_models.hpp"

#include <regex>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "ensvar/errors.hpp"
#include "ensvar/perturbation.hpp"

namespace ensvar {

namespace {

constexpr double kSigma = 10.0;
constexpr double kRho = 28.0;
constexpr double kBeta = 8.0 / 3.0;

Vector lorenz_field(const Vector& x) {
  Vector f(3);
  f << kSigma * (x(1) - x(0)), x(0) * (kRho - x(2)) - x(1), x(0) * x(1) - kBeta * x(2);
  return f;
}

Matrix lorenz_field_jacobian(const Vector& x) {
  Matrix j(3, 3);
  j << -kSigma, kSigma, 0.0,
       kRho - x(2), -1.0, -x(0),
       x(1), x(0), -kBeta;
  return j;
}

AssimilationProblem scalar_problem(Operator model) {
  AssimilationProblem p;
  p.background_mean = Vector::Zero(1);
  p.background_cov = Matrix::Identity(1, 1);
  p.models.push_back({std::move(model), Vector::Zero(1), Matrix::Identity(1, 1)});
  p.observations.push_back({Operator::identity("H[1]", 1), Matrix::Identity(1, 1), Vector::Constant(1, 3.0)});
  return p;
}

/// Draws for building synthetic problems; `slot` separates the quantities.
Vector synthetic(const PerturbationStream& s, std::uint32_t time, std::uint64_t slot, Index dim) {
  return s.draw({Phase::synthetic, 0, time, slot, DrawKind::init}, dim);
}

Matrix random_matrix(const PerturbationStream& s, std::uint32_t time, std::uint64_t slot,
                     Index rows, Index cols) {
  const Vector z = synthetic(s, time, slot, rows * cols);
  return Eigen::Map<const Matrix>(z.data(), rows, cols);
}

Matrix random_spd(const PerturbationStream& s, std::uint32_t time, std::uint64_t slot, Index dim,
                  double floor) {
  const Matrix a = random_matrix(s, time, slot, dim, dim);
  Matrix c = a * a.transpose() / static_cast<double>(dim) + floor * Matrix::Identity(dim, dim);
  return 0.5 * (c + c.transpose());
}

enum Slot : std::uint64_t { kModel, kModelCov, kObsOp, kObsCov, kForcing, kTruth, kObsNoise, kBackground };

AssimilationProblem linear_chain(Index m, std::size_t k, std::uint64_t seed) {
  if (m <= 0 || k == 0) throw ValidationError("linear-chain", "need m >= 1 and k >= 1");
  const PerturbationStream s(seed);
  AssimilationProblem p;
  p.background_mean = 0.5 * synthetic(s, 0, kBackground, m);
  p.background_cov = random_spd(s, 0, kModelCov, m, 0.5);
  const Matrix lb = cholesky_spd(p.background_cov, "B");
  Vector truth = color(p.background_mean, lb, synthetic(s, 0, kTruth, m));

  for (std::size_t i = 1; i <= k; ++i) {
    const auto t = static_cast<std::uint32_t>(i);
    Matrix mi = random_matrix(s, t, kModel, m, m) / std::sqrt(static_cast<double>(m));
    const double radius = Eigen::EigenSolver<Matrix>(mi, false).eigenvalues().cwiseAbs().maxCoeff();
    if (radius > 0.95) mi *= 0.95 / radius;
    const Vector mu = 0.1 * synthetic(s, t, kForcing, m);
    const Matrix q = 0.5 * random_spd(s, t, kModelCov, m, 0.2);
    const Matrix h = random_matrix(s, t, kObsOp, m, m);
    const Matrix r = random_spd(s, t, kObsCov, m, 0.5);

    truth = mi * truth + mu + cholesky_spd(q, "Q").triangularView<Eigen::Lower>() * synthetic(s, t, kTruth, m);
    const Vector y = h * truth + cholesky_spd(r, "R").triangularView<Eigen::Lower>() * synthetic(s, t, kObsNoise, m);
    p.models.push_back({Operator::linear(indexed_field("M", i), mi), mu, q});
    p.observations.push_back({Operator::linear(indexed_field("H", i), h), r, y});
  }
  return validate_problem(p);
}

AssimilationProblem lorenz63(std::size_t k, double dt, std::uint64_t seed) {
  if (k == 0 || !(dt > 0.0)) throw ValidationError("lorenz63", "need k >= 1 and dt > 0");
  const PerturbationStream s(seed);
  AssimilationProblem p;
  p.background_mean = Vector(3);
  p.background_mean << 1.508870, -1.531271, 25.46091;
  p.background_cov = Matrix::Identity(3, 3);
  const Matrix q = 0.01 * Matrix::Identity(3, 3);
  const Matrix r = Matrix::Identity(3, 3);
  Vector truth = p.background_mean + synthetic(s, 0, kTruth, 3);
  for (std::size_t i = 1; i <= k; ++i) {
    const auto t = static_cast<std::uint32_t>(i);
    Operator model(
        indexed_field("M", i), 3, 3, [dt](const Vector& x) { return lorenz63_rk4(x, dt); },
        [dt](const Vector& x) { return lorenz63_rk4_jacobian(x, dt); });
    truth = model.apply(truth) + 0.1 * synthetic(s, t, kTruth, 3);
    const Vector y = truth + synthetic(s, t, kObsNoise, 3);
    p.models.push_back({std::move(model), Vector::Zero(3), q});
    p.observations.push_back({Operator::identity(indexed_field("H", i), 3), r, y});
  }
  return validate_problem(p);
}

}  // namespace

Vector lorenz63_rk4(const Vector& x, double dt) {
  const Vector k1 = lorenz_field(x);
  const Vector k2 = lorenz_field(x + 0.5 * dt * k1);
  const Vector k3 = lorenz_field(x + 0.5 * dt * k2);
  const Vector k4 = lorenz_field(x + dt * k3);
  return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Matrix lorenz63_rk4_jacobian(const Vector& x, double dt) {
  const Matrix id = Matrix::Identity(3, 3);
  const Vector k1 = lorenz_field(x);
  const Vector k2 = lorenz_field(x + 0.5 * dt * k1);
  const Vector k3 = lorenz_field(x + 0.5 * dt * k2);
  const Matrix j1 = lorenz_field_jacobian(x);
  const Matrix j2 = lorenz_field_jacobian(x + 0.5 * dt * k1) * (id + 0.5 * dt * j1);
  const Matrix j3 = lorenz_field_jacobian(x + 0.5 * dt * k2) * (id + 0.5 * dt * j2);
  const Matrix j4 = lorenz_field_jacobian(x + dt * k3) * (id + dt * j3);
  return id + dt / 6.0 * (j1 + 2.0 * j2 + 2.0 * j3 + j4);
}

AssimilationProblem make_toy_problem(const ToySpec& spec) {
  if (spec.name == "w1-linear") {
    return validate_problem(scalar_problem(Operator::identity("M[1]", 1)));
  }
  if (spec.name == "w2-quadratic") {
    Operator model(
        "M[1]", 1, 1,
        [](const Vector& x) -> Vector { return (x.array() + 0.1 * x.array().square()).matrix(); },
        [](const Vector& x) -> Matrix { return Matrix::Constant(1, 1, 1.0 + 0.2 * x(0)); });
    return validate_problem(scalar_problem(std::move(model)));
  }
  if (spec.name == "linear-chain") return linear_chain(spec.state_dim, spec.horizon, spec.seed);
  if (spec.name == "lorenz63") return lorenz63(spec.horizon, spec.dt, spec.seed);
  throw ValidationError("problem", "unknown toy problem '" + spec.name + "'");
}

AssimilationProblem make_toy_problem(const std::string& name) {
  return make_toy_problem(parse_toy_spec(name));
}

ToySpec parse_toy_spec(const std::string& text) {
  static const std::regex pattern(R"(^\s*([a-z0-9\-]+)\s*(?:\(([^)]*)\))?\s*$)");
  std::smatch match;
  if (!std::regex_match(text, match, pattern)) {
    throw ValidationError("problem", "cannot parse toy problem '" + text + "'");
  }
  ToySpec spec;
  spec.name = match[1];
  std::vector<std::string> args;
  if (match[2].matched) {
    std::stringstream ss(match[2].str());
    std::string item;
    while (std::getline(ss, item, ',')) args.push_back(item);
  }
  try {
    if (spec.name == "linear-chain") {
      if (args.size() > 0) spec.state_dim = std::stol(args[0]);
      if (args.size() > 1) spec.horizon = std::stoul(args[1]);
      if (args.size() > 2) spec.seed = std::stoull(args[2]);
    } else if (spec.name == "lorenz63") {
      spec.state_dim = 3;
      spec.horizon = args.size() > 0 ? std::stoul(args[0]) : 10;
      if (args.size() > 1) spec.dt = std::stod(args[1]);
      if (args.size() > 2) spec.seed = std::stoull(args[2]);
    } else if (!args.empty()) {
      throw ValidationError("problem", spec.name + " takes no parameters");
    }
  } catch (const std::logic_error&) {
    throw ValidationError("problem", "bad parameters in '" + text + "'");
  }
  return spec;
}

std::string describe(const ToySpec& spec) {
  std::ostringstream out;
  out << spec.name;
  if (spec.name == "linear-chain") {
    out << "(" << spec.state_dim << "," << spec.horizon << "," << spec.seed << ")";
  } else if (spec.name == "lorenz63") {
    out << "(" << spec.horizon << "," << spec.dt << "," << spec.seed << ")";
  }
  return out.str();
}

}  // namespace ensvar
