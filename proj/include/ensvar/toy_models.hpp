#pragma once

#include <cstdint>
#include <string>

#include "ensvar/problem.hpp"

namespace ensvar {

/// Names accepted by make_toy_problem:
///   w1-linear     m=1, k=1, identity model and observation, y_1 = 3
///   w2-quadratic  as w1-linear with M_1(x) = x + 0.1 x^2
///   linear-chain  random stable linear system, parameters m, k, seed
///   lorenz63      RK4-discretized Lorenz-63, parameters k, dt, seed
///
/// lorenz63 is outside the polynomial-growth assumption of the convergence
/// theory and is only meant for demonstrations.
struct ToySpec {
  std::string name = "w1-linear";
  Index state_dim = 2;
  std::size_t horizon = 3;
  std::uint64_t seed = 7;
  double dt = 0.01;
};

AssimilationProblem make_toy_problem(const ToySpec& spec);
AssimilationProblem make_toy_problem(const std::string& name);

/// Parses "w1-linear", "linear-chain(2,3,7)", "lorenz63(20,0.01)" and similar.
ToySpec parse_toy_spec(const std::string& text);
std::string describe(const ToySpec& spec);

/// One RK4 step of the Lorenz-63 vector field and its exact Jacobian.
Vector lorenz63_rk4(const Vector& x, double dt);
Matrix lorenz63_rk4_jacobian(const Vector& x, double dt);

}  // namespace ensvar
