#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "ensvar/errors.hpp"
#include "ensvar/fourdvar.hpp"
#include "ensvar/kalman.hpp"
#include "ensvar/numerics.hpp"
#include "ensvar/toy_models.hpp"
#include "oracles.hpp"

using namespace ensvar;
using ensvar::testing::random_nonlinear_problem;
using ensvar::testing::tangent_ls_normal_equations;
using ensvar::testing::w1;

namespace {

Trajectory traj(std::initializer_list<double> scalars) {
  std::vector<Vector> states;
  for (double s : scalars) states.push_back(Vector::Constant(1, s));
  return Trajectory(std::move(states));
}

AssimilationProblem w2() { return make_toy_problem("w2-quadratic"); }

std::vector<Vector> states_of(const Trajectory& t) {
  std::vector<Vector> out;
  for (std::size_t i = 0; i < t.size(); ++i) out.push_back(t[i]);
  return out;
}

LMConfig ensemble_config(LMMode mode, std::size_t n, std::size_t iterations, double gamma = 1.0) {
  LMConfig cfg;
  cfg.mode = mode;
  cfg.gamma = gamma;
  cfg.ensemble_sizes = {n};
  cfg.max_iterations = iterations;
  return cfg;
}

}  // namespace

// =============================================================================
// Objective and augmentation
// =============================================================================

TEST(Objective, W1Values) {
  EXPECT_DOUBLE_EQ(objective(w1(), traj({1, 2})), 3.0);
  EXPECT_DOUBLE_EQ(objective(w1(0.0), traj({0, 0})), 0.0);
  EXPECT_GT(objective(w1(), traj({0, 0})), 0.0);
}

TEST(Objective, PerfectFitIsZero) {
  AssimilationProblem p = w2();
  const Trajectory x = prior_chain(p);
  p.observations[0].value = x[1];
  EXPECT_NEAR(objective(p, x), 0.0, 1e-15);
}

TEST(Augment, StacksObservationOverPreviousIterate) {
  const AssimilationProblem p = w1();
  const auto aug = augment(p, traj({0.5, 0.7}), 4.0);
  ASSERT_EQ(aug.size(), 1u);
  EXPECT_EQ(aug[0].value, (Vector(2) << 3.0, 0.7).finished());
  Matrix expected = Matrix::Zero(2, 2);
  expected(0, 0) = 1.0;
  expected(1, 1) = 0.25;
  EXPECT_EQ(aug[0].cov, expected);
  EXPECT_EQ(aug[0].op.apply(Vector::Constant(1, 1.5)), (Vector(2) << 1.5, 1.5).finished());
}

TEST(Augment, RejectsNonPositiveGamma) {
  EXPECT_THROW(augment(w1(), traj({0, 0}), 0.0), ValidationError);
  EXPECT_THROW(augment(w1(), traj({0, 0}), -1.0), ValidationError);
}

// =============================================================================
// Exact LM
// =============================================================================

TEST(LMExact, HugePenaltyPinsIterate) {
  const AssimilationProblem p = w2();
  const Trajectory x0 = prior_chain(p);
  const Trajectory x1 = lm_exact_step(p, x0, 1e12);
  // Only x_1 carries the penalty; x_0 follows from it and the prior.
  EXPECT_LE(std::abs(x1[1](0) - x0[1](0)), 1e-4);
}

TEST(LMExact, StepMatchesNormalEquations) {
  std::vector<AssimilationProblem> problems{w2(), random_nonlinear_problem(1, 2, 3),
                                            random_nonlinear_problem(2, 3, 2)};
  std::mt19937_64 rng(4);
  for (const auto& p : problems) {
    Trajectory x_prev = prior_chain(p);
    std::vector<Vector> shifted = states_of(x_prev);
    for (auto& s : shifted) s += ensvar::testing::random_vector(rng, s.size(), 0.3);
    x_prev = Trajectory(shifted);
    for (double gamma : {0.1, 1.0, 10.0}) {
      const Vector got = lm_exact_step(p, x_prev, gamma).composite();
      const Vector want = tangent_ls_normal_equations(p, shifted, gamma);
      EXPECT_LE(relative_difference(got, want), 1e-8) << "gamma " << gamma;
    }
  }
}

TEST(LMExact, GaussNewtonSolvesLinearProblemInOneStep) {
  LMConfig cfg;
  cfg.gamma = 0.0;
  cfg.initial = traj({-4, 9});
  const LMRunResult res = lm_exact_run(w1(), cfg);
  ASSERT_EQ(res.iterates.size(), 2u);
  EXPECT_NEAR(res.iterates[1][0](0), 1.0, 1e-12);
  EXPECT_NEAR(res.iterates[1][1](0), 2.0, 1e-12);
}

TEST(LMExact, PenalizedIterationContractsOnW1) {
  LMConfig cfg;
  cfg.gamma = 1.0;
  cfg.max_iterations = 5;
  cfg.initial = traj({0, 0});
  const LMRunResult res = lm_exact_run(w1(), cfg);
  const Vector target = (Vector(2) << 1, 2).finished();
  double previous = (res.iterates[0].composite() - target).norm();
  for (std::size_t j = 1; j < res.iterates.size(); ++j) {
    const double err = (res.iterates[j].composite() - target).norm();
    EXPECT_LT(err, previous);
    if (j >= 2) {
      EXPECT_NEAR(err / previous, 0.4, 1e-9);  // spectral radius of the fixed-point map
    }
    previous = err;
  }
  EXPECT_LE(previous, 0.1);
}

TEST(LMExact, ObjectiveNonIncreasingOnW2) {
  LMConfig cfg;
  cfg.max_iterations = 10;
  const LMRunResult res = lm_exact_run(w2(), cfg);
  ASSERT_EQ(res.objectives.size(), 11u);
  for (std::size_t j = 1; j < res.objectives.size(); ++j) {
    EXPECT_LE(res.objectives[j], res.objectives[j - 1] + 1e-12) << "j " << j;
  }
}

TEST(LMExact, MissingJacobianFails) {
  AssimilationProblem p = w1();
  p.models[0].model = Operator("M[1]", 1, 1, [](const Vector& x) -> Vector { return x * 1.5; });
  EXPECT_THROW(lm_exact_run(p, LMConfig{}), MissingJacobianError);
  EXPECT_THROW(lm_enks_tangent_run(p, ensemble_config(LMMode::tangent, 4, 1), PerturbationStream(1)),
               MissingJacobianError);
  EXPECT_NO_THROW(enks_4dvar_run(p, ensemble_config(LMMode::finite_difference, 4, 1), PerturbationStream(1)));
}

TEST(LMConfigTest, ScheduleRepeatsLastEntry) {
  LMConfig cfg;
  cfg.ensemble_sizes = {10, 20};
  EXPECT_EQ(cfg.ensemble_size(1), 10u);
  EXPECT_EQ(cfg.ensemble_size(2), 20u);
  EXPECT_EQ(cfg.ensemble_size(7), 20u);
}

TEST(LMConfigTest, EnsembleModesNeedPositiveGamma) {
  EXPECT_THROW(lm_enks_tangent_run(w1(), ensemble_config(LMMode::tangent, 4, 1, 0.0), PerturbationStream(1)),
               ValidationError);
  LMConfig cfg = ensemble_config(LMMode::finite_difference, 4, 1);
  cfg.tau = 0.0;
  EXPECT_THROW(enks_4dvar_run(w1(), cfg, PerturbationStream(1)), ValidationError);
  EXPECT_THROW(lm_enks_tangent_run(w1(), ensemble_config(LMMode::tangent, 1, 1), PerturbationStream(1)),
               ValidationError);
}

TEST(LMModeNames, RoundTrip) {
  for (LMMode m : {LMMode::exact, LMMode::tangent, LMMode::finite_difference}) {
    EXPECT_EQ(lm_mode_from_string(to_string(m)), m);
  }
  EXPECT_EQ(lm_mode_from_string("fd"), LMMode::finite_difference);
  EXPECT_THROW(lm_mode_from_string("newton"), ValidationError);
}

// =============================================================================
// Tangent LM-EnKS
// =============================================================================

TEST(LMTangent, LargeEnsembleTracksExactIterate) {
  const std::size_t n = 10000;
  LMConfig cfg = ensemble_config(LMMode::tangent, n, 2);
  LMEnsembleOptions opts;
  opts.retain_ensembles = true;
  const LMRunResult ens = lm_enks_tangent_run(w1(), cfg, PerturbationStream(55), opts);
  LMConfig exact_cfg = cfg;
  exact_cfg.mode = LMMode::exact;
  const LMRunResult exact = lm_exact_run(w1(), exact_cfg);
  const Vector sd = sample_covariance(ens.ensembles.back()).diagonal().cwiseSqrt();
  const Vector diff = ens.iterates[2].composite() - exact.iterates[2].composite();
  for (Index c = 0; c < diff.size(); ++c) {
    EXPECT_LE(std::abs(diff(c)), 4.0 * sd(c) / std::sqrt(static_cast<double>(n))) << "component " << c;
  }
}

TEST(LMTangent, ZeroSpreadInitialEnsembleCompletes) {
  LMEnsembleOptions opts;
  opts.zero_initial_spread = true;
  const LMRunResult res = lm_enks_tangent_run(w2(), ensemble_config(LMMode::tangent, 4, 3),
                                              PerturbationStream(8), opts);
  ASSERT_EQ(res.iterates.size(), 4u);
  for (const auto& x : res.iterates) EXPECT_TRUE(x.composite().allFinite());
}

TEST(LMTangent, PermutedKeysPermuteMembersBitForBit) {
  const std::size_t n = 8;
  const LMConfig cfg = ensemble_config(LMMode::tangent, n, 2);
  const PerturbationStream stream(19);
  LMEnsembleOptions base_opts;
  base_opts.retain_ensembles = true;
  const LMRunResult base = lm_enks_tangent_run(w2(), cfg, stream, base_opts);

  LMEnsembleOptions opts = base_opts;
  opts.member_labels.resize(n);
  std::iota(opts.member_labels.begin(), opts.member_labels.end(), std::size_t{0});
  std::shuffle(opts.member_labels.begin(), opts.member_labels.end(), std::mt19937_64(3));
  const LMRunResult perm = lm_enks_tangent_run(w2(), cfg, stream, opts);

  for (std::size_t j = 0; j < base.ensembles.size(); ++j) {
    for (std::size_t s = 0; s < n; ++s) {
      EXPECT_EQ(perm.ensembles[j].member(s), base.ensembles[j].member(opts.member_labels[s]));
    }
  }
  for (std::size_t j = 0; j < base.iterates.size(); ++j) {
    EXPECT_EQ(perm.iterates[j].composite(), base.iterates[j].composite());
  }
}

TEST(LMTangent, Deterministic) {
  const LMConfig cfg = ensemble_config(LMMode::tangent, 16, 2);
  const LMRunResult a = lm_enks_tangent_run(w2(), cfg, PerturbationStream(4));
  const LMRunResult b = lm_enks_tangent_run(w2(), cfg, PerturbationStream(4));
  EXPECT_EQ(a.iterates.back().composite(), b.iterates.back().composite());
  EXPECT_EQ(a.objectives, b.objectives);
}

// =============================================================================
// Finite-difference variant
// =============================================================================

TEST(FdDirectional, Examples) {
  auto twice = [](const Vector& x) -> Vector { return 2.0 * x; };
  auto square = [](const Vector& x) -> Vector { return x.array().square().matrix(); };
  const Vector one = Vector::Constant(1, 1.0);
  EXPECT_NEAR(fd_directional(twice, one, Vector::Constant(1, 3.0), 0.1)(0), 6.0, 1e-12);
  EXPECT_NEAR(fd_directional(square, one, one, 0.1)(0), 2.1, 1e-12);
  EXPECT_EQ(fd_directional(square, one, Vector::Zero(1), 0.5), Vector::Zero(1));
  EXPECT_THROW(fd_directional(square, one, one, 0.0), ValidationError);
  EXPECT_THROW(fd_directional(square, one, one, -1.0), ValidationError);
}

TEST(FdVariant, MatchesTangentOnLinearProblem) {
  for (double tau : {1.0, 1e-3}) {
    LMConfig cfg = ensemble_config(LMMode::tangent, 50, 2);
    cfg.tau = tau;
    const PerturbationStream stream(61);
    const LMRunResult tangent = lm_enks_tangent_run(w1(), cfg, stream);
    const LMRunResult fd = enks_4dvar_run(w1(), cfg, stream);
    for (std::size_t j = 0; j < tangent.iterates.size(); ++j) {
      EXPECT_LE((fd.iterates[j].composite() - tangent.iterates[j].composite()).norm(), 1e-9)
          << "tau " << tau << " j " << j;
    }
  }
}

TEST(FdVariant, ConsumesSameKeysAsTangent) {
  const LMConfig cfg = ensemble_config(LMMode::tangent, 6, 2);
  auto tangent_log = std::make_shared<DrawLog>();
  auto fd_log = std::make_shared<DrawLog>();
  lm_enks_tangent_run(w2(), cfg, PerturbationStream(2).with_log(tangent_log));
  enks_4dvar_run(w2(), cfg, PerturbationStream(2).with_log(fd_log));
  const auto a = tangent_log->records();
  const auto b = fd_log->records();
  ASSERT_EQ(a.size(), b.size());
  ASSERT_FALSE(a.empty());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(a[i].key == b[i].key);
    EXPECT_EQ(a[i].dim, b[i].dim);
  }
}

TEST(FdVariant, DifferenceFromTangentShrinksLinearlyInTau) {
  const std::vector<double> taus{1e-1, 1e-2, 1e-3};
  std::vector<double> diffs;
  for (double tau : taus) {
    LMConfig cfg = ensemble_config(LMMode::tangent, 50, 2);
    cfg.tau = tau;
    const PerturbationStream stream(71);
    const Vector t = lm_enks_tangent_run(w2(), cfg, stream).iterates.back().composite();
    const Vector f = enks_4dvar_run(w2(), cfg, stream).iterates.back().composite();
    diffs.push_back((f - t).norm());
  }
  const double slope = fit_loglog_slope(taus, diffs).slope;
  EXPECT_GE(slope, 0.7);
  EXPECT_LE(slope, 1.3);
}
