#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ensvar/config.hpp"
#include "ensvar/errors.hpp"
#include "ensvar/kalman.hpp"
#include "ensvar/study.hpp"
#include "ensvar/toy_models.hpp"
#include "oracles.hpp"

using namespace ensvar;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / ("ensvar_harness_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

fs::path write_file(const std::string& name, const std::string& text) {
  const fs::path path = scratch_dir() / name;
  std::ofstream(path) << text;
  return path;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(ENSVAR_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

StudySpec small_enks_study(std::vector<double> sweep, std::size_t replicates) {
  StudySpec spec;
  spec.kind = StudyKind::enks_vs_ks;
  spec.sweep = std::move(sweep);
  spec.replicates = replicates;
  spec.seed = 3;
  spec.problem_name = "w1-linear";
  spec.problem = make_toy_problem("w1-linear");
  return spec;
}

}  // namespace

// =============================================================================
// Toy problems
// =============================================================================

TEST(ToyModels, W1MatchesHandBuiltFixture) {
  const AssimilationProblem toy = make_toy_problem("w1-linear");
  const AssimilationProblem hand = ensvar::testing::w1();
  EXPECT_EQ(ks_run(toy).composite.mean, ks_run(hand).composite.mean);
}

TEST(ToyModels, W2JacobianAndValue) {
  const AssimilationProblem p = make_toy_problem("w2-quadratic");
  const Vector one = Vector::Constant(1, 1.0);
  EXPECT_DOUBLE_EQ(p.model(1).model.apply(one)(0), 1.1);
  EXPECT_DOUBLE_EQ(p.model(1).model.jacobian(one)(0, 0), 1.2);
  EXPECT_FALSE(p.is_linear());
}

TEST(ToyModels, LinearChainIsDeterministicAndStable) {
  const AssimilationProblem a = make_toy_problem("linear-chain(3,4,7)");
  const AssimilationProblem b = make_toy_problem("linear-chain(3,4,7)");
  const AssimilationProblem c = make_toy_problem("linear-chain(3,4,8)");
  EXPECT_EQ(a.state_dim(), 3);
  EXPECT_EQ(a.horizon(), 4u);
  EXPECT_TRUE(a.is_linear());
  EXPECT_EQ(a.model(2).model.matrix(), b.model(2).model.matrix());
  EXPECT_EQ(a.observation(4).value, b.observation(4).value);
  EXPECT_NE(a.model(1).model.matrix(), c.model(1).model.matrix());
  for (std::size_t i = 1; i <= a.horizon(); ++i) {
    const auto eig = a.model(i).model.matrix().eigenvalues();
    EXPECT_LE(eig.cwiseAbs().maxCoeff(), 0.95 + 1e-12);
  }
}

TEST(ToyModels, Lorenz63JacobianMatchesDifferences) {
  const AssimilationProblem p = make_toy_problem("lorenz63(5,0.01,1)");
  EXPECT_EQ(p.state_dim(), 3);
  const Vector x = (Vector(3) << 1.5, -1.5, 25.0).finished();
  const Matrix exact = p.model(1).model.jacobian(x);
  const Matrix numeric = ensvar::testing::numeric_jacobian(p.model(1).model, x);
  EXPECT_LE((exact - numeric).norm(), 1e-6 * exact.norm());
  EXPECT_EQ(lorenz63_rk4_jacobian(x, 0.01), exact);
}

TEST(ToyModels, NameParsing) {
  const ToySpec s = parse_toy_spec("linear-chain(2,3,7)");
  EXPECT_EQ(s.name, "linear-chain");
  EXPECT_EQ(s.state_dim, 2);
  EXPECT_EQ(s.horizon, 3u);
  EXPECT_EQ(s.seed, 7u);
  EXPECT_EQ(parse_toy_spec(describe(s)).seed, 7u);
  EXPECT_THROW(make_toy_problem("no-such-model"), ValidationError);
}

// =============================================================================
// Studies and output
// =============================================================================

TEST(Study, SingleReplicateSingleValueHasNoSlope) {
  const StudyResult r = run_study(small_enks_study({10}, 1));
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_FALSE(r.slope.has_value());
  EXPECT_EQ(r.rows[0].stderr_estimate, 0.0);
  EXPECT_GE(r.rows[0].error_estimate, 0.0);
}

TEST(Study, RejectsBadSweeps) {
  EXPECT_THROW(validate_study(small_enks_study({}, 2)), ValidationError);
  EXPECT_THROW(validate_study(small_enks_study({10, 5, 20}, 2)), ValidationError);
  EXPECT_THROW(validate_study(small_enks_study({1, 10}, 2)), ValidationError);
  EXPECT_THROW(validate_study(small_enks_study({10, 10.5}, 2)), ValidationError);
  StudySpec nonlinear = small_enks_study({10, 20}, 2);
  nonlinear.problem = make_toy_problem("w2-quadratic");
  EXPECT_THROW(validate_study(nonlinear), ValidationError);
}

TEST(Study, DeterministicAcrossRuns) {
  StudyResult a = run_study(small_enks_study({10, 20, 40}, 5));
  StudyResult b = run_study(small_enks_study({10, 20, 40}, 5));
  for (auto* r : {&a, &b}) {
    for (auto& row : r->rows) row.wall_ms = 0.0;
  }
  EXPECT_TRUE(a == b);
  ASSERT_TRUE(a.slope.has_value());
}

TEST(Study, StandardErrorMatchesDeltaMethod) {
  // p = 1: stderr of the mean of |e|.
  const std::vector<double> raw{1.0, 2.0, 3.0, 4.0};
  EXPECT_NEAR(lp_standard_error(raw, 1.0), std::sqrt((5.0 / 3.0) / 4.0), 1e-12);
  EXPECT_EQ(lp_standard_error({2.0}, 2.0), 0.0);
}

TEST(Emit, CsvHasHeaderAndOneRowPerSweepValue) {
  const StudyResult r = run_study(small_enks_study({10, 20, 40}, 3));
  const fs::path out = scratch_dir() / "rates.csv";
  emit(r, OutputFormat::csv, out);
  std::istringstream lines(read_file(out));
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "sweep_value,p_order,replicates,error_estimate,stderr_estimate,wall_ms");
  int rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    std::istringstream fields(line);
    std::string field;
    while (std::getline(fields, field, ',')) EXPECT_TRUE(std::isfinite(std::stod(field))) << line;
  }
  EXPECT_EQ(rows, 3);
}

TEST(Emit, JsonRoundTripsExactly) {
  const StudyResult r = run_study(small_enks_study({10, 20, 40}, 3));
  const fs::path out = scratch_dir() / "rates.json";
  emit(r, OutputFormat::json, out);
  EXPECT_TRUE(study_result_from_json(read_file(out)) == r);
}

TEST(Emit, UnwritablePathIsIoError) {
  const StudyResult r = run_study(small_enks_study({10}, 1));
  EXPECT_THROW(emit(r, OutputFormat::csv, "/nonexistent-dir/x/rates.csv"), IoError);
}

TEST(Emit, SeventeenSignificantDigits) {
  EXPECT_EQ(format_number(0.1), "0.10000000000000001");
  EXPECT_EQ(std::stod(format_number(1.0 / 3.0)), 1.0 / 3.0);
}

// =============================================================================
// Config parsing
// =============================================================================

TEST(Config, ToyProblemWithStudy) {
  const RunConfig cfg = parse_config(R"(
seed: 11
problem:
  toy: linear-chain(2,3,7)
lm:
  gamma: 2
  ensemble_sizes: [50, 100]
  max_iterations: 3
  mode: tangent
study:
  kind: enks-vs-ks
  sweep: [10, 100]
  replicates: 4
)");
  ASSERT_TRUE(cfg.problem.has_value());
  EXPECT_EQ(cfg.problem->state_dim(), 2);
  EXPECT_EQ(cfg.lm.gamma, 2.0);
  EXPECT_EQ(cfg.lm.ensemble_size(3), 100u);
  EXPECT_EQ(cfg.lm.mode, LMMode::tangent);
  ASSERT_TRUE(cfg.study.has_value());
  EXPECT_EQ(cfg.study->seed, 11u);
  EXPECT_EQ(cfg.study->replicates, 4u);
  EXPECT_EQ(cfg.study->sweep, (std::vector<double>{10, 100}));
}

TEST(Config, ExplicitLinearSystemMatchesW1) {
  const RunConfig cfg = parse_config(R"(
problem:
  state_dim: 1
  horizon: 1
  x_b: [0]
  B: [[1]]
  M: [[1]]
  mu: [0]
  Q: [[1]]
  H: [[1]]
  R: [[1]]
  y: [3]
)");
  const Vector mean = ks_run(*cfg.problem).composite.mean;
  EXPECT_NEAR(mean(0), 1.0, 1e-12);
  EXPECT_NEAR(mean(1), 2.0, 1e-12);
}

TEST(Config, ErrorsNameTheField) {
  try {
    parse_config("problem:\n  horizon: 1\n  x_b: [0]\n  B: [[1]]\n  M: [[1]]\n  mu: [0]\n"
                 "  Q: [[1]]\n  H: [[1]]\n  R: [[0]]\n  y: [3]\n");
    FAIL();
  } catch (const NotSpdError& e) {
    EXPECT_EQ(e.field(), "R[1]");
  }
  EXPECT_THROW(parse_config("lm:\n  mode: sideways\n"), ValidationError);
  EXPECT_THROW(parse_config("[1, 2"), ValidationError);
  EXPECT_THROW(load_config("/nonexistent/config.yaml"), IoError);
}

// =============================================================================
// Command line
// =============================================================================

TEST(Cli, ExitCodes) {
  const fs::path good = write_file("w1.yaml", "problem:\n  toy: w1-linear\n");
  const fs::path bad = write_file("bad.yaml", "problem:\n  toy: w1-linear\nlm:\n  gamma: -1\n  mode: tangent\n");
  EXPECT_EQ(run_cli("run-ks --config " + good.string()), 0);
  EXPECT_EQ(run_cli("run-kf --config " + good.string() + " --format json"), 0);
  EXPECT_EQ(run_cli("run-lm --config " + good.string() + " --mode exact"), 0);
  EXPECT_EQ(run_cli("run-lm --config " + bad.string()), 1);
  EXPECT_EQ(run_cli("run-ks --config /nonexistent/w1.yaml"), 2);
  EXPECT_EQ(run_cli("run-ks --config " + good.string() + " --out /nonexistent-dir/out.csv"), 2);
  EXPECT_EQ(run_cli("run-ks"), 1);
  EXPECT_EQ(run_cli("bogus"), 1);
}

TEST(Cli, RunKsWritesSmootherMean) {
  const fs::path cfg = write_file("w1_ks.yaml", "problem:\n  toy: w1-linear\n");
  const fs::path out = scratch_dir() / "ks.csv";
  ASSERT_EQ(run_cli("run-ks --config " + cfg.string() + " --out " + out.string()), 0);
  std::istringstream lines(read_file(out));
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "step,component,mean,variance");
  const double expected_mean[] = {1.0, 2.0};
  for (int step = 0; step < 2; ++step) {
    ASSERT_TRUE(std::getline(lines, line));
    int s = -1, c = -1;
    double mean = 0, var = 0;
    ASSERT_EQ(std::sscanf(line.c_str(), "%d,%d,%lf,%lf", &s, &c, &mean, &var), 4) << line;
    EXPECT_EQ(s, step);
    EXPECT_NEAR(mean, expected_mean[step], 1e-12);
    EXPECT_NEAR(var, 2.0 / 3.0, 1e-12);
  }
}
