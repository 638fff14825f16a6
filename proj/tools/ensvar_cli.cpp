// Command-line front end: one verb per algorithm plus `study` for convergence sweeps.
//
//   ensvar run-kf    --config problem.yaml [--out f] [--format csv|json]
//   ensvar run-ks    --config problem.yaml
//   ensvar run-enks  --config problem.yaml --seed 3
//   ensvar run-lm    --config problem.yaml --mode tangent
//   ensvar study     --config study.yaml --out rates.csv
//
// Exit codes: 0 success, 1 validation error, 2 I/O error.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "ensvar/config.hpp"
#include "ensvar/ensemble.hpp"
#include "ensvar/errors.hpp"
#include "ensvar/fourdvar.hpp"
#include "ensvar/kalman.hpp"
#include "ensvar/study.hpp"

namespace {

using namespace ensvar;
using nlohmann::json;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "csv";
  std::string mode;
};

json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json to_json(const Matrix& a) {
  json rows = json::array();
  for (Index r = 0; r < a.rows(); ++r) rows.push_back(to_json(Vector(a.row(r).transpose())));
  return rows;
}

void write_output(const Options& opts, const std::string& text) {
  if (opts.out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(opts.out, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + opts.out + "' for writing");
  out << text;
  if (!out.flush()) throw IoError("failed writing '" + opts.out + "'");
}

const AssimilationProblem& require_problem(const RunConfig& cfg) {
  if (!cfg.problem) throw ValidationError("problem", "config has no problem section");
  return *cfg.problem;
}

std::uint64_t seed_of(const Options& opts, const RunConfig& cfg) {
  return opts.seed.value_or(cfg.seed);
}

// Rows of (step, component, mean, variance) for a list of per-time estimates.
std::string estimate_csv(const std::vector<GaussianEstimate>& per_step) {
  std::ostringstream out;
  out << "step,component,mean,variance\n";
  for (std::size_t i = 0; i < per_step.size(); ++i) {
    const auto& e = per_step[i];
    for (Index c = 0; c < e.mean.size(); ++c) {
      out << i << ',' << c << ',' << format_number(e.mean(c)) << ','
          << format_number(e.covariance(c, c)) << '\n';
    }
  }
  return out.str();
}

void run_kf(const Options& opts) {
  const RunConfig cfg = load_config(opts.config);
  const FilterResult res = kf_run(require_problem(cfg));
  if (opts.format == "json") {
    json steps = json::array();
    for (std::size_t i = 0; i < res.analyses.size(); ++i) {
      steps.push_back({{"step", i},
                       {"mean", to_json(res.analyses[i].mean)},
                       {"covariance", to_json(res.analyses[i].covariance)}});
    }
    write_output(opts, json{{"filter", steps}}.dump(2) + "\n");
  } else {
    write_output(opts, estimate_csv(res.analyses));
  }
}

void run_ks(const Options& opts) {
  const RunConfig cfg = load_config(opts.config);
  const AssimilationProblem& p = require_problem(cfg);
  const SmootherResult res = ks_run(p);
  if (opts.format == "json") {
    write_output(opts, json{{"mean", to_json(res.composite.mean)},
                            {"covariance", to_json(res.composite.covariance)}}
                               .dump(2) +
                           "\n");
    return;
  }
  // One row per time block of the composite estimate.
  const Index m = p.state_dim();
  std::vector<GaussianEstimate> blocks;
  for (Index off = 0; off < res.composite.mean.size(); off += m) {
    blocks.push_back({res.composite.mean.segment(off, m),
                      res.composite.covariance.block(off, off, m, m)});
  }
  write_output(opts, estimate_csv(blocks));
}

void run_enks(const Options& opts) {
  const RunConfig cfg = load_config(opts.config);
  const AssimilationProblem& p = require_problem(cfg);
  const PerturbationStream stream(seed_of(opts, cfg));
  const EnsembleRunResult res = cfg.enks.smoother
                                    ? enks_run(p, cfg.enks.ensemble_size, stream)
                                    : enkf_run(p, cfg.enks.ensemble_size, stream);
  if (opts.format == "json") {
    json means = json::array();
    for (const auto& m : res.means) means.push_back(to_json(m));
    write_output(opts, json{{"smoother", cfg.enks.smoother},
                            {"ensemble_size", cfg.enks.ensemble_size},
                            {"means", means},
                            {"final_members", to_json(res.analyses.back().members())}}
                               .dump(2) +
                           "\n");
    return;
  }
  std::ostringstream out;
  out << "step,component,mean\n";
  for (std::size_t i = 0; i < res.means.size(); ++i) {
    for (Index c = 0; c < res.means[i].size(); ++c) {
      out << i << ',' << c << ',' << format_number(res.means[i](c)) << '\n';
    }
  }
  write_output(opts, out.str());
}

void run_lm(const Options& opts) {
  const RunConfig cfg = load_config(opts.config);
  const AssimilationProblem& p = require_problem(cfg);
  LMConfig lm = cfg.lm;
  if (!opts.mode.empty()) lm.mode = lm_mode_from_string(opts.mode);
  const PerturbationStream stream(seed_of(opts, cfg));
  LMRunResult res;
  switch (lm.mode) {
    case LMMode::exact:
      res = lm_exact_run(p, lm);
      break;
    case LMMode::tangent:
      res = lm_enks_tangent_run(p, lm, stream);
      break;
    case LMMode::finite_difference:
      res = enks_4dvar_run(p, lm, stream);
      break;
  }
  if (opts.format == "json") {
    json iterates = json::array();
    for (const auto& x : res.iterates) iterates.push_back(to_json(x.composite()));
    write_output(opts, json{{"mode", to_string(lm.mode)},
                            {"iterates", iterates},
                            {"objectives", res.objectives},
                            {"max_member_norms", res.max_member_norms}}
                               .dump(2) +
                           "\n");
    return;
  }
  std::ostringstream out;
  out << "iteration,objective,step,component,value\n";
  for (std::size_t j = 0; j < res.iterates.size(); ++j) {
    const auto& x = res.iterates[j];
    for (std::size_t i = 0; i < x.size(); ++i) {
      for (Index c = 0; c < x[i].size(); ++c) {
        out << j << ',' << format_number(res.objectives[j]) << ',' << i << ',' << c << ','
            << format_number(x[i](c)) << '\n';
      }
    }
  }
  write_output(opts, out.str());
}

void run_study_cmd(const Options& opts) {
  const RunConfig cfg = load_config(opts.config);
  if (!cfg.study) throw ValidationError("study", "config has no study section");
  StudySpec spec = *cfg.study;
  if (!cfg.problem) throw ValidationError("problem", "config has no problem section");
  if (opts.seed) spec.seed = *opts.seed;
  const StudyResult result = run_study(spec);
  const OutputFormat format = output_format_from_string(opts.format);
  if (opts.out.empty()) {
    std::cout << (format == OutputFormat::csv ? to_csv(result) : to_json(result));
  } else {
    emit(result, format, opts.out);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ensemble Kalman smoother and weak-constraint 4DVAR toolkit"};
  app.require_subcommand(1);
  Options opts;

  auto add_common = [&opts](CLI::App* cmd) {
    cmd->add_option("--config", opts.config, "Config file (YAML)")->required();
    cmd->add_option("--seed", opts.seed, "Root seed (u64)");
    cmd->add_option("--out", opts.out, "Output path (stdout when omitted)");
    cmd->add_option("--format", opts.format, "Output format")
        ->check(CLI::IsMember({"csv", "json"}));
  };

  auto* kf = app.add_subcommand("run-kf", "Kalman filter");
  auto* ks = app.add_subcommand("run-ks", "Kalman smoother on the composite state");
  auto* enks = app.add_subcommand("run-enks", "Ensemble Kalman filter or smoother");
  auto* lm = app.add_subcommand("run-lm", "Levenberg-Marquardt weak-constraint 4DVAR");
  auto* study = app.add_subcommand("study", "Convergence-rate study");
  for (auto* cmd : {kf, ks, enks, lm, study}) add_common(cmd);
  lm->add_option("--mode", opts.mode, "exact | tangent | finite-difference")
      ->check(CLI::IsMember({"exact", "tangent", "finite-difference"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*kf) run_kf(opts);
    else if (*ks) run_ks(opts);
    else if (*enks) run_enks(opts);
    else if (*lm) run_lm(opts);
    else if (*study) run_study_cmd(opts);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
