#include "ensvar/study.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "ensvar/ensemble.hpp"
#include "ensvar/errors.hpp"

namespace ensvar {

std::string to_string(StudyKind kind) {
  switch (kind) {
    case StudyKind::enks_vs_ks:
      return "enks-vs-ks";
    case StudyKind::lm_enks_vs_lm:
      return "lm-enks-vs-lm";
    case StudyKind::tau_sweep:
      return "tau-sweep";
  }
  return "unknown";
}

StudyKind study_kind_from_string(const std::string& name) {
  if (name == "enks-vs-ks") return StudyKind::enks_vs_ks;
  if (name == "lm-enks-vs-lm") return StudyKind::lm_enks_vs_lm;
  if (name == "tau-sweep") return StudyKind::tau_sweep;
  throw ValidationError("kind", "unknown study kind '" + name + "'");
}

OutputFormat output_format_from_string(const std::string& name) {
  if (name == "csv") return OutputFormat::csv;
  if (name == "json") return OutputFormat::json;
  throw ValidationError("format", "unknown output format '" + name + "'");
}

void validate_study(const StudySpec& spec) {
  if (spec.sweep.empty()) throw ValidationError("sweep", "sweep needs at least one value");
  if (spec.replicates < 1) throw ValidationError("replicates", "need at least one replicate");
  if (!(spec.p_order >= 1.0)) throw ValidationError("p_order", "p-norm order must be >= 1");
  const bool increasing = spec.sweep.size() < 2 || spec.sweep[1] > spec.sweep[0];
  for (std::size_t i = 0; i < spec.sweep.size(); ++i) {
    if (!(spec.sweep[i] > 0.0) || !std::isfinite(spec.sweep[i])) {
      throw ValidationError("sweep", "sweep values must be positive");
    }
    if (i > 0 && (increasing ? !(spec.sweep[i] > spec.sweep[i - 1])
                             : !(spec.sweep[i] < spec.sweep[i - 1]))) {
      throw ValidationError("sweep", "sweep values must be strictly monotone");
    }
    if (spec.kind != StudyKind::tau_sweep &&
        (spec.sweep[i] < 2.0 || spec.sweep[i] != std::floor(spec.sweep[i]))) {
      throw ValidationError("sweep", "ensemble sizes must be integers >= 2");
    }
  }
  validate_problem(spec.problem);
  switch (spec.kind) {
    case StudyKind::enks_vs_ks:
      if (!spec.problem.is_linear()) {
        throw ValidationError("kind", "enks-vs-ks needs a linear problem");
      }
      break;
    case StudyKind::lm_enks_vs_lm:
    case StudyKind::tau_sweep: {
      LMConfig cfg = spec.lm;
      cfg.mode = LMMode::tangent;
      validate_config(cfg, spec.problem);
      break;
    }
  }
}

double lp_standard_error(const std::vector<double>& raw, double p) {
  const std::size_t r = raw.size();
  if (r < 2) return 0.0;
  std::vector<double> powered;
  double mean = 0.0;
  for (double e : raw) {
    powered.push_back(std::pow(std::abs(e), p));
    mean += powered.back();
  }
  mean /= static_cast<double>(r);
  if (mean == 0.0) return 0.0;
  double var = 0.0;
  for (double v : powered) var += (v - mean) * (v - mean);
  var /= static_cast<double>(r - 1);
  const double se_mean = std::sqrt(var / static_cast<double>(r));
  // d/dm m^{1/p} = (1/p) m^{1/p - 1}
  return se_mean * std::pow(mean, 1.0 / p - 1.0) / p;
}

namespace {

using Clock = std::chrono::steady_clock;

std::vector<double> run_cell(const StudySpec& spec, double value, const PerturbationStream& root,
                             const std::vector<Trajectory>& tangent_cache,
                             const Trajectory& exact_iterate) {
  std::vector<double> raw;
  raw.reserve(spec.replicates);
  const std::size_t last = spec.lm.max_iterations;
  switch (spec.kind) {
    case StudyKind::enks_vs_ks: {
      const auto members = static_cast<std::size_t>(value);
      raw = coupled_enks_error(spec.problem, members, root, spec.p_order, spec.replicates).raw;
      break;
    }
    case StudyKind::lm_enks_vs_lm: {
      LMConfig cfg = spec.lm;
      cfg.mode = LMMode::tangent;
      cfg.ensemble_sizes = {static_cast<std::size_t>(value)};
      for (std::size_t r = 0; r < spec.replicates; ++r) {
        const LMRunResult run = lm_enks_tangent_run(spec.problem, cfg, root.derived(r));
        raw.push_back((run.iterates.at(last).composite() - exact_iterate.composite()).norm());
      }
      break;
    }
    case StudyKind::tau_sweep: {
      LMConfig cfg = spec.lm;
      cfg.mode = LMMode::finite_difference;
      cfg.tau = value;
      for (std::size_t r = 0; r < spec.replicates; ++r) {
        const LMRunResult run = enks_4dvar_run(spec.problem, cfg, root.derived(r));
        raw.push_back((run.iterates.at(last).composite() - tangent_cache[r].composite()).norm());
      }
      break;
    }
  }
  return raw;
}

}  // namespace

StudyResult run_study(const StudySpec& spec, std::shared_ptr<DrawLog> log) {
  validate_study(spec);
  const PerturbationStream root = PerturbationStream(spec.seed).with_log(std::move(log));

  // Oracles shared by every cell.
  Trajectory exact_iterate;
  std::vector<Trajectory> tangent_cache;
  if (spec.kind == StudyKind::lm_enks_vs_lm) {
    LMConfig cfg = spec.lm;
    cfg.mode = LMMode::exact;
    exact_iterate = lm_exact_run(spec.problem, cfg).iterates.back();
  } else if (spec.kind == StudyKind::tau_sweep) {
    LMConfig cfg = spec.lm;
    cfg.mode = LMMode::tangent;
    for (std::size_t r = 0; r < spec.replicates; ++r) {
      tangent_cache.push_back(
          lm_enks_tangent_run(spec.problem, cfg, root.derived(r)).iterates.back());
    }
  }

  StudyResult result;
  result.kind = spec.kind;
  result.problem_name = spec.problem_name;
  result.p_order = spec.p_order;
  result.replicates = spec.replicates;
  for (double value : spec.sweep) {
    const auto start = Clock::now();
    StudyRow row;
    row.sweep_value = value;
    row.raw_errors = run_cell(spec, value, root, tangent_cache, exact_iterate);
    row.error_estimate = empirical_lp_norm(std::span<const double>(row.raw_errors), spec.p_order);
    row.stderr_estimate = lp_standard_error(row.raw_errors, spec.p_order);
    row.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    result.rows.push_back(std::move(row));
  }

  if (result.rows.size() >= 2) {
    std::vector<double> xs, ys;
    bool positive = true;
    for (const auto& row : result.rows) {
      xs.push_back(row.sweep_value);
      ys.push_back(row.error_estimate);
      positive = positive && row.error_estimate > 0.0;
    }
    if (positive) {
      const LogLogFit fit = fit_loglog_slope(xs, ys);
      result.slope = fit.slope;
      result.intercept = fit.intercept;
    }
  }
  return result;
}

std::string format_number(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

std::string to_csv(const StudyResult& result) {
  std::ostringstream out;
  out << "sweep_value,p_order,replicates,error_estimate,stderr_estimate,wall_ms\n";
  for (const auto& row : result.rows) {
    out << format_number(row.sweep_value) << ',' << format_number(result.p_order) << ','
        << result.replicates << ',' << format_number(row.error_estimate) << ','
        << format_number(row.stderr_estimate) << ',' << format_number(row.wall_ms) << '\n';
  }
  return out.str();
}

namespace {

std::string json_number(const std::optional<double>& v) {
  return v ? format_number(*v) : "null";
}

}  // namespace

std::string to_json(const StudyResult& result) {
  // Hand-written so every number carries 17 significant digits.
  std::ostringstream out;
  out << "{\n";
  out << "  \"kind\": " << nlohmann::json(to_string(result.kind)).dump() << ",\n";
  out << "  \"problem\": " << nlohmann::json(result.problem_name).dump() << ",\n";
  out << "  \"p_order\": " << format_number(result.p_order) << ",\n";
  out << "  \"replicates\": " << result.replicates << ",\n";
  out << "  \"slope\": " << json_number(result.slope) << ",\n";
  out << "  \"intercept\": " << json_number(result.intercept) << ",\n";
  out << "  \"rows\": [";
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    const auto& row = result.rows[i];
    out << (i ? ",\n" : "\n") << "    {\"sweep_value\": " << format_number(row.sweep_value)
        << ", \"error_estimate\": " << format_number(row.error_estimate)
        << ", \"stderr_estimate\": " << format_number(row.stderr_estimate)
        << ", \"wall_ms\": " << format_number(row.wall_ms) << ", \"raw_errors\": [";
    for (std::size_t r = 0; r < row.raw_errors.size(); ++r) {
      out << (r ? ", " : "") << format_number(row.raw_errors[r]);
    }
    out << "]}";
  }
  out << (result.rows.empty() ? "]\n" : "\n  ]\n") << "}\n";
  return out.str();
}

StudyResult study_result_from_json(const std::string& text) {
  StudyResult result;
  try {
    const auto j = nlohmann::json::parse(text);
    result.kind = study_kind_from_string(j.at("kind").get<std::string>());
    result.problem_name = j.at("problem").get<std::string>();
    result.p_order = j.at("p_order").get<double>();
    result.replicates = j.at("replicates").get<std::size_t>();
    if (!j.at("slope").is_null()) result.slope = j.at("slope").get<double>();
    if (!j.at("intercept").is_null()) result.intercept = j.at("intercept").get<double>();
    for (const auto& r : j.at("rows")) {
      StudyRow row;
      row.sweep_value = r.at("sweep_value").get<double>();
      row.error_estimate = r.at("error_estimate").get<double>();
      row.stderr_estimate = r.at("stderr_estimate").get<double>();
      row.wall_ms = r.at("wall_ms").get<double>();
      row.raw_errors = r.at("raw_errors").get<std::vector<double>>();
      result.rows.push_back(std::move(row));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("json", std::string("malformed study result: ") + e.what());
  }
  return result;
}

void emit(const StudyResult& result, OutputFormat format, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << (format == OutputFormat::csv ? to_csv(result) : to_json(result));
  out.flush();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace ensvar
