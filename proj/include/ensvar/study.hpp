#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ensvar/fourdvar.hpp"
#include "ensvar/perturbation.hpp"
#include "ensvar/problem.hpp"

namespace ensvar {

enum class StudyKind { enks_vs_ks, lm_enks_vs_lm, tau_sweep };

std::string to_string(StudyKind kind);
StudyKind study_kind_from_string(const std::string& name);

/// A convergence study: for each sweep value run `replicates` coupled pairs
/// (algorithm vs. oracle) and summarize the L^p norm of their difference.
///
///   enks_vs_ks     sweep over N; first EnKS member vs. first reference member
///   lm_enks_vs_lm  sweep over N; tangent LM-EnKS iterate J vs. exact LM iterate J
///   tau_sweep      sweep over tau at N = lm.ensemble_sizes; finite-difference
///                  iterate J vs. tangent iterate J under shared draws
struct StudySpec {
  StudyKind kind = StudyKind::enks_vs_ks;
  std::vector<double> sweep;
  std::size_t replicates = 1;
  double p_order = 2.0;
  std::uint64_t seed = 0;
  std::string problem_name;
  AssimilationProblem problem;
  LMConfig lm;
};

void validate_study(const StudySpec& spec);

struct StudyRow {
  double sweep_value = 0.0;
  double error_estimate = 0.0;
  double stderr_estimate = 0.0;
  double wall_ms = 0.0;
  std::vector<double> raw_errors;

  friend bool operator==(const StudyRow&, const StudyRow&) = default;
};

struct StudyResult {
  StudyKind kind = StudyKind::enks_vs_ks;
  std::string problem_name;
  double p_order = 2.0;
  std::size_t replicates = 1;
  std::vector<StudyRow> rows;
  /// Absent when fewer than two sweep values were run.
  std::optional<double> slope;
  std::optional<double> intercept;

  friend bool operator==(const StudyResult&, const StudyResult&) = default;
};

/// Optional shared draw log; the study streams record every key they consume.
StudyResult run_study(const StudySpec& spec, std::shared_ptr<DrawLog> log = nullptr);

/// Standard error of the L^p estimate over raw errors (delta method); 0 for R = 1.
double lp_standard_error(const std::vector<double>& raw, double p);

enum class OutputFormat { csv, json };
OutputFormat output_format_from_string(const std::string& name);

std::string to_csv(const StudyResult& result);
std::string to_json(const StudyResult& result);
StudyResult study_result_from_json(const std::string& text);

/// Writes the result to `path`; throws IoError on failure.
void emit(const StudyResult& result, OutputFormat format, const std::filesystem::path& path);

/// printf("%.17g").
std::string format_number(double value);

}  // namespace ensvar
