#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "ensvar/fourdvar.hpp"
#include "ensvar/study.hpp"

namespace ensvar {

/// Settings for run-enks.
struct EnsembleRunConfig {
  std::size_t ensemble_size = 100;
  bool smoother = true;
};

/// Everything a config document can hold. Sections:
///
///   problem:  either `toy: <name>` (or a map with name/m/k/seed/dt) or an
///             explicit linear system with state_dim, horizon, x_b, B, M, mu,
///             Q, H, R, y. Per-step fields take a list with one entry per step,
///             or a single entry reused for every step.
///   lm:       gamma, tau, ensemble_sizes, max_iterations, mode, initial_trajectory
///   study:    kind, sweep, replicates, p_order, seed
///   enks:     ensemble_size, smoother
///   seed:     root seed for run-* commands (study.seed takes precedence for study)
struct RunConfig {
  std::string problem_name;
  std::optional<AssimilationProblem> problem;
  LMConfig lm;
  std::optional<StudySpec> study;
  EnsembleRunConfig enks;
  std::uint64_t seed = 0;
};

/// Throws ValidationError on schema problems and IoError if the file cannot be read.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& text);

}  // namespace ensvar
