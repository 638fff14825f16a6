#include "ensvar/config.hpp"

#include <fstream>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "ensvar/errors.hpp"
#include "ensvar/toy_models.hpp"

namespace ensvar {

namespace {

template <typename T>
T scalar(const YAML::Node& node, const std::string& field) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ValidationError(field, "bad value for '" + field + "'");
  }
}

Vector to_vector(const YAML::Node& node, const std::string& field) {
  if (node.IsScalar()) return Vector::Constant(1, scalar<double>(node, field));
  if (!node.IsSequence()) throw ValidationError(field, "'" + field + "' must be a list");
  Vector v(static_cast<Index>(node.size()));
  for (std::size_t i = 0; i < node.size(); ++i) v(static_cast<Index>(i)) = scalar<double>(node[i], field);
  return v;
}

Matrix to_matrix(const YAML::Node& node, const std::string& field) {
  if (node.IsScalar()) return Matrix::Constant(1, 1, scalar<double>(node, field));
  if (!node.IsSequence() || node.size() == 0) {
    throw ValidationError(field, "'" + field + "' must be a nested list (row-major)");
  }
  const auto rows = static_cast<Index>(node.size());
  const Index cols = to_vector(node[0], field).size();
  Matrix a(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    const Vector row = to_vector(node[static_cast<std::size_t>(r)], field);
    if (row.size() != cols) throw DimensionError(field, "ragged matrix rows");
    a.row(r) = row.transpose();
  }
  return a;
}

bool is_list_of_lists(const YAML::Node& node) {
  return node.IsSequence() && node.size() > 0 && node[0].IsSequence();
}

bool is_list_of_matrices(const YAML::Node& node) {
  return is_list_of_lists(node) && node[0].size() > 0 && node[0][0].IsSequence();
}

std::vector<Vector> per_step_vectors(const YAML::Node& node, const std::string& field,
                                     std::size_t steps) {
  if (!node) throw ValidationError(field, "missing '" + field + "'");
  std::vector<Vector> out;
  if (is_list_of_lists(node)) {
    if (node.size() != steps) throw DimensionError(field, "expected one entry per step");
    for (const auto& item : node) out.push_back(to_vector(item, field));
  } else {
    out.assign(steps, to_vector(node, field));
  }
  return out;
}

std::vector<Matrix> per_step_matrices(const YAML::Node& node, const std::string& field,
                                      std::size_t steps) {
  if (!node) throw ValidationError(field, "missing '" + field + "'");
  std::vector<Matrix> out;
  if (is_list_of_matrices(node)) {
    if (node.size() != steps) throw DimensionError(field, "expected one entry per step");
    for (const auto& item : node) out.push_back(to_matrix(item, field));
  } else {
    out.assign(steps, to_matrix(node, field));
  }
  return out;
}

ToySpec toy_spec(const YAML::Node& node) {
  if (node.IsScalar()) return parse_toy_spec(scalar<std::string>(node, "toy"));
  if (!node.IsMap() || !node["name"]) throw ValidationError("toy", "toy needs a name");
  ToySpec spec = parse_toy_spec(scalar<std::string>(node["name"], "toy.name"));
  if (node["m"]) spec.state_dim = scalar<Index>(node["m"], "toy.m");
  if (node["k"]) spec.horizon = scalar<std::size_t>(node["k"], "toy.k");
  if (node["seed"]) spec.seed = scalar<std::uint64_t>(node["seed"], "toy.seed");
  if (node["dt"]) spec.dt = scalar<double>(node["dt"], "toy.dt");
  return spec;
}

AssimilationProblem explicit_problem(const YAML::Node& node) {
  if (!node["horizon"]) throw ValidationError("horizon", "missing 'horizon'");
  const auto k = scalar<std::size_t>(node["horizon"], "horizon");
  if (k == 0) throw DimensionError("horizon", "horizon must be positive");
  AssimilationProblem p;
  if (!node["x_b"]) throw ValidationError("x_b", "missing 'x_b'");
  if (!node["B"]) throw ValidationError("B", "missing 'B'");
  p.background_mean = to_vector(node["x_b"], "x_b");
  p.background_cov = to_matrix(node["B"], "B");
  if (node["state_dim"] && scalar<Index>(node["state_dim"], "state_dim") != p.background_mean.size()) {
    throw DimensionError("x_b", "length differs from state_dim");
  }
  const auto ms = per_step_matrices(node["M"], "M", k);
  const auto mus = per_step_vectors(node["mu"], "mu", k);
  const auto qs = per_step_matrices(node["Q"], "Q", k);
  const auto hs = per_step_matrices(node["H"], "H", k);
  const auto rs = per_step_matrices(node["R"], "R", k);
  const auto ys = per_step_vectors(node["y"], "y", k);
  for (std::size_t i = 0; i < k; ++i) {
    p.models.push_back({Operator::linear(indexed_field("M", i + 1), ms[i]), mus[i], qs[i]});
    p.observations.push_back({Operator::linear(indexed_field("H", i + 1), hs[i]), rs[i], ys[i]});
  }
  return validate_problem(p);
}

LMConfig lm_config(const YAML::Node& node) {
  LMConfig cfg;
  if (!node) return cfg;
  if (node["gamma"]) cfg.gamma = scalar<double>(node["gamma"], "gamma");
  if (node["tau"]) cfg.tau = scalar<double>(node["tau"], "tau");
  if (node["ensemble_sizes"]) {
    cfg.ensemble_sizes.clear();
    const auto& sizes = node["ensemble_sizes"];
    if (sizes.IsScalar()) {
      cfg.ensemble_sizes.push_back(scalar<std::size_t>(sizes, "ensemble_sizes"));
    } else {
      for (const auto& s : sizes) cfg.ensemble_sizes.push_back(scalar<std::size_t>(s, "ensemble_sizes"));
    }
  }
  if (node["max_iterations"]) cfg.max_iterations = scalar<std::size_t>(node["max_iterations"], "max_iterations");
  if (node["mode"]) cfg.mode = lm_mode_from_string(scalar<std::string>(node["mode"], "mode"));
  if (node["initial_trajectory"]) {
    std::vector<Vector> states;
    for (const auto& s : node["initial_trajectory"]) states.push_back(to_vector(s, "initial_trajectory"));
    cfg.initial = Trajectory(std::move(states));
  }
  return cfg;
}

RunConfig from_yaml(const YAML::Node& root) {
  if (!root.IsMap()) throw ValidationError("config", "config must be a key-value document");
  RunConfig cfg;
  if (root["seed"]) cfg.seed = scalar<std::uint64_t>(root["seed"], "seed");
  if (const auto problem = root["problem"]) {
    if (problem["toy"]) {
      const ToySpec spec = toy_spec(problem["toy"]);
      cfg.problem_name = describe(spec);
      cfg.problem = make_toy_problem(spec);
    } else {
      cfg.problem_name = "explicit";
      cfg.problem = explicit_problem(problem);
    }
  }
  cfg.lm = lm_config(root["lm"]);
  if (const auto enks = root["enks"]) {
    if (enks["ensemble_size"]) cfg.enks.ensemble_size = scalar<std::size_t>(enks["ensemble_size"], "ensemble_size");
    if (enks["smoother"]) cfg.enks.smoother = scalar<bool>(enks["smoother"], "smoother");
  }
  if (const auto study = root["study"]) {
    StudySpec spec;
    if (!study["kind"]) throw ValidationError("kind", "study needs a kind");
    spec.kind = study_kind_from_string(scalar<std::string>(study["kind"], "kind"));
    if (!study["sweep"]) throw ValidationError("sweep", "study needs a sweep");
    const Vector sweep = to_vector(study["sweep"], "sweep");
    spec.sweep.assign(sweep.data(), sweep.data() + sweep.size());
    if (study["replicates"]) spec.replicates = scalar<std::size_t>(study["replicates"], "replicates");
    if (study["p_order"]) spec.p_order = scalar<double>(study["p_order"], "p_order");
    spec.seed = study["seed"] ? scalar<std::uint64_t>(study["seed"], "seed") : cfg.seed;
    spec.lm = cfg.lm;
    if (cfg.problem) {
      spec.problem = *cfg.problem;
      spec.problem_name = cfg.problem_name;
    }
    cfg.study = std::move(spec);
  }
  return cfg;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ValidationError("config", std::string("cannot parse config: ") + e.what());
  }
  return from_yaml(root);
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

}  // namespace ensvar
