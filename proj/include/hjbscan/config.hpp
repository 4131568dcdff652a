#pragma once

// YAML problem configs. Needs yaml-cpp (target hjbscan_io).

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "hjbscan/error.hpp"
#include "hjbscan/lqt_solver.hpp"
#include "hjbscan/model.hpp"
#include "hjbscan/nl_hjb.hpp"

namespace hjbscan {

enum class LqtKind { kTracking, kScalarLqr, kGeneral };

struct LqtConfig {
  LqtKind kind = LqtKind::kTracking;
  LqtProblem problem;
  TimeGrid grid;
  LqtOptions options;
  double scalar_terminal_weight = 1.0;  // kScalarLqr only
};

struct NonlinearConfig {
  NonlinearScalarProblem problem;
  double x_min = -4.0;
  double x_max = 4.0;
  std::vector<int> grid_sizes{40};
  double block_length = 0.1;
  int blocks = 10;
  int steps_per_block = 10;
  int upwind_substeps = 20;
};

namespace detail {

inline int yaml_line(const YAML::Node& node) { return node.Mark().line >= 0 ? node.Mark().line + 1 : 0; }

inline YAML::Node require(const YAML::Node& parent, const std::string& key) {
  const YAML::Node node = parent[key];
  if (!node) throw ConfigError("missing key '" + key + "'", yaml_line(parent));
  return node;
}

template <class T>
T as(const YAML::Node& node, const std::string& what) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("'" + what + "' has the wrong type", yaml_line(node));
  }
}

template <class T>
T get_or(const YAML::Node& parent, const std::string& key, T fallback) {
  const YAML::Node node = parent[key];
  return node ? as<T>(node, key) : fallback;
}

inline MatrixXd as_matrix(const YAML::Node& node, const std::string& what) {
  if (!node.IsSequence() || node.size() == 0) throw ConfigError("'" + what + "' must be a list of rows", yaml_line(node));
  const bool nested = node[0].IsSequence();
  const std::size_t rows = nested ? node.size() : 1;
  const std::size_t cols = nested ? node[0].size() : node.size();
  MatrixXd m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const YAML::Node row = nested ? node[i] : node;
    if (!row.IsSequence() || row.size() != cols) throw ConfigError("'" + what + "' has ragged rows", yaml_line(row));
    for (std::size_t k = 0; k < cols; ++k) m(i, k) = as<double>(row[k], what);
  }
  return m;
}

inline VectorXd as_vector(const YAML::Node& node, const std::string& what) {
  if (!node.IsSequence()) throw ConfigError("'" + what + "' must be a list", yaml_line(node));
  VectorXd v(node.size());
  for (std::size_t i = 0; i < node.size(); ++i) v[i] = as<double>(node[i], what);
  return v;
}

inline FourierReference parse_reference(const YAML::Node& node) {
  FourierReference ref;
  ref.period = as<double>(require(node, "period"), "period");
  if (!(ref.period > 0.0)) throw ConfigError("'period' must be positive", yaml_line(node["period"]));
  ref.cos_coeffs = as<std::vector<std::vector<double>>>(require(node, "cos"), "cos");
  ref.sin_coeffs = node["sin"] ? as<std::vector<std::vector<double>>>(node["sin"], "sin")
                               : std::vector<std::vector<double>>(ref.cos_coeffs.size());
  if (ref.sin_coeffs.size() != ref.cos_coeffs.size()) {
    throw ConfigError("'sin' and 'cos' need one row per output", yaml_line(node["sin"]));
  }
  return ref;
}

inline YAML::Node load_yaml(const std::string& text) {
  try {
    return YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(e.msg, e.mark.line >= 0 ? e.mark.line + 1 : 0);
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string(), 0);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline TimeGrid parse_time_grid(const YAML::Node& root) {
  const YAML::Node t = require(root, "time");
  const double t0 = get_or<double>(t, "t0", 0.0);
  const double tf = as<double>(require(t, "tf"), "tf");
  const int blocks = as<int>(require(t, "blocks"), "blocks");
  const int steps = as<int>(require(t, "steps_per_block"), "steps_per_block");
  try {
    return make_uniform_grid(t0, tf, blocks, steps);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what(), yaml_line(t));
  }
}

}  // namespace detail

inline LqtConfig parse_lqt_config(const std::string& text) {
  const YAML::Node root = detail::load_yaml(text);
  if (!root.IsMap()) throw ConfigError("config must be a mapping", 1);
  LqtConfig cfg;
  const YAML::Node kind = detail::require(root, "problem");
  const std::string name = detail::as<std::string>(kind, "problem");
  cfg.grid = detail::parse_time_grid(root);

  if (name == "tracking") {
    cfg.kind = LqtKind::kTracking;
    const FourierReference ref = detail::parse_reference(detail::require(root, "reference"));
    if (ref.dim() != 2) throw ConfigError("tracking reference needs exactly 2 outputs", detail::yaml_line(root["reference"]));
    cfg.problem = tracking_problem(ref, cfg.grid.tf);
  } else if (name == "scalar-lqr") {
    cfg.kind = LqtKind::kScalarLqr;
    cfg.scalar_terminal_weight = detail::get_or<double>(root, "terminal_weight", 1.0);
    cfg.problem = scalar_lqr_problem(cfg.scalar_terminal_weight, detail::get_or<double>(root, "x0", 1.0));
  } else if (name == "lqt") {
    cfg.kind = LqtKind::kGeneral;
    const YAML::Node m = detail::require(root, "matrices");
    auto mat = [&](const std::string& key) { return detail::as_matrix(detail::require(m, key), key); };
    auto vec = [&](const std::string& key) { return detail::as_vector(detail::require(m, key), key); };
    const MatrixXd F = mat("F"), L = mat("L"), H = mat("H");
    const VectorXd c = m["c"] ? vec("c") : VectorXd::Zero(F.rows());
    const VectorXd r = m["r"] ? vec("r") : VectorXd::Zero(H.rows());
    cfg.problem = LqtProblem::constant(F, L, c, H, mat("X"), mat("U"), r, mat("Hf"), mat("Xf"), vec("rf"), vec("x0"));
    if (root["reference"]) {
      const FourierReference ref = detail::parse_reference(root["reference"]);
      if (ref.dim() != cfg.problem.nr) throw ConfigError("reference outputs must match H rows", detail::yaml_line(root["reference"]));
      cfg.problem.r = [ref](double t) { return ref(t); };
    }
  } else {
    throw ConfigError("unknown problem '" + name + "' (expected tracking, scalar-lqr or lqt)", detail::yaml_line(kind));
  }

  if (const YAML::Node s = root["solver"]) {
    const std::string init = detail::get_or<std::string>(s, "init", "backward");
    if (init != "backward" && init != "forward") throw ConfigError("solver.init must be backward or forward", detail::yaml_line(s["init"]));
    cfg.options.init = init == "backward" ? ElementInit::kBackward : ElementInit::kForward;
    const std::string rec = detail::get_or<std::string>(s, "recovery", "transitions");
    if (rec != "transitions" && rec != "conditional") {
      throw ConfigError("solver.recovery must be transitions or conditional", detail::yaml_line(s["recovery"]));
    }
    cfg.options.recovery = rec == "transitions" ? Recovery::kTransitions : Recovery::kConditional;
  }
  try {
    cfg.problem.validate(cfg.grid.t0);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what(), 0);
  }
  return cfg;
}

inline NonlinearConfig parse_nonlinear_config(const std::string& text) {
  const YAML::Node root = detail::load_yaml(text);
  if (!root.IsMap()) throw ConfigError("config must be a mapping", 1);
  const YAML::Node kind = detail::require(root, "problem");
  if (detail::as<std::string>(kind, "problem") != "nonlinear") {
    throw ConfigError("expected problem: nonlinear", detail::yaml_line(kind));
  }
  NonlinearConfig cfg;
  const YAML::Node dyn = detail::require(root, "dynamics");
  cfg.problem.c0 = detail::get_or<double>(dyn, "c0", 0.0);
  cfg.problem.c1 = detail::get_or<double>(dyn, "c1", 0.0);
  cfg.problem.c2 = detail::get_or<double>(dyn, "c2", 0.0);
  cfg.problem.g = detail::get_or<double>(dyn, "g", 1.0);
  const YAML::Node cost = detail::require(root, "cost");
  cfg.problem.qx = detail::get_or<double>(cost, "qx", 1.0);
  cfg.problem.ru = detail::get_or<double>(cost, "ru", 1.0);
  cfg.problem.pf = detail::get_or<double>(cost, "pf", 0.0);
  try {
    cfg.problem.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what(), detail::yaml_line(cost));
  }

  const YAML::Node sg = detail::require(root, "state_grid");
  cfg.x_min = detail::as<double>(detail::require(sg, "x_min"), "x_min");
  cfg.x_max = detail::as<double>(detail::require(sg, "x_max"), "x_max");
  const YAML::Node pts = detail::require(sg, "points");
  cfg.grid_sizes = pts.IsSequence() ? detail::as<std::vector<int>>(pts, "points")
                                    : std::vector<int>{detail::as<int>(pts, "points")};
  for (int M : cfg.grid_sizes) {
    if (M < 3) throw ConfigError("state grid needs at least 3 points", detail::yaml_line(pts));
  }
  if (!(cfg.x_max > cfg.x_min)) throw ConfigError("state grid needs x_max > x_min", detail::yaml_line(sg));

  const YAML::Node t = detail::require(root, "time");
  cfg.block_length = detail::as<double>(detail::require(t, "block_length"), "block_length");
  cfg.blocks = detail::as<int>(detail::require(t, "blocks"), "blocks");
  cfg.steps_per_block = detail::as<int>(detail::require(t, "steps_per_block"), "steps_per_block");
  if (!(cfg.block_length > 0.0) || cfg.blocks < 1 || cfg.steps_per_block < 1) {
    throw ConfigError("time needs block_length > 0, blocks >= 1, steps_per_block >= 1", detail::yaml_line(t));
  }
  if (const YAML::Node up = root["upwind"]) {
    cfg.upwind_substeps = detail::get_or<int>(up, "substeps_per_block", cfg.upwind_substeps);
    if (cfg.upwind_substeps < 1) throw ConfigError("upwind.substeps_per_block must be >= 1", detail::yaml_line(up));
  }
  return cfg;
}

inline LqtConfig load_lqt_config(const std::filesystem::path& path) { return parse_lqt_config(detail::read_file(path)); }

inline NonlinearConfig load_nonlinear_config(const std::filesystem::path& path) {
  return parse_nonlinear_config(detail::read_file(path));
}

}  // namespace hjbscan
