// Copyright 2026 The Surrogate Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Experiment configs (JSON, closed schema, version 1) and the runner that
// dispatches them to the engines.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "surrogate/io.hpp"
#include "surrogate/surrogate.hpp"

namespace surrogate::cli {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitBudget = 3;

/// A config rejected at a specific field; the message starts with its path.
class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

enum class Mode { validity, sample, simulate, compare, diagnostics, dyson };

inline const std::vector<std::pair<Mode, std::string>>& mode_names() {
  static const std::vector<std::pair<Mode, std::string>> names = {
      {Mode::validity, "validity"}, {Mode::sample, "sample"},
      {Mode::simulate, "simulate"}, {Mode::compare, "compare"},
      {Mode::diagnostics, "diagnostics"}, {Mode::dyson, "dyson"}};
  return names;
}

inline std::string to_string(Mode m) {
  for (const auto& [mode, name] : mode_names()) {
    if (mode == m) return name;
  }
  return "?";
}

inline std::optional<Mode> parse_mode(const std::string& s) {
  for (const auto& [mode, name] : mode_names()) {
    if (name == s) return mode;
  }
  return std::nullopt;
}

inline std::optional<EvolutionMethod> parse_method(const std::string& s) {
  if (s == "exact-step") return EvolutionMethod::exact_step;
  if (s == "euler") return EvolutionMethod::euler;
  return std::nullopt;
}

/// A JSON value together with its dotted path, for error messages.
class Field {
 public:
  Field(const json& value, std::string path) : v_(&value), path_(std::move(path)) {}

  const json& value() const { return *v_; }
  const std::string& path() const { return path_; }

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError((path_.empty() ? std::string("config") : path_) + ": " + msg);
  }

  /// Requires an object whose keys all appear in `allowed`.
  void expect_object(std::initializer_list<const char*> allowed) const {
    if (!v_->is_object()) fail("expected an object");
    for (const auto& item : v_->items()) {
      bool known = false;
      for (const char* a : allowed) known = known || item.key() == a;
      if (!known) child_path_fail(item.key(), "unknown field");
    }
  }

  bool has(const char* key) const { return v_->contains(key); }

  Field at(const char* key) const {
    if (!v_->contains(key)) child_path_fail(key, "required field missing");
    return Field((*v_)[key], child(key));
  }

  std::optional<Field> find(const char* key) const {
    if (!v_->contains(key)) return std::nullopt;
    return Field((*v_)[key], child(key));
  }

  std::size_t size() const {
    if (!v_->is_array()) fail("expected an array");
    return v_->size();
  }

  Field operator[](std::size_t i) const {
    return Field((*v_)[i], path_ + "[" + std::to_string(i) + "]");
  }

  double number() const {
    if (!v_->is_number()) fail("expected a number");
    const double x = v_->get<double>();
    if (!std::isfinite(x)) fail("expected a finite number");
    return x;
  }

  double positive() const {
    const double x = number();
    if (!(x > 0.0)) fail("must be positive");
    return x;
  }

  std::int64_t integer() const {
    if (!v_->is_number_integer()) fail("expected an integer");
    return v_->get<std::int64_t>();
  }

  std::uint64_t u64() const {
    if (!v_->is_number_unsigned() && !(v_->is_number_integer() && v_->get<std::int64_t>() >= 0)) {
      fail("expected a non-negative integer");
    }
    return v_->get<std::uint64_t>();
  }

  std::string string() const {
    if (!v_->is_string()) fail("expected a string");
    return v_->get<std::string>();
  }

  bool boolean() const {
    if (!v_->is_boolean()) fail("expected a boolean");
    return v_->get<bool>();
  }

  std::vector<double> numbers() const {
    std::vector<double> out(size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*this)[i].number();
    return out;
  }

  /// Array of rows; each entry is a number or a [re, im] pair.
  Matrix matrix() const {
    const std::size_t rows = size();
    if (rows == 0) fail("matrix is empty");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(rows));
    for (std::size_t i = 0; i < rows; ++i) {
      const Field row = (*this)[i];
      if (!row.value().is_array()) row.fail("expected a matrix row");
      if (row.value().size() != rows) {
        row.fail("matrix is not square: " + std::to_string(rows) + " rows but " +
                 std::to_string(row.value().size()) + " columns");
      }
      for (std::size_t j = 0; j < rows; ++j) {
        const Field e = row[j];
        if (e.value().is_array()) {
          if (e.value().size() != 2) e.fail("complex entry must be [re, im]");
          m(Eigen::Index(i), Eigen::Index(j)) = Complex(e[0].number(), e[1].number());
        } else {
          m(Eigen::Index(i), Eigen::Index(j)) = e.number();
        }
      }
    }
    return m;
  }

 private:
  std::string child(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }
  [[noreturn]] void child_path_fail(const std::string& key, const std::string& msg) const {
    throw ConfigError(child(key) + ": " + msg);
  }

  const json* v_;
  std::string path_;
};

/// Runs `f`, prefixing any library validation error with `path`.
template <class F>
auto at_path(const std::string& path, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const ValidationError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

struct Tolerances {
  ValidityThresholds validity;
  double nonnegativity = 1e-10;
  double gaussian = 1e-8;
  double grouping_relative = 1e-9;
  PlanTolerances plan;
  StructureTolerances structure;
  double compare_sigma = 3.0;
  double compare_floor = 1e-3;
};

struct ExperimentConfig {
  Mode mode = Mode::validity;
  std::string name;
  std::optional<SystemContext> system;
  std::optional<EnvironmentSpec> environment;
  std::optional<Lindbladian> lindbladian;
  std::optional<TimeGrid> grid;
  /// Ascending evaluation times for diagnostics and dyson.
  std::vector<double> times;
  int k_max = 3;
  std::size_t n_samples = 1000;
  std::uint64_t seed = 0;
  EvolutionOptions evolution;
  int threads = 1;
  int quad_nodes = 12;
  bool write_binary = false;
  std::string output_dir = "out";
  Tolerances tol;
  /// FNV-1a of the canonical (sorted-key, compact) config text.
  std::uint64_t hash = 0;
};

namespace detail {

inline Operator hermitian_at(const Field& f, const Tolerances& tol) {
  const Matrix m = f.matrix();
  return at_path(f.path(), [&] { return Operator::hermitian(m, tol.structure); });
}

inline Operator density_at(const Field& f, const Tolerances& tol) {
  const Matrix m = f.matrix();
  return at_path(f.path(), [&] { return Operator::density(m, tol.structure); });
}

inline void parse_tolerances(const Field& f, Tolerances& t) {
  f.expect_object({"validity_exact", "validity_tau", "nonnegativity", "gaussian",
                   "grouping_relative", "plan_clamp", "plan_normalization",
                   "hermitian", "unitary", "density_trace",
                   "density_min_eigenvalue", "compare_sigma", "compare_floor"});
  auto set = [&](const char* key, double& dst) {
    if (auto v = f.find(key)) dst = v->positive();
  };
  set("validity_exact", t.validity.exact);
  set("validity_tau", t.validity.tau);
  set("nonnegativity", t.nonnegativity);
  set("gaussian", t.gaussian);
  set("grouping_relative", t.grouping_relative);
  set("plan_clamp", t.plan.clamp);
  set("plan_normalization", t.plan.normalization);
  set("hermitian", t.structure.hermitian);
  set("unitary", t.structure.unitary);
  set("density_trace", t.structure.density_trace);
  set("density_min_eigenvalue", t.structure.density_min_eigenvalue);
  set("compare_sigma", t.compare_sigma);
  set("compare_floor", t.compare_floor);
  if (t.validity.exact > t.validity.tau) {
    f.fail("validity_exact must not exceed validity_tau");
  }
}

inline SystemContext parse_system(const Field& f, const Tolerances& tol) {
  if (!f.value().is_object()) f.fail("expected an object");
  const std::string kind = f.at("kind").string();
  if (kind == "dephasing_qubit") {
    f.expect_object({"kind", "rho_s"});
    const Operator rho = density_at(f.at("rho_s"), tol);
    return at_path(f.path(), [&] { return SystemContext::dephasing_qubit(rho); });
  }
  if (kind == "general") {
    f.expect_object({"kind", "h_s", "v_s", "rho_s"});
    Operator h = hermitian_at(f.at("h_s"), tol);
    Operator v = hermitian_at(f.at("v_s"), tol);
    Operator rho = density_at(f.at("rho_s"), tol);
    return at_path(f.path(), [&] { return SystemContext(h, v, rho); });
  }
  f.at("kind").fail("expected \"dephasing_qubit\" or \"general\"");
}

inline GroupingOptions parse_grouping(const Field& env, const Tolerances& tol) {
  GroupingOptions g;
  g.relative_tolerance = tol.grouping_relative;
  if (auto m = env.find("max_dim")) {
    const auto d = m->integer();
    if (d < 1) m->fail("must be >= 1");
    g.max_dim = int(d);
  }
  if (auto groups = env.find("groups")) {
    std::vector<std::vector<int>> out(groups->size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      const Field gi = (*groups)[i];
      for (std::size_t j = 0; j < gi.size(); ++j) {
        const auto idx = gi[j].integer();
        if (idx < 0) gi[j].fail("index must be >= 0");
        out[i].push_back(int(idx));
      }
    }
    g.override_groups = std::move(out);
  }
  return g;
}

inline void parse_environment(const Field& f, ExperimentConfig& cfg) {
  if (!f.value().is_object()) f.fail("expected an object");
  const Tolerances& tol = cfg.tol;
  const std::string kind = f.at("kind").string();
  if (kind == "general") {
    f.expect_object({"kind", "h_e", "v_e", "rho_e", "jumps", "groups", "max_dim"});
    Operator h = hermitian_at(f.at("h_e"), tol);
    Operator v = hermitian_at(f.at("v_e"), tol);
    Operator rho = density_at(f.at("rho_e"), tol);
    const GroupingOptions g = parse_grouping(f, tol);
    cfg.environment.emplace(at_path(f.path(), [&] { return EnvironmentSpec(h, v, rho, g); }));
    if (auto jumps = f.find("jumps")) {
      std::vector<JumpOperator> js;
      for (std::size_t i = 0; i < jumps->size(); ++i) {
        const Field j = (*jumps)[i];
        j.expect_object({"op", "rate"});
        const double rate = j.at("rate").number();
        if (rate < 0.0) j.at("rate").fail("must be >= 0");
        js.push_back({j.at("op").matrix(), rate});
      }
      cfg.lindbladian.emplace(at_path(jumps->path(), [&] {
        return Lindbladian::from_gksl(h.matrix(), js);
      }));
    }
    return;
  }
  if (kind == "quasi_static") {
    f.expect_object({"kind", "h_diag", "v_diag", "rho_e", "groups", "max_dim"});
    const auto hd = f.at("h_diag").numbers();
    const auto vd = f.at("v_diag").numbers();
    Operator rho = density_at(f.at("rho_e"), tol);
    const GroupingOptions g = parse_grouping(f, tol);
    cfg.environment.emplace(
        at_path(f.path(), [&] { return make_quasi_static(hd, vd, rho, g); }));
    return;
  }
  if (kind == "rtn") {
    f.expect_object({"kind", "gamma", "rho_e"});
    const double gamma = f.at("gamma").positive();
    Operator rho = f.has("rho_e") ? density_at(f.at("rho_e"), tol)
                                  : Operator::maximally_mixed(2);
    RtnModel m = at_path(f.path(), [&] { return make_rtn(gamma, rho); });
    cfg.environment.emplace(std::move(m.environment));
    cfg.lindbladian.emplace(std::move(m.lindbladian));
    return;
  }
  f.at("kind").fail("expected \"general\", \"quasi_static\" or \"rtn\"");
}

inline TimeGrid parse_grid(const Field& f) {
  if (!f.value().is_object()) f.fail("expected an object");
  if (f.has("times")) {
    f.expect_object({"times"});
    std::vector<double> t = f.at("times").numbers();
    if (t.size() > 1 && t.front() < t.back()) std::reverse(t.begin(), t.end());
    return at_path(f.at("times").path(), [&] { return TimeGrid(t); });
  }
  f.expect_object({"t_max", "steps"});
  const double t_max = f.at("t_max").positive();
  const auto steps = f.at("steps").integer();
  if (steps < 1) f.at("steps").fail("must be >= 1");
  return TimeGrid::uniform(t_max, int(steps));
}

}  // namespace detail

/// Parses and validates a config. Throws ConfigError (or BudgetError for
/// oversized environments).
inline ExperimentConfig parse_config(const json& root_json) {
  const Field root(root_json, "");
  root.expect_object({"schema_version", "mode", "name", "system", "environment",
                      "grid", "times", "k_max", "n_samples", "seed", "method",
                      "substeps", "threads", "quad_nodes", "tolerances", "outputs"});
  ExperimentConfig cfg;
  const Field version = root.at("schema_version");
  if (version.integer() != kSchemaVersion) {
    version.fail("unsupported schema version " + version.value().dump() +
                 " (expected " + std::to_string(kSchemaVersion) + ")");
  }
  const Field mode = root.at("mode");
  const auto m = parse_mode(mode.string());
  if (!m) mode.fail("unknown mode \"" + mode.string() + "\"");
  cfg.mode = *m;
  if (auto f = root.find("name")) cfg.name = f->string();
  if (auto f = root.find("tolerances")) detail::parse_tolerances(*f, cfg.tol);

  if (auto f = root.find("k_max")) {
    const auto k = f->integer();
    if (k < 0 || k > 6) f->fail("must be in [0, 6]");
    cfg.k_max = int(k);
  }
  if (auto f = root.find("n_samples")) {
    const auto n = f->integer();
    if (n < 1) f->fail("must be >= 1");
    cfg.n_samples = std::size_t(n);
  }
  if (auto f = root.find("seed")) cfg.seed = f->u64();
  if (auto f = root.find("method")) {
    const auto me = parse_method(f->string());
    if (!me) f->fail("expected \"exact-step\" or \"euler\"");
    cfg.evolution.method = *me;
  }
  if (auto f = root.find("substeps")) {
    const auto s = f->integer();
    if (s < 1) f->fail("must be >= 1");
    cfg.evolution.substeps = int(s);
  }
  if (auto f = root.find("threads")) {
    const auto t = f->integer();
    if (t < 1) f->fail("must be >= 1");
    cfg.threads = int(t);
  }
  if (auto f = root.find("quad_nodes")) {
    const auto q = f->integer();
    if (q < 1 || q > 64) f->fail("must be in [1, 64]");
    cfg.quad_nodes = int(q);
  }
  if (auto f = root.find("outputs")) {
    f->expect_object({"dir", "binary"});
    if (auto d = f->find("dir")) cfg.output_dir = d->string();
    if (auto b = f->find("binary")) cfg.write_binary = b->boolean();
  }
  if (auto f = root.find("system")) cfg.system = detail::parse_system(*f, cfg.tol);
  if (auto f = root.find("environment")) detail::parse_environment(*f, cfg);
  if (auto f = root.find("grid")) cfg.grid = detail::parse_grid(*f);
  if (auto f = root.find("times")) {
    cfg.times = f->numbers();
    if (cfg.times.empty()) f->fail("must not be empty");
    at_path(f->path(), [&] {
      std::vector<double> t = cfg.times;
      std::sort(t.begin(), t.end());
      surrogate::detail::check_ascending(t);
      cfg.times = t;
      return 0;
    });
  }

  // Mode-required fields.
  auto require = [&](bool present, const char* key) {
    if (!present) {
      throw ConfigError(std::string(key) + ": required by mode " + to_string(cfg.mode));
    }
  };
  require(cfg.environment.has_value(), "environment");
  switch (cfg.mode) {
    case Mode::validity:
      require(cfg.grid.has_value(), "grid");
      break;
    case Mode::sample:
      require(cfg.grid.has_value(), "grid");
      require(root.has("n_samples"), "n_samples");
      require(root.has("seed"), "seed");
      break;
    case Mode::simulate:
    case Mode::compare:
      require(cfg.system.has_value(), "system");
      require(cfg.grid.has_value(), "grid");
      require(root.has("n_samples"), "n_samples");
      require(root.has("seed"), "seed");
      break;
    case Mode::diagnostics:
      require(cfg.system.has_value(), "system");
      require(cfg.grid.has_value(), "grid");
      require(!cfg.times.empty(), "times");
      break;
    case Mode::dyson:
      require(cfg.system.has_value(), "system");
      require(!cfg.times.empty(), "times");
      require(root.has("k_max"), "k_max");
      break;
  }
  if (cfg.mode != Mode::dyson && cfg.k_max < 1) {
    throw ConfigError("k_max: must be >= 1 for mode " + to_string(cfg.mode));
  }
  if (cfg.system && cfg.system->dim() < 1) throw ConfigError("system: empty");
  cfg.hash = io::fnv1a64(root_json.dump());
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read config " + path.string());
  std::ostringstream text;
  text << is.rdbuf();
  json root;
  try {
    root = json::parse(text.str());
  } catch (const json::parse_error& e) {
    throw ConfigError("config: not valid JSON (byte " + std::to_string(e.byte) + ")");
  }
  return parse_config(root);
}

/// Command-line overrides applied on top of the config.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<EvolutionMethod> method;
  std::optional<int> threads;
  std::optional<std::filesystem::path> out;
};

struct RunOutcome {
  std::vector<std::string> files;
  json verdicts = json::object();
};

namespace detail {

/// Calls fn with the unitary or Lindblad chain dynamics of the config.
template <class F>
auto with_dynamics(const ExperimentConfig& cfg, F&& fn) {
  if (cfg.lindbladian) return fn(LindbladDynamics(*cfg.lindbladian, *cfg.environment));
  return fn(UnitaryDynamics(*cfg.environment));
}

/// Up to four grid points spread over the whole grid, endpoints included.
inline TimeGrid probe_grid(const TimeGrid& grid) {
  const int n = grid.size();
  const int m = std::min(n, 4);
  std::vector<int> idx;
  for (int i = 0; i < m; ++i) {
    const int j = m == 1 ? 0 : int(std::lround(double(i) * (n - 1) / (m - 1)));
    if (idx.empty() || j != idx.back()) idx.push_back(j);
  }
  return grid.subset(idx);
}

inline json sweep_json(const ValiditySweep& s) {
  json orders = json::array();
  for (const auto& o : s.orders) {
    orders.push_back({{"k", o.k},
                      {"subsets", o.subsets},
                      {"validity_metric", o.metric},
                      {"max_abs", o.max_abs},
                      {"worst_grid", o.worst_grid.points()},
                      {"verdict", to_string(o.verdict)}});
  }
  return {{"verdict", to_string(s.verdict)},
          {"validity_metric", s.max_metric()},
          {"orders", orders}};
}

inline SweepOptions sweep_options(const ExperimentConfig& cfg) {
  SweepOptions o;
  o.thresholds = cfg.tol.validity;
  o.table.threads = cfg.threads;
  return o;
}

inline ValiditySweep probe_validity(const ExperimentConfig& cfg) {
  const TimeGrid probe = probe_grid(*cfg.grid);
  return with_dynamics(cfg, [&](const auto& dyn) {
    return validity_sweep(dyn, probe, std::min(cfg.k_max, probe.size()),
                          sweep_options(cfg));
  });
}

inline MonteCarloOptions mc_options(const ExperimentConfig& cfg) {
  MonteCarloOptions o;
  o.evolution = cfg.evolution;
  o.threads = cfg.threads;
  return o;
}

inline SamplerPlan make_plan(const ExperimentConfig& cfg, bool invalid) {
  SamplerPlan plan = with_dynamics(cfg, [&](const auto& dyn) {
    return build_plan(dyn, *cfg.grid, cfg.tol.plan);
  });
  plan.invalid_warning = invalid;
  return plan;
}

inline std::string matrix_header(const char* prefix, int d) {
  std::string h;
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      h += std::string(",") + prefix + "re_" + std::to_string(i) + std::to_string(j) +
           "," + prefix + "im_" + std::to_string(i) + std::to_string(j);
    }
  }
  return h;
}

inline void put_matrix(std::ostream& os, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      os << ',' << io::format_double(m(i, j).real()) << ','
         << io::format_double(m(i, j).imag());
    }
  }
}

class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path dir) : dir_(std::move(dir)) {}
  void write(const std::string& name, const std::string& content, RunOutcome& out) const {
    io::atomic_write(dir_ / name, content);
    out.files.push_back(name);
  }
  const std::filesystem::path& path() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

inline RunOutcome run_validity(const ExperimentConfig& cfg, const OutputDir& dir) {
  RunOutcome out;
  const TimeGrid& grid = *cfg.grid;
  const int k = std::min(cfg.k_max, grid.size());
  std::vector<int> lead(k);
  for (int i = 0; i < k; ++i) lead[i] = i;
  const TimeGrid head = grid.subset(lead);
  with_dynamics(cfg, [&](const auto& dyn) {
    const ValiditySweep sweep = validity_sweep(dyn, grid, cfg.k_max, sweep_options(cfg));
    QuasiProbOptions qo;
    qo.threads = cfg.threads;
    const QuasiProbTable table = quasi_prob(dyn, head, qo);
    double residual = 0.0;
    if (k >= 2) {
      const QuasiProbTable lower = quasi_prob(dyn, head.without(k - 1), qo);
      residual = consistency_check(table, lower, k - 1);
    }
    dir.write("quasiprob.csv", io::to_csv(io::write_table_csv, table), out);

    std::ostringstream os;
    os << "k,subsets,validity_metric,max_abs,verdict,worst_grid\n";
    for (const auto& o : sweep.orders) {
      os << o.k << ',' << o.subsets << ',' << io::format_double(o.metric) << ','
         << io::format_double(o.max_abs) << ',' << to_string(o.verdict) << ',';
      for (int i = 0; i < o.worst_grid.size(); ++i) {
        os << (i ? ";" : "") << io::format_double(o.worst_grid[i]);
      }
      os << '\n';
    }
    dir.write("validity.csv", os.str(), out);

    out.verdicts = sweep_json(sweep);
    const double metric = validity_metric(table);
    out.verdicts["table"] = {{"k", table.k},
                             {"grid", table.grid.points()},
                             {"validity_metric", metric},
                             {"verdict", to_string(classify(metric, cfg.tol.validity))},
                             {"consistency_residual", residual}};
    return 0;
  });
  return out;
}

inline RunOutcome run_sample(const ExperimentConfig& cfg, const OutputDir& dir) {
  RunOutcome out;
  const ValiditySweep probe = probe_validity(cfg);
  const SamplerPlan plan = make_plan(cfg, probe.verdict == Verdict::invalid);
  const auto batch = sample_batch(plan, cfg.n_samples, cfg.seed, 0, cfg.threads);
  {
    std::ostringstream os;
    write_trajectories_csv(os, batch);
    dir.write("trajectories.csv", os.str(), out);
  }
  if (cfg.write_binary) {
    std::ostringstream os(std::ios::binary);
    write_trajectories_binary(os, batch);
    dir.write("trajectories.bin", os.str(), out);
  }
  out.verdicts["validity_probe"] = sweep_json(probe);
  out.verdicts["invalid_warning"] = plan.invalid_warning;
  out.verdicts["values"] = plan.unique_values;
  return out;
}

inline RunOutcome run_simulate(const ExperimentConfig& cfg, const OutputDir& dir) {
  RunOutcome out;
  const ValiditySweep probe = probe_validity(cfg);
  const SamplerPlan plan = make_plan(cfg, probe.verdict == Verdict::invalid);
  const MonteCarloResult mc =
      monte_carlo_state(*cfg.system, plan, cfg.n_samples, cfg.seed, mc_options(cfg));
  std::ostringstream os;
  os << 't' << matrix_header("", cfg.system->dim()) << ",stderr\n";
  for (std::size_t i = 0; i < mc.times.size(); ++i) {
    os << io::format_double(mc.times[i]);
    put_matrix(os, mc.mean[i]);
    os << ',' << io::format_double(mc.stderr_estimate[i]) << '\n';
  }
  dir.write("surrogate.csv", os.str(), out);
  out.verdicts["validity_probe"] = sweep_json(probe);
  out.verdicts["invalid_warning"] = plan.invalid_warning;
  return out;
}

inline RunOutcome run_compare(const ExperimentConfig& cfg, const OutputDir& dir) {
  RunOutcome out;
  const ValiditySweep probe = probe_validity(cfg);
  const SamplerPlan plan = make_plan(cfg, probe.verdict == Verdict::invalid);
  const SimulationReport r =
      cfg.lindbladian
          ? compare(*cfg.system, *cfg.lindbladian, *cfg.environment, plan,
                    cfg.n_samples, cfg.seed, mc_options(cfg))
          : compare(*cfg.system, *cfg.environment, plan, cfg.n_samples, cfg.seed,
                    mc_options(cfg));
  dir.write("report.csv", io::to_csv(io::write_report_csv, r), out);
  out.verdicts["validity_probe"] = sweep_json(probe);
  out.verdicts["invalid_warning"] = plan.invalid_warning;
  out.verdicts["max_distance"] = r.max_distance();
  out.verdicts["max_sigma_ratio"] = r.max_sigma_ratio();
  out.verdicts["sigma_factor"] = cfg.tol.compare_sigma;
  out.verdicts["floor"] = cfg.tol.compare_floor;
  out.verdicts["within_bound"] = r.within(cfg.tol.compare_sigma, cfg.tol.compare_floor);
  return out;
}

inline RunOutcome run_diagnostics(const ExperimentConfig& cfg, const OutputDir& dir) {
  RunOutcome out;
  const EnvironmentSpec& env = *cfg.environment;
  if (!cfg.lindbladian) {
    std::ostringstream os;
    os << "t,back_action,entanglement\n";
    double worst_ba = 0.0, worst_ent = 0.0;
    for (double t : cfg.times) {
      const double ba = back_action_check(*cfg.system, env, t);
      const double ent = entanglement_check_dephasing(env, t);
      worst_ba = std::max(worst_ba, ba);
      worst_ent = std::max(worst_ent, ent);
      os << io::format_double(t) << ',' << io::format_double(ba) << ','
         << io::format_double(ent) << '\n';
    }
    dir.write("diagnostics.csv", os.str(), out);
    out.verdicts["max_back_action"] = worst_ba;
    out.verdicts["max_entanglement"] = worst_ent;
  }
  MomentOptions mo;
  mo.nonnegativity_tolerance = cfg.tol.nonnegativity;
  mo.gaussian_tolerance = cfg.tol.gaussian;
  mo.table.threads = cfg.threads;
  const int k = std::min(cfg.k_max, cfg.grid->size());
  with_dynamics(cfg, [&](const auto& dyn) {
    const ValiditySweep sweep = validity_sweep(dyn, *cfg.grid, k, sweep_options(cfg));
    const MomentTable m = impostor_moments(dyn, *cfg.grid, k, mo);
    dir.write("moments.csv", io::to_csv(io::write_moments_csv, m), out);
    out.verdicts["validity"] = sweep_json(sweep);
    out.verdicts["moments_nonnegative"] = m.all_nonnegative();
    out.verdicts["max_rebin_deviation"] = m.max_rebin_deviation();
    if (m.gaussian) {
      const auto& g = *m.gaussian;
      out.verdicts["gaussian_probe"] = {
          {"grid", g.grid.points()},
          {"fourth_moment", {g.fourth_moment.real(), g.fourth_moment.imag()}},
          {"fourth_cumulant", {g.fourth_cumulant.real(), g.fourth_cumulant.imag()}},
          {"relative_residual", g.relative_residual},
          {"gaussian_like", g.gaussian_like}};
    }
    return 0;
  });
  return out;
}

inline RunOutcome run_dyson(const ExperimentConfig& cfg, const OutputDir& dir) {
  RunOutcome out;
  const SystemContext& sys = *cfg.system;
  const std::vector<Matrix> exact =
      cfg.lindbladian
          ? exact_reduced_evolution(sys, *cfg.lindbladian, *cfg.environment, cfg.times)
          : exact_reduced_evolution(sys, *cfg.environment, cfg.times);
  std::ostringstream os;
  os << 't' << matrix_header("dyson_", sys.dim()) << matrix_header("exact_", sys.dim())
     << ",distance\n";
  double worst = 0.0;
  with_dynamics(cfg, [&](const auto& dyn) {
    DysonOptions o;
    o.table.threads = cfg.threads;
    for (std::size_t i = 0; i < cfg.times.size(); ++i) {
      const DysonResult r =
          dyson_reduced_state(sys, dyn, cfg.times[i], cfg.k_max, cfg.quad_nodes, o);
      const double d = surrogate::detail::hermitian_distance(r.schrodinger, exact[i]);
      worst = std::max(worst, d);
      os << io::format_double(cfg.times[i]);
      put_matrix(os, r.schrodinger);
      put_matrix(os, exact[i]);
      os << ',' << io::format_double(d) << '\n';
    }
    return 0;
  });
  dir.write("dyson.csv", os.str(), out);
  out.verdicts["k_max"] = cfg.k_max;
  out.verdicts["max_distance"] = worst;
  return out;
}

inline std::string utc_timestamp() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace detail

inline ExperimentConfig apply_overrides(ExperimentConfig cfg, const Overrides& o) {
  if (o.seed) cfg.seed = *o.seed;
  if (o.method) cfg.evolution.method = *o.method;
  if (o.threads) {
    if (*o.threads < 1) throw ConfigError("--threads: must be >= 1");
    cfg.threads = *o.threads;
  }
  if (o.out) cfg.output_dir = o.out->string();
  return cfg;
}

/// Runs one experiment, writes its CSV files and manifest.json, and returns
/// the manifest.
inline json run(const ExperimentConfig& cfg) {
  const detail::OutputDir dir{std::filesystem::path(cfg.output_dir)};
  RunOutcome out;
  switch (cfg.mode) {
    case Mode::validity: out = detail::run_validity(cfg, dir); break;
    case Mode::sample: out = detail::run_sample(cfg, dir); break;
    case Mode::simulate: out = detail::run_simulate(cfg, dir); break;
    case Mode::compare: out = detail::run_compare(cfg, dir); break;
    case Mode::diagnostics: out = detail::run_diagnostics(cfg, dir); break;
    case Mode::dyson: out = detail::run_dyson(cfg, dir); break;
  }
  json manifest = {
      {"tool", "surrogate"},
      {"version", SURROGATE_VERSION},
      {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                    std::to_string(EIGEN_MAJOR_VERSION) + "." +
                    std::to_string(EIGEN_MINOR_VERSION)},
      {"schema_version", kSchemaVersion},
      {"mode", to_string(cfg.mode)},
      {"name", cfg.name},
      {"config_hash", "fnv1a64:" + io::hex64(cfg.hash)},
      {"rng", Philox4x32::kName},
      {"seed", cfg.seed},
      {"n_samples", cfg.n_samples},
      {"method", to_string(cfg.evolution.method)},
      {"substeps", cfg.evolution.substeps},
      {"threads", cfg.threads},
      {"k_max", cfg.k_max},
      {"verdicts", out.verdicts},
      {"outputs", out.files},
      {"timestamp", detail::utc_timestamp()}};
  if (cfg.grid) {
    manifest["grid"] = {{"size", cfg.grid->size()},
                        {"t_max", (*cfg.grid)[0]},
                        {"t_min", (*cfg.grid)[cfg.grid->size() - 1]},
                        {"points", cfg.grid->points()}};
  }
  if (!cfg.times.empty()) manifest["times"] = cfg.times;
  io::atomic_write(dir.path() / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

}  // namespace surrogate::cli
