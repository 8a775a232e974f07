#include "nlpflow/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ostream.h>
#include <fmt/ranges.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "nlpflow/expression.hpp"

namespace nlpflow::cli {

namespace {

using json = nlohmann::ordered_json;

constexpr int kSchemaVersion = 1;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

double to_double(const std::string& s, std::string_view what) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw Error(ErrorKind::kInvalidInput, fmt::format("{}: '{}' is not a finite number", what, s));
  }
  return v;
}

Index to_index(const std::string& s, std::string_view what) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorKind::kInvalidInput, fmt::format("{}: '{}' is not an integer", what, s));
  }
  return static_cast<Index>(v);
}

json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json one_based(const std::vector<Index>& idx) {
  json a = json::array();
  for (Index i : idx) a.push_back(i + 1);
  return a;
}

Matrix matrix_from_json(const json& j, std::string_view what) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) {
    throw Error(ErrorKind::kInvalidInput, fmt::format("{} must be a non-empty array of rows", what));
  }
  const auto rows = static_cast<Index>(j.size());
  const auto cols = static_cast<Index>(j[0].size());
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Index>(row.size()) != cols) {
      throw Error(ErrorKind::kInvalidInput, fmt::format("{}: ragged row {}", what, i + 1));
    }
    for (Index k = 0; k < cols; ++k) m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
  }
  return m;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, fmt::format("cannot open '{}'", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw Error(ErrorKind::kIo, fmt::format("cannot write '{}'", path.string()));
}

struct RunSpec {
  std::string problem;
  std::optional<Index> size;
  std::string theta0;
  double k_theta = 0.1;
  double k_h = 0.1;
  double k_g = 0.1;
  std::optional<std::string> gains_file;
  std::string method = "rk45";
  double rel_tol = 1e-3;
  double abs_tol = 1e-6;
  double t_end = 100.0;
  std::optional<double> h_init;
  std::optional<double> h_min;
  std::optional<double> h_max;
  std::size_t max_steps = 200000;
  bool fixed_horizon = false;
  std::string pts;
  double eps_act = 1e-8;
  double crossing_tol = 1e-6;
  double c1 = 1e-2;
  double dense_stride = 0.0;
  std::optional<std::string> out_dir;
  std::uint64_t seed = 0;
  std::size_t count = 1;
};

void add_common(CLI::App* cmd, RunSpec& spec) {
  cmd->add_option("--problem", spec.problem, "builtin name or problem file")->required();
  cmd->add_option("--size", spec.size, "dimension for sized builtins");
  cmd->add_option("--k-theta", spec.k_theta, "K_theta = k I")->capture_default_str();
  cmd->add_option("--k-h", spec.k_h, "K_h = k I")->capture_default_str();
  cmd->add_option("--k-g", spec.k_g, "k_g = k 1")->capture_default_str();
  cmd->add_option("--gains-file", spec.gains_file, "JSON file with full gain matrices");
  cmd->add_option("--method", spec.method, "rk45 or stiff")->capture_default_str();
  cmd->add_option("--rel-tol", spec.rel_tol)->capture_default_str();
  cmd->add_option("--abs-tol", spec.abs_tol)->capture_default_str();
  cmd->add_option("--t-end", spec.t_end, "virtual-time horizon")->capture_default_str();
  cmd->add_option("--h-init", spec.h_init);
  cmd->add_option("--h-min", spec.h_min);
  cmd->add_option("--h-max", spec.h_max);
  cmd->add_option("--max-steps", spec.max_steps)->capture_default_str();
  cmd->add_flag("--fixed-horizon", spec.fixed_horizon, "integrate to t_end even after convergence");
  cmd->add_option("--pts", spec.pts, "priority groups, e.g. \"1,2,3;4,5\"");
  cmd->add_option("--eps-act", spec.eps_act, "activation band")->capture_default_str();
  cmd->add_option("--crossing-tol", spec.crossing_tol, "largest growth of an inequality per step (negative = off)")
      ->capture_default_str();
  cmd->add_option("--c1", spec.c1, "Lyapunov weight")->capture_default_str();
  cmd->add_option("--dense-stride", spec.dense_stride, "interpolated samples every x of tau");
  cmd->add_option("--out", spec.out_dir, "output directory");
  cmd->add_option("--seed", spec.seed, "seed for sampled initial points")->capture_default_str();
}

SolverOptions solver_options(const RunSpec& spec) {
  SolverOptions o;
  o.integrator.method = parse_method(spec.method);
  o.integrator.rel_tol = spec.rel_tol;
  o.integrator.abs_tol = spec.abs_tol;
  o.integrator.t_end = spec.t_end;
  o.integrator.h_init = spec.h_init;
  o.integrator.h_min = spec.h_min;
  o.integrator.h_max = spec.h_max;
  o.integrator.max_steps = spec.max_steps;
  o.integrator.validate();
  o.dynamics.eps_act = spec.eps_act;
  if (!(spec.eps_act >= 0.0)) throw Error(ErrorKind::kInvalidInput, "--eps-act must be non-negative");
  o.crossing_tol = spec.crossing_tol;
  if (!(spec.c1 > 0.0)) throw Error(ErrorKind::kInvalidInput, "--c1 must be positive");
  o.lyapunov_c1 = spec.c1;
  o.fixed_horizon = spec.fixed_horizon;
  o.dense_stride = spec.dense_stride;
  return o;
}

json config_json(const RunSpec& spec, const SolverOptions& o, const GainSet& gains, const PtsState& pts) {
  json groups = json::array();
  for (const auto& g : pts.groups()) groups.push_back(one_based(g));
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  const bool scalar_gains = !spec.gains_file.has_value();
  json g = {{"k_theta", spec.k_theta}, {"k_h", spec.k_h}, {"k_g", spec.k_g}, {"gains_file", nullptr}};
  if (!scalar_gains) {
    g["gains_file"] = *spec.gains_file;
    json kt = json::array();
    for (Index i = 0; i < gains.k_theta.rows(); ++i) kt.push_back(vec_json(gains.k_theta.row(i).transpose()));
    json kh = json::array();
    for (Index i = 0; i < gains.k_h.rows(); ++i) kh.push_back(vec_json(gains.k_h.row(i).transpose()));
    g["K_theta"] = kt;
    g["K_h"] = kh;
    g["k_g_vector"] = vec_json(gains.k_g);
  }
  return {
      {"problem", spec.problem},
      {"size", spec.size ? json(*spec.size) : json(nullptr)},
      {"theta0", spec.theta0},
      {"gains", g},
      {"integrator",
       {{"method", std::string(to_string(o.integrator.method))},
        {"rel_tol", o.integrator.rel_tol},
        {"abs_tol", o.integrator.abs_tol},
        {"t_end", o.integrator.t_end},
        {"h_init", o.integrator.initial_step()},
        {"h_min", o.integrator.min_step()},
        {"h_max", o.integrator.max_step()},
        {"max_steps", o.integrator.max_steps},
        {"fixed_horizon", o.fixed_horizon},
        {"dense_stride", o.dense_stride},
        {"crossing_tol", o.crossing_tol},
        {"requested_h", {{"h_init", opt(spec.h_init)}, {"h_min", opt(spec.h_min)}, {"h_max", opt(spec.h_max)}}}}},
      {"tolerances",
       {{"stationarity", o.tolerances.stationarity},
        {"ec_violation", o.tolerances.ec_violation},
        {"iec_violation", o.tolerances.iec_violation},
        {"complementarity", o.tolerances.complementarity},
        {"sign", o.tolerances.sign}}},
      {"dynamics",
       {{"eps_act", o.dynamics.eps_act},
        {"sign_tol", o.dynamics.sign_tol},
        {"dyn_tol", o.dynamics.dyn_tol},
        {"rank_multiplier", o.dynamics.rank_multiplier},
        {"pts_tol", o.dynamics.pts_tol},
        {"lp_box", o.dynamics.lp_box},
        {"multiplier_bound", o.dynamics.multiplier_bound}}},
      {"pts_groups", groups},
      {"lyapunov_c1", o.lyapunov_c1},
  };
}

std::optional<double> optimum_error(const NlpProblem& problem, const Vector& theta) {
  if (!problem.known_optimum()) return std::nullopt;
  return (theta - *problem.known_optimum()).norm();
}

json summary_json(const NlpProblem& problem, const RunSpec& spec, const json& config, const Vector& theta0,
                  const Trajectory& traj, double wall) {
  const FlowState& fs = traj.final_state();
  const auto err = optimum_error(problem, fs.theta);
  json error = nullptr;
  if (traj.error_kind) error = {{"kind", std::string(to_string(*traj.error_kind))}, {"message", traj.error_message}};
  return {
      {"schema_version", kSchemaVersion},
      {"problem", {{"name", problem.name()}, {"n", problem.n()}, {"r", problem.r()}, {"s", problem.s()}}},
      {"verdict", std::string(to_string(traj.status))},
      {"error", error},
      {"initial_theta", vec_json(theta0)},
      {"final",
       {{"tau", fs.tau},
        {"theta", vec_json(fs.theta)},
        {"f", fs.f},
        {"pi_e", vec_json(fs.pi_e)},
        {"pi_i", vec_json(fs.pi_i)},
        {"activated", one_based(fs.activated)},
        {"working_set", one_based(fs.working)},
        {"kkt",
         {{"stationarity", fs.kkt.stationarity},
          {"ec_violation", fs.kkt.ec_violation},
          {"iec_violation", fs.kkt.iec_violation},
          {"complementarity", fs.kkt.complementarity},
          {"sign_violation", fs.kkt.sign_violation}}},
        {"lyapunov", fs.lyapunov},
        {"error_to_known_optimum", err ? json(*err) : json(nullptr)}}},
      {"counts",
       {{"accepted_steps", traj.step_count},
        {"rejected_steps", traj.rejected_steps},
        {"rhs_evaluations", traj.rhs_eval_count},
        {"jacobians", traj.jacobian_count},
        {"lp_fallbacks", traj.fallback_count},
        {"samples", traj.samples.size()}}},
      {"wall_time_s", wall},
      {"seed", spec.seed},
      {"initial_lp_gamma", traj.initial_lp_gamma ? json(*traj.initial_lp_gamma) : json(nullptr)},
      {"warnings", traj.warnings},
      {"config", config},
  };
}

struct Prepared {
  NlpProblem problem;
  GainSet gains;
  PtsState pts;
  SolverOptions options;
  InitialPointSpec start;
  json config;
};

Prepared prepare(const RunSpec& spec) {
  NlpProblem problem = load_problem(spec.problem, spec.size);
  GainSet gains = make_gains(problem, spec.k_theta, spec.k_h, spec.k_g, spec.gains_file);
  PtsState pts = parse_pts(spec.pts, problem.r());
  SolverOptions options = solver_options(spec);
  InitialPointSpec start = InitialPointSpec::parse(spec.theta0);
  json config = config_json(spec, options, gains, pts);
  return {std::move(problem), std::move(gains), std::move(pts), std::move(options), std::move(start),
          std::move(config)};
}

struct RunOutcome {
  Vector theta0;
  Trajectory traj;
  double wall = 0.0;
};

RunOutcome run_once(const Prepared& p, Rng& rng) {
  RunOutcome r;
  r.theta0 = p.start.draw(p.problem, rng);
  const auto t0 = std::chrono::steady_clock::now();
  r.traj = solve(p.problem, p.gains, r.theta0, p.options, p.pts);
  r.wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::filesystem::path ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::kIo, fmt::format("cannot create '{}': {}", dir, ec.message()));
  return dir;
}

int cmd_run(const RunSpec& spec, std::ostream& out) {
  const Prepared p = prepare(spec);
  Rng rng(spec.seed);
  const RunOutcome r = run_once(p, rng);
  const json summary = summary_json(p.problem, spec, p.config, r.theta0, r.traj, r.wall);
  if (spec.out_dir) {
    const auto dir = ensure_dir(*spec.out_dir);
    write_file(dir / "trajectory.csv", trajectory_csv(p.problem, r.traj));
    write_file(dir / "summary.json", summary.dump(2) + "\n");
  }
  const FlowState& fs = r.traj.final_state();
  fmt::print(out, "problem   {} (n={}, r={}, s={})\n", p.problem.name(), p.problem.n(), p.problem.r(), p.problem.s());
  fmt::print(out, "verdict   {}\n", to_string(r.traj.status));
  if (r.traj.error_kind) fmt::print(out, "error     [{}] {}\n", to_string(*r.traj.error_kind), r.traj.error_message);
  fmt::print(out, "tau       {:.6g}\n", fs.tau);
  fmt::print(out, "f         {:.12g}\n", fs.f);
  if (const auto e = optimum_error(p.problem, fs.theta)) fmt::print(out, "error     {:.4e}\n", *e);
  fmt::print(out, "kkt       stationarity {:.3e}  ec {:.3e}  iec {:.3e}\n", fs.kkt.stationarity, fs.kkt.ec_violation,
             fs.kkt.iec_violation);
  fmt::print(out, "steps     {} accepted, {} rejected, {} rhs evaluations\n", r.traj.step_count,
             r.traj.rejected_steps, r.traj.rhs_eval_count);
  fmt::print(out, "time      {:.3f} s\n", r.wall);
  for (const auto& w : r.traj.warnings) fmt::print(out, "warning   {}\n", w);
  return r.traj.status == TrajectoryStatus::kError ? 3 : 0;
}

int cmd_multistart(const RunSpec& spec, std::ostream& out) {
  if (spec.count < 1) throw Error(ErrorKind::kInvalidInput, "--count must be at least 1");
  const Prepared p = prepare(spec);
  Rng rng(spec.seed);
  std::optional<std::filesystem::path> dir;
  if (spec.out_dir) dir = ensure_dir(*spec.out_dir);

  json rows = json::array();
  std::vector<double> errors;
  std::vector<double> times;
  std::size_t failures = 0;
  fmt::print(out, "{:>4}  {:<16}  {:>12}  {:>8}  {:>10}\n", "run", "verdict", "error", "steps", "time (s)");
  for (std::size_t k = 0; k < spec.count; ++k) {
    json row = {{"run", k + 1}};
    try {
      const RunOutcome r = run_once(p, rng);
      const FlowState& fs = r.traj.final_state();
      const auto e = optimum_error(p.problem, fs.theta);
      if (e) errors.push_back(*e);
      times.push_back(r.wall);
      if (r.traj.status == TrajectoryStatus::kError) ++failures;
      row["summary"] = summary_json(p.problem, spec, p.config, r.theta0, r.traj, r.wall);
      row["summary"].erase("config");
      if (dir) write_file(*dir / fmt::format("trajectory_{:03}.csv", k + 1), trajectory_csv(p.problem, r.traj));
      fmt::print(out, "{:>4}  {:<16}  {:>12}  {:>8}  {:>10.4f}\n", k + 1, to_string(r.traj.status),
                 e ? fmt::format("{:.4e}", *e) : std::string("-"), r.traj.step_count, r.wall);
    } catch (const Error& e) {
      ++failures;
      row["failure"] = {{"kind", std::string(to_string(e.kind()))}, {"message", e.what()}};
      fmt::print(out, "{:>4}  {:<16}  {}\n", k + 1, fmt::format("error:{}", to_string(e.kind())), e.what());
    }
    rows.push_back(std::move(row));
  }

  auto stats = [](const std::vector<double>& v) -> json {
    if (v.empty()) return nullptr;
    double sum = 0.0;
    for (double x : v) sum += x;
    return {{"average", sum / static_cast<double>(v.size())},
            {"min", *std::min_element(v.begin(), v.end())},
            {"max", *std::max_element(v.begin(), v.end())}};
  };
  const json err_stats = stats(errors);
  const json time_stats = stats(times);
  for (const char* key : {"average", "min", "max"}) {
    fmt::print(out, "{:>7}  error {:>12}  time {:>10}\n", key,
               err_stats.is_null() ? std::string("-") : fmt::format("{:.4e}", err_stats[key].get<double>()),
               time_stats.is_null() ? std::string("-") : fmt::format("{:.4f}", time_stats[key].get<double>()));
  }
  if (dir) {
    const json report = {{"schema_version", kSchemaVersion},
                         {"problem", p.problem.name()},
                         {"count", spec.count},
                         {"seed", spec.seed},
                         {"failures", failures},
                         {"error", err_stats},
                         {"wall_time_s", time_stats},
                         {"runs", rows},
                         {"config", p.config}};
    write_file(*dir / "multistart.json", report.dump(2) + "\n");
  }
  return failures > 0 ? 3 : 0;
}

int cmd_list(bool as_json, std::ostream& out) {
  json arr = json::array();
  for (const auto& info : builtin_registry()) {
    const NlpProblem p = builtin(info.name);
    json entry = {{"name", info.name},
                  {"description", info.description},
                  {"n", p.n()},
                  {"r", p.r()},
                  {"s", p.s()},
                  {"default_size", info.default_size ? json(*info.default_size) : json(nullptr)},
                  {"known_optimum", p.known_optimum() ? vec_json(*p.known_optimum()) : json(nullptr)}};
    if (as_json) {
      arr.push_back(std::move(entry));
      continue;
    }
    std::string opt = "-";
    if (p.known_optimum()) {
      const Vector& o = *p.known_optimum();
      opt = o.size() <= 4 ? fmt::format("[{}]", fmt::join(std::vector<double>(o.data(), o.data() + o.size()), ", "))
                          : fmt::format("[{}, ..., {}] ({} entries)", o(0), o(o.size() - 1), o.size());
    }
    fmt::print(out, "{:<24} n={:<4} r={:<4} s={:<4} optimum {}\n  {}\n", info.name, p.n(), p.r(), p.s(), opt,
               info.description);
  }
  if (as_json) out << arr.dump(2) << "\n";
  return 0;
}

}  // namespace

InitialPointSpec InitialPointSpec::parse(const std::string& text) {
  InitialPointSpec spec;
  const std::string t = trim(text);
  if (t.empty()) throw Error(ErrorKind::kInvalidInput, "--theta0 is required");
  if (t == "optimum") {
    spec.kind = Kind::kOptimum;
    return spec;
  }
  auto range = [](const std::string& body, std::string_view what) {
    const auto ends = split(body, ',');
    if (ends.size() != 2) throw Error(ErrorKind::kInvalidInput, fmt::format("{} expects two bounds", what));
    return std::pair{to_double(ends[0], what), to_double(ends[1], what)};
  };
  if (t.rfind("sample:", 0) == 0) {
    spec.kind = Kind::kSample;
    const auto parts = split(t.substr(7), ';');
    std::tie(spec.lo, spec.hi) = range(parts[0], "sample");
    if (!(spec.lo <= spec.hi)) throw Error(ErrorKind::kInvalidInput, "sample: lo must not exceed hi");
    for (std::size_t k = 1; k < parts.size(); ++k) {
      const auto kv = split(parts[k], '=');
      if (kv.size() != 2) throw Error(ErrorKind::kInvalidInput, fmt::format("sample: bad pin '{}'", parts[k]));
      const Index i = to_index(kv[0], "sample pin");
      if (i < 1) throw Error(ErrorKind::kInvalidInput, "sample: pinned index is 1-based");
      spec.pinned.emplace_back(i - 1, to_double(kv[1], "sample pin"));
    }
    return spec;
  }
  if (t.rfind("linspace:", 0) == 0) {
    spec.kind = Kind::kLinspace;
    std::tie(spec.lo, spec.hi) = range(t.substr(9), "linspace");
    return spec;
  }
  spec.kind = Kind::kExplicit;
  for (const auto& v : split(t, ',')) spec.values.push_back(to_double(v, "--theta0"));
  return spec;
}

Vector InitialPointSpec::draw(const NlpProblem& problem, Rng& rng) const {
  const Index n = problem.n();
  Vector theta(n);
  switch (kind) {
    case Kind::kExplicit:
      if (static_cast<Index>(values.size()) != n) {
        throw Error(ErrorKind::kInvalidInput,
                    fmt::format("--theta0 has {} entries, problem '{}' has n = {}", values.size(), problem.name(), n));
      }
      for (Index i = 0; i < n; ++i) theta(i) = values[static_cast<std::size_t>(i)];
      break;
    case Kind::kSample:
      for (Index i = 0; i < n; ++i) theta(i) = rng.uniform(lo, hi);
      for (const auto& [i, v] : pinned) {
        if (i >= n) throw Error(ErrorKind::kInvalidInput, fmt::format("pinned index {} exceeds n = {}", i + 1, n));
        theta(i) = v;
      }
      break;
    case Kind::kLinspace:
      for (Index i = 0; i < n; ++i) {
        theta(i) = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
      }
      break;
    case Kind::kOptimum:
      if (!problem.known_optimum()) {
        throw Error(ErrorKind::kInvalidInput, fmt::format("problem '{}' has no known optimum", problem.name()));
      }
      theta = *problem.known_optimum();
      break;
  }
  return theta;
}

PtsState parse_pts(const std::string& text, Index r) {
  const std::string t = trim(text);
  if (t.empty()) return PtsState::single(r);
  std::vector<std::vector<Index>> groups;
  for (const auto& g : split(t, ';')) {
    std::vector<Index> group;
    for (const auto& item : split(g, ',')) group.push_back(to_index(item, "--pts") - 1);
    groups.push_back(std::move(group));
  }
  return PtsState::from_groups(std::move(groups), r);
}

GainSet make_gains(const NlpProblem& problem, double k_theta, double k_h, double k_g,
                   const std::optional<std::string>& gains_file) {
  GainSet gains = GainSet::scalar(problem.n(), problem.s(), problem.r(), k_theta, k_h, k_g);
  if (gains_file) {
    json j;
    try {
      j = json::parse(read_file(*gains_file));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kParse, fmt::format("{}: {}", *gains_file, e.what()));
    }
    try {
      if (j.contains("k_theta")) gains.k_theta = matrix_from_json(j["k_theta"], "k_theta");
      if (j.contains("k_h")) gains.k_h = matrix_from_json(j["k_h"], "k_h");
      if (j.contains("k_g")) {
        const auto v = j["k_g"].get<std::vector<double>>();
        gains.k_g = Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
      }
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kInvalidInput, fmt::format("{}: {}", *gains_file, e.what()));
    }
  }
  gains.validate(problem.n(), problem.s(), problem.r());
  return gains;
}

NlpProblem load_problem(const std::string& source, std::optional<Index> size) {
  for (const auto& info : builtin_registry()) {
    if (info.name == source) return builtin(source, size);
  }
  if (std::filesystem::exists(source)) {
    if (size) throw Error(ErrorKind::kInvalidInput, "--size applies only to builtin problems");
    return load_problem_file(source);
  }
  return builtin(source, size);  // raises the lookup error
}

std::string trajectory_csv(const NlpProblem& problem, const Trajectory& traj) {
  std::string out = "tau";
  for (Index i = 1; i <= problem.n(); ++i) out += fmt::format(",theta_{}", i);
  for (Index i = 1; i <= problem.s(); ++i) out += fmt::format(",pi_e_{}", i);
  for (Index i = 1; i <= problem.r(); ++i) out += fmt::format(",pi_i_{}", i);
  out += ",kkt_stationarity,ec_violation,iec_violation,lyapunov\n";
  for (const auto& s : traj.samples) {
    out += fmt::format("{:.17g}", s.tau);
    for (Index i = 0; i < s.theta.size(); ++i) out += fmt::format(",{:.17g}", s.theta(i));
    for (Index i = 0; i < s.pi_e.size(); ++i) out += fmt::format(",{:.17g}", s.pi_e(i));
    for (Index i = 0; i < s.pi_i.size(); ++i) out += fmt::format(",{:.17g}", s.pi_i(i));
    out += fmt::format(",{:.17g},{:.17g},{:.17g},{:.17g}\n", s.kkt.stationarity, s.kkt.ec_violation,
                       s.kkt.iec_violation, s.lyapunov);
  }
  return out;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Constrained NLP solver that integrates an optimality flow in virtual time"};
  app.require_subcommand(1);
  RunSpec spec;
  bool list_json = false;

  CLI::App* run_cmd = app.add_subcommand("run", "solve one problem");
  add_common(run_cmd, spec);
  run_cmd->add_option("--theta0", spec.theta0, "v1,..,vn | sample:lo,hi[;i=v] | linspace:a,b | optimum")
      ->required();

  CLI::App* multi_cmd = app.add_subcommand("multistart", "solve from several sampled initial points");
  add_common(multi_cmd, spec);
  multi_cmd->add_option("--theta0", spec.theta0, "initial-point spec, usually sample:lo,hi")->required();
  multi_cmd->add_option("--count", spec.count, "number of runs")->required();

  CLI::App* list_cmd = app.add_subcommand("list", "list builtin problems");
  list_cmd->add_flag("--json", list_json, "machine-readable output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }

  try {
    if (*list_cmd) return cmd_list(list_json, out);
    if (*run_cmd) return cmd_run(spec, out);
    return cmd_multistart(spec, out);
  } catch (const ParseError& e) {
    fmt::print(err, "error [parse]: {}\n", e.what());
    return 2;
  } catch (const Error& e) {
    fmt::print(err, "error [{}]: {}\n", to_string(e.kind()), e.what());
    return e.kind() == ErrorKind::kInvalidInput || e.kind() == ErrorKind::kLookup || e.kind() == ErrorKind::kIo ||
                   e.kind() == ErrorKind::kParse || e.kind() == ErrorKind::kEvaluation
               ? 2
               : 3;
  }
}

}  // namespace nlpflow::cli
