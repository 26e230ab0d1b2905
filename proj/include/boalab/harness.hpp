#pragma once

#include "boalab/naip.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <sstream>

// Experiment orchestration: configuration ingestion, kappa sweeps for the
// three convergence-order experiments, slope fitting, and persistence of
// results as CSV/JSON.

namespace boalab {

//==============================================================================
// Configuration (flat dotted keys; unknown keys are errors)

struct SimConfig {
  ModelSpec model;
  int grid_m = 1;
  int grid_n = 256;
  double grid_l = 20.0;
  std::vector<double> kappa_list{0.2, 0.1, 0.05, 0.025};
  double t_final = 1.0;
  double tau = 1.0;
  double dt = 1.0 / 1024;       // at the largest kappa; scaled linearly in kappa
  double f0_center = -1.0;      // < 0 means box center
  double f0_width = 1.0;
  double f0_momentum = 0.5;     // kappa-scaled momentum p0; wavenumber p0/kappa
  Backend backend = Backend::exact_diag;
  double tol_delta_min = 1e-6;
  double tol_unitarity = 1e-10;
  double tol_gauge = 1e-6;
  std::uint64_t seed = 12345;
  std::string out_dir = "out";

  double center() const {
    return f0_center < 0.0 ? 0.5 * grid_l : f0_center;
  }

  void validate() const {
    model.validate();
    if (kappa_list.size() < 4)
      throw std::invalid_argument("config: sweep.kappa needs >= 4 values");
    double lo = 1e300, hi = 0.0;
    for (double k : kappa_list) {
      if (!(k > 0.0 && k < 1.0))
        throw std::invalid_argument("config: kappa values must be in (0,1)");
      lo = std::min(lo, k);
      hi = std::max(hi, k);
    }
    if (hi / lo < 8.0 - 1e-12)
      throw std::invalid_argument(
          "config: sweep.kappa must span at least a factor of 8");
    for (std::size_t i = 1; i < kappa_list.size(); ++i)
      if (kappa_list[i] >= kappa_list[i - 1])
        throw std::invalid_argument("config: sweep.kappa must be descending");
    if (dt <= 0.0 || t_final < 0.0 || tau < 0.0)
      throw std::invalid_argument("config: nonpositive time parameters");
  }
};

namespace detail {

inline std::string trim(const std::string &s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  const auto b = s.find_last_not_of(" \t\r\n");
  return (a == std::string::npos) ? "" : s.substr(a, b - a + 1);
}

inline std::vector<double> parse_double_list(const std::string &s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(trim(item)));
  return out;
}

} // namespace detail

inline SimConfig parse_config_text(const std::string &text) {
  SimConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));

    if (key == "model.kind") cfg.model.kind = model_kind_from_string(val);
    else if (key == "model.d") cfg.model.d = std::stoi(val);
    else if (key == "model.delta_floor") cfg.model.delta_floor = std::stod(val);
    else if (key == "model.coupling") cfg.model.coupling = std::stod(val);
    else if (key == "model.sharpness") cfg.model.sharpness = std::stod(val);
    else if (key == "model.level_amp") cfg.model.level_amp = std::stod(val);
    else if (key == "model.level_coupling")
      cfg.model.level_coupling = std::stod(val);
    else if (key == "model.charge") cfg.model.charge = std::stod(val);
    else if (key == "model.charge_fixed")
      cfg.model.charge_fixed = std::stod(val);
    else if (key == "model.sigma") cfg.model.sigma = std::stod(val);
    else if (key == "grid.m") cfg.grid_m = std::stoi(val);
    else if (key == "grid.N") cfg.grid_n = std::stoi(val);
    else if (key == "grid.L") cfg.grid_l = std::stod(val);
    else if (key == "sweep.kappa") cfg.kappa_list = detail::parse_double_list(val);
    else if (key == "dynamics.t_final") cfg.t_final = std::stod(val);
    else if (key == "dynamics.tau") cfg.tau = std::stod(val);
    else if (key == "dynamics.dt") cfg.dt = std::stod(val);
    else if (key == "dynamics.f0_center") cfg.f0_center = std::stod(val);
    else if (key == "dynamics.f0_width") cfg.f0_width = std::stod(val);
    else if (key == "dynamics.f0_momentum") cfg.f0_momentum = std::stod(val);
    else if (key == "solver.backend") cfg.backend = backend_from_string(val);
    else if (key == "tolerances.delta_min") cfg.tol_delta_min = std::stod(val);
    else if (key == "tolerances.unitarity") cfg.tol_unitarity = std::stod(val);
    else if (key == "tolerances.gauge") cfg.tol_gauge = std::stod(val);
    else if (key == "seed") cfg.seed = std::stoull(val);
    else if (key == "output.dir") cfg.out_dir = val;
    else
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

inline SimConfig load_config(const std::string &path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Canonical serialization (used for the config hash).
inline std::string canonical_config(const SimConfig &c) {
  std::ostringstream o;
  o << "model.kind=" << to_string(c.model.kind) << "\n"
    << "model.d=" << c.model.d << "\n"
    << "model.delta_floor=" << format_double(c.model.delta_floor) << "\n"
    << "model.coupling=" << format_double(c.model.coupling) << "\n"
    << "model.sharpness=" << format_double(c.model.sharpness) << "\n"
    << "model.level_amp=" << format_double(c.model.level_amp) << "\n"
    << "model.level_coupling=" << format_double(c.model.level_coupling) << "\n"
    << "model.charge=" << format_double(c.model.charge) << "\n"
    << "model.charge_fixed=" << format_double(c.model.charge_fixed) << "\n"
    << "model.sigma=" << format_double(c.model.sigma) << "\n"
    << "grid.m=" << c.grid_m << "\n"
    << "grid.N=" << c.grid_n << "\n"
    << "grid.L=" << format_double(c.grid_l) << "\n";
  o << "sweep.kappa=";
  for (std::size_t i = 0; i < c.kappa_list.size(); ++i)
    o << (i ? "," : "") << format_double(c.kappa_list[i]);
  o << "\n"
    << "dynamics.t_final=" << format_double(c.t_final) << "\n"
    << "dynamics.tau=" << format_double(c.tau) << "\n"
    << "dynamics.dt=" << format_double(c.dt) << "\n"
    << "dynamics.f0_center=" << format_double(c.f0_center) << "\n"
    << "dynamics.f0_width=" << format_double(c.f0_width) << "\n"
    << "dynamics.f0_momentum=" << format_double(c.f0_momentum) << "\n"
    << "solver.backend="
    << (c.backend == Backend::exact_diag ? "exact_diag" : "krylov") << "\n"
    << "tolerances.delta_min=" << format_double(c.tol_delta_min) << "\n"
    << "tolerances.unitarity=" << format_double(c.tol_unitarity) << "\n"
    << "tolerances.gauge=" << format_double(c.tol_gauge) << "\n"
    << "seed=" << c.seed << "\n";
  return o.str();
}

inline std::string fnv1a_hex(const std::string &s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

//==============================================================================
// Experiment context

struct ExperimentContext {
  SimConfig cfg;
  NuclearGrid grid;
  FiberedMultOp H;
  EigenBundle b;
  AssumptionCertificate cert;

  static ExperimentContext make(const SimConfig &cfg) {
    ExperimentContext ctx;
    ctx.cfg = cfg;
    ctx.grid = make_grid(cfg.grid_m, cfg.grid_n, cfg.grid_l);
    ctx.H = build_model(cfg.model, ctx.grid);
    ctx.cert = verify_assumptions(ctx.H, 2, cfg.tol_delta_min);
    ctx.b = diagonalize_fibers(ctx.H);
    if (ctx.b.a_max.maxCoeff() > cfg.tol_gauge)
      throw std::runtime_error("context: gauge diagnostic above tolerance");
    return ctx;
  }

  // Gaussian wavepacket with O(1) kappa-scaled momentum: wavenumber p0/kappa.
  VectorXcd f0_for(double kappa) const {
    const double k0 = cfg.f0_momentum / kappa;
    const double k_nyq = M_PI / grid.spacing;
    if (k0 + 4.0 / cfg.f0_width > k_nyq)
      throw std::invalid_argument(
          "f0: momentum p0/kappa too close to the grid Nyquist wavenumber");
    VectorXcd f0 =
        gaussian_packet(grid, cfg.center(), cfg.f0_width, k0);
    if (nuclear_mass_near_boundary(grid, f0) > 1e-8)
      throw std::runtime_error("f0 has mass near the box boundary");
    return f0;
  }

  double dt_for(double kappa) const {
    const double kmax = cfg.kappa_list.front();
    return cfg.dt * (kappa / kmax);
  }
};

struct ErrorSample {
  double kappa = 0.0;
  double error_l2 = 0.0;
  double error_h2k = 0.0;
  double floor = 0.0;
  long wall_ms = 0;
};

namespace detail {

inline double fibered_h2k(const FiberedState &s, double kappa) {
  return sobolev_norm(s, 2, kappa);
}

inline void check_interior(const NuclearGrid &g, const VectorXcd &state_data,
                           int d, const char *where) {
  FiberedState s(g, d);
  s.data = state_data;
  if (mass_near_boundary(s) > 1e-8)
    throw std::runtime_error(std::string(where) +
                             ": state mass near box boundary exceeds 1e-8");
}

} // namespace detail

//==============================================================================
// Error functionals

// || U_t (psi0 f0) - psi0 e^{-i h_eff t / kappa} f0 ||  at t = t_final.
inline ErrorSample first_order_error(const ExperimentContext &ctx,
                                     double kappa) {
  const auto t0 = std::chrono::steady_clock::now();
  ErrorSample out;
  out.kappa = kappa;

  auto U = make_propagator(assemble_H_kappa(ctx.H, kappa), kappa,
                           ctx.cfg.backend);
  auto h1 = build_heff(ctx.b, ctx.grid, kappa, 1);
  auto Ueff = make_heff_propagator(h1);

  const VectorXcd f0 = ctx.f0_for(kappa);
  FiberedState psi0 = embed(ctx.b.psi0, f0);
  FiberedState full = U.evolve(psi0, ctx.cfg.t_final);
  if (std::abs(l2_norm(full) - l2_norm(psi0)) >
      ctx.cfg.tol_unitarity * l2_norm(psi0))
    throw std::runtime_error("first_order_error: unitarity violated");
  detail::check_interior(ctx.grid, full.data, ctx.b.d, "first_order_error");

  const VectorXcd f_t = Ueff.evolve_vec(f0, ctx.cfg.t_final);
  FiberedState approx = embed(ctx.b.psi0, f_t);

  FiberedState diff = full;
  diff.data -= approx.data;
  out.error_l2 = l2_norm(diff);
  out.error_h2k = detail::fibered_h2k(diff, kappa);
  out.floor = 1e-12;
  out.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  return out;
}

// || U_tau (psi0 f0) - Q_P ftilde(tau) || with ftilde evolved under
// h_eff^(2) by dense exponentiation. ablate_w1 drops the -kappa^2 w_1 term.
inline ErrorSample second_order_error(const ExperimentContext &ctx,
                                      double kappa, bool ablate_w1 = false) {
  const auto t0 = std::chrono::steady_clock::now();
  ErrorSample out;
  out.kappa = kappa;

  auto U = make_propagator(assemble_H_kappa(ctx.H, kappa), kappa,
                           ctx.cfg.backend);
  auto h = build_heff(ctx.b, ctx.grid, kappa, ablate_w1 ? 1 : 2);
  auto Ueff = make_heff_propagator(h);
  auto pc = make_projected_coupling(ctx.H, ctx.b, kappa);

  const VectorXcd f0 = ctx.f0_for(kappa);
  FiberedState psi0 = embed(ctx.b.psi0, f0);
  const FiberedState full = U.evolve(psi0, ctx.cfg.tau);

  auto run = [&](double dt) {
    TimeGridPath path = make_path(ctx.cfg.tau, dt);
    for (long j = 0; j < path.nodes(); ++j)
      path.values[j] = Ueff.evolve_vec(f0, path.times[j]);
    FiberedState qp = reconstruct_QP(path, ctx.b, pc);
    FiberedState diff = qp;
    diff.data -= full.data;
    return std::make_pair(l2_norm(diff), detail::fibered_h2k(diff, kappa));
  };

  const double dt = ctx.dt_for(kappa);
  auto [e1, h1n] = run(dt);
  auto [e2, h2n] = run(0.5 * dt);
  out.error_l2 = e2;
  out.error_h2k = h2n;
  out.floor = std::abs(e1 - e2);
  out.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  return out;
}

// || w^k[f](t_final) - (-ik)^2 (w_1 f(t_final) - w~_1(t_final) f_0) || with
// f the projected full solution.
inline ErrorSample remainder_order_error(const ExperimentContext &ctx,
                                         double kappa) {
  const auto t0 = std::chrono::steady_clock::now();
  ErrorSample out;
  out.kappa = kappa;

  auto U = make_propagator(assemble_H_kappa(ctx.H, kappa), kappa,
                           ctx.cfg.backend);
  auto pc = make_projected_coupling(ctx.H, ctx.b, kappa);
  const VectorXcd f0 = ctx.f0_for(kappa);
  FiberedState psi0 = embed(ctx.b.psi0, f0);

  auto residual = [&](double dt) {
    MemoryKernelCache cache{pc, dt};
    TimeGridPath path = make_path(ctx.cfg.t_final, dt);
    for (long j = 0; j < path.nodes(); ++j) {
      FiberedState ev = U.evolve(psi0, path.times[j]);
      path.values[j] = fiber_project(ev, ctx.b.psi0);
    }
    const long n = path.nodes() - 1;
    const VectorXcd w = memory_w(path, n, cache);
    const VectorXcd cf_t = pc.Bt * path.values[n];
    const VectorXcd cf_0 = pc.Bt * f0;
    const VectorXcd w1f = pc.project_xstar(pc.Rt * cf_t);
    const VectorXcd w1t = pc.project_xstar(
        (pc.phases(ctx.cfg.t_final).array() * (pc.Rt * cf_0).array())
            .matrix());
    const Complex mik(0.0, -kappa);
    const VectorXcd diff = w - mik * mik * (w1f - w1t);
    return std::make_pair(nuclear_norm(ctx.grid, diff),
                          nuclear_sobolev_norm(ctx.grid, diff, 2, kappa));
  };

  const double dt = ctx.dt_for(kappa);
  auto [e1, h1n] = residual(dt);
  auto [e2, h2n] = residual(0.5 * dt);
  out.error_l2 = e2;
  out.error_h2k = h2n;
  out.floor = std::abs(e1 - e2);
  out.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  return out;
}

//==============================================================================
// Slope fitting and reports

struct SlopeFit {
  double slope = 0.0;
  double r_squared = 0.0;
  int points_used = 0;
};

inline SlopeFit fit_loglog_slope(const std::vector<ErrorSample> &samples) {
  SlopeFit fit;
  std::vector<double> xs, ys;
  for (const auto &s : samples) {
    if (s.error_l2 <= 10.0 * s.floor || s.error_l2 <= 0.0) continue;
    xs.push_back(std::log(s.kappa));
    ys.push_back(std::log(s.error_l2));
  }
  const int n = static_cast<int>(xs.size());
  fit.points_used = n;
  if (n < 2) return fit;
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (int i = 0; i < n; ++i) {
    sx += xs[i]; sy += ys[i];
    sxx += xs[i] * xs[i]; sxy += xs[i] * ys[i]; syy += ys[i] * ys[i];
  }
  const double denom = n * sxx - sx * sx;
  fit.slope = (n * sxy - sx * sy) / denom;
  const double ssr = syy - sy * sy / n -
                     fit.slope * fit.slope * (sxx - sx * sx / n);
  const double sst = syy - sy * sy / n;
  fit.r_squared = (sst > 0.0) ? 1.0 - std::max(0.0, ssr) / sst : 1.0;
  return fit;
}

struct ConvergenceReport {
  std::string experiment;
  std::string config_hash;
  double delta = 0.0;
  std::vector<ErrorSample> samples;
  SlopeFit fit;
  bool insufficient_range = false;
  bool band_ok = false;
  double band_lo = 0.0, band_hi = 0.0;
  long wall_ms_total = 0;
};

inline nlohmann::json to_json(const ConvergenceReport &r) {
  nlohmann::json j;
  j["experiment"] = r.experiment;
  j["config_hash"] = r.config_hash;
  j["assumption_certificate"] = {{"delta", r.delta}};
  j["kappa"] = nlohmann::json::array();
  j["error_l2"] = nlohmann::json::array();
  j["error_h2k"] = nlohmann::json::array();
  j["floor"] = nlohmann::json::array();
  for (const auto &s : r.samples) {
    j["kappa"].push_back(s.kappa);
    j["error_l2"].push_back(s.error_l2);
    j["error_h2k"].push_back(s.error_h2k);
    j["floor"].push_back(s.floor);
  }
  j["slope"] = r.fit.slope;
  j["r_squared"] = r.fit.r_squared;
  j["points_used"] = r.fit.points_used;
  j["insufficient_range"] = r.insufficient_range;
  j["band"] = {r.band_lo, r.band_hi};
  j["band_ok"] = r.band_ok;
  j["wall_ms"] = r.wall_ms_total;
  j["environment"] = {{"compiler", "g++"},
                      {"eigen", EIGEN_WORLD_VERSION * 10000 +
                                    EIGEN_MAJOR_VERSION * 100 +
                                    EIGEN_MINOR_VERSION}};
  return j;
}

//==============================================================================
// Output files (temp + rename)

inline void atomic_write(const std::filesystem::path &path,
                         const std::string &content) {
  std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

inline std::string report_csv(const ConvergenceReport &r) {
  std::ostringstream o;
  o << "experiment,kappa,error_L2,error_H2k,slope_running,floor_estimate,"
       "wall_ms\n";
  std::vector<ErrorSample> acc;
  for (const auto &s : r.samples) {
    acc.push_back(s);
    const SlopeFit running = fit_loglog_slope(acc);
    o << r.experiment << ',' << format_double(s.kappa) << ','
      << format_double(s.error_l2) << ',' << format_double(s.error_h2k) << ','
      << format_double(running.points_used >= 2
                           ? running.slope
                           : std::numeric_limits<double>::quiet_NaN())
      << ',' << format_double(s.floor) << ',' << s.wall_ms << '\n';
  }
  return o.str();
}

//==============================================================================
// Sweeps

inline ConvergenceReport run_sweep(const ExperimentContext &ctx,
                                   const std::string &tag,
                                   bool parallel = true) {
  const auto t0 = std::chrono::steady_clock::now();
  ConvergenceReport rep;
  rep.experiment = tag;
  rep.config_hash = fnv1a_hex(canonical_config(ctx.cfg));
  rep.delta = ctx.cert.delta;

  auto eval = [&](double kappa) -> ErrorSample {
    if (tag == "thm1") return first_order_error(ctx, kappa);
    if (tag == "thm3") return second_order_error(ctx, kappa, false);
    if (tag == "thm3_ablated") return second_order_error(ctx, kappa, true);
    if (tag == "remainder") return remainder_order_error(ctx, kappa);
    throw std::invalid_argument("run_sweep: unknown tag " + tag);
  };

  rep.samples.resize(ctx.cfg.kappa_list.size());
  if (parallel) {
    std::vector<std::future<ErrorSample>> futs;
    for (double k : ctx.cfg.kappa_list)
      futs.push_back(std::async(std::launch::async, eval, k));
    for (std::size_t i = 0; i < futs.size(); ++i)
      rep.samples[i] = futs[i].get();
  } else {
    for (std::size_t i = 0; i < ctx.cfg.kappa_list.size(); ++i)
      rep.samples[i] = eval(ctx.cfg.kappa_list[i]);
  }

  rep.fit = fit_loglog_slope(rep.samples);
  rep.insufficient_range = rep.fit.points_used < 4;

  if (tag == "thm1") { rep.band_lo = 0.9; rep.band_hi = 1.3; }
  else if (tag == "thm3") { rep.band_lo = 1.8; rep.band_hi = 2.4; }
  else if (tag == "thm3_ablated") { rep.band_lo = -10.0; rep.band_hi = 1.4; }
  else if (tag == "remainder") { rep.band_lo = 2.7; rep.band_hi = 3.4; }
  rep.band_ok = !rep.insufficient_range && rep.fit.slope >= rep.band_lo &&
                rep.fit.slope <= rep.band_hi;
  rep.wall_ms_total = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
  return rep;
}

inline void persist_report(const ConvergenceReport &rep,
                           const std::string &out_dir) {
  const std::filesystem::path dir(out_dir);
  atomic_write(dir / (rep.experiment + ".csv"), report_csv(rep));
  atomic_write(dir / (rep.experiment + ".json"), to_json(rep).dump(2) + "\n");
}

//==============================================================================
// NAIP and operator-identity suites (non-sweep experiments)

struct CheckResult {
  std::string name;
  double value = 0.0;
  double bound = 0.0;
  bool ok() const { return value < bound; }
};

inline std::vector<CheckResult> naip_suite(std::uint64_t seed,
                                           int n_instances = 100) {
  const std::vector<double> t_list{0.3, 1.0, 2.0};
  double worst_exp = 0.0, worst_right = 0.0, worst_left = 0.0;
  std::mt19937_64 rng(seed);
  for (int i = 0; i < n_instances; ++i) {
    auto p = make_matrix_pair(8, seed * 1000 + i);
    worst_exp = std::max(worst_exp, verify_expderrep(p, t_list));
    auto F = random_linear_path(8, rng);
    auto G = random_linear_path(8, rng);
    worst_right = std::max(worst_right, verify_naip(p, F, G, 1.0, 64));
    worst_left = std::max(worst_left, verify_left_naip(p, F, G, 1.0, 64));
  }
  return {{"expderrep_max_residual", worst_exp, 1e-11},
          {"naip_max_residual", worst_right, 1e-9},
          {"left_naip_max_residual", worst_left, 1e-9}};
}

// Projector/resolvent algebra, PKP, recursion cross-check, Riesz projection
// on the configured model (plus a kappa from the sweep).
inline std::vector<CheckResult> identities_suite(const ExperimentContext &ctx) {
  std::vector<CheckResult> out;
  const double kappa =
      ctx.cfg.kappa_list[ctx.cfg.kappa_list.size() / 2]; // mid-sweep value
  const auto &b = ctx.b;
  const auto &H = ctx.H;
  const int d = b.d;

  double proj = 0.0, resv = 0.0, rbound = 0.0;
  const MatrixXcd I = MatrixXcd::Identity(d, d);
  for (long p = 0; p < ctx.grid.n_points; ++p) {
    const auto &P = b.P.blocks[p];
    const auto &Pb = b.Pbar.blocks[p];
    const auto &R = b.Rbar.blocks[p];
    const auto &Hb = H.blocks[p];
    proj = std::max(proj, (P * P - P).operatorNorm());
    proj = std::max(proj, (Hb * P - P * Hb).operatorNorm());
    proj = std::max(proj, (P * Pb).operatorNorm());
    resv = std::max(resv, (R * (Hb - b.E[p] * I) - Pb).operatorNorm());
    rbound = std::max(rbound, R.operatorNorm() - 1.0 / b.delta);
  }
  out.push_back({"projector_algebra", proj, 1e-10});
  out.push_back({"reduced_resolvent", resv, 1e-10});
  out.push_back({"resolvent_bound_excess", rbound, 1e-10});

  out.push_back(
      {"pkp_identity", pkp_identity_check(b, kappa, ctx.f0_for(kappa)), 1e-8});

  out.push_back(
      {"riesz_projection",
       riesz_projection_check(H, b, 64, 0.45 * b.delta), 1e-10});

  // recursion vs explicit on random states
  if (ctx.grid.n_points * d <= kDenseCap) {
    auto X2r = recursion_Xj(b, H, kappa, 2);
    auto X2e = explicit_X2(b, H, kappa);
    auto X3r = recursion_Xj(b, H, kappa, 3);
    auto X3e = explicit_X3(b, H, kappa);
    double w2 = 0.0, w3 = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      auto psi = random_smooth_state(ctx.grid, d, ctx.cfg.seed + trial);
      auto a2 = X2r.apply(psi), c2 = X2e.apply(psi);
      w2 = std::max(w2, (a2.data - c2.data).norm() /
                            std::max(1e-300, c2.data.norm()));
      auto a3 = X3r.apply(psi), c3 = X3e.apply(psi);
      w3 = std::max(w3, (a3.data - c3.data).norm() /
                            std::max(1e-300, c3.data.norm()));
    }
    out.push_back({"recursion_X2_vs_explicit", w2, 1e-8});
    out.push_back({"recursion_X3_vs_explicit", w3, 1e-8});
  }
  return out;
}

} // namespace boalab
