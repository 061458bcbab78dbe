// End-to-end acceptance gate: nine checks with pinned tolerances, one
// summary line each. The exit code is the number of failed checks, so a
// green run exits 0.
#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "isoc/serialize.hpp"
#include "isoc/transport.hpp"
#include "isoc/util.hpp"

using namespace isoc;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(bool ok, const std::string& label, const std::string& detail) {
  std::printf("[%s] %s: %s\n", ok ? "PASS" : "FAIL", label.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

void run_check(const std::string& label, const std::function<bool(std::string&)>& fn) {
  std::string detail;
  bool ok = false;
  try {
    ok = fn(detail);
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  report(ok, label, detail);
}

std::string num(double v) {
  char b[64];
  std::snprintf(b, sizeof b, "%.6g", v);
  return b;
}

// data-generating instance shared by the recovery, battery, and equivalence
// checks: theta* = 1, q = 10, sig = 0.1, X0 ~ N(0,1), controls clipped at 10
empirical_flow lq_flow(std::size_t paths, std::size_t steps, std::uint64_t seed) {
  dynamics_spec dyn;
  dyn.sig = 0.1;
  const riccati_solution ric = solve_riccati(1.0, 10.0, 0.1, 1.0);
  const control_policy pol = linear_feedback_policy(
      [ric](double t) { return -ric.r(t); }, make_control_set(-10.0, 10.0));
  return flow_from_batch(
      simulate(dyn, pol, gaussian_law(0.0, 1.0), steps, paths, seed, 1.0));
}

forward_setup lq_grid_setup(std::size_t J, std::size_t M, std::size_t nU) {
  forward_setup su;
  su.dyn.sig = 0.1;
  su.uset = make_control_set(-10.0, 10.0);
  su.grid.J = J;
  su.grid.M = M;
  su.grid.nU = nU;
  su.grid.L = 6.0;
  su.init = gaussian_law(0.0, 1.0);
  su.T = 1.0;
  return su;
}

// weighted sup distance to the closed-form value slice over |x| <= 3
double slice_error(const std::vector<double>& states, const std::vector<double>& v0,
                   const riccati_solution& ric) {
  const double r0 = ric.r(0.0), s0 = ric.s(0.0);
  double err = 0.0;
  for (std::size_t j = 0; j < states.size(); ++j) {
    const double x = states[j];
    if (std::fabs(x) > 3.0) continue;
    err = std::max(err, std::fabs(v0[j] - (r0 * x * x + s0)) / (1.0 + x * x));
  }
  return err;
}

bool check_theta_recovery(std::string& detail) {
  const auto t0 = std::chrono::steady_clock::now();
  const empirical_flow flow = lq_flow(10000, 200, 12345);
  const forward_handle fh = forward_handle::riccati(10.0, 0.1, 1.0, 1.0);
  search_space space;  // [0.25, 4], 76 log-spaced points, q = 10
  const inverse_result res = minimize_gap_refine(flow, space, fh);
  const gap_report at_hat = gap(flow, quadratic_lq_pair(10.0, res.theta_hat), fh);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double v_bound = 3.0 * at_hat.mc_stderr + 0.01 * at_hat.j_star;
  detail = "theta_hat = " + num(res.theta_hat) + " (|err| = " +
           num(std::fabs(res.theta_hat - 1.0)) + " <= 0.05), V = " + num(at_hat.v) +
           " <= " + num(v_bound) + " (3 se + 1% J*), wall " + num(wall) + "s <= 120s";
  return std::fabs(res.theta_hat - 1.0) <= 0.05 && at_hat.v <= v_bound && wall <= 120.0;
}

bool check_riccati_oracle(std::string& detail) {
  bool ok = true;
  double worst_rk4 = 0.0, worst_res = 0.0;
  for (double theta : {1.0, 2.5}) {
    const riccati_solution ric = solve_riccati(theta, 10.0, 0.1, 1.0);
    const double rk4 = riccati_r0_rk4(theta, 10.0, 1.0);
    worst_rk4 = std::max(worst_rk4, std::fabs(ric.r(0.0) - rk4));
    worst_res = std::max(worst_res, ric.max_ode_residual());
  }
  ok = worst_rk4 <= 1e-6 && worst_res <= 1e-8;
  const double j_star =
      lq_optimal_value(solve_riccati(1.0, 10.0, 0.1, 1.0), 1.0);
  const double j_ref = 3.175675031522;  // independently integrated reference
  ok = ok && std::fabs(j_star - j_ref) <= 1e-9;
  detail = "max |r(0) - rk4| = " + num(worst_rk4) + " <= 1e-6, max ode residual = " +
           num(worst_res) + " <= 1e-8, J* = " + num(j_star) + " within 1e-9 of " +
           num(j_ref);
  return ok;
}

bool check_grid_convergence(std::string& detail) {
  const riccati_solution ric = solve_riccati(1.0, 10.0, 0.1, 1.0);
  const cost_pair pair = quadratic_lq_pair(10.0, 1.0);
  // time steps track the CFL bound dt <= dx^2 / (sig^2 + dx b_max) as the
  // state grid refines
  const std::vector<std::pair<std::size_t, std::size_t>> levels = {
      {600, 625}, {1200, 1250}, {2400, 2500}};
  std::vector<double> errs;
  std::vector<double> fine_states, fine_v0;
  for (const auto& [J, M] : levels) {
    const forward_setup su = lq_grid_setup(J, M, 201);
    const std::vector<double> states = linspace(-su.grid.L, su.grid.L, J + 1);
    const std::vector<double> v0 =
        hjb_value_slice(su.dyn, pair, su.uset, su.grid, su.T);
    errs.push_back(slice_error(states, v0, ric));
    if (J == levels.back().first) {
      fine_states = states;
      fine_v0 = v0;
    }
  }
  const double ratio1 = errs[0] / errs[1], ratio2 = errs[1] / errs[2];
  // the t = 0 quadrature arbitrates the sign of the x-independent term
  const double j_grid = value_slice_quadrature(fine_states, fine_v0, gaussian_law(0.0, 1.0));
  const double r0 = ric.r(0.0), s0 = ric.s(0.0);
  const double d_plus = std::fabs(j_grid - (r0 + s0));
  const double d_minus = std::fabs(j_grid - (r0 - s0));
  const bool ok = errs[2] <= 1e-2 && ratio1 >= 1.5 && ratio2 >= 1.5 && d_plus < d_minus;
  detail = "weighted sup errors " + num(errs[0]) + " / " + num(errs[1]) + " / " +
           num(errs[2]) + " (finest <= 1e-2), decay ratios " + num(ratio1) + ", " +
           num(ratio2) + " >= 1.5; t=0 quadrature sits " + num(d_plus) +
           " from the +s(0) branch vs " + num(d_minus) + " from the -s(0) branch";
  return ok;
}

bool check_nonneg_battery(std::string& detail) {
  const empirical_flow flow = lq_flow(4000, 200, 12345);
  const battery_class_params prm;  // 3 + 3 rbf features, radius 0.6
  const cost_class_d klass = random_rbf_battery_class(prm, 777);
  forward_setup su = lq_grid_setup(120, 200, 61);
  const forward_handle fh = forward_handle::grid(su);
  const nonneg_report rep = certify_nonnegativity(flow, klass, 20, 777, fh);
  detail = num(rep.n_samples) + " sampled candidate pairs, " +
           num(double(rep.violations.size())) + " gap values below -(3 se + tol), " +
           "min signed margin = " + num(rep.min_signed_margin);
  return rep.n_samples == 20 && rep.violations.empty() && rep.min_signed_margin > 0.0;
}

bool check_bl_metric(std::string& detail) {
  double worst_cf = 0.0;
  for (double d : {0.5, 1.0, 2.0, 100.0}) {
    const grid_measure a = make_grid_measure({0.0}, {1.0});
    const grid_measure b = make_grid_measure({d}, {1.0});
    worst_cf = std::max(worst_cf, std::fabs(rho_bl(a, b) - 2.0 * d / (d + 2.0)));
  }
  rng_stream rng(2718, 0);
  auto random_measure = [&](std::size_t n) {
    std::vector<double> pts(n), w(n);
    for (auto& p : pts) p = -3.0 + 6.0 * rng.uniform();
    std::sort(pts.begin(), pts.end());
    double sum = 0.0;
    for (auto& v : w) { v = 0.05 + rng.uniform(); sum += v; }
    for (auto& v : w) v /= sum;
    return make_grid_measure(std::move(pts), std::move(w));
  };
  double worst_sym = 0.0, worst_tri = 0.0, worst_self = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const grid_measure a = random_measure(5), b = random_measure(7), c = random_measure(6);
    const double ab = rho_bl(a, b), ba = rho_bl(b, a);
    const double bc = rho_bl(b, c), ac = rho_bl(a, c);
    worst_sym = std::max(worst_sym, std::fabs(ab - ba));
    worst_tri = std::max(worst_tri, ac - (ab + bc));
    worst_self = std::max(worst_self, std::fabs(rho_bl(a, a)));
  }
  const bool ok = worst_cf <= 1e-6 && worst_sym <= 1e-9 && worst_tri <= 1e-9 &&
                  worst_self <= 1e-12;
  detail = "two-point closed-form error " + num(worst_cf) +
           " <= 1e-6; over 50 random triples: symmetry " + num(worst_sym) +
           " <= 1e-9, triangle excess " + num(worst_tri) + " <= 1e-9, self distance " +
           num(worst_self);
  return ok;
}

bool check_bridge_pipeline(std::string& detail) {
  const grid_measure mu0 = gaussian_grid_measure(-8.0, 8.0, 401, 0.0, 1.0);
  const grid_measure muT = gaussian_grid_measure(-8.0, 8.0, 401, 0.0, 0.25);
  const bridge_solution coarse = sinkhorn_bridge(mu0, muT, 1.0);
  const bridge_solution fine =
      sinkhorn_bridge(gaussian_grid_measure(-8.0, 8.0, 2001, 0.0, 1.0),
                      gaussian_grid_measure(-8.0, 8.0, 2001, 0.0, 0.25), 1.0);
  const double rel = std::fabs(coarse.value - fine.value) / fine.value;

  // marginals already transported by the prior: the bridge should cost nothing
  const bridge_solution matched =
      sinkhorn_bridge(mu0, gaussian_grid_measure(-8.0, 8.0, 401, 0.0, 2.0), 1.0);

  const control_policy drift = h_drift(coarse, 200);
  dynamics_spec dyn;
  dyn.sig = 1.0;
  const trajectory_batch batch =
      simulate(dyn, drift, gaussian_law(0.0, 1.0), 200, 10000, 99, 1.0);
  const empirical_flow flow = flow_from_batch(batch);
  const double energy = observed_cost(flow, quadratic_lq_pair(0.0, 1.0)).running;
  const double energy_rel = std::fabs(energy - coarse.value) / std::max(coarse.value, 0.05);
  const double term_rho = rho_bl(measure_from_samples(flow.term_x, mu0.points), muT);

  const bool ok = std::fabs(matched.value) <= 1e-3 && rel <= 0.02 &&
                  energy_rel <= 0.05 && term_rho <= 0.05;
  detail = "matched-marginal value " + num(matched.value) +
           " <= 1e-3, coarse/fine rel diff " + num(rel) +
           " <= 2%, simulated drift energy " + num(energy) + " vs " +
           num(coarse.value) + " (rel " + num(energy_rel) +
           " <= 5%), terminal BL mismatch " + num(term_rho) + " <= 0.05";
  return ok;
}

bool check_weak_duality(std::string& detail) {
  const grid_measure mu0 = gaussian_grid_measure(-8.0, 8.0, 401, 0.0, 1.0);
  const grid_measure muT = gaussian_grid_measure(-8.0, 8.0, 401, 0.0, 0.25);
  rbf_g_family family;
  const duality_report rep = duality_check_schrodinger(mu0, muT, family, 1.0);
  const bool ok = rep.max_weak_violation <= 1e-3 && rep.dual_best >= 0.8 * rep.primal;
  detail = "primal " + num(rep.primal) + ", best dual " + num(rep.dual_best) +
           " (ratio " + num(rep.dual_best / rep.primal) +
           " >= 0.8), max weak-duality violation " + num(rep.max_weak_violation) +
           " <= 1e-3 over " + num(double(rep.n_evaluated)) + " candidates";
  return ok;
}

bool check_equivalence(std::string& detail) {
  const empirical_flow flow = lq_flow(10000, 200, 12345);
  cost_class_d klass;
  klass.base = quadratic_lq_pair(10.0, 2.0);
  feature_pair running_feature;
  rbf_term bump{};
  bump.w = 1.0;
  bump.ax = 0.5;  // exp(-x^2 / 2)
  running_feature.f_terms = {bump};
  klass.generators.features.push_back(running_feature);
  feature_pair terminal_feature;
  terminal_feature.g_terms = {rbf_x(1.0, 0.5, 0.0)};
  klass.generators.features.push_back(terminal_feature);
  klass.generators.ball = generator_class::ball_t::sup_ball;
  klass.generators.radius = 2.0;
  klass.lambda_grid = {1.0, 2.0, 4.0, 8.0, 16.0, 32.0};

  const forward_handle fh = forward_handle::grid(lq_grid_setup(120, 600, 81));
  const equivalence_report rep = theorem32_equivalence(flow, klass, fh);
  const double margin = 0.05 * std::max(std::fabs(rep.lhs), 0.05);
  const bool ok = rep.abs_diff <= margin && !rep.non_monotone &&
                  rep.lam_rho_last <= 0.5 * rep.lam_rho_first;
  detail = "scan side " + num(rep.lhs) + ", curve side " + num(rep.rhs) +
           ", |diff| = " + num(rep.abs_diff) + " <= " + num(margin) +
           " (5% of scale); curve monotone: " + (rep.non_monotone ? "no" : "yes") +
           "; lambda rho " + num(rep.lam_rho_first) + " -> " + num(rep.lam_rho_last) +
           " (needs factor 2 drop)";
  return ok;
}

bool check_byte_stability(std::string& detail) {
  const char* env_cli = std::getenv("ISOC_CLI_PATH");
  const char* env_cfg = std::getenv("ISOC_CONFIG_DIR");
  const std::string cli = env_cli != nullptr ? env_cli : ISOC_CLI_PATH;
  const std::string cfg_dir = env_cfg != nullptr ? env_cfg : ISOC_CONFIG_DIR;
  std::vector<fs::path> configs;
  for (const auto& entry : fs::directory_iterator(cfg_dir))
    if (entry.path().extension() == ".json") configs.push_back(entry.path());
  std::sort(configs.begin(), configs.end());
  if (configs.empty()) {
    detail = "no configs found";
    return false;
  }

  const fs::path root = fs::temp_directory_path() / "isoc_accept_rerun";
  fs::remove_all(root);
  std::size_t files_compared = 0;
  for (const fs::path& cfg : configs) {
    const fs::path base = root / cfg.stem();
    for (const char* leg : {"a", "b"}) {
      const std::string cmd = std::string("\"") + cli + "\" run " + cfg.string() +
                              " --output-dir " + (base / leg).string() + " > " +
                              (base / leg).string() + ".log 2>&1";
      fs::create_directories(base);
      const int rc = std::system(cmd.c_str());
      if (rc != 0 && WEXITSTATUS(rc) != 0) {
        detail = cfg.filename().string() + " run failed, see " +
                 (base / leg).string() + ".log";
        return false;
      }
    }
    std::vector<std::string> rel;
    for (const auto& entry : fs::recursive_directory_iterator(base / "a"))
      if (entry.is_regular_file())
        rel.push_back(fs::relative(entry.path(), base / "a").string());
    std::sort(rel.begin(), rel.end());
    for (const std::string& name : rel) {
      if (name == "manifest.json") continue;  // carries wall-clock timings
      if (!fs::exists(base / "b" / name)) {
        detail = cfg.filename().string() + ": second run lacks " + name;
        return false;
      }
      if (read_text_file((base / "a" / name).string()) !=
          read_text_file((base / "b" / name).string())) {
        detail = cfg.filename().string() + ": " + name + " differs between reruns";
        return false;
      }
      ++files_compared;
    }
  }
  detail = num(double(configs.size())) + " configs rerun, " +
           num(double(files_compared)) +
           " output files byte-identical (manifest.json excluded: timings)";
  return true;
}

}  // namespace

int main() {
  run_check("theta recovery on simulated LQ data", check_theta_recovery);
  run_check("closed-form value against independent integration", check_riccati_oracle);
  run_check("grid solver converges to the closed form", check_grid_convergence);
  run_check("random candidate battery keeps the gap nonnegative", check_nonneg_battery);
  run_check("bounded-lipschitz metric closed forms and axioms", check_bl_metric);
  run_check("entropic bridge matches refinement, simulation, and marginals",
            check_bridge_pipeline);
  run_check("weak duality holds across the terminal-cost family", check_weak_duality);
  run_check("scan and penalized curve agree on the frozen instance", check_equivalence);
  run_check("experiment outputs are byte-stable across reruns", check_byte_stability);
  std::printf("%d/9 checks passed\n", 9 - g_failures);
  return g_failures;
}
