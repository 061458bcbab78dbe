#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "isoc/util.hpp"

namespace isoc {

struct control_set {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();
  bool compact() const { return std::isfinite(lower) && std::isfinite(upper); }
  double clamp(double u) const {
    if (u < lower) return lower;
    if (u > upper) return upper;
    return u;
  }
};

// Validates lower <= 0 <= upper (the control set must contain 0).
control_set make_control_set(double lower, double upper);

struct dynamics_spec {
  // affine form: drift = b0 + bx*x + bu*u, constant diffusion sig
  double b0 = 0.0, bx = 0.0, bu = 1.0;
  double sig = 0.1;
  double lipschitz_x = 1.0;  // declared regularity constant
  std::string form_tag = "affine";
  // set for form_tag == "expression"
  std::function<double(double, double, double)> drift_fn;
  std::function<double(double, double, double)> diff_fn;

  double drift(double t, double x, double u) const;
  double diffusion(double t, double x, double u) const;
};

// Sampled regularity check of the declared constants on a probe box:
// state increments bounded by lipschitz_x * |dx| and the origin values
// bounded by lipschitz_x, for both drift and diffusion.
struct dynamics_check_report {
  double worst_increment_ratio = 0.0;  // vs lipschitz_x * |dx|
  double worst_origin = 0.0;           // max |phi(t,0,0)|
  bool ok = false;
};
dynamics_check_report check_dynamics(const dynamics_spec& spec, double T, double L,
                                     const control_set& uset);

struct initial_law {
  enum class kind_t { gaussian, point, uniform };
  kind_t kind = kind_t::gaussian;
  double mean = 0.0, var = 1.0;  // gaussian
  double at = 0.0;               // point
  double lo = 0.0, hi = 1.0;     // uniform

  double second_moment() const;
  double sample(rng_stream& rng) const;
};
initial_law gaussian_law(double mean, double var);
initial_law point_law(double at);
initial_law uniform_law(double lo, double hi);

struct control_policy {
  enum class kind_t { open_loop, feedback_linear, feedback_grid };
  kind_t kind = kind_t::open_loop;
  control_set uset;

  // open_loop: one row broadcast to every path, or one row per path
  std::vector<std::vector<double>> open_loop_u;

  // feedback_linear: u = gain(t) * x
  std::function<double(double)> gain;

  // feedback_grid: kappa[i][j] on times x states, constant on [t_i, t_{i+1}),
  // linear interpolation in x (clamped at the grid ends)
  std::vector<double> grid_times, grid_xs;
  std::vector<std::vector<double>> grid_kappa;

  // clamped control; *clamped set when the raw value fell outside uset
  double eval(double t, double x, std::size_t step, std::size_t path,
              bool* clamped = nullptr) const;
};
control_policy constant_policy(double u, control_set uset);
control_policy linear_feedback_policy(std::function<double(double)> gain, control_set uset);

struct trajectory_batch {
  std::vector<double> times;  // M+1
  std::size_t n_paths = 0, n_steps = 0;
  std::vector<double> states;    // n_paths x (M+1), path-major
  std::vector<double> controls;  // n_paths x M, path-major
  std::uint64_t seed = 0;
  double dt = 0.0;
  long clamp_warnings = 0;

  double state(std::size_t p, std::size_t i) const { return states[p * (n_steps + 1) + i]; }
  double control(std::size_t p, std::size_t i) const { return controls[p * n_steps + i]; }
};

// Euler-Maruyama with controls recorded at left endpoints; each path draws
// from its own (seed, path) stream so results are independent of threading.
trajectory_batch simulate(const dynamics_spec& spec, const control_policy& policy,
                          const initial_law& init, std::size_t M, std::size_t N,
                          std::uint64_t seed, double T = 1.0);

struct flow_bin {
  std::vector<double> x, u, w;
};

struct empirical_flow {
  std::vector<double> times;   // bin times, t_0..t_M
  std::vector<flow_bin> bins;  // bin M repeats the final control value
  std::vector<double> term_x, term_w;  // terminal state marginal
  bool path_aligned = false;  // same path order in every bin (enables per-path stderr)
  bool uniform_w = false;
  double second_moment_estimate = 0.0;
};

empirical_flow flow_from_batch(const trajectory_batch& batch);

// trapezoid-in-time estimate of the integrated second moment of (x,u)
double second_moment_check(const empirical_flow& flow);

}  // namespace isoc
