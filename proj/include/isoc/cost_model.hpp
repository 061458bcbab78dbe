#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace isoc {

// One separable-width RBF term w * exp(-(at(t-t0)^2 + ax(x-x0)^2 + au(u-u0)^2)).
// A zero width drops that axis, so x-only bumps and (t,x,u) bumps share the type.
struct rbf_term {
  double w = 0.0;
  double at = 0.0, ax = 0.0, au = 0.0;
  double t0 = 0.0, x0 = 0.0, u0 = 0.0;
  double eval(double t, double x, double u) const;
};
// isotropic term gamma * exp(-alpha |xi - xi_j|^2) over xi = (t,x,u)
rbf_term rbf_txu(double gamma, double alpha, double t0, double x0, double u0);
// x-only bump gamma * exp(-alpha (x-x0)^2)
rbf_term rbf_x(double gamma, double alpha, double x0);

// Running cost c0 + q x^2 + theta u^2 + sum of RBF terms. The form tag names
// which construction produced it; evaluation is uniform.
struct running_cost {
  std::string form = "zero";  // zero | quadratic_lq | rbf_sum | feature_affine
  double c0 = 0.0, q = 0.0, theta = 0.0;
  std::vector<rbf_term> rbf;

  double eval(double t, double x, double u) const;
  bool time_dependent() const;
};

struct terminal_cost {
  std::string form = "zero";  // zero | rbf_sum | feature_affine | tabulated
  double c0 = 0.0;
  std::vector<rbf_term> rbf;             // evaluated at (0, x, 0)
  std::vector<double> tab_x, tab_v;      // linear interpolation, clamped ends

  double eval(double x) const;
};

struct cost_pair {
  running_cost f;
  terminal_cost g;
};
cost_pair quadratic_lq_pair(double q, double theta);

// pointwise (f, g) evaluation; throws on non-finite results
struct cost_values { double f = 0.0, g = 0.0; };
cost_values eval_cost(const cost_pair& pair, double t, double x, double u);

struct probe_box {
  double T = 1.0, L = 6.0, u_lo = -10.0, u_hi = 10.0;
  std::size_t nt = 61, nx = 61, nu = 21;
};

struct growth_certificate {
  double K = 0.0;
  double probe_max_ratio = 0.0;  // max (|f|+|g|) / (K (1+x^2+u^2)) over probes
  bool passes() const { return probe_max_ratio <= 1.0; }
};
growth_certificate validate_growth(const cost_pair& pair, double K, const probe_box& box);

// Generator feature: a bounded pair (phi^f on (t,x,u), phi^g on x).
struct feature_pair {
  std::vector<rbf_term> f_terms;
  std::vector<rbf_term> g_terms;
  double bound_f = 1.0, bound_g = 1.0;  // declared sup bounds
};

struct generator_class {
  std::vector<feature_pair> features;
  enum class ball_t { sup_ball, l1_ball };
  ball_t ball = ball_t::sup_ball;
  double radius = 1.0;

  std::size_t dim() const { return features.size(); }
  bool contains(const std::vector<double>& c, double tol = 1e-12) const;
  std::vector<double> project(const std::vector<double>& c) const;
};

// verifies each declared feature bound on the probe box; returns worst ratio
double verify_feature_bounds(const generator_class& gen, const probe_box& box);

struct cost_class_d {
  cost_pair base;
  generator_class generators;
  std::vector<double> lambda_grid;
};

// (f0 + lambda sum c_i phi_i^f, g0 + lambda sum c_i phi_i^g); c is projected
// into the coefficient set when outside (flag reported via *projected).
cost_pair element_of_d(const cost_class_d& klass, double lambda, std::vector<double> c,
                       bool* projected = nullptr);

// canonical serialization key used by value caches
std::string cost_key(const cost_pair& pair);

}  // namespace isoc
