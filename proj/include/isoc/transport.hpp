#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "isoc/cost_model.hpp"
#include "isoc/dynamics.hpp"
#include "isoc/forward_solver.hpp"
#include "isoc/gap_functional.hpp"
#include "isoc/inverse_solver.hpp"

namespace isoc {

// discrete measure on a sorted point grid
struct grid_measure {
  std::vector<double> points;   // strictly increasing
  std::vector<double> weights;  // nonnegative, sum 1 within 1e-12
};

// validates ordering and normalization
grid_measure make_grid_measure(std::vector<double> points, std::vector<double> weights);

// cell-integrated gaussian on a uniform grid over [lo, hi]
grid_measure gaussian_grid_measure(double lo, double hi, std::size_t n, double mean,
                                   double var);

// histogram of samples onto the nearest grid node
grid_measure measure_from_samples(const std::vector<double>& samples,
                                  const std::vector<double>& points);

// pseudometric between flows or terminal marginals
struct pseudometric_spec {
  enum class kind_t { generator, bl };
  kind_t kind = kind_t::bl;
  generator_class gen;  // generator kind; both ball shapes are symmetric sets
};

// bounded-Lipschitz distance: max sum g_i d_i over |g_i| <= m,
// |g_i - g_{i+1}| <= l |x_i - x_{i+1}|, m + l <= 1, solved as an LP on the
// merged support (points with |d| <= 1e-14 are dropped; a function on the
// support extends to the full grid by linear interpolation without raising
// m or l, so the restriction is exact)
double rho_bl(const grid_measure& mu, const grid_measure& nu);

// integrated feature moments of a flow:
//   m_i = int <phi_i^f, flow_t> dt (trapezoid) + <phi_i^g, terminal marginal>
std::vector<double> flow_feature_moments(const empirical_flow& flow,
                                         const generator_class& gen);

// support function of the coefficient set at d: R ||d||_1 for the sup ball,
// R ||d||_inf for the l1 ball
double support_value(const generator_class& gen, const std::vector<double>& d);

double rho_generator(const empirical_flow& a, const empirical_flow& b,
                     const generator_class& gen);

// row-stochastic heat-kernel transition between node grids, variance horizon
std::vector<double> heat_transition(const std::vector<double>& xs,
                                    const std::vector<double>& ys, double horizon);

struct bridge_solution {
  std::vector<double> x, y;          // grids
  std::vector<double> mu0, muT;      // input weights
  std::vector<double> prior;         // R_ij = mu0_i q_ij, row-major n x m
  std::vector<double> a, b;          // positive potentials, pi = a (x) b . R
  double entropy = 0.0;              // H(pi | R)
  double value = 0.0;                // 2 H
  std::size_t iterations = 0;
  double marginal_error = 0.0;
  double horizon = 1.0;

  std::size_t rows() const { return x.size(); }
  std::size_t cols() const { return y.size(); }
  double prior_at(std::size_t i, std::size_t j) const { return prior[i * cols() + j]; }
  double coupling_at(std::size_t i, std::size_t j) const {
    return a[i] * prior_at(i, j) * b[j];
  }
  std::vector<double> row_sums() const;
  std::vector<double> col_sums() const;
  // max relative deviation of the stored coupling from a_i R_ij b_j
  double factorization_residual() const;
};

// iterative proportional fitting on the heat-kernel prior until both marginal
// errors fall below tol; throws with the reached error on non-convergence.
// both inputs need strictly positive weights.
bridge_solution sinkhorn_bridge(const grid_measure& mu0, const grid_measure& muT,
                                double horizon, double tol = 1e-9,
                                std::size_t max_iters = 100000);

// drift of the bridge diffusion, d/dx log h with
// h(t, x) = sum_j p(t, x, T, y_j) b_j dy_j, tabulated as a feedback policy
// (rows at the left endpoints of n_times uniform bins, fine state grid)
control_policy h_drift(const bridge_solution& bridge, std::size_t n_times = 200,
                       double x_lo = -8.0, double x_hi = 8.0, std::size_t nx = 3201);

// quadratic-cost inner value by the log transform:
//   inf_u E[int |u|^2 dt + g(X_T)] = -2 E_{mu0} log(P_T e^{-g/2})
// with P_T the heat semigroup as a grid convolution; g given at the y nodes
double log_transform_value(const std::vector<double>& q_rowstoch,
                           const std::vector<double>& mu0_w,
                           const std::vector<double>& g_at_y);

struct rbf_g_family {
  std::size_t n_centers = 10;
  double center_lo = -4.0, center_hi = 4.0;
  double alpha = 0.5;
  double coeff_bound = 40.0;
  std::size_t sweeps = 4;
};

struct duality_report {
  double primal = 0.0;     // sinkhorn bridge value 2H
  double dual_best = 0.0;  // best over the evaluated family
  double gap = 0.0;        // primal - dual_best
  double max_weak_violation = 0.0;  // max over evaluated g of dual(g) - primal
  std::size_t n_evaluated = 0;
  std::vector<double> best_coeffs;
  bridge_solution bridge;
};

// coordinate ascent over the terminal-cost family; every evaluated candidate
// feeds the weak-duality violation tracker
duality_report duality_check_schrodinger(const grid_measure& mu0,
                                         const grid_measure& muT,
                                         const rbf_g_family& family, double horizon);

// cell-law propagation under a feedback table: the exact adjoint of the grid
// solver's upwind stencil (diffusion-free boundary rows), mass conserving
std::vector<std::vector<double>> fp_cell_law(const dynamics_spec& dyn,
                                             const std::vector<std::vector<double>>& kappa,
                                             const std::vector<double>& times,
                                             const std::vector<double>& states,
                                             const std::vector<double>& w0);

// initial cell weights for the propagation (gaussian or point laws)
std::vector<double> initial_cell_weights(const initial_law& init,
                                         const std::vector<double>& states);

// wraps a propagated law as a flow (bin i holds the state grid with weights
// W[i] and controls kappa[i]; the final bin repeats the last control row)
empirical_flow flow_from_cell_law(const std::vector<double>& times,
                                  const std::vector<double>& states,
                                  const std::vector<std::vector<double>>& W,
                                  const std::vector<std::vector<double>>& kappa);

struct penalized_point {
  double value = 0.0;       // inf_u of the penalized objective
  double rho_at_opt = 0.0;  // pseudometric between the optimizer's law and the flow
  std::vector<double> c_star;
};

// penalized value through the minimax swap: for the generator pseudometric,
//   inf_u [J(u; f0, g0) + lambda rho(P^u, mu)]
//     = observed(f0, g0) + sup_c [J*(f0 + lambda c phi) - observed-part shift]
// with the sup taken by per-coordinate golden sections (3 sweeps from c = 0,
// tolerance 5e-4) plus a small tensor-grid safeguard in low dimension.
// forward must carry a grid setup (the optimizer's law comes from its
// feedback table).
penalized_point penalized_bridge_value(const cost_class_d& klass,
                                       const empirical_flow& flow, double lambda,
                                       const forward_handle& forward);

struct penalized_curve {
  std::vector<double> lambdas;
  std::vector<double> values;
  std::vector<double> rho_at_opt;
  std::vector<std::vector<double>> c_stars;
};

penalized_curve penalized_curve_generator(const cost_class_d& klass,
                                          const empirical_flow& flow,
                                          const forward_handle& forward);

// quadratic-control bridge with the bounded-Lipschitz pseudometric on the
// terminal marginal; the inner problem uses the log transform, the dual
// search runs over family members rescaled into the BL unit ball
struct schrodinger_penalized_params {
  grid_measure mu0, muT;
  double horizon = 1.0;
  rbf_g_family family;
  std::vector<double> lambdas = {1, 2, 4, 8, 16, 32};
};

penalized_point penalized_bridge_value_bl(const schrodinger_penalized_params& prm,
                                          double lambda);
penalized_curve penalized_curve_bl(const schrodinger_penalized_params& prm);

struct bridge_limit_result {
  double value = 0.0;  // sup of the curve
  bool non_monotone = false;
};

// the shrinking-feasible-set limit equals the sup over the lambda curve;
// dips beyond tol raise the flag
bridge_limit_result constrained_bridge_limit(const penalized_curve& curve,
                                             double tol = 1e-3);

struct equivalence_report {
  double lhs = 0.0;       // direct scan estimate of the best gap
  double rhs = 0.0;       // observed(f0, g0) - bridge limit
  double abs_diff = 0.0;
  double obs_base = 0.0;
  penalized_curve curve;
  bool non_monotone = false;
  double lam_rho_first = 0.0, lam_rho_last = 0.0;
  inverse_result scan;
};

// both sides of the equivalence computed with the same forward solver: the
// class's generators double as the pseudometric
equivalence_report theorem32_equivalence(const empirical_flow& flow,
                                         const cost_class_d& klass,
                                         const forward_handle& forward,
                                         std::size_t scan_pts_per_coord = 5);

}  // namespace isoc
