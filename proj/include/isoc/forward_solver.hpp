#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "isoc/cost_model.hpp"
#include "isoc/dynamics.hpp"

namespace isoc {

// Closed-form solution of the scalar LQ problem with running cost
// q x^2 + theta u^2, terminal cost 0, dynamics dx = u dt + sig dB:
//   v(t,x) = r(t) x^2 + s(t),
//   r(t) = sqrt(q theta) tanh(sqrt(q/theta) (T-t)),
//   s(t) = sig^2 theta ln cosh(sqrt(q/theta) (T-t)).
// The sign of the s-term is fixed by ds/dt = -sig^2 r, s(T) = 0, and is
// cross-checked against the grid solver (see the acceptance suite).
struct riccati_solution {
  double theta = 1.0, q = 10.0, sig = 0.1, T = 1.0;
  double r(double t) const;
  double s(double t) const;
  // max |dr/dt - (r^2/theta - q)| over a uniform check grid, finite-difference dr/dt
  double max_ode_residual(std::size_t n_check = 1001) const;
};

riccati_solution solve_riccati(double theta, double q, double sig, double T);

// independent RK4 integration of dr/dt = r^2/theta - q backward from r(T)=0,
// returned at t=0; used as a correctness oracle for the closed form
double riccati_r0_rk4(double theta, double q, double T, std::size_t steps = 4000);

// J* = r(0) E[X_0^2] + s(0)
double lq_optimal_value(const riccati_solution& ric, double init_second_moment);

struct hjb_grid_params {
  std::size_t M = 2500;  // time steps
  std::size_t J = 2400;  // state cells ([-L, L] has J+1 nodes)
  std::size_t nU = 201;  // control grid points
  double L = 6.0;
};

struct value_grid {
  std::vector<double> times;   // M+1
  std::vector<double> states;  // J+1
  std::vector<std::vector<double>> v;      // (M+1) x (J+1)
  std::vector<std::vector<double>> kappa;  // M x (J+1), chosen control
  std::string scheme_tag = "explicit_upwind";
};

// Backward explicit monotone scheme: upwind first-order D_x, central D_xx
// (zero curvature at the boundary nodes), pointwise minimization over the
// control grid in (|u|, u) order so ties break toward the smallest |u|.
// Throws when dt exceeds the CFL bound dx^2 / (sig_max^2 + dx b_max),
// naming the number of time steps that would satisfy it.
value_grid solve_hjb_grid(const dynamics_spec& spec, const cost_pair& pair,
                          const control_set& uset, const hjb_grid_params& grid,
                          double T = 1.0);

// same scheme, keeping only v(0,.) and optionally the feedback table
std::vector<double> hjb_value_slice(const dynamics_spec& spec, const cost_pair& pair,
                                    const control_set& uset, const hjb_grid_params& grid,
                                    double T = 1.0,
                                    std::vector<std::vector<double>>* kappa_out = nullptr);

// quadrature of v(0,.) against the initial law (cell-integrated weights for
// gaussian/uniform, interpolation for a point mass); refuses when the law
// puts more than 1e-6 mass outside (-L, L)
double optimal_value_from_grid(const value_grid& vg, const initial_law& init);
double value_slice_quadrature(const std::vector<double>& states,
                              const std::vector<double>& v0, const initial_law& init);

// feedback_grid policy from the solver's argmin table
control_policy extract_policy(const value_grid& vg, const control_set& uset);

// cell-integrated gaussian weights on a node grid; the end cells absorb the
// tails, every weight is strictly positive
std::vector<double> gaussian_cell_weights(const std::vector<double>& nodes, double mean,
                                          double var);

}  // namespace isoc
