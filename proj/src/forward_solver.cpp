#include "isoc/forward_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "isoc/util.hpp"

namespace isoc {

double riccati_solution::r(double t) const {
  return std::sqrt(q * theta) * std::tanh(std::sqrt(q / theta) * (T - t));
}

double riccati_solution::s(double t) const {
  const double z = std::sqrt(q / theta) * (T - t);
  // ln cosh via |z| + log1p(exp(-2|z|)) - ln 2, overflow-safe
  const double az = std::fabs(z);
  const double lc = az + std::log1p(std::exp(-2.0 * az)) - std::log(2.0);
  return sig * sig * theta * lc;
}

double riccati_solution::max_ode_residual(std::size_t n_check) const {
  const double h = 1e-5;
  double worst = 0.0;
  const auto ts = linspace(h, T - h, n_check);
  for (double t : ts) {
    const double rdot = (r(t + h) - r(t - h)) / (2.0 * h);
    const double rt = r(t);
    worst = std::max(worst, std::fabs(rdot - (rt * rt / theta - q)));
  }
  return worst;
}

riccati_solution solve_riccati(double theta, double q, double sig, double T) {
  if (theta <= 0.0 || q <= 0.0 || T <= 0.0)
    throw std::invalid_argument("solve_riccati: theta, q, T must be positive");
  riccati_solution ric;
  ric.theta = theta;
  ric.q = q;
  ric.sig = sig;
  ric.T = T;
  return ric;
}

double riccati_r0_rk4(double theta, double q, double T, std::size_t steps) {
  // integrate y(tau) = r(T - tau): dy/dtau = q - y^2/theta, y(0) = 0
  const double h = T / double(steps);
  auto rhs = [&](double y) { return q - y * y / theta; };
  double y = 0.0;
  for (std::size_t i = 0; i < steps; ++i) {
    const double k1 = rhs(y);
    const double k2 = rhs(y + 0.5 * h * k1);
    const double k3 = rhs(y + 0.5 * h * k2);
    const double k4 = rhs(y + h * k3);
    y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return y;
}

double lq_optimal_value(const riccati_solution& ric, double init_second_moment) {
  return ric.r(0.0) * init_second_moment + ric.s(0.0);
}

std::vector<double> gaussian_cell_weights(const std::vector<double>& nodes, double mean,
                                          double var) {
  const std::size_t n = nodes.size();
  const double sd = std::sqrt(var);
  // upper tail Q(z) via erfc keeps cell masses positive far into the tails
  auto upper = [&](double x) { return 0.5 * std::erfc((x - mean) / (sd * std::sqrt(2.0))); };
  std::vector<double> edges(n + 1);
  edges[0] = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < n; ++i) edges[i + 1] = 0.5 * (nodes[i] + nodes[i + 1]);
  edges[n] = std::numeric_limits<double>::infinity();
  std::vector<double> w(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double qa = edges[i] == -std::numeric_limits<double>::infinity() ? 1.0 : upper(edges[i]);
    const double qb = edges[i + 1] == std::numeric_limits<double>::infinity() ? 0.0 : upper(edges[i + 1]);
    w[i] = std::max(qa - qb, 1e-300);
    total += w[i];
  }
  for (double& wi : w) wi /= total;
  return w;
}

namespace {

struct hjb_workspace {
  std::vector<double> xs, us;  // us ordered by (|u|, u)
  double dx = 0.0, dt = 0.0;
  std::size_t M = 0, J = 0;
  bool frozen_dyn = false;  // affine drift, constant diffusion
  std::vector<std::vector<double>> B;  // drift table when frozen_dyn
  std::vector<std::vector<double>> half_sig2;
};

hjb_workspace prepare_hjb(const dynamics_spec& spec, const control_set& uset,
                          const hjb_grid_params& grid, double T) {
  if (!uset.compact())
    throw std::invalid_argument("grid solver requires a compact control set");
  hjb_workspace ws;
  ws.M = grid.M;
  ws.J = grid.J;
  ws.xs = linspace(-grid.L, grid.L, grid.J + 1);
  ws.dx = 2.0 * grid.L / double(grid.J);
  ws.dt = T / double(grid.M);

  ws.us = linspace(uset.lower, uset.upper, grid.nU);
  std::sort(ws.us.begin(), ws.us.end(), [](double a, double b) {
    const double aa = std::fabs(a), ab = std::fabs(b);
    if (aa != ab) return aa < ab;
    return a < b;
  });

  // CFL bound from the worst drift/diffusion over a probe lattice
  double b_max = 0.0, s_max = 0.0;
  for (double x : linspace(-grid.L, grid.L, 25))
    for (double u : linspace(uset.lower, uset.upper, 9))
      for (double t : linspace(0.0, T, 5)) {
        b_max = std::max(b_max, std::fabs(spec.drift(t, x, u)));
        s_max = std::max(s_max, std::fabs(spec.diffusion(t, x, u)));
      }
  const double dt_max = ws.dx * ws.dx / (s_max * s_max + ws.dx * b_max);
  if (ws.dt > dt_max * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "CFL violated: dt=" << ws.dt << " exceeds " << dt_max << "; need M >= "
       << std::size_t(std::ceil(T / dt_max));
    throw std::runtime_error(os.str());
  }

  ws.frozen_dyn = !spec.drift_fn && !spec.diff_fn;
  if (ws.frozen_dyn) {
    ws.B.assign(ws.J + 1, std::vector<double>(ws.us.size()));
    for (std::size_t j = 0; j <= ws.J; ++j)
      for (std::size_t k = 0; k < ws.us.size(); ++k)
        ws.B[j][k] = spec.b0 + spec.bx * ws.xs[j] + spec.bu * ws.us[k];
  }
  return ws;
}

// One backward step: writes v_new and the chosen controls for this slice.
// F row layout: f(t_i, x_j, u_k) for the ordered control grid.
void hjb_step(const hjb_workspace& ws, const dynamics_spec& spec, double t,
              const std::vector<std::vector<double>>& F, const std::vector<double>& v,
              std::vector<double>& v_new, std::vector<double>& kappa_row) {
  const std::size_t J = ws.J;
  const double dx = ws.dx, dt = ws.dt;
  const double half_sig2 = 0.5 * spec.sig * spec.sig;
  auto node = [&](std::size_t j) {
    const double x = ws.xs[j];
    const double dp = j < J ? (v[j + 1] - v[j]) / dx : 0.0;   // one-sided, 0 outward
    const double dm = j > 0 ? (v[j] - v[j - 1]) / dx : 0.0;
    const double d2 =
        (j > 0 && j < J) ? (v[j + 1] - 2.0 * v[j] + v[j - 1]) / (dx * dx) : 0.0;
    double best = std::numeric_limits<double>::infinity();
    double best_u = ws.us[0];
    if (ws.frozen_dyn) {
      const auto& Bj = ws.B[j];
      const auto& Fj = F[j];
      const double diff = half_sig2 * d2;
      for (std::size_t k = 0; k < ws.us.size(); ++k) {
        const double b = Bj[k];
        const double h = Fj[k] + b * (b >= 0.0 ? dp : dm) + diff;
        if (h < best) {  // strict: first minimum in (|u|, u) order wins ties
          best = h;
          best_u = ws.us[k];
        }
      }
    } else {
      for (std::size_t k = 0; k < ws.us.size(); ++k) {
        const double u = ws.us[k];
        const double b = spec.drift(t, x, u);
        const double sg = spec.diffusion(t, x, u);
        const double h = F[j][k] + b * (b >= 0.0 ? dp : dm) + 0.5 * sg * sg * d2;
        if (h < best) {
          best = h;
          best_u = u;
        }
      }
    }
    if (!std::isfinite(best)) throw std::runtime_error("grid solver diverged");
    v_new[j] = v[j] + dt * best;
    kappa_row[j] = best_u;
  };
  // thread spawn per slice only pays off on large slices
  if ((J + 1) * ws.us.size() >= 50000) {
    parallel_for(J + 1, node);
  } else {
    for (std::size_t j = 0; j <= J; ++j) node(j);
  }
}

void fill_cost_table(const hjb_workspace& ws, const cost_pair& pair, double t,
                     std::vector<std::vector<double>>& F) {
  auto row = [&](std::size_t j) {
    for (std::size_t k = 0; k < ws.us.size(); ++k)
      F[j][k] = pair.f.eval(t, ws.xs[j], ws.us[k]);
  };
  if ((ws.J + 1) * ws.us.size() >= 50000) {
    parallel_for(ws.J + 1, row);
  } else {
    for (std::size_t j = 0; j <= ws.J; ++j) row(j);
  }
}

}  // namespace

std::vector<double> hjb_value_slice(const dynamics_spec& spec, const cost_pair& pair,
                                    const control_set& uset, const hjb_grid_params& grid,
                                    double T,
                                    std::vector<std::vector<double>>* kappa_out) {
  const hjb_workspace ws = prepare_hjb(spec, uset, grid, T);
  const bool frozen_cost = !pair.f.time_dependent();

  std::vector<std::vector<double>> F(ws.J + 1, std::vector<double>(ws.us.size()));
  if (frozen_cost) fill_cost_table(ws, pair, 0.0, F);

  std::vector<double> v(ws.J + 1), v_new(ws.J + 1), kap(ws.J + 1);
  for (std::size_t j = 0; j <= ws.J; ++j) v[j] = pair.g.eval(ws.xs[j]);
  if (kappa_out) kappa_out->assign(ws.M, {});

  for (std::size_t i = ws.M; i-- > 0;) {
    const double t = T * double(i) / double(ws.M);
    if (!frozen_cost) fill_cost_table(ws, pair, t, F);
    hjb_step(ws, spec, t, F, v, v_new, kap);
    v.swap(v_new);
    if (kappa_out) (*kappa_out)[i] = kap;
  }
  return v;
}

value_grid solve_hjb_grid(const dynamics_spec& spec, const cost_pair& pair,
                          const control_set& uset, const hjb_grid_params& grid, double T) {
  const hjb_workspace ws = prepare_hjb(spec, uset, grid, T);
  const bool frozen_cost = !pair.f.time_dependent();

  value_grid vg;
  vg.times = linspace(0.0, T, grid.M + 1);
  vg.states = ws.xs;
  vg.v.assign(grid.M + 1, std::vector<double>(grid.J + 1));
  vg.kappa.assign(grid.M, std::vector<double>(grid.J + 1));
  for (std::size_t j = 0; j <= grid.J; ++j) vg.v[grid.M][j] = pair.g.eval(ws.xs[j]);

  std::vector<std::vector<double>> F(ws.J + 1, std::vector<double>(ws.us.size()));
  if (frozen_cost) fill_cost_table(ws, pair, 0.0, F);

  for (std::size_t i = grid.M; i-- > 0;) {
    const double t = vg.times[i];
    if (!frozen_cost) fill_cost_table(ws, pair, t, F);
    hjb_step(ws, spec, t, F, vg.v[i + 1], vg.v[i], vg.kappa[i]);
  }
  return vg;
}

double value_slice_quadrature(const std::vector<double>& states,
                              const std::vector<double>& v0, const initial_law& init) {
  const double L = states.back();
  switch (init.kind) {
    case initial_law::kind_t::gaussian: {
      const double sd = std::sqrt(init.var);
      const double tail =
          std::erfc((L - init.mean) / (sd * std::sqrt(2.0))) / 2.0 +
          std::erfc((init.mean - states.front()) / (sd * std::sqrt(2.0))) / 2.0;
      if (tail > 1e-6)
        throw std::runtime_error("initial law mass outside the state grid exceeds 1e-6");
      const auto w = gaussian_cell_weights(states, init.mean, init.var);
      double s = 0.0;
      for (std::size_t j = 0; j < states.size(); ++j) s += w[j] * v0[j];
      return s;
    }
    case initial_law::kind_t::point: {
      const double x = init.at;
      if (x <= states.front() || x >= L)
        throw std::runtime_error("point initial law outside the state grid");
      const double dx = (states.back() - states.front()) / double(states.size() - 1);
      std::size_t j = std::size_t((x - states.front()) / dx);
      if (j + 1 >= states.size()) j = states.size() - 2;
      const double a = (x - states[j]) / (states[j + 1] - states[j]);
      return (1.0 - a) * v0[j] + a * v0[j + 1];
    }
    case initial_law::kind_t::uniform: {
      if (init.lo <= states.front() || init.hi >= L)
        throw std::runtime_error("uniform initial law outside the state grid");
      // trapezoid on the overlap of each cell with [lo, hi]
      double s = 0.0;
      const double len = init.hi - init.lo;
      for (std::size_t j = 0; j + 1 < states.size(); ++j) {
        const double a = std::max(states[j], init.lo);
        const double b = std::min(states[j + 1], init.hi);
        if (b <= a) continue;
        const double va = v0[j] + (v0[j + 1] - v0[j]) * (a - states[j]) / (states[j + 1] - states[j]);
        const double vb = v0[j] + (v0[j + 1] - v0[j]) * (b - states[j]) / (states[j + 1] - states[j]);
        s += 0.5 * (va + vb) * (b - a) / len;
      }
      return s;
    }
  }
  return 0.0;
}

double optimal_value_from_grid(const value_grid& vg, const initial_law& init) {
  return value_slice_quadrature(vg.states, vg.v[0], init);
}

control_policy extract_policy(const value_grid& vg, const control_set& uset) {
  control_policy p;
  p.kind = control_policy::kind_t::feedback_grid;
  p.uset = uset;
  p.grid_times = vg.times;
  p.grid_xs = vg.states;
  p.grid_kappa = vg.kappa;
  return p;
}

}  // namespace isoc
