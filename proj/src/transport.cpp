#include "isoc/transport.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <utility>

#include "isoc/simplex.hpp"

namespace isoc {

namespace {

constexpr double kSupportDropTol = 1e-14;  // dropped mass shifts rho_bl by < n * 1e-14

double golden_max(const std::function<double(double)>& f, double a, double b,
                  double tol) {
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = f(d);
    }
  }
  return (a + b) / 2.0;
}

// midpoint cell widths of a sorted node grid
std::vector<double> cell_widths(const std::vector<double>& xs) {
  const std::size_t n = xs.size();
  std::vector<double> w(n, 1.0);
  if (n < 2) return w;
  w[0] = (xs[1] - xs[0]) / 2.0;
  w[n - 1] = (xs[n - 1] - xs[n - 2]) / 2.0;
  for (std::size_t j = 1; j + 1 < n; ++j) w[j] = (xs[j + 1] - xs[j - 1]) / 2.0;
  return w;
}

}  // namespace

grid_measure make_grid_measure(std::vector<double> points, std::vector<double> weights) {
  if (points.size() != weights.size() || points.empty())
    throw std::invalid_argument("grid measure: points and weights must match and be nonempty");
  for (std::size_t i = 0; i + 1 < points.size(); ++i)
    if (!(points[i] < points[i + 1]))
      throw std::invalid_argument("grid measure: points must be strictly increasing");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("grid measure: negative weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw std::invalid_argument("grid measure: weights sum to " + std::to_string(sum));
  return grid_measure{std::move(points), std::move(weights)};
}

grid_measure gaussian_grid_measure(double lo, double hi, std::size_t n, double mean,
                                   double var) {
  if (n < 2 || !(lo < hi)) throw std::invalid_argument("gaussian grid measure: bad grid");
  grid_measure m;
  m.points = linspace(lo, hi, n);
  m.weights = gaussian_cell_weights(m.points, mean, var);
  return m;
}

grid_measure measure_from_samples(const std::vector<double>& samples,
                                  const std::vector<double>& points) {
  if (samples.empty() || points.size() < 2)
    throw std::invalid_argument("sample measure: empty input");
  std::vector<double> w(points.size(), 0.0);
  const double x0 = points.front();
  const double dx = (points.back() - points.front()) / double(points.size() - 1);
  const double unit = 1.0 / double(samples.size());
  for (double s : samples) {
    long j = std::lround((s - x0) / dx);
    j = std::max(0L, std::min(long(points.size()) - 1, j));
    w[std::size_t(j)] += unit;
  }
  grid_measure m;
  m.points = points;
  m.weights = std::move(w);
  return m;
}

double rho_bl(const grid_measure& mu, const grid_measure& nu) {
  // merge the supports, keeping signed weight differences
  std::vector<std::pair<double, double>> diff;
  diff.reserve(mu.points.size() + nu.points.size());
  for (std::size_t i = 0; i < mu.points.size(); ++i)
    diff.emplace_back(mu.points[i], mu.weights[i]);
  for (std::size_t i = 0; i < nu.points.size(); ++i)
    diff.emplace_back(nu.points[i], -nu.weights[i]);
  std::sort(diff.begin(), diff.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<double> pts, d;
  for (const auto& [x, w] : diff) {
    if (!pts.empty() && x == pts.back())
      d.back() += w;
    else {
      pts.push_back(x);
      d.push_back(w);
    }
  }
  std::vector<double> px, pd;
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (std::abs(d[i]) > kSupportDropTol) {
      px.push_back(pts[i]);
      pd.push_back(d[i]);
    }
  const std::size_t n = px.size();
  if (n == 0) return 0.0;

  // variables: g+ (n), g- (n), m, l; maximize sum d_i (g+_i - g-_i)
  const std::size_t nv = 2 * n + 2;
  std::vector<std::vector<double>> A;
  std::vector<double> b, c(nv, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    c[i] = pd[i];
    c[n + i] = -pd[i];
  }
  auto row = [&](std::initializer_list<std::pair<std::size_t, double>> entries,
                 double rhs) {
    std::vector<double> r(nv, 0.0);
    for (const auto& [j, v] : entries) r[j] = v;
    A.push_back(std::move(r));
    b.push_back(rhs);
  };
  for (std::size_t i = 0; i < n; ++i) {
    row({{i, 1.0}, {n + i, -1.0}, {2 * n, -1.0}}, 0.0);   //  g_i <= m
    row({{i, -1.0}, {n + i, 1.0}, {2 * n, -1.0}}, 0.0);   // -g_i <= m
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double gap = px[i + 1] - px[i];
    row({{i, 1.0}, {n + i, -1.0}, {i + 1, -1.0}, {n + i + 1, 1.0}, {2 * n + 1, -gap}},
        0.0);
    row({{i, -1.0}, {n + i, 1.0}, {i + 1, 1.0}, {n + i + 1, -1.0}, {2 * n + 1, -gap}},
        0.0);
  }
  row({{2 * n, 1.0}, {2 * n + 1, 1.0}}, 1.0);  // m + l <= 1

  const lp_result res = simplex_maximize(A, b, c);
  if (!res.ok) throw std::runtime_error("rho_bl: LP failed (" + res.note + ")");
  return res.value;
}

std::vector<double> flow_feature_moments(const empirical_flow& flow,
                                         const generator_class& gen) {
  const std::vector<double> tw = trapezoid_weights(flow.times);
  std::vector<double> m(gen.dim(), 0.0);
  for (std::size_t k = 0; k < gen.dim(); ++k) {
    const feature_pair& fp = gen.features[k];
    double run = 0.0;
    for (std::size_t i = 0; i < flow.bins.size(); ++i) {
      const flow_bin& bin = flow.bins[i];
      const double t = flow.times[i];
      double acc = 0.0;
      for (std::size_t p = 0; p < bin.x.size(); ++p) {
        double phi = 0.0;
        for (const rbf_term& term : fp.f_terms) phi += term.eval(t, bin.x[p], bin.u[p]);
        acc += bin.w[p] * phi;
      }
      run += tw[i] * acc;
    }
    double term_val = 0.0;
    for (std::size_t p = 0; p < flow.term_x.size(); ++p) {
      double phi = 0.0;
      for (const rbf_term& term : fp.g_terms) phi += term.eval(0.0, flow.term_x[p], 0.0);
      term_val += flow.term_w[p] * phi;
    }
    m[k] = run + term_val;
  }
  return m;
}

double support_value(const generator_class& gen, const std::vector<double>& d) {
  if (d.size() != gen.dim())
    throw std::invalid_argument("support_value: dimension mismatch");
  double l1 = 0.0, linf = 0.0;
  for (double v : d) {
    l1 += std::abs(v);
    linf = std::max(linf, std::abs(v));
  }
  return gen.ball == generator_class::ball_t::sup_ball ? gen.radius * l1
                                                       : gen.radius * linf;
}

double rho_generator(const empirical_flow& a, const empirical_flow& b,
                     const generator_class& gen) {
  const std::vector<double> ma = flow_feature_moments(a, gen);
  const std::vector<double> mb = flow_feature_moments(b, gen);
  std::vector<double> d(ma.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = ma[i] - mb[i];
  return support_value(gen, d);
}

std::vector<double> heat_transition(const std::vector<double>& xs,
                                    const std::vector<double>& ys, double horizon) {
  if (!(horizon > 0.0)) throw std::invalid_argument("heat_transition: horizon must be positive");
  const std::size_t n = xs.size(), m = ys.size();
  const std::vector<double> dy = cell_widths(ys);
  std::vector<double> q(n * m);
  parallel_for(n, [&](std::size_t i) {
    double* row = &q[i * m];
    double sum = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double z = xs[i] - ys[j];
      row[j] = std::exp(-z * z / (2.0 * horizon)) * dy[j];
      sum += row[j];
    }
    for (std::size_t j = 0; j < m; ++j) row[j] /= sum;
  });
  return q;
}

std::vector<double> bridge_solution::row_sums() const {
  std::vector<double> r(rows(), 0.0);
  for (std::size_t i = 0; i < rows(); ++i)
    for (std::size_t j = 0; j < cols(); ++j) r[i] += coupling_at(i, j);
  return r;
}

std::vector<double> bridge_solution::col_sums() const {
  std::vector<double> c(cols(), 0.0);
  for (std::size_t i = 0; i < rows(); ++i)
    for (std::size_t j = 0; j < cols(); ++j) c[j] += coupling_at(i, j);
  return c;
}

double bridge_solution::factorization_residual() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < rows(); ++i)
    for (std::size_t j = 0; j < cols(); ++j) {
      const double pi = coupling_at(i, j);
      const double rebuilt = a[i] * prior_at(i, j) * b[j];
      if (pi > 0.0) worst = std::max(worst, std::abs(pi - rebuilt) / pi);
    }
  return worst;
}

bridge_solution sinkhorn_bridge(const grid_measure& mu0, const grid_measure& muT,
                                double horizon, double tol, std::size_t max_iters) {
  for (double w : mu0.weights)
    if (!(w > 0.0))
      throw std::invalid_argument("sinkhorn: initial weights must be strictly positive");
  for (double w : muT.weights)
    if (!(w > 0.0))
      throw std::invalid_argument("sinkhorn: terminal weights must be strictly positive");

  bridge_solution bs;
  bs.x = mu0.points;
  bs.y = muT.points;
  bs.mu0 = mu0.weights;
  bs.muT = muT.weights;
  bs.horizon = horizon;
  const std::size_t n = bs.x.size(), m = bs.y.size();

  const std::vector<double> q = heat_transition(bs.x, bs.y, horizon);
  bs.prior.resize(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) bs.prior[i * m + j] = bs.mu0[i] * q[i * m + j];
  const std::vector<double>& R = bs.prior;

  std::vector<double> a(n, 1.0), b(m, 1.0), Rb(n, 0.0), RTa(m, 0.0);
  auto mv_rows = [&]() {
    parallel_for(n, [&](std::size_t i) {
      const double* row = &R[i * m];
      double acc = 0.0;
      for (std::size_t j = 0; j < m; ++j) acc += row[j] * b[j];
      Rb[i] = acc;
    });
  };
  auto mv_cols = [&]() {
    parallel_for(m, [&](std::size_t j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += R[i * m + j] * a[i];
      RTa[j] = acc;
    });
  };

  mv_rows();
  double err = std::numeric_limits<double>::infinity();
  std::size_t it = 0;
  for (; it < max_iters; ++it) {
    for (std::size_t i = 0; i < n; ++i) a[i] = bs.mu0[i] / Rb[i];
    mv_cols();
    for (std::size_t j = 0; j < m; ++j) b[j] = bs.muT[j] / RTa[j];
    mv_rows();
    double row_err = 0.0, col_err = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      row_err = std::max(row_err, std::abs(a[i] * Rb[i] - bs.mu0[i]));
    for (std::size_t j = 0; j < m; ++j)
      col_err = std::max(col_err, std::abs(b[j] * RTa[j] - bs.muT[j]));
    err = std::max(row_err, col_err);
    if (err <= tol) {
      ++it;
      break;
    }
  }
  if (err > tol) {
    char buf[128];
    std::snprintf(buf, sizeof buf,
                  "sinkhorn: marginal error %.3e above tolerance %.3e after %zu iterations",
                  err, tol, max_iters);
    throw std::runtime_error(buf);
  }
  bs.a = std::move(a);
  bs.b = std::move(b);
  bs.iterations = it;
  bs.marginal_error = err;

  // H(pi | R) with log(pi_ij / R_ij) = log a_i + log b_j
  std::vector<double> lb(m);
  for (std::size_t j = 0; j < m; ++j) lb[j] = std::log(bs.b[j]);
  double H = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double la = std::log(bs.a[i]);
    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j)
      acc += bs.coupling_at(i, j) * (la + lb[j]);
    H += acc;
  }
  bs.entropy = H;
  bs.value = 2.0 * H;
  return bs;
}

control_policy h_drift(const bridge_solution& bridge, std::size_t n_times, double x_lo,
                       double x_hi, std::size_t nx) {
  if (n_times == 0 || nx < 2) throw std::invalid_argument("h_drift: bad tabulation grid");
  const std::vector<double>& ys = bridge.y;
  const std::size_t m = ys.size();
  const std::vector<double> dy = cell_widths(ys);
  std::vector<double> logbdy(m);
  for (std::size_t j = 0; j < m; ++j) logbdy[j] = std::log(bridge.b[j]) + std::log(dy[j]);

  control_policy pol;
  pol.kind = control_policy::kind_t::feedback_grid;
  pol.uset = control_set{};  // the bridge control is unconstrained
  pol.grid_times = linspace(0.0, bridge.horizon, n_times + 1);
  pol.grid_xs = linspace(x_lo, x_hi, nx);
  pol.grid_kappa.assign(n_times, std::vector<double>(nx, 0.0));

  parallel_for(n_times, [&](std::size_t r) {
    const double s = bridge.horizon - pol.grid_times[r];
    std::vector<double>& row = pol.grid_kappa[r];
    for (std::size_t k = 0; k < nx; ++k) {
      const double x = pol.grid_xs[k];
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < m; ++j) {
        const double z = x - ys[j];
        const double e = -z * z / (2.0 * s) + logbdy[j];
        if (e > best) best = e;
      }
      double wsum = 0.0, num = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        const double z = x - ys[j];
        const double w = std::exp(-z * z / (2.0 * s) + logbdy[j] - best);
        wsum += w;
        num += w * ys[j];
      }
      row[k] = (num / wsum - x) / s;
    }
  });
  return pol;
}

double log_transform_value(const std::vector<double>& q_rowstoch,
                           const std::vector<double>& mu0_w,
                           const std::vector<double>& g_at_y) {
  const std::size_t n = mu0_w.size(), m = g_at_y.size();
  if (q_rowstoch.size() != n * m)
    throw std::invalid_argument("log_transform_value: size mismatch");
  std::vector<double> e(m);
  for (std::size_t j = 0; j < m; ++j) e[j] = std::exp(-g_at_y[j] / 2.0);
  double val = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = &q_rowstoch[i * m];
    double w = 0.0;
    for (std::size_t j = 0; j < m; ++j) w += row[j] * e[j];
    val -= 2.0 * mu0_w[i] * std::log(w);
  }
  if (!std::isfinite(val))
    throw std::runtime_error("log_transform_value: non-finite inner value");
  return val;
}

namespace {

std::vector<double> rbf_family_matrix(const rbf_g_family& fam,
                                      const std::vector<double>& ys) {
  const std::vector<double> centers =
      linspace(fam.center_lo, fam.center_hi, fam.n_centers);
  std::vector<double> PHI(ys.size() * fam.n_centers);
  for (std::size_t j = 0; j < ys.size(); ++j)
    for (std::size_t k = 0; k < fam.n_centers; ++k) {
      const double z = ys[j] - centers[k];
      PHI[j * fam.n_centers + k] = std::exp(-fam.alpha * z * z);
    }
  return PHI;
}

std::vector<double> family_eval(const std::vector<double>& PHI, std::size_t ny,
                                const std::vector<double>& coef) {
  const std::size_t K = coef.size();
  std::vector<double> g(ny, 0.0);
  for (std::size_t j = 0; j < ny; ++j) {
    const double* row = &PHI[j * K];
    double acc = 0.0;
    for (std::size_t k = 0; k < K; ++k) acc += row[k] * coef[k];
    g[j] = acc;
  }
  return g;
}

}  // namespace

duality_report duality_check_schrodinger(const grid_measure& mu0,
                                         const grid_measure& muT,
                                         const rbf_g_family& family, double horizon) {
  if (family.n_centers == 0) throw std::invalid_argument("duality: empty terminal-cost family");
  duality_report rep;
  rep.bridge = sinkhorn_bridge(mu0, muT, horizon);
  rep.primal = rep.bridge.value;

  const std::vector<double> q = heat_transition(mu0.points, muT.points, horizon);
  const std::vector<double> PHI = rbf_family_matrix(family, muT.points);
  const std::size_t ny = muT.points.size();

  rep.max_weak_violation = -std::numeric_limits<double>::infinity();
  auto dual_value = [&](const std::vector<double>& coef) {
    const std::vector<double> g = family_eval(PHI, ny, coef);
    double pairing = 0.0;
    for (std::size_t j = 0; j < ny; ++j) pairing += g[j] * muT.weights[j];
    const double val = log_transform_value(q, mu0.weights, g) - pairing;
    rep.max_weak_violation = std::max(rep.max_weak_violation, val - rep.primal);
    ++rep.n_evaluated;
    return val;
  };

  std::vector<double> coef(family.n_centers, 0.0);
  for (std::size_t sweep = 0; sweep < family.sweeps; ++sweep) {
    for (std::size_t k = 0; k < family.n_centers; ++k) {
      auto fk = [&](double ck) {
        std::vector<double> c2 = coef;
        c2[k] = ck;
        return dual_value(c2);
      };
      const double ck = golden_max(fk, -family.coeff_bound, family.coeff_bound, 1e-3);
      if (fk(ck) > dual_value(coef)) coef[k] = ck;
    }
  }
  rep.dual_best = dual_value(coef);
  rep.gap = rep.primal - rep.dual_best;
  rep.best_coeffs = std::move(coef);
  return rep;
}

std::vector<std::vector<double>> fp_cell_law(const dynamics_spec& dyn,
                                             const std::vector<std::vector<double>>& kappa,
                                             const std::vector<double>& times,
                                             const std::vector<double>& states,
                                             const std::vector<double>& w0) {
  const std::size_t M = kappa.size(), J1 = states.size();
  if (times.size() != M + 1 || w0.size() != J1)
    throw std::invalid_argument("fp_cell_law: size mismatch");
  const double dx = states[1] - states[0];
  std::vector<std::vector<double>> W(M + 1);
  W[0] = w0;
  std::vector<double> cur = w0, nxt(J1);
  for (std::size_t i = 0; i < M; ++i) {
    const double t = times[i];
    const double dt = times[i + 1] - times[i];
    std::fill(nxt.begin(), nxt.end(), 0.0);
    for (std::size_t j = 0; j < J1; ++j) {
      const double u = kappa[i][j];
      const double b = dyn.drift(t, states[j], u);
      const double s = dyn.diffusion(t, states[j], u);
      const double diff = 0.5 * s * s / (dx * dx);
      // boundary rows mirror the solver's zero-curvature nodes: drift only
      double pup, pdn;
      if (j == 0) {
        pup = dt * std::max(b, 0.0) / dx;
        pdn = 0.0;
      } else if (j + 1 == J1) {
        pup = 0.0;
        pdn = dt * std::max(-b, 0.0) / dx;
      } else {
        pup = dt * (diff + std::max(b, 0.0) / dx);
        pdn = dt * (diff + std::max(-b, 0.0) / dx);
      }
      const double stay = 1.0 - pup - pdn;
      nxt[j] += cur[j] * stay;
      if (j + 1 < J1) nxt[j + 1] += cur[j] * pup;
      if (j > 0) nxt[j - 1] += cur[j] * pdn;
    }
    cur = nxt;
    W[i + 1] = cur;
  }
  return W;
}

std::vector<double> initial_cell_weights(const initial_law& init,
                                         const std::vector<double>& states) {
  switch (init.kind) {
    case initial_law::kind_t::gaussian:
      return gaussian_cell_weights(states, init.mean, init.var);
    case initial_law::kind_t::point: {
      if (init.at < states.front() || init.at > states.back())
        throw std::invalid_argument("initial_cell_weights: point mass outside the grid");
      std::vector<double> w(states.size(), 0.0);
      const double dx = states[1] - states[0];
      std::size_t j = std::size_t((init.at - states.front()) / dx);
      if (j + 1 >= states.size()) j = states.size() - 2;
      const double a = (init.at - states[j]) / (states[j + 1] - states[j]);
      w[j] = 1.0 - a;
      w[j + 1] = a;
      return w;
    }
    default:
      throw std::invalid_argument(
          "initial_cell_weights: cell propagation supports gaussian and point laws");
  }
}

empirical_flow flow_from_cell_law(const std::vector<double>& times,
                                  const std::vector<double>& states,
                                  const std::vector<std::vector<double>>& W,
                                  const std::vector<std::vector<double>>& kappa) {
  const std::size_t M = kappa.size();
  if (W.size() != M + 1 || times.size() != M + 1)
    throw std::invalid_argument("flow_from_cell_law: size mismatch");
  empirical_flow flow;
  flow.times = times;
  flow.bins.resize(M + 1);
  for (std::size_t i = 0; i <= M; ++i) {
    flow.bins[i].x = states;
    flow.bins[i].u = kappa[i < M ? i : M - 1];
    flow.bins[i].w = W[i];
  }
  flow.term_x = states;
  flow.term_w = W[M];
  flow.path_aligned = false;
  flow.uniform_w = false;
  flow.second_moment_estimate = second_moment_check(flow);
  return flow;
}

namespace {

struct flow_stats {
  double obs_total = 0.0;
  std::vector<double> moments;
};

flow_stats stats_for(const cost_class_d& klass, const empirical_flow& flow) {
  flow_stats st;
  const observed_cost_result base = observed_cost(flow, klass.base);
  st.obs_total = base.running + base.terminal;
  st.moments = flow_feature_moments(flow, klass.generators);
  return st;
}

// J*(f0 + lambda c phi) - lambda <c, flow moments> - observed(f0, g0);
// c is projected into the coefficient set first so both terms see the same
// candidate
double psi_value(const cost_class_d& klass, double lambda, const std::vector<double>& c,
                 const forward_handle& forward, const flow_stats& st) {
  const std::vector<double> cp = klass.generators.project(c);
  const cost_pair pair = element_of_d(klass, lambda, cp);
  double shift = 0.0;
  for (std::size_t i = 0; i < cp.size(); ++i) shift += cp[i] * st.moments[i];
  return forward.j_star(pair) - lambda * shift - st.obs_total;
}

penalized_point penalized_core(const cost_class_d& klass, double lambda,
                               const forward_handle& forward, const flow_stats& st) {
  const forward_setup* su = forward.setup();
  if (su == nullptr)
    throw std::invalid_argument("penalized bridge value needs a grid forward handle");
  if (lambda < 0.0) throw std::invalid_argument("penalized bridge value: negative lambda");

  const std::size_t dim = klass.generators.dim();
  const double R = klass.generators.radius;
  std::vector<double> c(dim, 0.0);
  double best;
  if (lambda == 0.0) {
    best = forward.j_star(klass.base) - st.obs_total;  // penalty off: plain forward value
  } else {
    auto psi = [&](const std::vector<double>& cc) {
      return psi_value(klass, lambda, cc, forward, st);
    };
    for (std::size_t sweep = 0; sweep < 3; ++sweep) {
      for (std::size_t k = 0; k < dim; ++k) {
        auto fk = [&](double ck) {
          std::vector<double> cc = c;
          cc[k] = ck;
          return psi(cc);
        };
        const double ck = golden_max(fk, -R, R, 5e-4);
        if (fk(ck) >= psi(c)) c[k] = ck;
      }
    }
    best = psi(c);
    if (dim >= 1 && dim <= 3) {
      // tensor-grid safeguard against a poor sweep start
      std::size_t total = 1;
      for (std::size_t k = 0; k < dim; ++k) total *= 5;
      const std::vector<double> pts = linspace(-R, R, 5);
      std::vector<double> vals(total);
      std::vector<std::vector<double>> cands(total);
      for (std::size_t id = 0; id < total; ++id) {
        std::vector<double> cc(dim);
        std::size_t rem = id;
        for (std::size_t k = 0; k < dim; ++k) {
          cc[k] = pts[rem % 5];
          rem /= 5;
        }
        cands[id] = std::move(cc);
      }
      parallel_for(total, [&](std::size_t i) { vals[i] = psi(cands[i]); });
      for (std::size_t i = 0; i < total; ++i)
        if (vals[i] > best) {
          best = vals[i];
          c = cands[i];
        }
    }
  }

  c = klass.generators.project(c);
  penalized_point out;
  out.value = st.obs_total + best;
  out.c_star = c;

  // pseudometric at the maximizer: propagate the cell law under its feedback
  const cost_pair opt_pair =
      lambda == 0.0 ? klass.base : element_of_d(klass, lambda, c);
  std::vector<std::vector<double>> kappa;
  hjb_value_slice(su->dyn, opt_pair, su->uset, su->grid, su->T, &kappa);
  const std::vector<double> times = linspace(0.0, su->T, su->grid.M + 1);
  const std::vector<double> states = linspace(-su->grid.L, su->grid.L, su->grid.J + 1);
  const std::vector<double> w0 = initial_cell_weights(su->init, states);
  const auto W = fp_cell_law(su->dyn, kappa, times, states, w0);
  const empirical_flow fpflow = flow_from_cell_law(times, states, W, kappa);
  const std::vector<double> mfp = flow_feature_moments(fpflow, klass.generators);
  std::vector<double> d(mfp.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = mfp[i] - st.moments[i];
  out.rho_at_opt = support_value(klass.generators, d);
  return out;
}

}  // namespace

penalized_point penalized_bridge_value(const cost_class_d& klass,
                                       const empirical_flow& flow, double lambda,
                                       const forward_handle& forward) {
  return penalized_core(klass, lambda, forward, stats_for(klass, flow));
}

penalized_curve penalized_curve_generator(const cost_class_d& klass,
                                          const empirical_flow& flow,
                                          const forward_handle& forward) {
  if (klass.lambda_grid.empty())
    throw std::invalid_argument("penalized curve: empty lambda grid");
  for (std::size_t i = 0; i + 1 < klass.lambda_grid.size(); ++i)
    if (!(klass.lambda_grid[i] < klass.lambda_grid[i + 1]))
      throw std::invalid_argument("penalized curve: lambda grid must increase");
  const flow_stats st = stats_for(klass, flow);
  penalized_curve curve;
  for (double lam : klass.lambda_grid) {
    const penalized_point p = penalized_core(klass, lam, forward, st);
    curve.lambdas.push_back(lam);
    curve.values.push_back(p.value);
    curve.rho_at_opt.push_back(p.rho_at_opt);
    curve.c_stars.push_back(p.c_star);
  }
  return curve;
}

namespace {

// grid proxy of sup|g| + Lip(g); exact enough on the fine bridge grid
double bl_norm_on_grid(const std::vector<double>& g, const std::vector<double>& ys) {
  double sup = 0.0, lip = 0.0;
  for (double v : g) sup = std::max(sup, std::abs(v));
  for (std::size_t j = 0; j + 1 < g.size(); ++j)
    lip = std::max(lip, std::abs(g[j + 1] - g[j]) / (ys[j + 1] - ys[j]));
  return sup + lip;
}

struct bl_context {
  std::vector<double> q, PHI;
  std::size_t ny = 0;
};

// psi_lambda(coef): dual pair value at lambda * (g scaled into the BL unit ball)
double bl_psi(const bl_context& ctx, const schrodinger_penalized_params& prm,
              double lambda, const std::vector<double>& coef,
              std::vector<double>* g_eff_out = nullptr) {
  std::vector<double> g = family_eval(ctx.PHI, ctx.ny, coef);
  const double norm = bl_norm_on_grid(g, prm.muT.points);
  if (norm > 1.0)
    for (double& v : g) v /= norm;
  if (g_eff_out != nullptr) *g_eff_out = g;
  if (lambda == 0.0) return 0.0;
  std::vector<double> G(g.size());
  for (std::size_t j = 0; j < g.size(); ++j) G[j] = lambda * g[j];
  double pairing = 0.0;
  for (std::size_t j = 0; j < G.size(); ++j) pairing += G[j] * prm.muT.weights[j];
  return log_transform_value(ctx.q, prm.mu0.weights, G) - pairing;
}

}  // namespace

penalized_point penalized_bridge_value_bl(const schrodinger_penalized_params& prm,
                                          double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("penalized bridge value: negative lambda");
  bl_context ctx;
  ctx.q = heat_transition(prm.mu0.points, prm.muT.points, prm.horizon);
  ctx.PHI = rbf_family_matrix(prm.family, prm.muT.points);
  ctx.ny = prm.muT.points.size();

  std::vector<double> coef(prm.family.n_centers, 0.0);
  if (lambda > 0.0) {
    for (std::size_t sweep = 0; sweep < 3; ++sweep) {
      for (std::size_t k = 0; k < prm.family.n_centers; ++k) {
        auto fk = [&](double ck) {
          std::vector<double> c2 = coef;
          c2[k] = ck;
          return bl_psi(ctx, prm, lambda, c2);
        };
        const double ck =
            golden_max(fk, -prm.family.coeff_bound, prm.family.coeff_bound, 5e-4);
        if (fk(ck) >= bl_psi(ctx, prm, lambda, coef)) coef[k] = ck;
      }
    }
  }
  std::vector<double> g_eff;
  penalized_point out;
  out.value = bl_psi(ctx, prm, lambda, coef, &g_eff);
  out.c_star = coef;

  // terminal law of the log-transform optimizer under G = lambda g
  std::vector<double> e(ctx.ny), piT(ctx.ny, 0.0);
  for (std::size_t j = 0; j < ctx.ny; ++j) e[j] = std::exp(-lambda * g_eff[j] / 2.0);
  const std::size_t n = prm.mu0.points.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = &ctx.q[i * ctx.ny];
    double w = 0.0;
    for (std::size_t j = 0; j < ctx.ny; ++j) w += row[j] * e[j];
    const double scale = prm.mu0.weights[i] / w;
    for (std::size_t j = 0; j < ctx.ny; ++j) piT[j] += scale * row[j] * e[j];
  }
  grid_measure term;
  term.points = prm.muT.points;
  term.weights = std::move(piT);
  out.rho_at_opt = rho_bl(term, prm.muT);
  return out;
}

penalized_curve penalized_curve_bl(const schrodinger_penalized_params& prm) {
  penalized_curve curve;
  for (double lam : prm.lambdas) {
    const penalized_point p = penalized_bridge_value_bl(prm, lam);
    curve.lambdas.push_back(lam);
    curve.values.push_back(p.value);
    curve.rho_at_opt.push_back(p.rho_at_opt);
    curve.c_stars.push_back(p.c_star);
  }
  return curve;
}

bridge_limit_result constrained_bridge_limit(const penalized_curve& curve, double tol) {
  if (curve.values.empty())
    throw std::invalid_argument("constrained_bridge_limit: empty curve");
  bridge_limit_result res;
  res.value = curve.values[0];
  for (std::size_t i = 0; i < curve.values.size(); ++i) {
    res.value = std::max(res.value, curve.values[i]);
    if (i > 0 && curve.values[i] < curve.values[i - 1] - tol) res.non_monotone = true;
  }
  return res;
}

equivalence_report theorem32_equivalence(const empirical_flow& flow,
                                         const cost_class_d& klass,
                                         const forward_handle& forward,
                                         std::size_t scan_pts_per_coord) {
  equivalence_report rep;

  search_space space;
  space.kind = search_space::kind_t::coeff_grid;
  space.klass = klass;
  space.pts_per_coord = scan_pts_per_coord;
  rep.scan = minimize_gap_scan(flow, space, forward);
  rep.lhs = rep.scan.best_v;

  rep.curve = penalized_curve_generator(klass, flow, forward);
  const bridge_limit_result lim = constrained_bridge_limit(rep.curve);
  rep.non_monotone = lim.non_monotone;

  const observed_cost_result base = observed_cost(flow, klass.base);
  rep.obs_base = base.running + base.terminal;
  rep.rhs = rep.obs_base - lim.value;
  rep.abs_diff = std::abs(rep.lhs - rep.rhs);
  rep.lam_rho_first = rep.curve.lambdas.front() * rep.curve.rho_at_opt.front();
  rep.lam_rho_last = rep.curve.lambdas.back() * rep.curve.rho_at_opt.back();
  return rep;
}

}  // namespace isoc
