#include "isoc/inverse_solver.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "isoc/util.hpp"

namespace isoc {

std::vector<double> theta_grid(const search_space& space) {
  if (space.theta_lo <= 0.0) throw std::invalid_argument("theta_lo must be positive");
  std::vector<double> thetas(space.n_grid);
  if (space.log_spaced) {
    const double llo = std::log(space.theta_lo), lhi = std::log(space.theta_hi);
    for (std::size_t i = 0; i < space.n_grid; ++i)
      thetas[i] = std::exp(llo + (lhi - llo) * double(i) / double(space.n_grid - 1));
  } else {
    thetas = linspace(space.theta_lo, space.theta_hi, space.n_grid);
  }
  return thetas;
}

namespace {

std::vector<inverse_row> build_candidates(const search_space& space) {
  std::vector<inverse_row> rows;
  switch (space.kind) {
    case search_space::kind_t::theta_interval: {
      const auto thetas = theta_grid(space);
      rows.resize(thetas.size());
      for (std::size_t i = 0; i < thetas.size(); ++i) {
        rows[i].id = i;
        rows[i].theta = thetas[i];
      }
      break;
    }
    case search_space::kind_t::coeff_grid: {
      const std::size_t d = space.klass.generators.dim();
      const double R = space.klass.generators.radius;
      const auto axis = linspace(-R, R, space.pts_per_coord);
      std::size_t n_pts = 1;
      for (std::size_t i = 0; i < d; ++i) n_pts *= axis.size();
      std::size_t id = 0;
      for (double lam : space.klass.lambda_grid) {
        for (std::size_t p = 0; p < n_pts; ++p) {
          inverse_row row;
          row.id = id++;
          row.lambda = lam;
          row.coeffs.resize(d);
          std::size_t rem = p;
          for (std::size_t i = 0; i < d; ++i) {
            row.coeffs[i] = axis[rem % axis.size()];
            rem /= axis.size();
          }
          rows.push_back(std::move(row));
        }
      }
      break;
    }
    case search_space::kind_t::explicit_list: {
      rows.resize(space.list.size());
      for (std::size_t i = 0; i < rows.size(); ++i) rows[i].id = i;
      break;
    }
  }
  if (rows.empty()) throw std::invalid_argument("empty search space");
  return rows;
}

cost_pair candidate_pair(const search_space& space, const inverse_row& row) {
  switch (space.kind) {
    case search_space::kind_t::theta_interval:
      return quadratic_lq_pair(space.q, row.theta);
    case search_space::kind_t::coeff_grid:
      return element_of_d(space.klass, row.lambda, row.coeffs);
    case search_space::kind_t::explicit_list:
      return space.list[row.id];
  }
  throw std::logic_error("unreachable");
}

void finalize(inverse_result& res) {
  bool found = false;
  for (const auto& row : res.table) {
    if (row.skipped) {
      ++res.skip_count;
      continue;
    }
    if (!found || row.v < res.best_v) {  // strict: smallest id wins ties
      found = true;
      res.best_id = row.id;
      res.best_v = row.v;
      res.best_se = row.se;
      res.theta_hat = row.theta;
    }
  }
  if (!found) throw std::runtime_error("every candidate failed");
  res.v_star_estimate = res.best_v;
}

double golden_min(const std::function<double(double)>& f, double a, double b, double width) {
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > width) {
    if (fc < fd) {
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
  return 0.5 * (a + b);
}

}  // namespace

inverse_result minimize_gap_scan(const empirical_flow& flow, const search_space& space,
                                 const forward_handle& forward) {
  inverse_result res;
  res.table = build_candidates(space);
  parallel_for(res.table.size(), [&](std::size_t i) {
    auto& row = res.table[i];
    try {
      const auto rep = gap(flow, candidate_pair(space, row), forward);
      row.v = rep.v;
      row.se = rep.mc_stderr;
    } catch (const std::exception& e) {
      row.skipped = true;
      row.error = e.what();
    }
  });
  finalize(res);
  return res;
}

inverse_result minimize_gap_refine_fn(const std::function<double(double)>& v_of_theta,
                                      const std::function<double(double)>& se_of_theta,
                                      const search_space& space) {
  if (space.kind != search_space::kind_t::theta_interval)
    throw std::invalid_argument("refinement needs a theta interval space");
  inverse_result res;
  res.table = build_candidates(space);
  parallel_for(res.table.size(), [&](std::size_t i) {
    auto& row = res.table[i];
    row.v = v_of_theta(row.theta);
    row.se = se_of_theta(row.theta);
  });
  finalize(res);

  // 3-point moving average damps Monte Carlo noise before the minimum is located
  const std::size_t n = res.table.size();
  std::vector<double> smooth(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = res.table[i].v;
    double cnt = 1.0;
    if (i > 0) { s += res.table[i - 1].v; cnt += 1.0; }
    if (i + 1 < n) { s += res.table[i + 1].v; cnt += 1.0; }
    smooth[i] = s / cnt;
  }

  // noise scale for flatness / multimodality decisions
  double se_max = 0.0;
  for (const auto& row : res.table) se_max = std::max(se_max, row.se);
  const double noise = 3.0 * se_max;

  double vmin = smooth[0], vmax = smooth[0];
  for (double v : smooth) { vmin = std::min(vmin, v); vmax = std::max(vmax, v); }
  if (vmax - vmin <= std::max(noise, 1e-12)) {
    res.flat_flag = true;
    return res;
  }

  std::size_t i_best = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (smooth[i] < smooth[i_best]) i_best = i;

  std::size_t n_local = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double left = i > 0 ? smooth[i - 1] : std::numeric_limits<double>::infinity();
    const double right = i + 1 < n ? smooth[i + 1] : std::numeric_limits<double>::infinity();
    if (smooth[i] < left && smooth[i] < right &&
        std::min(left, right) - smooth[i] > noise)
      ++n_local;
  }
  if (n_local >= 3) {
    res.non_unimodal_flag = true;
    return res;
  }

  const double lo = res.table[i_best > 0 ? i_best - 1 : 0].theta;
  const double hi = res.table[std::min(i_best + 1, n - 1)].theta;
  const double th = golden_min(v_of_theta, lo, hi, 1e-3);
  res.refined = true;
  res.refined_theta = th;
  res.refined_v = v_of_theta(th);
  if (res.refined_v <= res.best_v) {
    res.theta_hat = th;
    res.v_star_estimate = res.refined_v;
  }
  return res;
}

inverse_result minimize_gap_refine(const empirical_flow& flow, const search_space& space,
                                   const forward_handle& forward) {
  auto v_of_theta = [&](double th) {
    return gap(flow, quadratic_lq_pair(space.q, th), forward).v;
  };
  auto se_of_theta = [&](double th) {
    return gap(flow, quadratic_lq_pair(space.q, th), forward).mc_stderr;
  };
  return minimize_gap_refine_fn(v_of_theta, se_of_theta, space);
}

cost_class_d random_rbf_battery_class(const battery_class_params& p, std::uint64_t seed) {
  // geometry stream is separate from the coefficient stream used by
  // certify_nonnegativity, so the same seed can drive both
  rng_stream rng(seed, 1);
  auto unif = [&](double lo, double hi) { return lo + (hi - lo) * rng.uniform(); };

  cost_class_d klass;
  klass.base = cost_pair{};  // zero running and terminal cost
  klass.lambda_grid = {1.0};

  for (std::size_t i = 0; i < p.n_f; ++i) {
    const double alpha = unif(p.alpha_lo, p.alpha_hi);
    rbf_term t{};
    t.w = 1.0;
    t.ax = alpha;
    t.au = alpha;
    t.x0 = unif(p.x_lo, p.x_hi);
    t.u0 = unif(p.u_lo, p.u_hi);
    feature_pair fp;
    fp.f_terms = {t};
    fp.bound_f = 1.0;
    fp.bound_g = 1.0;
    klass.generators.features.push_back(std::move(fp));
  }
  for (std::size_t i = 0; i < p.n_g; ++i) {
    const double alpha = unif(p.alpha_lo, p.alpha_hi);
    rbf_term t{};
    t.w = 1.0;
    t.ax = alpha;
    t.x0 = unif(p.x_lo, p.x_hi);
    feature_pair fp;
    fp.g_terms = {t};
    fp.bound_f = 1.0;
    fp.bound_g = 1.0;
    klass.generators.features.push_back(std::move(fp));
  }
  klass.generators.ball = generator_class::ball_t::sup_ball;
  klass.generators.radius = p.radius;
  return klass;
}

nonneg_report certify_nonnegativity(const empirical_flow& flow, const cost_class_d& klass,
                                    std::size_t n_samples, std::uint64_t seed,
                                    const forward_handle& forward) {
  nonneg_report rep;
  rep.n_samples = n_samples;
  rep.v_values.resize(n_samples);
  std::vector<double> margins(n_samples);

  // candidate coefficients drawn up front so evaluation order cannot matter
  std::vector<std::vector<double>> cs(n_samples);
  std::vector<double> lams(n_samples);
  rng_stream rng(seed, 0);
  const std::size_t d = klass.generators.dim();
  for (std::size_t s = 0; s < n_samples; ++s) {
    std::vector<double> c(d);
    for (std::size_t i = 0; i < d; ++i)
      c[i] = (2.0 * rng.uniform() - 1.0) * klass.generators.radius;
    cs[s] = klass.generators.project(c);
    const auto& lg = klass.lambda_grid;
    lams[s] = lg.empty() ? 1.0 : lg[std::size_t(rng.uniform() * double(lg.size())) % lg.size()];
  }

  parallel_for(n_samples, [&](std::size_t s) {
    const auto pair = element_of_d(klass, lams[s], cs[s]);
    const auto g = gap(flow, pair, forward);
    const double tol = 0.05 * (1.0 + std::fabs(g.j_star));
    rep.v_values[s] = g.v;
    margins[s] = g.v + 3.0 * g.mc_stderr + tol;
  });

  rep.min_signed_margin = margins.empty() ? 0.0 : margins[0];
  for (std::size_t s = 0; s < n_samples; ++s) {
    rep.min_signed_margin = std::min(rep.min_signed_margin, margins[s]);
    if (margins[s] < 0.0)
      rep.violations.push_back({s, rep.v_values[s], margins[s]});
  }
  return rep;
}

}  // namespace isoc
