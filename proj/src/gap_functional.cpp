#include "isoc/gap_functional.hpp"

#include <cmath>
#include <stdexcept>

#include "isoc/util.hpp"

namespace isoc {

observed_cost_result observed_cost(const empirical_flow& flow, const cost_pair& pair) {
  observed_cost_result res;
  const auto wt = trapezoid_weights(flow.times);

  const bool per_path = flow.path_aligned && flow.uniform_w && !flow.bins.empty();
  if (per_path) {
    // one pass per path; bin averages follow from the uniform weights
    const std::size_t N = flow.bins[0].x.size();
    std::vector<double> run_k(N, 0.0), term_k(N, 0.0), tot_k(N, 0.0);
    parallel_for(N, [&](std::size_t k) {
      double acc = 0.0;
      for (std::size_t i = 0; i < flow.bins.size(); ++i) {
        const auto& bin = flow.bins[i];
        acc += wt[i] * pair.f.eval(flow.times[i], bin.x[k], bin.u[k]);
      }
      run_k[k] = acc;
      term_k[k] = pair.g.eval(flow.term_x[k]);
      tot_k[k] = run_k[k] + term_k[k];
    });
    res.running = mean(run_k);
    res.terminal = mean(term_k);
    res.se = stderr_of_mean(tot_k);
  } else {
    double running = 0.0, terminal = 0.0;
    for (std::size_t i = 0; i < flow.bins.size(); ++i) {
      const auto& bin = flow.bins[i];
      double m = 0.0;
      for (std::size_t k = 0; k < bin.x.size(); ++k)
        m += bin.w[k] * pair.f.eval(flow.times[i], bin.x[k], bin.u[k]);
      running += wt[i] * m;
    }
    for (std::size_t k = 0; k < flow.term_x.size(); ++k)
      terminal += flow.term_w[k] * pair.g.eval(flow.term_x[k]);
    res.running = running;
    res.terminal = terminal;
    res.se = 0.0;
  }
  if (!std::isfinite(res.running) || !std::isfinite(res.terminal))
    throw std::runtime_error("observed cost non-finite");
  return res;
}

forward_handle forward_handle::riccati(double q, double sig, double T,
                                       double init_second_moment) {
  forward_handle h;
  h.kind_ = kind_t::riccati;
  h.tag_ = "riccati";
  h.sig_ = sig;
  h.T_ = T;
  h.m2_ = init_second_moment;
  (void)q;  // q comes from each candidate pair
  return h;
}

forward_handle forward_handle::grid(forward_setup setup) {
  forward_handle h;
  h.kind_ = kind_t::grid;
  h.tag_ = "hjb_grid";
  h.setup_ = std::move(setup);
  return h;
}

forward_handle forward_handle::fixed(double j_star) {
  forward_handle h;
  h.kind_ = kind_t::fixed;
  h.tag_ = "fixed";
  h.fixed_value_ = j_star;
  return h;
}

double forward_handle::j_star(const cost_pair& pair) const {
  if (kind_ == kind_t::fixed) return fixed_value_;

  const std::string key = cost_key(pair);
  {
    std::lock_guard<std::mutex> lk(cache_->mu);
    auto it = cache_->map.find(key);
    if (it != cache_->map.end()) return it->second;
  }

  double value = 0.0;
  if (kind_ == kind_t::riccati) {
    if (pair.f.form != "quadratic_lq" || pair.f.theta <= 0.0 || pair.g.form != "zero" ||
        !pair.f.rbf.empty() || pair.f.c0 != 0.0)
      throw std::invalid_argument("riccati handle needs a pure LQ pair with zero terminal cost");
    const auto ric = solve_riccati(pair.f.theta, pair.f.q, sig_, T_);
    value = lq_optimal_value(ric, m2_);
  } else {
    const auto v0 = hjb_value_slice(setup_.dyn, pair, setup_.uset, setup_.grid, setup_.T);
    value = value_slice_quadrature(linspace(-setup_.grid.L, setup_.grid.L, setup_.grid.J + 1),
                                   v0, setup_.init);
  }

  std::lock_guard<std::mutex> lk(cache_->mu);
  cache_->map[key] = value;  // identical keys always carry identical values
  return value;
}

gap_report gap(const empirical_flow& flow, const cost_pair& pair,
               const forward_handle& forward) {
  const auto obs = observed_cost(flow, pair);
  gap_report rep;
  rep.observed_running = obs.running;
  rep.observed_terminal = obs.terminal;
  rep.j_star = forward.j_star(pair);
  rep.v = rep.observed_running + rep.observed_terminal - rep.j_star;
  rep.mc_stderr = obs.se;
  rep.solver_tag = forward.tag();
  return rep;
}

}  // namespace isoc
