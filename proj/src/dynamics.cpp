#include "isoc/dynamics.hpp"

#include <atomic>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace isoc {

control_set make_control_set(double lower, double upper) {
  if (!(lower <= 0.0 && 0.0 <= upper))
    throw std::invalid_argument("control set must contain 0");
  return control_set{lower, upper};
}

double dynamics_spec::drift(double t, double x, double u) const {
  if (drift_fn) return drift_fn(t, x, u);
  return b0 + bx * x + bu * u;
}

double dynamics_spec::diffusion(double t, double x, double u) const {
  if (diff_fn) return diff_fn(t, x, u);
  return sig;
}

dynamics_check_report check_dynamics(const dynamics_spec& spec, double T, double L,
                                     const control_set& uset) {
  dynamics_check_report rep;
  const auto ts = linspace(0.0, T, 7);
  const auto xs = linspace(-L, L, 13);
  const double ulo = uset.compact() ? uset.lower : -10.0;
  const double uhi = uset.compact() ? uset.upper : 10.0;
  const auto us = linspace(ulo, uhi, 7);
  for (double t : ts) {
    rep.worst_origin = std::max(rep.worst_origin,
                                std::max(std::fabs(spec.drift(t, 0.0, 0.0)),
                                         std::fabs(spec.diffusion(t, 0.0, 0.0))));
    for (double u : us) {
      for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
        const double dx = xs[i + 1] - xs[i];
        const double db = std::fabs(spec.drift(t, xs[i + 1], u) - spec.drift(t, xs[i], u));
        const double ds =
            std::fabs(spec.diffusion(t, xs[i + 1], u) - spec.diffusion(t, xs[i], u));
        const double denom = spec.lipschitz_x * std::fabs(dx);
        if (denom > 0.0)
          rep.worst_increment_ratio =
              std::max(rep.worst_increment_ratio, std::max(db, ds) / denom);
      }
    }
  }
  rep.ok = rep.worst_increment_ratio <= 1.0 + 1e-9 &&
           rep.worst_origin <= spec.lipschitz_x + 1e-9;
  return rep;
}

double initial_law::second_moment() const {
  switch (kind) {
    case kind_t::gaussian: return mean * mean + var;
    case kind_t::point: return at * at;
    case kind_t::uniform: return (hi * hi + hi * lo + lo * lo) / 3.0;
  }
  return 0.0;
}

double initial_law::sample(rng_stream& rng) const {
  switch (kind) {
    case kind_t::gaussian: return mean + std::sqrt(var) * rng.normal();
    case kind_t::point: return at;
    case kind_t::uniform: return lo + (hi - lo) * rng.uniform();
  }
  return 0.0;
}

initial_law gaussian_law(double mean, double var) {
  initial_law l;
  l.kind = initial_law::kind_t::gaussian;
  l.mean = mean;
  l.var = var;
  return l;
}

initial_law point_law(double at) {
  initial_law l;
  l.kind = initial_law::kind_t::point;
  l.at = at;
  return l;
}

initial_law uniform_law(double lo, double hi) {
  initial_law l;
  l.kind = initial_law::kind_t::uniform;
  l.lo = lo;
  l.hi = hi;
  return l;
}

double control_policy::eval(double t, double x, std::size_t step, std::size_t path,
                            bool* clamped) const {
  double raw = 0.0;
  switch (kind) {
    case kind_t::open_loop: {
      const auto& row = open_loop_u.size() == 1 ? open_loop_u[0] : open_loop_u.at(path);
      raw = row.at(std::min(step, row.size() - 1));
      break;
    }
    case kind_t::feedback_linear:
      raw = gain(t) * x;
      break;
    case kind_t::feedback_grid: {
      // time bin: constant on [t_i, t_{i+1})
      const auto& tt = grid_times;
      std::size_t i = 0;
      if (tt.size() >= 2) {
        const double dtp = (tt.back() - tt.front()) / double(tt.size() - 1);
        const double fi = (t - tt.front()) / dtp;
        const double top = double(grid_kappa.size() - 1);
        i = std::size_t(std::min(std::max(fi, 0.0), top));
      }
      const auto& row = grid_kappa.at(i);
      const auto& xs = grid_xs;
      if (x <= xs.front()) {
        raw = row.front();
      } else if (x >= xs.back()) {
        raw = row.back();
      } else {
        const double dx = (xs.back() - xs.front()) / double(xs.size() - 1);
        std::size_t j = std::size_t((x - xs.front()) / dx);
        if (j + 1 >= xs.size()) j = xs.size() - 2;
        const double a = (x - xs[j]) / (xs[j + 1] - xs[j]);
        raw = (1.0 - a) * row[j] + a * row[j + 1];
      }
      break;
    }
  }
  const double u = uset.clamp(raw);
  if (clamped) *clamped = (u != raw);
  return u;
}

control_policy constant_policy(double u, control_set uset) {
  control_policy p;
  p.kind = control_policy::kind_t::open_loop;
  p.uset = uset;
  p.open_loop_u = {{u}};
  return p;
}

control_policy linear_feedback_policy(std::function<double(double)> gain, control_set uset) {
  control_policy p;
  p.kind = control_policy::kind_t::feedback_linear;
  p.uset = uset;
  p.gain = std::move(gain);
  return p;
}

trajectory_batch simulate(const dynamics_spec& spec, const control_policy& policy,
                          const initial_law& init, std::size_t M, std::size_t N,
                          std::uint64_t seed, double T) {
  if (M < 1 || N < 1) throw std::invalid_argument("simulate: M >= 1 and N >= 1 required");
  trajectory_batch batch;
  batch.times = linspace(0.0, T, M + 1);
  batch.n_paths = N;
  batch.n_steps = M;
  batch.states.resize(N * (M + 1));
  batch.controls.resize(N * M);
  batch.seed = seed;
  batch.dt = T / double(M);
  const double sqdt = std::sqrt(batch.dt);

  std::atomic<long> clamps{0};
  parallel_for(N, [&](std::size_t p) {
    rng_stream rng(seed, p);
    long local_clamps = 0;
    double x = init.sample(rng);
    batch.states[p * (M + 1)] = x;
    for (std::size_t i = 0; i < M; ++i) {
      const double t = batch.times[i];
      bool clamped = false;
      const double u = policy.eval(t, x, i, p, &clamped);
      if (clamped) ++local_clamps;
      const double b = spec.drift(t, x, u);
      const double s = spec.diffusion(t, x, u);
      if (!std::isfinite(b) || !std::isfinite(s)) {
        std::ostringstream os;
        os << "simulate: non-finite dynamics at t=" << t << " x=" << x << " u=" << u;
        throw std::runtime_error(os.str());
      }
      batch.controls[p * M + i] = u;
      x += b * batch.dt + s * sqdt * rng.normal();
      batch.states[p * (M + 1) + i + 1] = x;
    }
    if (local_clamps) clamps += local_clamps;
  });
  batch.clamp_warnings = clamps.load();
  return batch;
}

empirical_flow flow_from_batch(const trajectory_batch& batch) {
  if (batch.n_paths == 0) throw std::invalid_argument("flow_from_batch: empty batch");
  const std::size_t N = batch.n_paths, M = batch.n_steps;
  empirical_flow flow;
  flow.times = batch.times;
  flow.bins.resize(M + 1);
  const double w = 1.0 / double(N);
  for (std::size_t i = 0; i <= M; ++i) {
    auto& bin = flow.bins[i];
    bin.x.resize(N);
    bin.u.resize(N);
    bin.w.assign(N, w);
    const std::size_t ui = i < M ? i : M - 1;  // final bin repeats the last control
    for (std::size_t p = 0; p < N; ++p) {
      bin.x[p] = batch.state(p, i);
      bin.u[p] = batch.control(p, ui);
    }
  }
  flow.term_x.resize(N);
  flow.term_w.assign(N, w);
  for (std::size_t p = 0; p < N; ++p) flow.term_x[p] = batch.state(p, M);
  flow.path_aligned = true;
  flow.uniform_w = true;
  flow.second_moment_estimate = second_moment_check(flow);
  return flow;
}

double second_moment_check(const empirical_flow& flow) {
  const auto wt = trapezoid_weights(flow.times);
  double total = 0.0;
  for (std::size_t i = 0; i < flow.bins.size(); ++i) {
    const auto& bin = flow.bins[i];
    double m = 0.0;
    for (std::size_t k = 0; k < bin.x.size(); ++k)
      m += bin.w[k] * (bin.x[k] * bin.x[k] + bin.u[k] * bin.u[k]);
    total += wt[i] * m;
  }
  return total;
}

}  // namespace isoc
