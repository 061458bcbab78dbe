#include "isoc/cost_model.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "isoc/util.hpp"

namespace isoc {

double rbf_term::eval(double t, double x, double u) const {
  const double dt = t - t0, dx = x - x0, du = u - u0;
  return w * std::exp(-(at * dt * dt + ax * dx * dx + au * du * du));
}

rbf_term rbf_txu(double gamma, double alpha, double t0, double x0, double u0) {
  rbf_term r;
  r.w = gamma;
  r.at = r.ax = r.au = alpha;
  r.t0 = t0;
  r.x0 = x0;
  r.u0 = u0;
  return r;
}

rbf_term rbf_x(double gamma, double alpha, double x0) {
  rbf_term r;
  r.w = gamma;
  r.ax = alpha;
  r.x0 = x0;
  return r;
}

double running_cost::eval(double t, double x, double u) const {
  double v = c0 + q * x * x + theta * u * u;
  for (const auto& r : rbf) v += r.eval(t, x, u);
  return v;
}

bool running_cost::time_dependent() const {
  for (const auto& r : rbf)
    if (r.at != 0.0) return true;
  return false;
}

double terminal_cost::eval(double x) const {
  double v = c0;
  for (const auto& r : rbf) v += r.eval(0.0, x, 0.0);
  if (!tab_x.empty()) {
    if (x <= tab_x.front()) {
      v += tab_v.front();
    } else if (x >= tab_x.back()) {
      v += tab_v.back();
    } else {
      std::size_t j = 0;
      while (j + 2 < tab_x.size() && tab_x[j + 1] <= x) ++j;
      const double a = (x - tab_x[j]) / (tab_x[j + 1] - tab_x[j]);
      v += (1.0 - a) * tab_v[j] + a * tab_v[j + 1];
    }
  }
  return v;
}

cost_pair quadratic_lq_pair(double q, double theta) {
  cost_pair pair;
  pair.f.form = "quadratic_lq";
  pair.f.q = q;
  pair.f.theta = theta;
  pair.g.form = "zero";
  return pair;
}

cost_values eval_cost(const cost_pair& pair, double t, double x, double u) {
  cost_values v;
  v.f = pair.f.eval(t, x, u);
  v.g = pair.g.eval(x);
  if (!std::isfinite(v.f) || !std::isfinite(v.g)) {
    std::ostringstream os;
    os << "cost evaluation non-finite at t=" << t << " x=" << x << " u=" << u;
    throw std::runtime_error(os.str());
  }
  return v;
}

growth_certificate validate_growth(const cost_pair& pair, double K, const probe_box& box) {
  if (K <= 0.0) throw std::invalid_argument("growth constant must be positive");
  growth_certificate cert;
  cert.K = K;
  const auto ts = linspace(0.0, box.T, box.nt);
  const auto xs = linspace(-box.L, box.L, box.nx);
  const auto us = linspace(box.u_lo, box.u_hi, box.nu);
  for (double t : ts)
    for (double x : xs)
      for (double u : us) {
        const auto v = eval_cost(pair, t, x, u);
        const double ratio =
            (std::fabs(v.f) + std::fabs(v.g)) / (K * (1.0 + x * x + u * u));
        if (ratio > cert.probe_max_ratio) cert.probe_max_ratio = ratio;
      }
  return cert;
}

bool generator_class::contains(const std::vector<double>& c, double tol) const {
  if (c.size() != features.size()) return false;
  if (ball == ball_t::sup_ball) {
    for (double ci : c)
      if (std::fabs(ci) > radius + tol) return false;
    return true;
  }
  double s = 0.0;
  for (double ci : c) s += std::fabs(ci);
  return s <= radius + tol;
}

std::vector<double> generator_class::project(const std::vector<double>& c) const {
  std::vector<double> out = c;
  out.resize(features.size(), 0.0);
  if (ball == ball_t::sup_ball) {
    for (double& ci : out) {
      if (ci > radius) ci = radius;
      if (ci < -radius) ci = -radius;
    }
    return out;
  }
  double s = 0.0;
  for (double ci : out) s += std::fabs(ci);
  if (s > radius && s > 0.0)
    for (double& ci : out) ci *= radius / s;
  return out;
}

double verify_feature_bounds(const generator_class& gen, const probe_box& box) {
  double worst = 0.0;
  const auto ts = linspace(0.0, box.T, box.nt);
  const auto xs = linspace(-box.L, box.L, box.nx);
  const auto us = linspace(box.u_lo, box.u_hi, box.nu);
  for (const auto& fp : gen.features) {
    double mf = 0.0, mg = 0.0;
    for (double t : ts)
      for (double x : xs)
        for (double u : us) {
          double vf = 0.0;
          for (const auto& r : fp.f_terms) vf += r.eval(t, x, u);
          mf = std::max(mf, std::fabs(vf));
        }
    for (double x : xs) {
      double vg = 0.0;
      for (const auto& r : fp.g_terms) vg += r.eval(0.0, x, 0.0);
      mg = std::max(mg, std::fabs(vg));
    }
    worst = std::max(worst, mf / fp.bound_f);
    worst = std::max(worst, mg / fp.bound_g);
  }
  return worst;
}

cost_pair element_of_d(const cost_class_d& klass, double lambda, std::vector<double> c,
                       bool* projected) {
  if (lambda <= 0.0) throw std::invalid_argument("element_of_d: lambda must be positive");
  bool proj = false;
  if (!klass.generators.contains(c)) {
    c = klass.generators.project(c);
    proj = true;
  }
  if (projected) *projected = proj;
  cost_pair out = klass.base;
  out.f.form = "feature_affine";
  out.g.form = "feature_affine";
  for (std::size_t i = 0; i < klass.generators.features.size(); ++i) {
    const double scale = lambda * c[i];
    if (scale == 0.0) continue;
    for (rbf_term r : klass.generators.features[i].f_terms) {
      r.w *= scale;
      out.f.rbf.push_back(r);
    }
    for (rbf_term r : klass.generators.features[i].g_terms) {
      r.w *= scale;
      out.g.rbf.push_back(r);
    }
  }
  return out;
}

namespace {
void key_rbf(std::ostringstream& os, const std::vector<rbf_term>& terms) {
  for (const auto& r : terms)
    os << fmt_double(r.w) << ',' << fmt_double(r.at) << ',' << fmt_double(r.ax) << ','
       << fmt_double(r.au) << ',' << fmt_double(r.t0) << ',' << fmt_double(r.x0) << ','
       << fmt_double(r.u0) << ';';
}
}  // namespace

std::string cost_key(const cost_pair& pair) {
  std::ostringstream os;
  os << "f:" << fmt_double(pair.f.c0) << ',' << fmt_double(pair.f.q) << ','
     << fmt_double(pair.f.theta) << '|';
  key_rbf(os, pair.f.rbf);
  os << "g:" << fmt_double(pair.g.c0) << '|';
  key_rbf(os, pair.g.rbf);
  os << "tab:";
  for (std::size_t i = 0; i < pair.g.tab_x.size(); ++i)
    os << fmt_double(pair.g.tab_x[i]) << ':' << fmt_double(pair.g.tab_v[i]) << ';';
  return os.str();
}

}  // namespace isoc
