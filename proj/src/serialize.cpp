#include "isoc/serialize.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace isoc {

namespace {

ordered_json rbf_to_json(const std::vector<rbf_term>& terms) {
  ordered_json arr = ordered_json::array();
  for (const rbf_term& t : terms)
    arr.push_back({t.w, t.at, t.ax, t.au, t.t0, t.x0, t.u0});
  return arr;
}

std::vector<rbf_term> rbf_from_json(const ordered_json& arr) {
  std::vector<rbf_term> out;
  for (const auto& e : arr) {
    if (!e.is_array() || e.size() != 7)
      throw std::runtime_error("cost-v1: rbf term must be [w, at, ax, au, t0, x0, u0]");
    rbf_term t;
    t.w = e[0];
    t.at = e[1];
    t.ax = e[2];
    t.au = e[3];
    t.t0 = e[4];
    t.x0 = e[5];
    t.u0 = e[6];
    out.push_back(t);
  }
  return out;
}

void expect_schema(const ordered_json& j, const std::string& schema,
                   const std::string& kind) {
  if (!j.is_object() || j.value("schema", "") != schema)
    throw std::runtime_error("expected schema \"" + schema + "\"");
  if (!kind.empty() && j.value("kind", "") != kind)
    throw std::runtime_error("expected kind \"" + kind + "\"");
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string join_doubles(const std::vector<double>& v, char sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out += sep;
    out += fmt_double(v[i]);
  }
  return out;
}

}  // namespace

ordered_json batch_to_json(const trajectory_batch& batch) {
  ordered_json j;
  j["schema"] = "flow-v1";
  j["kind"] = "trajectory_batch";
  j["times"] = batch.times;
  j["n_paths"] = batch.n_paths;
  j["n_steps"] = batch.n_steps;
  j["seed"] = batch.seed;
  j["dt"] = batch.dt;
  j["clamp_warnings"] = batch.clamp_warnings;
  ordered_json states = ordered_json::array(), controls = ordered_json::array();
  for (std::size_t p = 0; p < batch.n_paths; ++p) {
    ordered_json xs = ordered_json::array(), us = ordered_json::array();
    for (std::size_t i = 0; i <= batch.n_steps; ++i) xs.push_back(batch.state(p, i));
    for (std::size_t i = 0; i < batch.n_steps; ++i) us.push_back(batch.control(p, i));
    states.push_back(std::move(xs));
    controls.push_back(std::move(us));
  }
  j["states"] = std::move(states);
  j["controls"] = std::move(controls);
  return j;
}

trajectory_batch batch_from_json(const ordered_json& j) {
  expect_schema(j, "flow-v1", "trajectory_batch");
  trajectory_batch b;
  b.times = j.at("times").get<std::vector<double>>();
  b.n_paths = j.at("n_paths");
  b.n_steps = j.at("n_steps");
  b.seed = j.at("seed");
  b.dt = j.at("dt");
  b.clamp_warnings = j.at("clamp_warnings");
  const auto& states = j.at("states");
  const auto& controls = j.at("controls");
  if (states.size() != b.n_paths || controls.size() != b.n_paths)
    throw std::runtime_error("flow-v1: path count mismatch");
  b.states.reserve(b.n_paths * (b.n_steps + 1));
  b.controls.reserve(b.n_paths * b.n_steps);
  for (std::size_t p = 0; p < b.n_paths; ++p) {
    if (states[p].size() != b.n_steps + 1 || controls[p].size() != b.n_steps)
      throw std::runtime_error("flow-v1: step count mismatch");
    for (const auto& v : states[p]) b.states.push_back(v.get<double>());
    for (const auto& v : controls[p]) b.controls.push_back(v.get<double>());
  }
  return b;
}

ordered_json flow_to_json(const empirical_flow& flow) {
  ordered_json j;
  j["schema"] = "flow-v1";
  j["kind"] = "empirical_flow";
  j["times"] = flow.times;
  j["path_aligned"] = flow.path_aligned;
  j["uniform_w"] = flow.uniform_w;
  j["second_moment"] = flow.second_moment_estimate;
  ordered_json bins = ordered_json::array();
  for (const flow_bin& bin : flow.bins) {
    ordered_json b;
    b["x"] = bin.x;
    b["u"] = bin.u;
    if (flow.uniform_w && !bin.w.empty())
      b["w_uniform"] = bin.w[0];
    else
      b["w"] = bin.w;
    bins.push_back(std::move(b));
  }
  j["bins"] = std::move(bins);
  ordered_json term;
  term["x"] = flow.term_x;
  if (flow.uniform_w && !flow.term_w.empty())
    term["w_uniform"] = flow.term_w[0];
  else
    term["w"] = flow.term_w;
  j["terminal"] = std::move(term);
  return j;
}

empirical_flow flow_from_json(const ordered_json& j) {
  expect_schema(j, "flow-v1", "empirical_flow");
  empirical_flow f;
  f.times = j.at("times").get<std::vector<double>>();
  f.path_aligned = j.at("path_aligned");
  f.uniform_w = j.at("uniform_w");
  f.second_moment_estimate = j.at("second_moment");
  auto read_w = [](const ordered_json& node, std::size_t n) {
    if (node.contains("w_uniform"))
      return std::vector<double>(n, node.at("w_uniform").get<double>());
    return node.at("w").get<std::vector<double>>();
  };
  for (const auto& node : j.at("bins")) {
    flow_bin bin;
    bin.x = node.at("x").get<std::vector<double>>();
    bin.u = node.at("u").get<std::vector<double>>();
    bin.w = read_w(node, bin.x.size());
    if (bin.u.size() != bin.x.size() || bin.w.size() != bin.x.size())
      throw std::runtime_error("flow-v1: bin size mismatch");
    f.bins.push_back(std::move(bin));
  }
  const auto& term = j.at("terminal");
  f.term_x = term.at("x").get<std::vector<double>>();
  f.term_w = read_w(term, f.term_x.size());
  if (f.bins.size() != f.times.size())
    throw std::runtime_error("flow-v1: bin count mismatch");
  return f;
}

namespace {

ordered_json running_to_json(const running_cost& rc) {
  ordered_json j;
  j["form"] = rc.form;
  j["c0"] = rc.c0;
  j["q"] = rc.q;
  j["theta"] = rc.theta;
  j["rbf"] = rbf_to_json(rc.rbf);
  return j;
}

running_cost running_from_json(const ordered_json& j) {
  running_cost rc;
  rc.form = j.at("form");
  rc.c0 = j.at("c0");
  rc.q = j.at("q");
  rc.theta = j.at("theta");
  rc.rbf = rbf_from_json(j.at("rbf"));
  return rc;
}

ordered_json terminal_to_json(const terminal_cost& tc) {
  ordered_json j;
  j["form"] = tc.form;
  j["c0"] = tc.c0;
  j["rbf"] = rbf_to_json(tc.rbf);
  if (!tc.tab_x.empty()) {
    j["tab_x"] = tc.tab_x;
    j["tab_v"] = tc.tab_v;
  }
  return j;
}

terminal_cost terminal_from_json(const ordered_json& j) {
  terminal_cost tc;
  tc.form = j.at("form");
  tc.c0 = j.at("c0");
  tc.rbf = rbf_from_json(j.at("rbf"));
  if (j.contains("tab_x")) {
    tc.tab_x = j.at("tab_x").get<std::vector<double>>();
    tc.tab_v = j.at("tab_v").get<std::vector<double>>();
  }
  return tc;
}

}  // namespace

ordered_json pair_to_json(const cost_pair& pair) {
  ordered_json j;
  j["schema"] = "cost-v1";
  j["kind"] = "cost_pair";
  j["f"] = running_to_json(pair.f);
  j["g"] = terminal_to_json(pair.g);
  return j;
}

cost_pair pair_from_json(const ordered_json& j) {
  expect_schema(j, "cost-v1", "cost_pair");
  cost_pair p;
  p.f = running_from_json(j.at("f"));
  p.g = terminal_from_json(j.at("g"));
  return p;
}

ordered_json class_to_json(const cost_class_d& klass) {
  ordered_json j;
  j["schema"] = "cost-v1";
  j["kind"] = "cost_class";
  j["base"] = pair_to_json(klass.base);
  j["ball"] =
      klass.generators.ball == generator_class::ball_t::sup_ball ? "sup" : "l1";
  j["radius"] = klass.generators.radius;
  j["lambda_grid"] = klass.lambda_grid;
  ordered_json feats = ordered_json::array();
  for (const feature_pair& fp : klass.generators.features) {
    ordered_json f;
    f["f"] = rbf_to_json(fp.f_terms);
    f["g"] = rbf_to_json(fp.g_terms);
    f["bound_f"] = fp.bound_f;
    f["bound_g"] = fp.bound_g;
    feats.push_back(std::move(f));
  }
  j["features"] = std::move(feats);
  return j;
}

cost_class_d class_from_json(const ordered_json& j) {
  expect_schema(j, "cost-v1", "cost_class");
  cost_class_d k;
  k.base = pair_from_json(j.at("base"));
  const std::string ball = j.at("ball");
  if (ball == "sup")
    k.generators.ball = generator_class::ball_t::sup_ball;
  else if (ball == "l1")
    k.generators.ball = generator_class::ball_t::l1_ball;
  else
    throw std::runtime_error("cost-v1: ball must be \"sup\" or \"l1\"");
  k.generators.radius = j.at("radius");
  k.lambda_grid = j.at("lambda_grid").get<std::vector<double>>();
  for (const auto& node : j.at("features")) {
    feature_pair fp;
    fp.f_terms = rbf_from_json(node.at("f"));
    fp.g_terms = rbf_from_json(node.at("g"));
    fp.bound_f = node.at("bound_f");
    fp.bound_g = node.at("bound_g");
    k.generators.features.push_back(std::move(fp));
  }
  return k;
}

ordered_json value_grid_meta(const value_grid& vg) {
  ordered_json j;
  j["schema"] = "grid-v1";
  j["scheme"] = vg.scheme_tag;
  j["n_times"] = vg.times.size();
  j["n_states"] = vg.states.size();
  j["t_lo"] = vg.times.front();
  j["t_hi"] = vg.times.back();
  j["x_lo"] = vg.states.front();
  j["x_hi"] = vg.states.back();
  j["has_kappa"] = !vg.kappa.empty();
  return j;
}

std::string value_grid_csv(const value_grid& vg) {
  std::string out = "i,j,t,x,v,kappa\n";
  for (std::size_t i = 0; i < vg.times.size(); ++i)
    for (std::size_t j = 0; j < vg.states.size(); ++j) {
      out += std::to_string(i) + ',' + std::to_string(j) + ',' +
             fmt_double(vg.times[i]) + ',' + fmt_double(vg.states[j]) + ',' +
             fmt_double(vg.v[i][j]) + ',';
      if (i < vg.kappa.size()) out += fmt_double(vg.kappa[i][j]);
      out += '\n';
    }
  return out;
}

ordered_json gap_report_to_json(const gap_report& rep) {
  ordered_json j;
  j["schema"] = "gap-v1";
  j["observed_running"] = rep.observed_running;
  j["observed_terminal"] = rep.observed_terminal;
  j["j_star"] = rep.j_star;
  j["v"] = rep.v;
  j["mc_stderr"] = rep.mc_stderr;
  j["solver"] = rep.solver_tag;
  return j;
}

std::string inverse_table_csv(const inverse_result& res) {
  std::string out = "id,theta,lambda,coeffs,v,se,skipped,error\n";
  for (const inverse_row& row : res.table) {
    out += std::to_string(row.id) + ',' + fmt_double(row.theta) + ',' +
           fmt_double(row.lambda) + ',' + join_doubles(row.coeffs, '|') + ',' +
           fmt_double(row.v) + ',' + fmt_double(row.se) + ',' +
           (row.skipped ? "1" : "0") + ',' + csv_escape(row.error) + '\n';
  }
  return out;
}

ordered_json inverse_summary_json(const inverse_result& res,
                                  const std::string& solver_tag) {
  ordered_json j;
  j["schema"] = "inverse-v1";
  j["solver"] = solver_tag;
  j["n_candidates"] = res.table.size();
  j["skip_count"] = res.skip_count;
  j["best_id"] = res.best_id;
  j["best_v"] = res.best_v;
  j["best_se"] = res.best_se;
  j["theta_hat"] = res.theta_hat;
  j["V_at_theta_hat"] = res.v_star_estimate;
  j["v_star_estimate"] = res.v_star_estimate;
  j["refined"] = res.refined;
  j["refined_theta"] = res.refined_theta;
  j["refined_v"] = res.refined_v;
  j["non_unimodal"] = res.non_unimodal_flag;
  j["flat"] = res.flat_flag;
  for (const inverse_row& row : res.table)
    if (row.id == res.best_id) {
      j["best_lambda"] = row.lambda;
      j["best_coeffs"] = row.coeffs;
      break;
    }
  return j;
}

std::string coupling_csv(const bridge_solution& bridge) {
  std::string out = "i,j,x,y,pi\n";
  for (std::size_t i = 0; i < bridge.rows(); ++i)
    for (std::size_t j = 0; j < bridge.cols(); ++j) {
      out += std::to_string(i) + ',' + std::to_string(j) + ',' +
             fmt_double(bridge.x[i]) + ',' + fmt_double(bridge.y[j]) + ',' +
             fmt_double(bridge.coupling_at(i, j)) + '\n';
    }
  return out;
}

std::string curve_csv(const penalized_curve& curve) {
  std::string out = "lambda,value,rho_at_opt,lambda_rho\n";
  for (std::size_t i = 0; i < curve.lambdas.size(); ++i) {
    out += fmt_double(curve.lambdas[i]) + ',' + fmt_double(curve.values[i]) + ',' +
           fmt_double(curve.rho_at_opt[i]) + ',' +
           fmt_double(curve.lambdas[i] * curve.rho_at_opt[i]) + '\n';
  }
  return out;
}

ordered_json curve_to_json(const penalized_curve& curve) {
  ordered_json j;
  j["lambdas"] = curve.lambdas;
  j["values"] = curve.values;
  j["rho_at_opt"] = curve.rho_at_opt;
  j["c_stars"] = curve.c_stars;
  return j;
}

ordered_json equivalence_to_json(const equivalence_report& rep) {
  ordered_json j;
  j["schema"] = "equivalence-v1";
  j["lhs_Vstar"] = rep.lhs;
  j["rhs_bridge_form"] = rep.rhs;
  j["abs_diff"] = rep.abs_diff;
  j["obs_base"] = rep.obs_base;
  j["non_monotone"] = rep.non_monotone;
  j["lam_rho_first"] = rep.lam_rho_first;
  j["lam_rho_last"] = rep.lam_rho_last;
  j["curve"] = curve_to_json(rep.curve);
  return j;
}

std::string flow_moments_csv(const empirical_flow& flow) {
  std::string out = "t,w_sum,mean_x,var_x,mean_u,var_u\n";
  for (std::size_t i = 0; i < flow.bins.size(); ++i) {
    const flow_bin& bin = flow.bins[i];
    double ws = 0.0, mx = 0.0, mu = 0.0;
    for (std::size_t p = 0; p < bin.x.size(); ++p) {
      ws += bin.w[p];
      mx += bin.w[p] * bin.x[p];
      mu += bin.w[p] * bin.u[p];
    }
    mx /= ws;
    mu /= ws;
    double vx = 0.0, vu = 0.0;
    for (std::size_t p = 0; p < bin.x.size(); ++p) {
      vx += bin.w[p] * (bin.x[p] - mx) * (bin.x[p] - mx);
      vu += bin.w[p] * (bin.u[p] - mu) * (bin.u[p] - mu);
    }
    vx /= ws;
    vu /= ws;
    out += fmt_double(flow.times[i]) + ',' + fmt_double(ws) + ',' + fmt_double(mx) +
           ',' + fmt_double(vx) + ',' + fmt_double(mu) + ',' + fmt_double(vu) + '\n';
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(content.data(), std::streamsize(content.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace isoc
