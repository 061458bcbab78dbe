#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "isoc/dynamics.hpp"

using namespace isoc;

TEST_CASE("control set clamps and validates") {
  const control_set u = make_control_set(-10.0, 10.0);
  CHECK(u.clamp(3.0) == 3.0);
  CHECK(u.clamp(-12.0) == -10.0);
  CHECK(u.clamp(12.0) == 10.0);
  CHECK(u.compact());
  CHECK_FALSE(control_set{}.compact());
  CHECK_THROWS_AS(make_control_set(1.0, 2.0), std::invalid_argument);
  CHECK_THROWS_AS(make_control_set(2.0, 1.0), std::invalid_argument);
}

TEST_CASE("affine dynamics evaluate and pass the regularity probe") {
  dynamics_spec dyn;
  dyn.b0 = 0.5;
  dyn.bx = -1.0;
  dyn.bu = 2.0;
  dyn.sig = 0.1;
  dyn.lipschitz_x = 1.0;
  CHECK(dyn.drift(0.3, 2.0, 1.0) == doctest::Approx(0.5 - 2.0 + 2.0));
  CHECK(dyn.diffusion(0.0, 5.0, -3.0) == 0.1);

  dynamics_spec integ;  // dx = u dt + 0.1 dB
  integ.sig = 0.1;
  const auto rep = check_dynamics(integ, 1.0, 6.0, make_control_set(-10.0, 10.0));
  CHECK(rep.ok);
  CHECK(rep.worst_increment_ratio <= 1.0);
}

TEST_CASE("initial law second moments") {
  CHECK(gaussian_law(0.0, 1.0).second_moment() == doctest::Approx(1.0));
  CHECK(gaussian_law(2.0, 0.5).second_moment() == doctest::Approx(4.5));
  CHECK(point_law(-3.0).second_moment() == doctest::Approx(9.0));
  // E[X^2] on U(a,b) = (b^3 - a^3) / (3 (b - a))
  CHECK(uniform_law(0.0, 1.0).second_moment() == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("uncontrolled diffusion matches the heat-kernel variance") {
  dynamics_spec dyn;
  dyn.sig = 0.1;
  const control_policy off = constant_policy(0.0, control_set{});
  const auto batch = simulate(dyn, off, gaussian_law(0.0, 1.0), 100, 20000, 7, 1.0);
  const empirical_flow flow = flow_from_batch(batch);
  double m = 0.0, ss = 0.0;
  for (std::size_t p = 0; p < flow.term_x.size(); ++p) {
    m += flow.term_w[p] * flow.term_x[p];
    ss += flow.term_w[p] * flow.term_x[p] * flow.term_x[p];
  }
  // Var(X_1) = 1 + sig^2 = 1.01; N = 2e4 keeps the spread ~ 0.01
  CHECK(std::fabs(m) < 0.03);
  CHECK(std::fabs(ss - m * m - 1.01) < 0.04);
}

TEST_CASE("simulation is deterministic in the seed and thread count") {
  dynamics_spec dyn;
  dyn.sig = 0.1;
  const control_policy off = constant_policy(0.2, make_control_set(-10.0, 10.0));
  const auto a = simulate(dyn, off, gaussian_law(0.0, 1.0), 50, 200, 99, 1.0);
  setenv("INVERSE_SOC_THREADS", "1", 1);
  const auto b = simulate(dyn, off, gaussian_law(0.0, 1.0), 50, 200, 99, 1.0);
  unsetenv("INVERSE_SOC_THREADS");
  REQUIRE(a.states.size() == b.states.size());
  for (std::size_t i = 0; i < a.states.size(); ++i) REQUIRE(a.states[i] == b.states[i]);
  for (std::size_t i = 0; i < a.controls.size(); ++i)
    REQUIRE(a.controls[i] == b.controls[i]);
}

TEST_CASE("clamping is counted") {
  dynamics_spec dyn;
  dyn.sig = 0.1;
  const control_policy hot = constant_policy(20.0, make_control_set(-10.0, 10.0));
  const auto batch = simulate(dyn, hot, point_law(0.0), 10, 5, 1, 1.0);
  CHECK(batch.clamp_warnings == 50);  // every step of every path
  for (std::size_t p = 0; p < 5; ++p)
    for (std::size_t i = 0; i < 10; ++i) CHECK(batch.control(p, i) == 10.0);
}

TEST_CASE("feedback grid policy interpolates in x and steps in t") {
  control_policy pol;
  pol.kind = control_policy::kind_t::feedback_grid;
  pol.uset = control_set{};
  pol.grid_times = {0.0, 0.5};
  pol.grid_xs = {-1.0, 1.0};
  pol.grid_kappa = {{0.0, 2.0}, {10.0, 10.0}};
  CHECK(pol.eval(0.0, 0.0, 0, 0) == doctest::Approx(1.0));   // midpoint of row 0
  CHECK(pol.eval(0.25, -1.0, 0, 0) == doctest::Approx(0.0));
  CHECK(pol.eval(0.7, 0.0, 0, 0) == doctest::Approx(10.0));  // row 1 from t >= 0.5
  CHECK(pol.eval(0.0, -5.0, 0, 0) == doctest::Approx(0.0));  // clamped left
  CHECK(pol.eval(0.0, 5.0, 0, 0) == doctest::Approx(2.0));   // clamped right
}

TEST_CASE("flow repeats the final control bin and keeps path alignment") {
  dynamics_spec dyn;
  dyn.sig = 0.1;
  const control_policy off = constant_policy(0.0, control_set{});
  const auto batch = simulate(dyn, off, gaussian_law(0.0, 1.0), 20, 50, 3, 1.0);
  const empirical_flow flow = flow_from_batch(batch);
  REQUIRE(flow.times.size() == 21);
  REQUIRE(flow.bins.size() == 21);
  CHECK(flow.path_aligned);
  CHECK(flow.uniform_w);
  for (std::size_t p = 0; p < 50; ++p) {
    CHECK(flow.bins[20].u[p] == flow.bins[19].u[p]);
    CHECK(flow.bins[20].x[p] == batch.state(p, 20));
    CHECK(flow.term_x[p] == batch.state(p, 20));
  }
  const double direct = second_moment_check(flow);
  CHECK(direct == doctest::Approx(flow.second_moment_estimate).epsilon(1e-12));
}
