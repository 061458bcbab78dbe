#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "isoc/gap_functional.hpp"

namespace isoc {

struct search_space {
  enum class kind_t { theta_interval, coeff_grid, explicit_list };
  kind_t kind = kind_t::theta_interval;

  // theta_interval: candidates q x^2 + theta u^2 with g = 0
  double theta_lo = 0.25, theta_hi = 4.0;
  std::size_t n_grid = 76;
  bool log_spaced = true;
  double q = 10.0;

  // coeff_grid: lambda grid x tensor grid over the coefficient ball
  cost_class_d klass;
  std::size_t pts_per_coord = 5;

  std::vector<cost_pair> list;  // explicit_list
};

std::vector<double> theta_grid(const search_space& space);

struct inverse_row {
  std::size_t id = 0;
  double theta = 0.0;             // theta spaces
  double lambda = 0.0;            // coeff spaces
  std::vector<double> coeffs;
  double v = 0.0, se = 0.0;
  bool skipped = false;
  std::string error;
};

struct inverse_result {
  std::size_t best_id = 0;
  double best_v = 0.0, best_se = 0.0;
  double theta_hat = 0.0;
  double v_star_estimate = 0.0;
  std::vector<inverse_row> table;
  std::size_t skip_count = 0;
  bool refined = false;
  double refined_theta = 0.0, refined_v = 0.0;
  bool non_unimodal_flag = false, flat_flag = false;
};

// exhaustive scan; candidates evaluate concurrently, the table is ordered by
// id and ties break toward the smallest id
inverse_result minimize_gap_scan(const empirical_flow& flow, const search_space& space,
                                 const forward_handle& forward);

// scan + golden-section refinement of the smoothed scan minimum down to an
// interval of width 1e-3 (theta_interval spaces only); flags non-unimodal or
// flat scans and falls back to the scan minimizer
inverse_result minimize_gap_refine(const empirical_flow& flow, const search_space& space,
                                   const forward_handle& forward);

// refinement core with a pluggable evaluator, used by tests to inject exact
// gap functions
inverse_result minimize_gap_refine_fn(const std::function<double(double)>& v_of_theta,
                                      const std::function<double(double)>& se_of_theta,
                                      const search_space& space);

// rbf battery class: zero base pair plus unit-weight single-rbf features with
// random geometry (f features on (x,u), g features on x), coefficients playing
// the rbf weights; the coefficient ball keeps every sample a bounded rbf sum
struct battery_class_params {
  std::size_t n_f = 3, n_g = 3;
  double radius = 0.6;
  double alpha_lo = 0.2, alpha_hi = 1.0;
  double x_lo = -2.0, x_hi = 2.0;
  double u_lo = -5.0, u_hi = 5.0;
};
cost_class_d random_rbf_battery_class(const battery_class_params& p, std::uint64_t seed);

struct nonneg_violation {
  std::size_t sample = 0;
  double v = 0.0, margin = 0.0;
};

struct nonneg_report {
  std::size_t n_samples = 0;
  std::vector<nonneg_violation> violations;
  double min_signed_margin = 0.0;  // min over samples of v + (3 se + tol)
  std::vector<double> v_values;
};

// samples candidate pairs from the class (coefficients uniform in the ball,
// lambda uniform over the class grid) and checks v >= -(3 se + tol) with
// tol = 0.05 (1 + |J*|)
nonneg_report certify_nonnegativity(const empirical_flow& flow, const cost_class_d& klass,
                                    std::size_t n_samples, std::uint64_t seed,
                                    const forward_handle& forward);

}  // namespace isoc
