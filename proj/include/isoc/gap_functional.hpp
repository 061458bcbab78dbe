#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>

#include "isoc/cost_model.hpp"
#include "isoc/dynamics.hpp"
#include "isoc/forward_solver.hpp"

namespace isoc {

struct observed_cost_result {
  double running = 0.0, terminal = 0.0, se = 0.0;
};

// trapezoid in time, weighted average per bin; the stderr comes from per-path
// cost totals when the flow carries path identity, else 0
observed_cost_result observed_cost(const empirical_flow& flow, const cost_pair& pair);

// everything a J* evaluation needs besides the cost pair
struct forward_setup {
  dynamics_spec dyn;
  control_set uset;
  hjb_grid_params grid;
  initial_law init;
  double T = 1.0;
};

// J* provider: closed-form Riccati for the LQ family, the grid solver for
// everything else, or a fixed stub for tests. Values are cached by the
// candidate's canonical key, so inverse scans pay for each candidate once.
class forward_handle {
 public:
  static forward_handle riccati(double q, double sig, double T, double init_second_moment);
  static forward_handle grid(forward_setup setup);
  static forward_handle fixed(double j_star);

  double j_star(const cost_pair& pair) const;
  const std::string& tag() const { return tag_; }
  const forward_setup* setup() const { return kind_ == kind_t::grid ? &setup_ : nullptr; }

 private:
  enum class kind_t { riccati, grid, fixed };
  kind_t kind_ = kind_t::fixed;
  std::string tag_;
  double sig_ = 0.1, T_ = 1.0, m2_ = 1.0;  // riccati parameters
  double fixed_value_ = 0.0;
  forward_setup setup_;
  struct cache_t {
    std::mutex mu;
    std::unordered_map<std::string, double> map;
  };
  std::shared_ptr<cache_t> cache_ = std::make_shared<cache_t>();
};

struct gap_report {
  double observed_running = 0.0;
  double observed_terminal = 0.0;
  double j_star = 0.0;
  double v = 0.0;  // observed_running + observed_terminal - j_star
  double mc_stderr = 0.0;
  std::string solver_tag;
};

gap_report gap(const empirical_flow& flow, const cost_pair& pair,
               const forward_handle& forward);

}  // namespace isoc
