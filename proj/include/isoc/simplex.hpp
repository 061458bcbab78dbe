#pragma once

#include <string>
#include <vector>

namespace isoc {

struct lp_result {
  bool ok = false;
  double value = 0.0;
  std::vector<double> x;
  std::string note;
};

// Maximize c.x subject to A x <= b, x >= 0, with every b_i >= 0 so the
// slack basis is feasible from the start. Dense tableau primal simplex,
// Dantzig pricing with a Bland fallback against cycling.
lp_result simplex_maximize(const std::vector<std::vector<double>>& A,
                           const std::vector<double>& b,
                           const std::vector<double>& c,
                           long max_iters = 200000);

}  // namespace isoc
