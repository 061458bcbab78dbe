#include "isoc/simplex.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace isoc {

namespace {
constexpr double kPivTol = 1e-11;
constexpr double kCostTol = 1e-10;
}  // namespace

lp_result simplex_maximize(const std::vector<std::vector<double>>& A,
                           const std::vector<double>& b,
                           const std::vector<double>& c,
                           long max_iters) {
  const std::size_t m = A.size();
  const std::size_t n = c.size();
  for (std::size_t i = 0; i < m; ++i) {
    if (A[i].size() != n) throw std::invalid_argument("simplex: ragged A");
    if (b[i] < 0.0) throw std::invalid_argument("simplex: negative rhs");
  }

  // tableau: m rows of [A | I | b], objective row kept separately
  const std::size_t cols = n + m + 1;
  std::vector<std::vector<double>> tab(m, std::vector<double>(cols, 0.0));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) tab[i][j] = A[i][j];
    tab[i][n + i] = 1.0;
    tab[i][cols - 1] = b[i];
  }
  std::vector<double> z(cols, 0.0);  // reduced-cost row (negated objective)
  for (std::size_t j = 0; j < n; ++j) z[j] = -c[j];
  std::vector<std::size_t> basis(m);
  for (std::size_t i = 0; i < m; ++i) basis[i] = n + i;

  lp_result res;
  long stall = 0;
  double last_obj = 0.0;
  for (long iter = 0; iter < max_iters; ++iter) {
    // entering column: most negative reduced cost (Dantzig), Bland when stalling
    std::size_t enter = cols;
    if (stall < 200) {
      double best = -kCostTol;
      for (std::size_t j = 0; j + 1 < cols; ++j)
        if (z[j] < best) { best = z[j]; enter = j; }
    } else {
      for (std::size_t j = 0; j + 1 < cols; ++j)
        if (z[j] < -kCostTol) { enter = j; break; }
    }
    if (enter == cols) {  // optimal
      res.ok = true;
      res.value = z[cols - 1];
      res.x.assign(n, 0.0);
      for (std::size_t i = 0; i < m; ++i)
        if (basis[i] < n) res.x[basis[i]] = tab[i][cols - 1];
      return res;
    }

    // ratio test; Bland tie-break on the leaving basic variable index
    std::size_t leave = m;
    double best_ratio = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m; ++i) {
      const double a = tab[i][enter];
      if (a > kPivTol) {
        const double ratio = tab[i][cols - 1] / a;
        if (ratio < best_ratio - 1e-12 ||
            (ratio < best_ratio + 1e-12 && (leave == m || basis[i] < basis[leave]))) {
          best_ratio = ratio;
          leave = i;
        }
      }
    }
    if (leave == m) {
      res.note = "unbounded";
      return res;
    }

    // pivot
    const double piv = tab[leave][enter];
    auto& prow = tab[leave];
    for (std::size_t j = 0; j < cols; ++j) prow[j] /= piv;
    for (std::size_t i = 0; i < m; ++i) {
      if (i == leave) continue;
      const double f = tab[i][enter];
      if (f == 0.0) continue;
      auto& row = tab[i];
      for (std::size_t j = 0; j < cols; ++j) row[j] -= f * prow[j];
    }
    {
      const double f = z[enter];
      if (f != 0.0)
        for (std::size_t j = 0; j < cols; ++j) z[j] -= f * prow[j];
    }
    basis[leave] = enter;

    const double obj = z[cols - 1];
    if (obj > last_obj + 1e-13) { stall = 0; last_obj = obj; } else { ++stall; }
  }
  res.note = "iteration limit";
  return res;
}

}  // namespace isoc
