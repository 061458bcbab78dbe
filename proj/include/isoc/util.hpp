#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace isoc {

std::vector<double> linspace(double lo, double hi, std::size_t n);

// trapezoid quadrature weights for samples at the given (sorted) times
std::vector<double> trapezoid_weights(const std::vector<double>& times);

double mean(const std::vector<double>& v);
// standard error of the mean, ddof=1
double stderr_of_mean(const std::vector<double>& v);

std::uint64_t fnv1a64(const std::string& s);
std::string hex64(std::uint64_t v);

// fixed %.17g formatting so emitted files are byte-stable across reruns
std::string fmt_double(double v);

std::uint64_t splitmix64(std::uint64_t x);

// Per-path RNG stream. Normal draws use hand-rolled Box-Muller on the raw
// engine output so the sequence is pinned by (seed, stream) alone, not by
// the standard library's distribution implementation.
class rng_stream {
public:
  rng_stream(std::uint64_t seed, std::uint64_t stream);
  double uniform();  // [0,1)
  double normal();

private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Number of worker threads: INVERSE_SOC_THREADS if set (>=1), else hardware.
unsigned thread_budget();

// Runs fn(i) for i in [0,n) on the thread budget. Callers must write results
// into preassigned slots so output does not depend on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace isoc
