#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kdehmm/lag_matrix.hpp"

namespace kdehmm {

enum class Execution { kSerial, kParallel };

// Number of OpenMP threads used by Execution::kParallel (0 = runtime default).
void set_thread_count(int threads);
int thread_count();

// Gaussian kernel parameters of M state-conditional conditional densities that
// share one exemplar set. A KDE-MM is the M = 1 case with uniform weights and
// every bandwidth equal.
struct KernelBank {
  int states = 1;
  int order = 0;
  std::size_t exemplars = 0;
  std::vector<double> bandwidths;   // states x (order + 1), row-major; column 0 is the emission bandwidth
  std::vector<double> log_weights;  // states x exemplars, row-major; -inf marks a zero weight

  double bandwidth(int q, int l) const { return bandwidths[static_cast<std::size_t>(q) * (order + 1) + l]; }
  double log_weight(int q, std::size_t n) const { return log_weights[static_cast<std::size_t>(q) * exemplars + n]; }
};

// Which minorizer W-term the pass accumulates next to the responsibilities.
enum class BoundKind {
  kNone,         // likelihood terms only
  kHmmExact,     // reverse-Jensen W_q terms
  kHmmRelaxed,   // G(x) ~ x, weights held fixed
  kMmExact,      // tied-bandwidth KDE-MM W terms
  kMmRelaxed,
};

struct PassOptions {
  // Row i of the queries is exemplar i; drop it from its own sums.
  bool exclude_self = false;
  BoundKind bound = BoundKind::kNone;
  // Include the weight terms xi^w = 1/w - 1 in the exact HMM bound.
  bool weight_terms = false;
};

// Per (state, query row) results of one sweep over the exemplars.
//   log_num = log sum_n w k_ctx k_0 / h_0   (numerator of the conditional density)
//   log_den = log sum_n w k_ctx            (context normalizer)
// Context kernels drop their 1/h factors, which cancel in the ratio.
// When a bound is requested, `stats` holds for each (q, t) the row
//   [0]          sum_n rho_num (y_t - y_n)^2
//   [1..p]       sum_n (rho_num - rho_den) (y_{t-l} - y_{n-l})^2
//   [p+1]        sum_n rho_num
//   [p+2]        sum_n (rho_num - rho_den)
//   [p+3]        inner sum of the requested W factor
struct PassResult {
  int states = 0;
  int order = 0;
  std::size_t rows = 0;
  std::vector<double> log_num;
  std::vector<double> log_den;
  std::vector<double> stats;

  std::size_t stride() const noexcept { return static_cast<std::size_t>(order) + 4; }
  std::size_t at(int q, std::size_t t) const noexcept { return static_cast<std::size_t>(q) * rows + t; }
  double log_emission(int q, std::size_t t) const { return log_num[at(q, t)] - log_den[at(q, t)]; }
  std::span<const double> stat_row(int q, std::size_t t) const {
    return std::span<const double>(stats).subspan(at(q, t) * stride(), stride());
  }
};

// G from the reverse-Jensen bound: ((g - 1) / ln g)^2 - 1 / (4 ln g) below 1/6,
// continued linearly with unit slope above. G(0) = 0.
double reverse_jensen_g(double gamma);

PassResult kcde_pass(const LagMatrix& queries, const LagMatrix& exemplars, const KernelBank& bank,
                     const PassOptions& options, Execution exec = Execution::kParallel);

// sum_t gamma_{q t} (rho_num_{q n t} - rho_den_{q n t}) for every (q, n); the
// training-set sum that drives the exact weight update. `gamma` is states x rows.
std::vector<double> weight_pass(const LagMatrix& series_rows, const KernelBank& bank,
                                const PassResult& pass, std::span<const double> gamma,
                                Execution exec = Execution::kParallel);

namespace reference {

// Direct linear-domain evaluation of the same quantities with plain loops and
// no log-sum-exp. Only safe on well-scaled small problems; kept as the oracle
// for the optimized kernel and as the benchmark baseline.
PassResult kcde_pass(const LagMatrix& queries, const LagMatrix& exemplars, const KernelBank& bank,
                     const PassOptions& options);

std::vector<double> weight_pass(const LagMatrix& series_rows, const KernelBank& bank,
                                std::span<const double> gamma);

}  // namespace reference

}  // namespace kdehmm
