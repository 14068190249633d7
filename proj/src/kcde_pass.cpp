#include "kdehmm/kcde_pass.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "kdehmm/error.hpp"
#include "kdehmm/numeric.hpp"

namespace kdehmm {

namespace {

int g_thread_count = 0;

constexpr double kSixth = 1.0 / 6.0;

// G evaluated with the logarithm of its argument supplied by the caller.
// Responsibilities that underflow to zero still carry weight here because G
// only decays like 1 / |ln gamma|.
double g_with_log(double gamma, double log_gamma) {
  if (!std::isfinite(log_gamma)) return 0.0;
  if (gamma < kSixth) {
    const double r = (gamma - 1.0) / log_gamma;
    return r * r - 0.25 / log_gamma;
  }
  const double l6 = -std::log(6.0);
  const double r6 = (kSixth - 1.0) / l6;
  return r6 * r6 - 0.25 / l6 + gamma - kSixth;
}

struct Scratch {
  std::vector<double> log_a;   // log w + context log-kernels
  std::vector<double> exp_a;   // exp(log_a - max)
  std::vector<double> exp_ab;  // exp(log_a + emission term - max)
  std::vector<double> half_inv_h2;
};

void validate(const LagMatrix& queries, const LagMatrix& exemplars, const KernelBank& bank,
              const PassOptions& options) {
  if (queries.order() != bank.order || exemplars.order() != bank.order)
    throw Error(ErrorKind::kInvalidArgument, "lag matrices do not match the kernel order");
  if (exemplars.rows() != bank.exemplars)
    throw Error(ErrorKind::kInvalidArgument, "exemplar count does not match the kernel weights");
  if (options.exclude_self && queries.rows() != exemplars.rows())
    throw Error(ErrorKind::kInvalidArgument, "self exclusion needs queries aligned with exemplars");
  if (bank.bandwidths.size() != static_cast<std::size_t>(bank.states) * (bank.order + 1) ||
      bank.log_weights.size() != static_cast<std::size_t>(bank.states) * bank.exemplars)
    throw Error(ErrorKind::kInvalidArgument, "kernel bank has inconsistent sizes");
}

void process_row(const LagMatrix& queries, const LagMatrix& exemplars, const KernelBank& bank,
                 const PassOptions& options, int q, std::size_t i, Scratch& s, PassResult& out) {
  const int p = bank.order;
  const std::size_t k = exemplars.rows();
  s.log_a.resize(k);
  s.exp_a.resize(k);
  s.exp_ab.resize(k);
  s.half_inv_h2.resize(static_cast<std::size_t>(p) + 1);
  for (int l = 0; l <= p; ++l) {
    const double h = bank.bandwidth(q, l);
    s.half_inv_h2[l] = 0.5 / (h * h);
  }

  double* la = s.log_a.data();
  double* eab = s.exp_ab.data();
  const double* lw = bank.log_weights.data() + static_cast<std::size_t>(q) * k;
  std::copy(lw, lw + k, la);
  for (int l = 1; l <= p; ++l) {
    const double x = queries.at(i, l);
    const double c = s.half_inv_h2[l];
    const double* e = exemplars.lag(l).data();
    for (std::size_t n = 0; n < k; ++n) {
      const double d = x - e[n];
      la[n] -= c * d * d;
    }
  }
  {
    const double x = queries.at(i, 0);
    const double c = s.half_inv_h2[0];
    const double* e = exemplars.lag(0).data();
    for (std::size_t n = 0; n < k; ++n) {
      const double d = x - e[n];
      eab[n] = la[n] - c * d * d;
    }
  }
  if (options.exclude_self) {
    la[i] = kNegInf;
    eab[i] = kNegInf;
  }

  double max_a = kNegInf, max_ab = kNegInf;
  for (std::size_t n = 0; n < k; ++n) {
    max_a = std::max(max_a, la[n]);
    max_ab = std::max(max_ab, eab[n]);
  }
  const std::size_t slot = out.at(q, i);
  const double log_h0 = std::log(bank.bandwidth(q, 0));
  if (!std::isfinite(max_a) || !std::isfinite(max_ab)) {
    out.log_den[slot] = kNegInf;
    out.log_num[slot] = kNegInf;
    return;
  }
  double* ea = s.exp_a.data();
  double sum_a = 0.0, sum_ab = 0.0;
  for (std::size_t n = 0; n < k; ++n) {
    ea[n] = std::exp(la[n] - max_a);
    eab[n] = std::exp(eab[n] - max_ab);
    sum_a += ea[n];
    sum_ab += eab[n];
  }
  const double lse_a = max_a + std::log(sum_a);
  out.log_den[slot] = lse_a;
  out.log_num[slot] = max_ab + std::log(sum_ab) - log_h0 - kLogSqrt2Pi;
  if (options.bound == BoundKind::kNone) return;

  double* st = out.stats.data() + slot * out.stride();
  std::fill(st, st + out.stride(), 0.0);
  const double inv_a = 1.0 / sum_a, inv_ab = 1.0 / sum_ab;
  const double x0 = queries.at(i, 0);
  const double* e0 = exemplars.lag(0).data();
  const double tied_inv_h2 = p > 0 ? 2.0 * s.half_inv_h2[1] : 0.0;
  double w_acc = 0.0;
  for (std::size_t n = 0; n < k; ++n) {
    const double rden = ea[n] * inv_a;
    const double rnum = eab[n] * inv_ab;
    if (!std::isfinite(la[n])) continue;
    const double rdiff = rnum - rden;
    const double d0 = x0 - e0[n];
    st[0] += rnum * d0 * d0;
    double sum_xi2 = 0.0, max_xi = kNegInf, sum_d2 = 0.0;
    for (int l = 1; l <= p; ++l) {
      const double d = queries.at(i, l) - exemplars.at(n, l);
      const double d2 = d * d;
      st[l] += rdiff * d2;
      sum_d2 += d2;
      const double xi = d2 * 2.0 * s.half_inv_h2[l] - 1.0;
      sum_xi2 += xi * xi;
      max_xi = std::max(max_xi, xi);
    }
    st[p + 1] += rnum;
    st[p + 2] += rdiff;
    const double log_half_rden = la[n] - lse_a - std::numbers::ln2;
    switch (options.bound) {
      case BoundKind::kHmmExact: {
        const double g = g_with_log(0.5 * rden, log_half_rden);
        const double xi_w = options.weight_terms ? std::exp(-lw[n]) - 1.0 : 0.0;
        w_acc += rden + 2.0 * g * sum_xi2 + 4.0 * g * xi_w + rden * std::max(max_xi, xi_w);
        break;
      }
      case BoundKind::kHmmRelaxed:
        w_acc += rden + rden * sum_xi2 + rden * std::max(max_xi, 0.0);
        break;
      case BoundKind::kMmExact: {
        if (p == 0) break;
        const double z = sum_d2 / p * tied_inv_h2 - 1.0;
        const double g = g_with_log(0.5 * rden, log_half_rden);
        w_acc += p * (rden + 2.0 * p * g * z * z + rden * std::max(z, 0.0));
        break;
      }
      case BoundKind::kMmRelaxed: {
        if (p == 0) break;
        const double z = sum_d2 / p * tied_inv_h2 - 1.0;
        w_acc += p * (rden + p * rden * z * z + rden * std::max(z, 0.0));
        break;
      }
      case BoundKind::kNone: break;
    }
  }
  st[p + 3] = w_acc;
}

}  // namespace

void set_thread_count(int threads) {
  g_thread_count = threads;
  if (threads > 0) omp_set_num_threads(threads);
}

int thread_count() { return g_thread_count > 0 ? g_thread_count : omp_get_max_threads(); }

double reverse_jensen_g(double gamma) {
  if (gamma <= 0.0) return 0.0;
  return g_with_log(gamma, std::log(gamma));
}

PassResult kcde_pass(const LagMatrix& queries, const LagMatrix& exemplars, const KernelBank& bank,
                     const PassOptions& options, Execution exec) {
  validate(queries, exemplars, bank, options);
  PassResult out;
  out.states = bank.states;
  out.order = bank.order;
  out.rows = queries.rows();
  const std::size_t cells = static_cast<std::size_t>(bank.states) * out.rows;
  out.log_num.assign(cells, 0.0);
  out.log_den.assign(cells, 0.0);
  if (options.bound != BoundKind::kNone) out.stats.assign(cells * out.stride(), 0.0);

  const long long jobs = static_cast<long long>(cells);
  const bool parallel = exec == Execution::kParallel;
#pragma omp parallel if (parallel)
  {
    Scratch scratch;
#pragma omp for schedule(static)
    for (long long job = 0; job < jobs; ++job) {
      const int q = static_cast<int>(job / static_cast<long long>(out.rows));
      const std::size_t i = static_cast<std::size_t>(job % static_cast<long long>(out.rows));
      process_row(queries, exemplars, bank, options, q, i, scratch, out);
    }
  }
  return out;
}

std::vector<double> weight_pass(const LagMatrix& rows, const KernelBank& bank, const PassResult& pass,
                                std::span<const double> gamma, Execution exec) {
  const std::size_t k = rows.rows();
  const int p = bank.order;
  if (pass.rows != k || gamma.size() != static_cast<std::size_t>(bank.states) * k)
    throw Error(ErrorKind::kInvalidArgument, "weight pass inputs are not aligned");
  std::vector<double> out(static_cast<std::size_t>(bank.states) * k, 0.0);
  const long long jobs = static_cast<long long>(out.size());
  const bool parallel = exec == Execution::kParallel;
#pragma omp parallel if (parallel)
  {
    std::vector<double> half_inv_h2(static_cast<std::size_t>(p) + 1);
#pragma omp for schedule(static)
    for (long long job = 0; job < jobs; ++job) {
      const int q = static_cast<int>(job / static_cast<long long>(k));
      const std::size_t n = static_cast<std::size_t>(job % static_cast<long long>(k));
      const double lw = bank.log_weight(q, n);
      if (!std::isfinite(lw)) continue;
      for (int l = 0; l <= p; ++l) {
        const double h = bank.bandwidth(q, l);
        half_inv_h2[l] = 0.5 / (h * h);
      }
      const double emit_const = std::log(bank.bandwidth(q, 0)) + kLogSqrt2Pi;
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) {
        if (t == n) continue;
        const std::size_t slot = pass.at(q, t);
        if (!std::isfinite(pass.log_den[slot])) continue;
        double a = lw;
        for (int l = 1; l <= p; ++l) {
          const double d = rows.at(t, l) - rows.at(n, l);
          a -= half_inv_h2[l] * d * d;
        }
        const double d0 = rows.at(t, 0) - rows.at(n, 0);
        const double ab = a - half_inv_h2[0] * d0 * d0;
        const double rden = std::exp(a - pass.log_den[slot]);
        const double rnum = std::exp(ab - emit_const - pass.log_num[slot]);
        acc += gamma[slot] * (rnum - rden);
      }
      out[static_cast<std::size_t>(job)] = acc;
    }
  }
  return out;
}

}  // namespace kdehmm
