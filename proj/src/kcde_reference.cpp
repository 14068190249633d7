#include <algorithm>
#include <cmath>

#include "kdehmm/error.hpp"
#include "kdehmm/kcde_pass.hpp"
#include "kdehmm/numeric.hpp"

namespace kdehmm::reference {

namespace {

double gauss(double r) { return std::exp(-0.5 * r * r); }

}  // namespace

PassResult kcde_pass(const LagMatrix& queries, const LagMatrix& exemplars, const KernelBank& bank,
                     const PassOptions& options) {
  const int p = bank.order;
  const std::size_t k = exemplars.rows();
  PassResult out;
  out.states = bank.states;
  out.order = p;
  out.rows = queries.rows();
  out.log_num.assign(static_cast<std::size_t>(bank.states) * out.rows, 0.0);
  out.log_den.assign(out.log_num.size(), 0.0);
  if (options.bound != BoundKind::kNone) out.stats.assign(out.log_num.size() * out.stride(), 0.0);

  std::vector<double> ctx(k), emit(k);
  for (int q = 0; q < bank.states; ++q) {
    const double h0 = bank.bandwidth(q, 0);
    for (std::size_t i = 0; i < out.rows; ++i) {
      double den = 0.0, num = 0.0;
      for (std::size_t n = 0; n < k; ++n) {
        if (options.exclude_self && n == i) {
          ctx[n] = emit[n] = 0.0;
          continue;
        }
        double c = std::exp(bank.log_weight(q, n));
        for (int l = 1; l <= p; ++l) c *= gauss((queries.at(i, l) - exemplars.at(n, l)) / bank.bandwidth(q, l));
        ctx[n] = c;
        emit[n] = c * gauss((queries.at(i, 0) - exemplars.at(n, 0)) / h0) / (h0 * std::sqrt(2.0 * M_PI));
        den += ctx[n];
        num += emit[n];
      }
      const std::size_t slot = out.at(q, i);
      out.log_den[slot] = std::log(den);
      out.log_num[slot] = std::log(num);
      if (options.bound == BoundKind::kNone) continue;

      double* st = out.stats.data() + slot * out.stride();
      for (std::size_t n = 0; n < k; ++n) {
        if (options.exclude_self && n == i) continue;
        const double rden = ctx[n] / den;
        const double rnum = emit[n] / num;
        const double d0 = queries.at(i, 0) - exemplars.at(n, 0);
        st[0] += rnum * d0 * d0;
        std::vector<double> xi(static_cast<std::size_t>(p));
        double dbar2 = 0.0;
        for (int l = 1; l <= p; ++l) {
          const double d = queries.at(i, l) - exemplars.at(n, l);
          st[l] += (rnum - rden) * d * d;
          const double h = bank.bandwidth(q, l);
          xi[l - 1] = d * d / (h * h) - 1.0;
          dbar2 += d * d;
        }
        st[p + 1] += rnum;
        st[p + 2] += rnum - rden;
        double sum_xi2 = 0.0;
        for (double x : xi) sum_xi2 += x * x;
        const double max_xi = xi.empty() ? kNegInf : *std::max_element(xi.begin(), xi.end());
        const double g = reverse_jensen_g(rden / 2.0);
        switch (options.bound) {
          case BoundKind::kHmmExact: {
            const double w = std::exp(bank.log_weight(q, n));
            const double xi_w = options.weight_terms && w > 0.0 ? 1.0 / w - 1.0 : 0.0;
            const double omega_h = 2.0 * g * sum_xi2;
            const double omega_w = 4.0 * g * xi_w;
            const double omega_p = rden * std::max(max_xi, xi_w);
            if (rden > 0.0) st[p + 3] += rden + omega_h + omega_w + omega_p;
            break;
          }
          case BoundKind::kHmmRelaxed:
            if (rden > 0.0) st[p + 3] += rden + rden * sum_xi2 + rden * std::max(max_xi, 0.0);
            break;
          case BoundKind::kMmExact:
          case BoundKind::kMmRelaxed: {
            if (p == 0 || rden == 0.0) break;
            const double h = bank.bandwidth(q, 1);
            const double z = dbar2 / p / (h * h) - 1.0;
            const double omega = options.bound == BoundKind::kMmExact ? 2.0 * p * g * z * z : p * rden * z * z;
            st[p + 3] += p * (rden + omega + rden * std::max(z, 0.0));
            break;
          }
          case BoundKind::kNone: break;
        }
      }
    }
  }
  return out;
}

std::vector<double> weight_pass(const LagMatrix& rows, const KernelBank& bank, std::span<const double> gamma) {
  const std::size_t k = rows.rows();
  const int p = bank.order;
  std::vector<double> out(static_cast<std::size_t>(bank.states) * k, 0.0);
  for (int q = 0; q < bank.states; ++q) {
    for (std::size_t t = 0; t < k; ++t) {
      std::vector<double> ctx(k, 0.0), emit(k, 0.0);
      double den = 0.0, num = 0.0;
      for (std::size_t n = 0; n < k; ++n) {
        if (n == t) continue;
        double c = std::exp(bank.log_weight(q, n));
        for (int l = 1; l <= p; ++l) c *= gauss((rows.at(t, l) - rows.at(n, l)) / bank.bandwidth(q, l));
        ctx[n] = c;
        emit[n] = c * gauss((rows.at(t, 0) - rows.at(n, 0)) / bank.bandwidth(q, 0));
        den += ctx[n];
        num += emit[n];
      }
      for (std::size_t n = 0; n < k; ++n) {
        if (n == t) continue;
        out[static_cast<std::size_t>(q) * k + n] += gamma[static_cast<std::size_t>(q) * k + t] * (emit[n] / num - ctx[n] / den);
      }
    }
  }
  return out;
}

}  // namespace kdehmm::reference
