#pragma once

// Independent reference computations for the tests. Everything here works
// in the linear domain with plain loops so that it shares no code path with
// the library's log-domain kernel sweeps.

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "kdehmm/kde_hmm.hpp"
#include "kdehmm/kde_mm.hpp"

namespace oracle {

inline double phi(double r) { return std::exp(-0.5 * r * r) / std::sqrt(2.0 * M_PI); }

// G of the reverse-Jensen bound, both branches written out.
inline double g_closed(double x) {
  if (x <= 0.0) return 0.0;
  if (x < 1.0 / 6.0) {
    const double l = std::log(x);
    return std::pow((x - 1.0) / l, 2) - 1.0 / (4.0 * l);
  }
  const double x0 = 1.0 / 6.0, l0 = std::log(x0);
  return std::pow((x0 - 1.0) / l0, 2) - 1.0 / (4.0 * l0) + x - x0;
}

inline double rel_diff(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

// KDE-HMM emission density of state q at time t of `seq` (t >= p), optionally
// leaving out exemplar n = skip.
inline double emission(const kdehmm::KdeHmm& m, int q, const std::vector<double>& seq, std::size_t t, long skip = -1) {
  const auto& y = m.training.values;
  const std::size_t p = static_cast<std::size_t>(m.order);
  double num = 0.0, den = 0.0;
  for (std::size_t n = 0; n + p < y.size(); ++n) {
    if (static_cast<long>(n) == skip) continue;
    double kappa = m.weights(q, static_cast<Eigen::Index>(n));
    for (std::size_t l = 1; l <= p; ++l) kappa *= phi((seq[t - l] - y[n + p - l]) / m.bandwidths(q, static_cast<Eigen::Index>(l)));
    const double h0 = m.bandwidths(q, 0);
    num += kappa * phi((seq[t] - y[n + p]) / h0) / h0;
    den += kappa;
  }
  return num / den;
}

// log p(seq[p..]) summed over every state path, first state from the
// stationary vector.
inline double enumerate_log_likelihood(const kdehmm::KdeHmm& m, const std::vector<double>& seq, bool cv) {
  const std::size_t p = static_cast<std::size_t>(m.order);
  const std::size_t T = seq.size() - p;
  const int M = m.states;
  std::vector<std::vector<double>> e(T, std::vector<double>(M));
  for (std::size_t s = 0; s < T; ++s)
    for (int q = 0; q < M; ++q) e[s][q] = emission(m, q, seq, s + p, cv ? static_cast<long>(s) : -1);
  std::size_t paths = 1;
  for (std::size_t s = 0; s < T; ++s) paths *= static_cast<std::size_t>(M);
  double total = 0.0;
  std::vector<int> path(T);
  for (std::size_t code = 0; code < paths; ++code) {
    std::size_t c = code;
    for (std::size_t s = 0; s < T; ++s) {
      path[s] = static_cast<int>(c % static_cast<std::size_t>(M));
      c /= static_cast<std::size_t>(M);
    }
    double pr = m.stationary(path[0]) * e[0][path[0]];
    for (std::size_t s = 1; s < T; ++s) pr *= m.transition(path[s - 1], path[s]) * e[s][path[s]];
    total += pr;
  }
  return std::log(total);
}

// Posterior state marginals by path enumeration, M x T.
inline Eigen::MatrixXd enumerate_occupancies(const kdehmm::KdeHmm& m, const std::vector<double>& seq, bool cv) {
  const std::size_t p = static_cast<std::size_t>(m.order);
  const std::size_t T = seq.size() - p;
  const int M = m.states;
  std::size_t paths = 1;
  for (std::size_t s = 0; s < T; ++s) paths *= static_cast<std::size_t>(M);
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(M, static_cast<Eigen::Index>(T));
  std::vector<int> path(T);
  double z = 0.0;
  for (std::size_t code = 0; code < paths; ++code) {
    std::size_t c = code;
    for (std::size_t s = 0; s < T; ++s) {
      path[s] = static_cast<int>(c % static_cast<std::size_t>(M));
      c /= static_cast<std::size_t>(M);
    }
    double pr = m.stationary(path[0]) * emission(m, path[0], seq, p, cv ? 0 : -1);
    for (std::size_t s = 1; s < T; ++s)
      pr *= m.transition(path[s - 1], path[s]) * emission(m, path[s], seq, s + p, cv ? static_cast<long>(s) : -1);
    z += pr;
    for (std::size_t s = 0; s < T; ++s) g(path[s], static_cast<Eigen::Index>(s)) += pr;
  }
  return g / z;
}

// KDE-MM next-step density by direct double loop over exemplar rows.
inline double mm_density(const kdehmm::KdeMm& m, const std::vector<double>& context, double x, long skip = -1) {
  const auto& y = m.training.values;
  const std::size_t N = y.size();
  const std::size_t p = static_cast<std::size_t>(m.order);
  const double h = m.bandwidth;
  double num = 0.0, den = 0.0;
  const std::size_t first = m.periodic_extension ? 0 : p;
  for (std::size_t n = first; n < N; ++n) {
    if (static_cast<long>(n - first) == skip) continue;
    double kappa = 1.0;
    for (std::size_t l = 1; l <= p; ++l) {
      const double yl = y[(n + N - l) % N];
      kappa *= phi((context[p - l] - yl) / h);
    }
    num += kappa * phi((x - y[n]) / h) / h;
    den += kappa;
  }
  return num / den;
}

// Integral of f over the real line for a density made of Gaussian bumps at
// `centres` with widths at least `h`: adaptive Gauss-Kronrod on h-wide
// panels covering every bump plus generous tails.
inline double integrate_bumps(const std::function<double(double)>& f, std::vector<double> centres, double h) {
  std::sort(centres.begin(), centres.end());
  const double lo = centres.front() - 40.0 * h, hi = centres.back() + 40.0 * h;
  const std::size_t panels = std::min<std::size_t>(20000, static_cast<std::size_t>(std::ceil((hi - lo) / h)));
  const double w = (hi - lo) / static_cast<double>(panels);
  double total = 0.0;
  for (std::size_t i = 0; i < panels; ++i) {
    const double a = lo + w * static_cast<double>(i);
    total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, a + w, 8, 1e-13);
  }
  return total;
}

// Random well-conditioned KDE-HMM over a random training series.
inline kdehmm::KdeHmm random_hmm(std::mt19937_64& rng, std::size_t n, int states, int order) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uni(0.2, 1.0);
  std::vector<double> y(n);
  for (auto& v : y) v = normal(rng);
  kdehmm::KdeHmm m;
  m.training = kdehmm::TimeSeries(y, "random");
  m.order = order;
  m.states = states;
  m.transition.resize(states, states);
  for (int q = 0; q < states; ++q) {
    for (int r = 0; r < states; ++r) m.transition(q, r) = uni(rng);
    m.transition.row(q) /= m.transition.row(q).sum();
  }
  m.stationary = kdehmm::stationary_distribution(m.transition);
  m.weights.resize(states, static_cast<Eigen::Index>(n - static_cast<std::size_t>(order)));
  for (int q = 0; q < states; ++q) {
    for (Eigen::Index k = 0; k < m.weights.cols(); ++k) m.weights(q, k) = uni(rng);
    m.weights.row(q) /= m.weights.row(q).sum();
  }
  m.bandwidths.resize(states, order + 1);
  for (int q = 0; q < states; ++q)
    for (int l = 0; l <= order; ++l) m.bandwidths(q, l) = 0.3 + uni(rng);
  return m;
}

}  // namespace oracle
