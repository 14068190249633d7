#include "kdehmm/hmm_core.hpp"

#include <cmath>

#include "kdehmm/error.hpp"
#include "kdehmm/numeric.hpp"

namespace kdehmm {

namespace {

void check_shapes(const Eigen::MatrixXd& log_emission, const Eigen::MatrixXd& transition,
                  const Eigen::VectorXd& initial) {
  const auto m = log_emission.rows();
  if (transition.rows() != m || transition.cols() != m || initial.size() != m)
    throw Error(ErrorKind::kInvalidArgument, "forward-backward inputs disagree on the state count");
  if (log_emission.cols() == 0) throw Error(ErrorKind::kSequenceTooShort, "no steps to score");
}

// Shifted emissions for one step; returns the shift.
double shifted_emission(const Eigen::MatrixXd& log_emission, Eigen::Index t, Eigen::VectorXd& out) {
  const double shift = log_emission.col(t).maxCoeff();
  if (!std::isfinite(shift))
    throw Error(ErrorKind::kNumericalFailure,
                "emission densities vanish for every state at step " + std::to_string(t),
                static_cast<std::size_t>(t));
  out = (log_emission.col(t).array() - shift).exp().matrix();
  return shift;
}

double safe_log(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

double transition_objective(const Eigen::MatrixXd& a, const Eigen::VectorXd& pi, const Eigen::MatrixXd& expected,
                            const Eigen::VectorXd& gamma0) {
  double f = 0.0;
  for (Eigen::Index q = 0; q < a.rows(); ++q) {
    if (gamma0(q) > 0.0) f += gamma0(q) * safe_log(pi(q));
    for (Eigen::Index r = 0; r < a.cols(); ++r)
      if (expected(q, r) > 0.0) f += expected(q, r) * safe_log(a(q, r));
  }
  return f;
}

}  // namespace

ForwardBackward forward_backward(const Eigen::MatrixXd& log_emission, const Eigen::MatrixXd& transition,
                                 const Eigen::VectorXd& initial) {
  check_shapes(log_emission, transition, initial);
  const Eigen::Index m = log_emission.rows();
  const Eigen::Index steps = log_emission.cols();

  ForwardBackward fb;
  fb.alpha_scaled.resize(m, steps);
  fb.beta_scaled.resize(m, steps);
  fb.log_scale.resize(static_cast<std::size_t>(steps));
  Eigen::MatrixXd emission(m, steps);
  Eigen::VectorXd e;
  std::vector<double> scale(static_cast<std::size_t>(steps));

  double loglik = 0.0;
  for (Eigen::Index t = 0; t < steps; ++t) {
    const double shift = shifted_emission(log_emission, t, e);
    emission.col(t) = e;
    Eigen::VectorXd a = t == 0 ? Eigen::VectorXd(initial.cwiseProduct(e))
                               : Eigen::VectorXd((transition.transpose() * fb.alpha_scaled.col(t - 1)).cwiseProduct(e));
    const double c = a.sum();
    if (!(c > 0.0) || !std::isfinite(c))
      throw Error(ErrorKind::kNumericalFailure,
                  "forward recursion lost all probability mass at step " + std::to_string(t),
                  static_cast<std::size_t>(t));
    fb.alpha_scaled.col(t) = a / c;
    scale[static_cast<std::size_t>(t)] = c;
    fb.log_scale[static_cast<std::size_t>(t)] = std::log(c) + shift;
    loglik += fb.log_scale[static_cast<std::size_t>(t)];
  }
  fb.log_likelihood = loglik;

  fb.beta_scaled.col(steps - 1).setOnes();
  fb.expected_transitions = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index t = steps - 2; t >= 0; --t) {
    const double c_next = scale[static_cast<std::size_t>(t + 1)];
    const Eigen::VectorXd eb = emission.col(t + 1).cwiseProduct(fb.beta_scaled.col(t + 1));
    fb.beta_scaled.col(t) = transition * eb / c_next;
    // xi_t(q, q') = alpha_t(q) a_qq' e_{t+1}(q') beta_{t+1}(q') / c_{t+1}
    fb.expected_transitions.noalias() +=
        (fb.alpha_scaled.col(t) * eb.transpose()).cwiseProduct(transition) / c_next;
  }

  fb.gamma = fb.alpha_scaled.cwiseProduct(fb.beta_scaled);
  for (Eigen::Index t = 0; t < steps; ++t) {
    const double s = fb.gamma.col(t).sum();
    fb.gamma.col(t) /= s;
  }
  return fb;
}

double forward_log_likelihood(const Eigen::MatrixXd& log_emission, const Eigen::MatrixXd& transition,
                              const Eigen::VectorXd& initial) {
  check_shapes(log_emission, transition, initial);
  Eigen::VectorXd alpha, e;
  double loglik = 0.0;
  for (Eigen::Index t = 0; t < log_emission.cols(); ++t) {
    const double shift = shifted_emission(log_emission, t, e);
    Eigen::VectorXd a = t == 0 ? Eigen::VectorXd(initial.cwiseProduct(e))
                               : Eigen::VectorXd((transition.transpose() * alpha).cwiseProduct(e));
    const double c = a.sum();
    if (!(c > 0.0) || !std::isfinite(c))
      throw Error(ErrorKind::kNumericalFailure,
                  "forward recursion lost all probability mass at step " + std::to_string(t),
                  static_cast<std::size_t>(t));
    alpha = a / c;
    loglik += std::log(c) + shift;
  }
  return loglik;
}

Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& transition) {
  const Eigen::Index m = transition.rows();
  if (m == 1) return Eigen::VectorXd::Ones(1);
  // Direct solve of (A^T - I) pi = 0 with the normalization replacing one row.
  Eigen::MatrixXd sys = transition.transpose() - Eigen::MatrixXd::Identity(m, m);
  sys.row(m - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
  rhs(m - 1) = 1.0;
  const Eigen::VectorXd solved = sys.colPivHouseholderQr().solve(rhs);
  if (solved.allFinite() && solved.minCoeff() > -1e-12 &&
      (transition.transpose() * solved - solved).cwiseAbs().maxCoeff() < 1e-12) {
    const Eigen::VectorXd pi = solved.cwiseMax(0.0);
    return pi / pi.sum();
  }
  // Reducible chain: the lazy power iteration picks the limit from uniform.
  const Eigen::MatrixXd lazy = 0.5 * (transition + Eigen::MatrixXd::Identity(m, m));
  Eigen::VectorXd pi = Eigen::VectorXd::Constant(m, 1.0 / static_cast<double>(m));
  for (int it = 0; it < 200000; ++it) {
    Eigen::VectorXd next = lazy.transpose() * pi;
    next /= next.sum();
    const double change = (next - pi).cwiseAbs().maxCoeff();
    pi = next;
    if (change < 1e-15) break;
  }
  return pi;
}

TransitionUpdate reestimate_transitions(const Eigen::MatrixXd& expected_transitions,
                                        const Eigen::MatrixXd& previous) {
  TransitionUpdate u;
  u.transition = previous;
  for (Eigen::Index q = 0; q < expected_transitions.rows(); ++q) {
    const double occ = expected_transitions.row(q).sum();
    if (!(occ > 0.0) || !std::isfinite(occ)) {
      u.starved_states.push_back(static_cast<int>(q));
      continue;
    }
    u.transition.row(q) = expected_transitions.row(q) / occ;
    u.transition.row(q) /= u.transition.row(q).sum();
  }
  u.stationary = stationary_distribution(u.transition);
  return u;
}

TransitionUpdate guarded_transition_update(const Eigen::MatrixXd& expected, const Eigen::VectorXd& gamma0,
                                           const Eigen::MatrixXd& previous, const Eigen::VectorXd& previous_pi) {
  TransitionUpdate u = reestimate_transitions(expected, previous);
  const double f_old = transition_objective(previous, previous_pi, expected, gamma0);
  if (transition_objective(u.transition, u.stationary, expected, gamma0) >= f_old) return u;
  u.shortened = true;
  for (double lambda = 0.5; lambda >= 1e-6; lambda *= 0.5) {
    Eigen::MatrixXd a = previous + lambda * (u.transition - previous);
    for (Eigen::Index q = 0; q < a.rows(); ++q) a.row(q) /= a.row(q).sum();
    Eigen::VectorXd pi = stationary_distribution(a);
    if (transition_objective(a, pi, expected, gamma0) >= f_old) {
      u.transition = a;
      u.stationary = pi;
      return u;
    }
  }
  u.transition = previous;
  u.stationary = previous_pi;
  return u;
}

Eigen::MatrixXd cooccurrence_transitions(const Eigen::MatrixXd& g) {
  const Eigen::Index m = g.rows();
  const Eigen::Index n = g.cols();
  if (n < 2) throw Error(ErrorKind::kSequenceTooShort, "co-occurrence needs at least two steps");
  const Eigen::MatrixXd counts = g.leftCols(n - 1) * g.rightCols(n - 1).transpose();
  Eigen::MatrixXd a(m, m);
  for (Eigen::Index q = 0; q < m; ++q) {
    const double occ = g.row(q).head(n - 1).sum();
    if (!(occ > 0.0)) {
      a.row(q).setConstant(1.0 / static_cast<double>(m));
      continue;
    }
    a.row(q) = counts.row(q) / occ;
    a.row(q) /= a.row(q).sum();
  }
  return a;
}

bool is_row_stochastic(const Eigen::MatrixXd& m, double tol) {
  if (m.rows() != m.cols()) return false;
  for (Eigen::Index q = 0; q < m.rows(); ++q) {
    if ((m.row(q).array() < 0.0).any()) return false;
    if (std::abs(m.row(q).sum() - 1.0) > tol) return false;
  }
  return true;
}

}  // namespace kdehmm
