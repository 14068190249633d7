#include "kdehmm/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kdehmm/error.hpp"
#include "kdehmm/numeric.hpp"

namespace kdehmm {

namespace {

constexpr double kVarianceFloor = 1e-10;

struct Design {
  Eigen::MatrixXd x;  // [1, x_{t-1}, ..., x_{t-p}]
  Eigen::VectorXd y;
};

Design make_design(const TimeSeries& series, int p) {
  const Eigen::Index rows = static_cast<Eigen::Index>(series.size()) - p;
  Design d{Eigen::MatrixXd(rows, p + 1), Eigen::VectorXd(rows)};
  for (Eigen::Index r = 0; r < rows; ++r) {
    const std::size_t t = static_cast<std::size_t>(r + p);
    d.x(r, 0) = 1.0;
    for (int l = 1; l <= p; ++l) d.x(r, l) = series[t - l];
    d.y(r) = series[t];
  }
  return d;
}

// Weighted least squares; returns nullopt-like empty vector when singular.
bool weighted_ls(const Design& d, const Eigen::VectorXd& w, Eigen::VectorXd& beta) {
  const Eigen::VectorXd s = w.cwiseSqrt();
  const Eigen::MatrixXd xs = s.asDiagonal() * d.x;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xs);
  if (qr.rank() < xs.cols()) return false;
  beta = qr.solve(s.cwiseProduct(d.y));
  return true;
}

ArModel from_beta(const Eigen::VectorXd& beta, int p, double variance) {
  ArModel m;
  m.order = p;
  m.intercept = beta(0);
  m.coefficients.assign(beta.data() + 1, beta.data() + beta.size());
  m.noise_std = std::sqrt(std::max(variance, kVarianceFloor));
  return m;
}

Eigen::VectorXd beta_of(const ArModel& m) {
  Eigen::VectorXd b(m.order + 1);
  b(0) = m.intercept;
  for (int l = 0; l < m.order; ++l) b(l + 1) = m.coefficients[static_cast<std::size_t>(l)];
  return b;
}

double gaussian_logpdf(double r, double sd) { return -kLogSqrt2Pi - std::log(sd) - 0.5 * (r / sd) * (r / sd); }

void check_guess(const TimeSeries& series, const Eigen::MatrixXd& guess, int order) {
  if (order < 0) throw Error(ErrorKind::kInvalidArgument, "order must be non-negative");
  if (series.size() <= static_cast<std::size_t>(order) + 1)
    throw Error(ErrorKind::kInvalidArgument, "series must be longer than p + 1");
  if (guess.rows() < 1 || guess.cols() != static_cast<Eigen::Index>(series.size()))
    throw Error(ErrorKind::kInvalidArgument, "occupancy guess must be M x N");
}

}  // namespace

void ArModel::validate() const {
  if (order < 0 || coefficients.size() != static_cast<std::size_t>(order))
    throw Error(ErrorKind::kInvalidArgument, "AR coefficients must match the order");
  if (!(noise_std > 0.0) || !std::isfinite(noise_std))
    throw Error(ErrorKind::kInvalidArgument, "AR noise standard deviation must be positive");
}

double ArModel::mean_given(std::span<const double> s, std::size_t t) const {
  double mu = intercept;
  for (int l = 1; l <= order; ++l) mu += coefficients[static_cast<std::size_t>(l - 1)] * s[t - l];
  return mu;
}

ArModel ar_fit(const TimeSeries& series, int order) {
  if (order < 0) throw Error(ErrorKind::kInvalidArgument, "order must be non-negative");
  if (series.size() <= static_cast<std::size_t>(order) + 1)
    throw Error(ErrorKind::kInvalidArgument, "series must be longer than p + 1");
  const Design d = make_design(series, order);
  Eigen::VectorXd beta;
  if (!weighted_ls(d, Eigen::VectorXd::Ones(d.y.size()), beta))
    throw Error(ErrorKind::kRankDeficient, "AR normal equations are singular");
  const Eigen::VectorXd r = d.y - d.x * beta;
  return from_beta(beta, order, r.squaredNorm() / static_cast<double>(r.size()));
}

double ar_score(const ArModel& model, const TimeSeries& heldout) {
  model.validate();
  if (heldout.size() <= static_cast<std::size_t>(model.order))
    throw Error(ErrorKind::kSequenceTooShort, "held-out sequence must be longer than the model order");
  std::vector<double> terms;
  terms.reserve(heldout.size() - model.order);
  for (std::size_t t = static_cast<std::size_t>(model.order); t < heldout.size(); ++t)
    terms.push_back(gaussian_logpdf(heldout[t] - model.mean_given(heldout.view(), t), model.noise_std));
  return pairwise_sum(terms);
}

void ArHmm::validate() const {
  if (states < 1 || static_cast<int>(emissions.size()) != states)
    throw Error(ErrorKind::kInvalidArgument, "AR-HMM needs one emission model per state");
  if (transition.rows() != states || !is_row_stochastic(transition, 1e-9))
    throw Error(ErrorKind::kInvalidArgument, "transition matrix must be M x M and row-stochastic");
  if (stationary.size() != states) throw Error(ErrorKind::kInvalidArgument, "stationary vector must have M entries");
  for (const ArModel& e : emissions) {
    e.validate();
    if (e.order != order) throw Error(ErrorKind::kInvalidArgument, "emission orders disagree");
  }
}

ArHmm ar_hmm_initialize(const TimeSeries& series, const Eigen::MatrixXd& guess, int order) {
  check_guess(series, guess, order);
  const ArModel pooled = ar_fit(series, order);
  const Design d = make_design(series, order);
  const Eigen::VectorXd r = d.y - d.x * beta_of(pooled);
  ArHmm model;
  model.states = static_cast<int>(guess.rows());
  model.order = order;
  for (int q = 0; q < model.states; ++q) {
    const Eigen::VectorXd g = guess.row(q).tail(d.y.size()).transpose();
    const double mass = g.sum();
    if (!(mass > 0.0))
      throw Error(ErrorKind::kEmptyState, "occupancy guess gives state " + std::to_string(q) + " no mass",
                  static_cast<std::size_t>(q));
    ArModel m = pooled;
    m.noise_std = std::sqrt(std::max(g.dot(r.cwiseAbs2()) / mass, kVarianceFloor));
    model.emissions.push_back(m);
  }
  model.transition = cooccurrence_transitions(guess);
  model.stationary = stationary_distribution(model.transition);
  return model;
}

Eigen::MatrixXd ar_hmm_log_emissions(const ArHmm& model, const TimeSeries& series) {
  model.validate();
  if (series.size() <= static_cast<std::size_t>(model.order))
    throw Error(ErrorKind::kSequenceTooShort, "sequence must be longer than the model order");
  const Eigen::Index steps = static_cast<Eigen::Index>(series.size()) - model.order;
  Eigen::MatrixXd out(model.states, steps);
  for (int q = 0; q < model.states; ++q) {
    const ArModel& e = model.emissions[static_cast<std::size_t>(q)];
    for (Eigen::Index s = 0; s < steps; ++s) {
      const std::size_t t = static_cast<std::size_t>(s + model.order);
      out(q, s) = gaussian_logpdf(series[t] - e.mean_given(series.view(), t), e.noise_std);
    }
  }
  return out;
}

ArHmmFitResult ar_hmm_train(const ArHmm& initial, const TimeSeries& series, const ArHmmFitConfig& config) {
  initial.validate();
  if (config.max_iterations < 1 || !(config.relative_tolerance > 0.0))
    throw Error(ErrorKind::kConfig, "max_iterations must be >= 1 and relative_tolerance > 0");
  const Design d = make_design(series, initial.order);
  ArHmmFitResult result{initial, {}};
  TrainingReport& report = result.report;
  auto snapshot = [&](const ArHmm& m) {
    std::vector<double> snap;
    for (const ArModel& e : m.emissions) {
      snap.push_back(e.intercept);
      snap.insert(snap.end(), e.coefficients.begin(), e.coefficients.end());
      snap.push_back(e.noise_std);
    }
    report.parameters.push_back(std::move(snap));
  };
  for (int it = 0; it < config.max_iterations; ++it) {
    if (past(config.deadline)) {
      report.timed_out = true;
      break;
    }
    const ForwardBackward fb =
        forward_backward(ar_hmm_log_emissions(result.model, series), result.model.transition,
                         result.model.stationary);
    const bool have_prev = !report.objective.empty();
    const double prev = have_prev ? report.objective.back() : fb.log_likelihood;
    record_objective(report, fb.log_likelihood);
    snapshot(result.model);
    if (have_prev && relative_change_below(prev, fb.log_likelihood, config.relative_tolerance)) {
      report.converged = true;
      return result;
    }
    ArHmm next = result.model;
    for (int q = 0; q < next.states; ++q) {
      const Eigen::VectorXd g = fb.gamma.row(q).transpose();
      const double mass = g.sum();
      Eigen::VectorXd beta;
      if (!(mass > 1e-300) || !weighted_ls(d, g, beta)) {
        if (std::find(report.starved_states.begin(), report.starved_states.end(), q) == report.starved_states.end())
          report.starved_states.push_back(q);
        continue;
      }
      const Eigen::VectorXd r = d.y - d.x * beta;
      next.emissions[static_cast<std::size_t>(q)] = from_beta(beta, next.order, g.dot(r.cwiseAbs2()) / mass);
    }
    const TransitionUpdate tu =
        guarded_transition_update(fb.expected_transitions, fb.gamma.col(0), result.model.transition,
                                  result.model.stationary);
    for (int q : tu.starved_states)
      if (std::find(report.starved_states.begin(), report.starved_states.end(), q) == report.starved_states.end())
        report.starved_states.push_back(q);
    next.transition = tu.transition;
    next.stationary = tu.stationary;
    result.model = std::move(next);
    report.iterations = it + 1;
  }
  record_objective(report, forward_log_likelihood(ar_hmm_log_emissions(result.model, series),
                                                  result.model.transition, result.model.stationary));
  snapshot(result.model);
  std::sort(report.starved_states.begin(), report.starved_states.end());
  return result;
}

ArHmmFitResult ar_hmm_fit(const TimeSeries& series, const Eigen::MatrixXd& guess, int order,
                          const ArHmmFitConfig& config) {
  return ar_hmm_train(ar_hmm_initialize(series, guess, order), series, config);
}

double ar_hmm_score(const ArHmm& model, const TimeSeries& heldout) {
  return forward_log_likelihood(ar_hmm_log_emissions(model, heldout), model.transition, model.stationary);
}

ArHmmSample ar_hmm_sample(const ArHmm& model, std::size_t length, std::uint64_t rng_seed, int burn_in) {
  model.validate();
  if (length == 0) throw Error(ErrorKind::kInvalidArgument, "sample length must be positive");
  const std::size_t discard = burn_in < 0 ? 0 : static_cast<std::size_t>(burn_in);
  const std::size_t p = static_cast<std::size_t>(model.order);
  Rng rng(rng_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> log_pi(model.states), row(model.states);
  for (int q = 0; q < model.states; ++q) log_pi[q] = model.stationary(q) > 0 ? std::log(model.stationary(q)) : kNegInf;

  std::vector<double> history(p, 0.0);
  history.reserve(p + discard + length);
  ArHmmSample out;
  out.series.source = "ar-hmm sample";
  int q = -1;
  for (std::size_t step = 0; step < discard + length; ++step) {
    if (q < 0) {
      q = static_cast<int>(sample_log_categorical(log_pi, rng));
    } else {
      for (int r = 0; r < model.states; ++r)
        row[r] = model.transition(q, r) > 0 ? std::log(model.transition(q, r)) : kNegInf;
      q = static_cast<int>(sample_log_categorical(row, rng));
    }
    const ArModel& e = model.emissions[static_cast<std::size_t>(q)];
    const double x = e.mean_given(history, history.size()) + e.noise_std * normal(rng);
    history.push_back(x);
    if (step >= discard) {
      out.series.values.push_back(x);
      out.states.push_back(q);
    }
  }
  return out;
}

}  // namespace kdehmm
