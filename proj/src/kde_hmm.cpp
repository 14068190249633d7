#include "kdehmm/kde_hmm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "kdehmm/error.hpp"
#include "kdehmm/kde_mm.hpp"
#include "kdehmm/numeric.hpp"

namespace kdehmm {

namespace {

constexpr double kWeightFloor = 1e-12;

double standard_deviation(std::span<const double> v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

double resolve_floor(const KdeHmm& model, double floor) {
  return floor > 0.0 ? floor : 1e-6 * standard_deviation(model.training.view());
}

bool same_series(const TimeSeries& a, const TimeSeries& b) { return a.values == b.values; }

Eigen::MatrixXd to_matrix(const PassResult& pass) {
  Eigen::MatrixXd out(pass.states, static_cast<Eigen::Index>(pass.rows));
  for (int q = 0; q < pass.states; ++q)
    for (std::size_t t = 0; t < pass.rows; ++t) out(q, static_cast<Eigen::Index>(t)) = pass.log_emission(q, t);
  return out;
}

double safe_log(double x) { return x > 0.0 ? std::log(x) : kNegInf; }

void take_snapshot(const KdeHmm& m, TrainingReport& report) {
  std::vector<double> snap(m.bandwidths.data(), m.bandwidths.data() + m.bandwidths.size());
  for (Eigen::Index q = 0; q < m.transition.rows(); ++q)
    for (Eigen::Index r = 0; r < m.transition.cols(); ++r) snap.push_back(m.transition(q, r));
  report.parameters.push_back(std::move(snap));
}

}  // namespace

void KdeHmm::validate() const {
  if (order < 0) throw Error(ErrorKind::kInvalidArgument, "KDE-HMM order must be non-negative");
  if (states < 1) throw Error(ErrorKind::kInvalidArgument, "KDE-HMM needs at least one state");
  if (training.size() <= static_cast<std::size_t>(order) + 1)
    throw Error(ErrorKind::kInvalidArgument, "KDE-HMM needs more than p + 1 training points");
  const Eigen::Index m = states;
  const Eigen::Index k = static_cast<Eigen::Index>(exemplar_count());
  if (transition.rows() != m || transition.cols() != m || !is_row_stochastic(transition, 1e-9))
    throw Error(ErrorKind::kInvalidArgument, "transition matrix must be M x M and row-stochastic");
  if (stationary.size() != m) throw Error(ErrorKind::kInvalidArgument, "stationary vector must have M entries");
  if (weights.rows() != m || weights.cols() != k)
    throw Error(ErrorKind::kInvalidArgument, "weights must be M x (N - p)");
  for (Eigen::Index q = 0; q < m; ++q) {
    if ((weights.row(q).array() < 0.0).any() || std::abs(weights.row(q).sum() - 1.0) > 1e-9)
      throw Error(ErrorKind::kInvalidArgument, "weights of state " + std::to_string(q) + " are not on the simplex");
  }
  if (bandwidths.rows() != m || bandwidths.cols() != order + 1)
    throw Error(ErrorKind::kInvalidArgument, "bandwidths must be M x (p + 1)");
  if (!(bandwidths.array() > 0.0).all() || !bandwidths.allFinite())
    throw Error(ErrorKind::kInvalidArgument, "bandwidths must be positive and finite");
}

KernelBank hmm_kernel_bank(const KdeHmm& model) {
  KernelBank bank;
  bank.states = model.states;
  bank.order = model.order;
  bank.exemplars = model.exemplar_count();
  bank.bandwidths.resize(static_cast<std::size_t>(model.states) * (model.order + 1));
  bank.log_weights.resize(static_cast<std::size_t>(model.states) * bank.exemplars);
  for (int q = 0; q < model.states; ++q) {
    for (int l = 0; l <= model.order; ++l)
      bank.bandwidths[static_cast<std::size_t>(q) * (model.order + 1) + l] = model.bandwidths(q, l);
    for (std::size_t n = 0; n < bank.exemplars; ++n)
      bank.log_weights[static_cast<std::size_t>(q) * bank.exemplars + n] =
          safe_log(model.weights(q, static_cast<Eigen::Index>(n)));
  }
  return bank;
}

double hmm_emission_logpdf(const KdeHmm& model, int state, std::span<const double> context, double x,
                           std::optional<std::size_t> exclude_exemplar) {
  model.validate();
  if (state < 0 || state >= model.states) throw Error(ErrorKind::kInvalidArgument, "state index out of range");
  if (context.size() != static_cast<std::size_t>(model.order))
    throw Error(ErrorKind::kInvalidArgument, "context length must equal the model order");
  const KernelBank full = hmm_kernel_bank(model);
  KernelBank one;
  one.states = 1;
  one.order = model.order;
  one.exemplars = full.exemplars;
  one.bandwidths.assign(full.bandwidths.begin() + static_cast<std::ptrdiff_t>(state) * (model.order + 1),
                        full.bandwidths.begin() + static_cast<std::ptrdiff_t>(state + 1) * (model.order + 1));
  one.log_weights.assign(full.log_weights.begin() + static_cast<std::ptrdiff_t>(state * full.exemplars),
                         full.log_weights.begin() + static_cast<std::ptrdiff_t>((state + 1) * full.exemplars));
  if (exclude_exemplar) {
    if (*exclude_exemplar >= one.exemplars) throw Error(ErrorKind::kInvalidArgument, "excluded exemplar out of range");
    one.log_weights[*exclude_exemplar] = kNegInf;
  }
  const LagMatrix exemplars = LagMatrix::truncated(model.training.view(), model.order);
  const PassResult pass = kcde_pass(LagMatrix::single(context, x), exemplars, one, {}, Execution::kSerial);
  return pass.log_emission(0, 0);
}

Posteriors hmm_forward_backward(const KdeHmm& model, const TimeSeries& sequence, bool cross_validate,
                                Execution exec) {
  model.validate();
  if (sequence.size() <= static_cast<std::size_t>(model.order))
    throw Error(ErrorKind::kSequenceTooShort, "sequence must be longer than the model order");
  if (cross_validate && !same_series(sequence, model.training))
    throw Error(ErrorKind::kInvalidArgument, "cross-validation applies to the training series only");
  const LagMatrix queries = LagMatrix::truncated(sequence.view(), model.order);
  const LagMatrix exemplars = LagMatrix::truncated(model.training.view(), model.order);
  PassOptions options;
  options.exclude_self = cross_validate;
  Posteriors post;
  post.cross_validated = cross_validate;
  post.pass = kcde_pass(queries, exemplars, hmm_kernel_bank(model), options, exec);
  post.log_emission = to_matrix(post.pass);
  post.fb = forward_backward(post.log_emission, model.transition, model.stationary);
  return post;
}

Responsibilities hmm_responsibilities(const KdeHmm& model, const TimeSeries& sequence,
                                      const Posteriors& posteriors, int state, std::size_t step) {
  const int p = model.order;
  const std::size_t k = model.exemplar_count();
  if (step >= posteriors.pass.rows || state < 0 || state >= model.states)
    throw Error(ErrorKind::kInvalidArgument, "responsibility index out of range");
  const std::size_t t = step + static_cast<std::size_t>(p);
  const auto y = model.training.view();
  const double log_den = posteriors.pass.log_den[posteriors.pass.at(state, step)];
  const double log_num = posteriors.pass.log_num[posteriors.pass.at(state, step)];
  const double h0 = model.bandwidths(state, 0);
  Responsibilities r{std::vector<double>(k, 0.0), std::vector<double>(k, 0.0)};
  for (std::size_t n = 0; n < k; ++n) {
    if (posteriors.cross_validated && n == step) continue;
    double a = safe_log(model.weights(state, static_cast<Eigen::Index>(n)));
    if (!std::isfinite(a)) continue;
    for (int l = 1; l <= p; ++l) {
      const double d = (sequence[t - l] - y[n + p - l]) / model.bandwidths(state, l);
      a -= 0.5 * d * d;
    }
    const double d0 = (sequence[t] - y[n + p]) / h0;
    r.den[n] = std::exp(a - log_den);
    r.num[n] = std::exp(a - 0.5 * d0 * d0 - std::log(h0) - kLogSqrt2Pi - log_num);
  }
  return r;
}

TransitionUpdate hmm_update_transitions(const Posteriors& posteriors, const Eigen::MatrixXd& previous) {
  return reestimate_transitions(posteriors.fb.expected_transitions, previous);
}

GemStepResult hmm_gem_step(const KdeHmm& model, const GemStepOptions& options) {
  model.validate();
  if (model.kernel.shape != KernelShape::kGaussian)
    throw Error(ErrorKind::kInvalidArgument, "GEM updates require the Gaussian kernel");
  if (options.mode == GemMode::kAccelerated && options.update_weights)
    throw Error(ErrorKind::kConfig, "accelerated updates keep the weights fixed");
  const int p = model.order;
  const int m = model.states;
  const double floor = resolve_floor(model, options.bandwidth_floor);

  const LagMatrix rows = LagMatrix::truncated(model.training.view(), p);
  const KernelBank bank = hmm_kernel_bank(model);
  PassOptions pass_options;
  pass_options.exclude_self = true;
  pass_options.bound = options.mode == GemMode::kExact ? BoundKind::kHmmExact : BoundKind::kHmmRelaxed;
  pass_options.weight_terms = options.update_weights;
  const PassResult pass = kcde_pass(rows, rows, bank, pass_options, options.execution);
  const ForwardBackward fb = forward_backward(to_matrix(pass), model.transition, model.stationary);

  GemStepResult out{model, fb.log_likelihood, std::vector<double>(m, 0.0), {}, false};
  KdeHmm& next = out.model;
  const std::size_t steps = pass.rows;

  std::vector<double> gamma_flat(static_cast<std::size_t>(m) * steps);
  for (int q = 0; q < m; ++q)
    for (std::size_t t = 0; t < steps; ++t) gamma_flat[pass.at(q, t)] = fb.gamma(q, static_cast<Eigen::Index>(t));
  std::vector<double> weight_diff;
  if (options.update_weights) weight_diff = weight_pass(rows, bank, pass, gamma_flat, options.execution);

  std::vector<std::vector<double>> cols(static_cast<std::size_t>(p) + 4, std::vector<double>(steps));
  std::vector<double> occupancy(steps);
  for (int q = 0; q < m; ++q) {
    for (std::size_t t = 0; t < steps; ++t) {
      const double g = gamma_flat[pass.at(q, t)];
      occupancy[t] = g;
      const auto st = pass.stat_row(q, t);
      for (std::size_t j = 0; j < st.size(); ++j) cols[j][t] = g * st[j];
    }
    const double total = pairwise_sum(occupancy);
    const double num0 = pairwise_sum(cols[0]);
    const double mass = pairwise_sum(cols[p + 1]);
    const double diff = pairwise_sum(cols[p + 2]);
    const double w = pairwise_sum(cols[p + 3]);
    out.w_factor[q] = w;
    if (!(total > 1e-300) || !(mass > 0.0)) {
      out.starved_states.push_back(q);
      continue;
    }
    if (!(w + diff > 0.0))
      throw Error(ErrorKind::kNumericalFailure,
                  "bound factor W_q + sum gamma_diff is not positive for state " + std::to_string(q));
    next.bandwidths(q, 0) = std::max(std::sqrt(num0 / mass), floor);
    for (int l = 1; l <= p; ++l) {
      const double h2 = model.bandwidths(q, l) * model.bandwidths(q, l);
      const double h2_new = (w * h2 + pairwise_sum(cols[l])) / (w + diff);
      next.bandwidths(q, l) = std::max(std::sqrt(std::max(h2_new, 0.0)), floor);
    }
    if (options.update_weights) {
      const std::size_t k = bank.exemplars;
      std::span<const double> wd(weight_diff.data() + static_cast<std::size_t>(q) * k, k);
      const double wd_total = pairwise_sum(wd);
      if (!(w + wd_total > 0.0))
        throw Error(ErrorKind::kNumericalFailure,
                    "bound factor W_q + sum gamma_diff is not positive for state " + std::to_string(q));
      double sum = 0.0;
      for (std::size_t n = 0; n < k; ++n) {
        const Eigen::Index nn = static_cast<Eigen::Index>(n);
        const double old = model.weights(q, nn);
        if (old <= 0.0) continue;
        const double updated = (w * old + wd[n]) / (w + wd_total);
        next.weights(q, nn) = std::max(updated, kWeightFloor);
        sum += next.weights(q, nn);
      }
      next.weights.row(q) /= sum;
    }
  }

  TransitionUpdate tu = guarded_transition_update(fb.expected_transitions, fb.gamma.col(0), model.transition,
                                                  model.stationary);
  for (int q : tu.starved_states)
    if (std::find(out.starved_states.begin(), out.starved_states.end(), q) == out.starved_states.end())
      out.starved_states.push_back(q);
  out.transition_step_shortened = tu.shortened;
  next.transition = tu.transition;
  next.stationary = tu.stationary;
  std::sort(out.starved_states.begin(), out.starved_states.end());
  return out;
}

double hmm_pseudo_log_likelihood(const KdeHmm& model, Execution exec) {
  return hmm_forward_backward(model, model.training, true, exec).log_likelihood();
}

HmmTrainResult hmm_train(const KdeHmm& initial, const HmmTrainingConfig& config) {
  initial.validate();
  if (config.max_iterations < 1 || !(config.relative_tolerance > 0.0))
    throw Error(ErrorKind::kConfig, "max_iterations must be >= 1 and relative_tolerance > 0");
  if (config.mode == GemMode::kAccelerated && config.update_weights)
    throw Error(ErrorKind::kConfig, "accelerated updates keep the weights fixed");
  GemStepOptions step;
  step.mode = config.mode;
  step.update_weights = config.update_weights;
  step.bandwidth_floor = resolve_floor(initial, config.bandwidth_floor);
  step.execution = config.execution;

  HmmTrainResult result{initial, {}};
  TrainingReport& report = result.report;
  const auto y = initial.training.view();
  report.degenerate_separation =
      !(minimum_separation(y.subspan(static_cast<std::size_t>(initial.order))) > 0.0);
  auto check = [](double f, int it) {
    if (!std::isfinite(f))
      throw Error(ErrorKind::kNumericalFailure,
                  "pseudo-log-likelihood is not finite at iteration " + std::to_string(it),
                  static_cast<std::size_t>(it));
  };
  int shortened = 0;
  for (int it = 0; it < config.max_iterations; ++it) {
    if (past(config.deadline)) {
      report.timed_out = true;
      break;
    }
    GemStepResult s = hmm_gem_step(result.model, step);
    check(s.objective_before, it);
    const bool have_prev = !report.objective.empty();
    const double prev = have_prev ? report.objective.back() : s.objective_before;
    record_objective(report, s.objective_before);
    take_snapshot(result.model, report);
    if (have_prev && relative_change_below(prev, s.objective_before, config.relative_tolerance)) {
      report.converged = true;
      break;
    }
    for (int q : s.starved_states)
      if (std::find(report.starved_states.begin(), report.starved_states.end(), q) == report.starved_states.end())
        report.starved_states.push_back(q);
    shortened += s.transition_step_shortened ? 1 : 0;
    result.model = std::move(s.model);
    report.iterations = it + 1;
  }
  if (!report.converged) {
    const double f = hmm_pseudo_log_likelihood(result.model, config.execution);
    check(f, report.iterations);
    record_objective(report, f);
    take_snapshot(result.model, report);
  }
  std::sort(report.starved_states.begin(), report.starved_states.end());
  if (shortened > 0) report.notes = "transition step shortened in " + std::to_string(shortened) + " iterations";
  return result;
}

KdeHmm hmm_initialize(const TimeSeries& series, const Eigen::MatrixXd& guess, int order) {
  if (order < 0) throw Error(ErrorKind::kInvalidArgument, "order must be non-negative");
  const std::size_t n_total = series.size();
  if (n_total <= static_cast<std::size_t>(order) + 1)
    throw Error(ErrorKind::kInvalidArgument, "KDE-HMM needs more than p + 1 training points");
  if (guess.cols() != static_cast<Eigen::Index>(n_total) || guess.rows() < 1)
    throw Error(ErrorKind::kInvalidArgument, "occupancy guess must be M x N");
  const int m = static_cast<int>(guess.rows());
  const Eigen::Index k = static_cast<Eigen::Index>(n_total) - order;

  KdeHmm model;
  model.training = series;
  model.order = order;
  model.states = m;
  model.weights.resize(m, k);
  model.bandwidths.resize(m, order + 1);
  const auto targets = series.view().subspan(static_cast<std::size_t>(order));
  for (int q = 0; q < m; ++q) {
    const Eigen::VectorXd row = guess.row(q).tail(k).transpose();
    const double mass = row.sum();
    if (!(mass > 0.0))
      throw Error(ErrorKind::kEmptyState, "occupancy guess gives state " + std::to_string(q) + " no mass",
                  static_cast<std::size_t>(q));
    model.weights.row(q) = row.transpose() / mass;
    const std::vector<double> w(row.data(), row.data() + row.size());
    model.bandwidths.row(q).setConstant(reference_rule_bandwidth(targets, w, order + 1));
  }
  model.transition = cooccurrence_transitions(guess);
  model.stationary = stationary_distribution(model.transition);
  model.validate();
  return model;
}

double hmm_score(const KdeHmm& model, const TimeSeries& heldout, Execution exec) {
  model.validate();
  if (heldout.size() <= static_cast<std::size_t>(model.order))
    throw Error(ErrorKind::kSequenceTooShort, "held-out sequence must be longer than the model order");
  const LagMatrix queries = LagMatrix::truncated(heldout.view(), model.order);
  const LagMatrix exemplars = LagMatrix::truncated(model.training.view(), model.order);
  const PassResult pass = kcde_pass(queries, exemplars, hmm_kernel_bank(model), {}, exec);
  return forward_log_likelihood(to_matrix(pass), model.transition, model.stationary);
}

HmmSample hmm_sample(const KdeHmm& model, std::size_t length, std::uint64_t rng_seed, int burn_in) {
  model.validate();
  if (length == 0) throw Error(ErrorKind::kInvalidArgument, "sample length must be positive");
  const std::size_t p = static_cast<std::size_t>(model.order);
  const std::size_t discard = burn_in < 0 ? 10 * p : static_cast<std::size_t>(burn_in);
  const LagMatrix exemplars = LagMatrix::truncated(model.training.view(), model.order);
  const std::size_t k = exemplars.rows();
  const auto y = model.training.view();
  const KernelBank bank = hmm_kernel_bank(model);

  Rng rng(rng_seed);
  std::vector<double> window(p);
  {
    std::uniform_int_distribution<std::size_t> pick(0, k - 1);
    const std::size_t n = pick(rng);
    for (std::size_t i = 0; i < p; ++i) window[i] = y[n + i];
  }
  std::vector<double> log_pi(model.states);
  for (int q = 0; q < model.states; ++q) log_pi[q] = safe_log(model.stationary(q));
  Eigen::MatrixXd log_a = model.transition.unaryExpr([](double v) { return safe_log(v); });

  HmmSample out;
  out.series.source = "kde-hmm sample";
  out.series.values.reserve(length);
  std::vector<double> log_kappa(k), row(model.states);
  int q = -1;
  for (std::size_t step = 0; step < discard + length; ++step) {
    if (q < 0) {
      q = static_cast<int>(sample_log_categorical(log_pi, rng));
    } else {
      for (int r = 0; r < model.states; ++r) row[r] = log_a(q, r);
      q = static_cast<int>(sample_log_categorical(row, rng));
    }
    for (std::size_t n = 0; n < k; ++n) log_kappa[n] = bank.log_weight(q, n);
    for (std::size_t l = 1; l <= p; ++l) {
      const double c = window[p - l];
      const double inv_h = 1.0 / model.bandwidths(q, static_cast<Eigen::Index>(l));
      const auto e = exemplars.lag(static_cast<int>(l));
      for (std::size_t n = 0; n < k; ++n) {
        const double d = (c - e[n]) * inv_h;
        log_kappa[n] -= 0.5 * d * d;
      }
    }
    const std::size_t z = sample_log_categorical(log_kappa, rng);
    const double x = exemplars.at(z, 0) + model.bandwidths(q, 0) * kernel_draw(model.kernel, rng);
    if (p > 0) {
      window.erase(window.begin());
      window.push_back(x);
    }
    if (step >= discard) {
      out.series.values.push_back(x);
      out.states.push_back(q);
      out.exemplars.push_back(z + p);
    }
  }
  return out;
}

std::vector<int> hmm_state_assignments(const KdeHmm& model, const TimeSeries& series, Execution exec) {
  const Posteriors post = hmm_forward_backward(model, series, false, exec);
  const Eigen::MatrixXd& g = post.gamma();
  std::vector<int> labels(static_cast<std::size_t>(g.cols()));
  for (Eigen::Index t = 0; t < g.cols(); ++t) {
    int best = 0;
    for (Eigen::Index q = 1; q < g.rows(); ++q)
      if (g(q, t) > g(best, t)) best = static_cast<int>(q);
    labels[static_cast<std::size_t>(t)] = best;
  }
  return labels;
}

const char* to_string(GemMode mode) { return mode == GemMode::kExact ? "exact" : "accelerated"; }

GemMode gem_mode_from_string(std::string_view name) {
  if (name == "exact") return GemMode::kExact;
  if (name == "accelerated") return GemMode::kAccelerated;
  throw Error(ErrorKind::kConfig, "unknown KDE-HMM training mode '" + std::string(name) + "'");
}

}  // namespace kdehmm
