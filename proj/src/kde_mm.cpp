#include "kdehmm/kde_mm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "kdehmm/error.hpp"
#include "kdehmm/numeric.hpp"

namespace kdehmm {

namespace {

KernelBank mm_bank(const KdeMm& model, std::size_t exemplars) {
  KernelBank bank;
  bank.states = 1;
  bank.order = model.order;
  bank.exemplars = exemplars;
  bank.bandwidths.assign(static_cast<std::size_t>(model.order) + 1, model.bandwidth);
  bank.log_weights.assign(exemplars, 0.0);
  return bank;
}

double sum_log_emissions(const PassResult& pass) {
  std::vector<double> terms(pass.rows);
  for (std::size_t t = 0; t < pass.rows; ++t) terms[t] = pass.log_emission(0, t);
  return pairwise_sum(terms);
}

double standard_deviation(std::span<const double> v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

void require_gaussian(Kernel kernel) {
  if (kernel.shape != KernelShape::kGaussian)
    throw Error(ErrorKind::kInvalidArgument, "bandwidth training requires the Gaussian kernel");
}

}  // namespace

void KdeMm::validate() const {
  if (order < 0) throw Error(ErrorKind::kInvalidArgument, "KDE-MM order must be non-negative");
  if (training.size() <= static_cast<std::size_t>(order) + 1)
    throw Error(ErrorKind::kInvalidArgument, "KDE-MM needs more than p + 1 training points");
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth))
    throw Error(ErrorKind::kInvalidArgument, "KDE-MM bandwidth must be positive and finite");
}

std::size_t KdeMm::exemplar_count() const {
  return periodic_extension ? training.size() : training.size() - static_cast<std::size_t>(order);
}

KdeMm make_kde_mm(TimeSeries training, int order, bool periodic_extension) {
  KdeMm model;
  model.training = std::move(training);
  model.order = order;
  model.periodic_extension = periodic_extension;
  model.bandwidth = reference_rule_bandwidth(model.training.view(), {}, order + 1);
  model.validate();
  return model;
}

LagMatrix mm_exemplars(const KdeMm& model) {
  return model.periodic_extension ? LagMatrix::periodic(model.training.view(), model.order)
                                  : LagMatrix::truncated(model.training.view(), model.order);
}

double mm_next_step_logpdf(const KdeMm& model, std::span<const double> context, double x) {
  model.validate();
  if (context.size() != static_cast<std::size_t>(model.order))
    throw Error(ErrorKind::kInvalidArgument, "context length must equal the model order");
  const LagMatrix exemplars = mm_exemplars(model);
  const PassResult pass = kcde_pass(LagMatrix::single(context, x), exemplars,
                                    mm_bank(model, exemplars.rows()), {}, Execution::kSerial);
  return pass.log_emission(0, 0);
}

double mm_sequence_logpdf(const KdeMm& model, const TimeSeries& sequence, ContextMode mode, Execution exec) {
  model.validate();
  if (mode == ContextMode::kTruncate && sequence.size() <= static_cast<std::size_t>(model.order))
    throw Error(ErrorKind::kSequenceTooShort, "sequence must be longer than the model order");
  if (sequence.empty()) throw Error(ErrorKind::kSequenceTooShort, "sequence is empty");
  const LagMatrix queries = mode == ContextMode::kTruncate ? LagMatrix::truncated(sequence.view(), model.order)
                                                           : LagMatrix::periodic(sequence.view(), model.order);
  const LagMatrix exemplars = mm_exemplars(model);
  return sum_log_emissions(kcde_pass(queries, exemplars, mm_bank(model, exemplars.rows()), {}, exec));
}

double mm_pseudo_log_likelihood(const KdeMm& model, Execution exec) {
  model.validate();
  const LagMatrix rows = mm_exemplars(model);
  PassOptions options;
  options.exclude_self = true;
  return sum_log_emissions(kcde_pass(rows, rows, mm_bank(model, rows.rows()), options, exec));
}

double minimum_separation(std::span<const double> values) {
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < v.size(); ++i) best = std::min(best, v[i] - v[i - 1]);
  return best;
}

MmSample mm_sample(const KdeMm& model, std::span<const double> seed_context, std::size_t length,
                   std::uint64_t rng_seed) {
  model.validate();
  const std::size_t p = static_cast<std::size_t>(model.order);
  if (seed_context.size() != p)
    throw Error(ErrorKind::kInvalidArgument, "seed context length must equal the model order");
  if (length == 0) throw Error(ErrorKind::kInvalidArgument, "sample length must be positive");
  const LagMatrix exemplars = mm_exemplars(model);
  const std::size_t k = exemplars.rows();
  const std::size_t index_offset = model.periodic_extension ? 0 : p;
  const double half_inv_h2 = 0.5 / (model.bandwidth * model.bandwidth);

  Rng rng(rng_seed);
  std::vector<double> window(seed_context.begin(), seed_context.end());
  std::vector<double> log_kappa(k);
  MmSample out;
  out.series.source = "kde-mm sample";
  out.series.values.reserve(length);
  out.exemplars.reserve(length);
  for (std::size_t step = 0; step < length; ++step) {
    std::fill(log_kappa.begin(), log_kappa.end(), 0.0);
    for (std::size_t l = 1; l <= p; ++l) {
      const double c = window[p - l];
      const auto e = exemplars.lag(static_cast<int>(l));
      for (std::size_t n = 0; n < k; ++n) {
        const double d = c - e[n];
        log_kappa[n] -= half_inv_h2 * d * d;
      }
    }
    const std::size_t z = sample_log_categorical(log_kappa, rng);
    const double x = exemplars.at(z, 0) + model.bandwidth * kernel_draw(model.kernel, rng);
    out.series.values.push_back(x);
    out.exemplars.push_back(z + index_offset);
    if (p > 0) {
      window.erase(window.begin());
      window.push_back(x);
    }
  }
  return out;
}

double mm_gem_update(const KdeMm& model, bool relaxed, double* objective_before, Execution exec) {
  model.validate();
  require_gaussian(model.kernel);
  const LagMatrix rows = mm_exemplars(model);
  PassOptions options;
  options.exclude_self = true;
  options.bound = relaxed ? BoundKind::kMmRelaxed : BoundKind::kMmExact;
  const PassResult pass = kcde_pass(rows, rows, mm_bank(model, rows.rows()), options, exec);
  if (objective_before) *objective_before = sum_log_emissions(pass);

  const int p = model.order;
  std::vector<double> num(pass.rows), ctx(pass.rows), mass(pass.rows), diff(pass.rows), w(pass.rows);
  for (std::size_t t = 0; t < pass.rows; ++t) {
    const auto st = pass.stat_row(0, t);
    num[t] = st[0];
    double c = 0.0;
    for (int l = 1; l <= p; ++l) c += st[l];
    ctx[t] = c;
    mass[t] = st[p + 1];
    diff[t] = p * st[p + 2];
    w[t] = st[p + 3];
  }
  const double big_w = pairwise_sum(w);
  const double h2 = model.bandwidth * model.bandwidth;
  const double numer = big_w * h2 + pairwise_sum(num) + pairwise_sum(ctx);
  const double denom = big_w + pairwise_sum(mass) + pairwise_sum(diff);
  if (!(denom > 0.0) || !(numer > 0.0)) return model.bandwidth;
  return std::sqrt(numer / denom);
}

MmTrainResult mm_train(const KdeMm& initial, const MmTrainingConfig& config) {
  initial.validate();
  require_gaussian(initial.kernel);
  if (config.max_iterations < 1 || !(config.relative_tolerance > 0.0))
    throw Error(ErrorKind::kConfig, "max_iterations must be >= 1 and relative_tolerance > 0");
  const double floor = config.bandwidth_floor > 0.0 ? config.bandwidth_floor
                                                    : 1e-6 * standard_deviation(initial.training.view());

  MmTrainResult result{initial, {}};
  TrainingReport& report = result.report;
  const LagMatrix rows = mm_exemplars(initial);
  report.degenerate_separation = !(minimum_separation(rows.lag(0)) > 0.0);
  report.notes = "initial bandwidth " + std::to_string(initial.bandwidth);
  auto check = [&](double f, int it) {
    if (!std::isfinite(f))
      throw Error(ErrorKind::kNumericalFailure,
                  "pseudo-log-likelihood is not finite at iteration " + std::to_string(it),
                  static_cast<std::size_t>(it));
  };

  if (config.mode == MmTrainingMode::kScalarNumeric) {
    const auto values = initial.training.view();
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    const double range = *hi_it - *lo_it;
    double d_min = minimum_separation(rows.lag(0));
    if (!(d_min > 0.0)) d_min = 1e-6 * range;
    double a = std::log(std::max(d_min / 10.0, floor));
    double b = std::log(10.0 * range);
    KdeMm probe = initial;
    auto objective = [&](double log_h) {
      probe.bandwidth = std::exp(log_h);
      return mm_pseudo_log_likelihood(probe, config.execution);
    };
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
    double fc = objective(c), fd = objective(d);
    // The trace holds the best objective seen so far, starting at the
    // initial bandwidth, so it never decreases.
    double best_f = mm_pseudo_log_likelihood(initial, config.execution);
    check(best_f, 0);
    record_objective(report, best_f);
    report.parameters.push_back({initial.bandwidth});
    for (int it = 1; it <= config.max_iterations; ++it) {
      if (past(config.deadline)) {
        report.timed_out = true;
        break;
      }
      if (fc >= fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - inv_phi * (b - a);
        fc = objective(c);
        check(fc, it);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + inv_phi * (b - a);
        fd = objective(d);
        check(fd, it);
      }
      report.iterations = it;
      if (std::max(fc, fd) > best_f) {
        best_f = std::max(fc, fd);
        result.model.bandwidth = std::exp(fc >= fd ? c : d);
      }
      record_objective(report, best_f);
      report.parameters.push_back({result.model.bandwidth});
      // Tolerance on the bracket in log h, i.e. on h relative to itself.
      if (b - a < config.relative_tolerance) {
        report.converged = true;
        break;
      }
    }
    return result;
  }

  const bool relaxed = config.mode == MmTrainingMode::kRelaxedGem;
  for (int it = 0; it < config.max_iterations; ++it) {
    if (past(config.deadline)) {
      report.timed_out = true;
      break;
    }
    double f = 0.0;
    const double h_new = std::max(mm_gem_update(result.model, relaxed, &f, config.execution), floor);
    check(f, it);
    const bool have_prev = !report.objective.empty();
    const double prev = have_prev ? report.objective.back() : f;
    record_objective(report, f);
    report.parameters.push_back({result.model.bandwidth});
    if (have_prev && relative_change_below(prev, f, config.relative_tolerance)) {
      report.converged = true;
      return result;
    }
    result.model.bandwidth = h_new;
    report.iterations = it + 1;
  }
  const double f = mm_pseudo_log_likelihood(result.model, config.execution);
  check(f, report.iterations);
  record_objective(report, f);
  report.parameters.push_back({result.model.bandwidth});
  return result;
}

const char* to_string(MmTrainingMode mode) {
  switch (mode) {
    case MmTrainingMode::kExactGem: return "exact_gem";
    case MmTrainingMode::kRelaxedGem: return "relaxed_gem";
    case MmTrainingMode::kScalarNumeric: return "scalar_numeric";
  }
  return "unknown";
}

MmTrainingMode mm_mode_from_string(std::string_view name) {
  if (name == "exact_gem" || name == "exact") return MmTrainingMode::kExactGem;
  if (name == "relaxed_gem" || name == "relaxed") return MmTrainingMode::kRelaxedGem;
  if (name == "scalar_numeric" || name == "numeric") return MmTrainingMode::kScalarNumeric;
  throw Error(ErrorKind::kConfig, "unknown KDE-MM training mode '" + std::string(name) + "'");
}

}  // namespace kdehmm
