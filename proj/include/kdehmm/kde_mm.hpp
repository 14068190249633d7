#pragma once

#include <cstdint>
#include <string_view>
#include <span>
#include <vector>

#include "kdehmm/kcde_pass.hpp"
#include "kdehmm/kernel.hpp"
#include "kdehmm/time_series.hpp"
#include "kdehmm/training_report.hpp"

namespace kdehmm {

// Markov model whose next-step density is a kernel conditional density
// estimate over the training series, with one bandwidth for all lags.
struct KdeMm {
  TimeSeries training;
  int order = 0;
  double bandwidth = 1.0;
  // Wrap contexts around the end of the training series so that every
  // training point is an exemplar and the implied process is stationary.
  bool periodic_extension = true;
  Kernel kernel{};

  // Throws InvalidArgument unless N > p + 1 and h > 0.
  void validate() const;
  std::size_t exemplar_count() const;
};

// Model with the bandwidth set by the normal reference rule in p + 1 dimensions.
KdeMm make_kde_mm(TimeSeries training, int order, bool periodic_extension = true);

// Exemplar rows (targets and contexts) the model's sums run over.
LagMatrix mm_exemplars(const KdeMm& model);

// log f(x | context); `context` is chronological (x_{t-p}, ..., x_{t-1}).
double mm_next_step_logpdf(const KdeMm& model, std::span<const double> context, double x);

enum class ContextMode {
  kTruncate,  // score t = p+1..T; the first p points are context only
  kWrap,      // also score the first p points with contexts wrapped from the end
};

double mm_sequence_logpdf(const KdeMm& model, const TimeSeries& sequence,
                          ContextMode mode = ContextMode::kTruncate, Execution exec = Execution::kParallel);

// Leave-one-out pseudo-log-likelihood of the training series.
double mm_pseudo_log_likelihood(const KdeMm& model, Execution exec = Execution::kParallel);

// Smallest |y_t - y_n| over distinct scored targets.
double minimum_separation(std::span<const double> values);

struct MmSample {
  TimeSeries series;
  std::vector<std::size_t> exemplars;  // training index of the exemplar behind each value
};

MmSample mm_sample(const KdeMm& model, std::span<const double> seed_context, std::size_t length,
                   std::uint64_t rng_seed);

enum class MmTrainingMode { kExactGem, kRelaxedGem, kScalarNumeric };

struct MmTrainingConfig {
  MmTrainingMode mode = MmTrainingMode::kExactGem;
  int max_iterations = 500;
  double relative_tolerance = 1e-6;
  // Values <= 0 select 1e-6 times the training standard deviation.
  double bandwidth_floor = 0.0;
  Deadline deadline;
  Execution execution = Execution::kParallel;
};

struct MmTrainResult {
  KdeMm model;
  TrainingReport report;
};

MmTrainResult mm_train(const KdeMm& model, const MmTrainingConfig& config);

// One fixed-point bandwidth update; returns the new bandwidth and reports
// the pseudo-log-likelihood at the input bandwidth.
double mm_gem_update(const KdeMm& model, bool relaxed, double* objective_before = nullptr,
                     Execution exec = Execution::kParallel);

const char* to_string(MmTrainingMode mode);
MmTrainingMode mm_mode_from_string(std::string_view name);

}  // namespace kdehmm
