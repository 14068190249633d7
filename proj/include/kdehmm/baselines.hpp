#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "kdehmm/hmm_core.hpp"
#include "kdehmm/time_series.hpp"
#include "kdehmm/training_report.hpp"

namespace kdehmm {

// x_t = intercept + sum_l coefficients[l-1] x_{t-l} + noise_std * u_t, u_t ~ N(0, 1).
struct ArModel {
  int order = 0;
  std::vector<double> coefficients;
  double intercept = 0.0;
  double noise_std = 1.0;

  void validate() const;
  double mean_given(std::span<const double> series, std::size_t t) const;
};

// Least-squares fit over t = p..N-1, noise from the residual RMS.
// Throws RankDeficient when the design matrix is singular.
ArModel ar_fit(const TimeSeries& series, int order);

// Sum of conditional log-densities over t = p..T-1.
double ar_score(const ArModel& model, const TimeSeries& heldout);

// Gaussian AR-HMM; order 0 gives a Gaussian-output HMM.
struct ArHmm {
  int states = 1;
  int order = 0;
  Eigen::MatrixXd transition;
  Eigen::VectorXd stationary;
  std::vector<ArModel> emissions;

  void validate() const;
};

struct ArHmmFitConfig {
  int max_iterations = 500;
  double relative_tolerance = 1e-8;
  Deadline deadline;
};

struct ArHmmFitResult {
  ArHmm model;
  TrainingReport report;
};

// Pooled AR coefficients with per-state noise from occupancy-weighted residuals
// and co-occurrence transitions; `occupancy_guess` is M x N.
ArHmm ar_hmm_initialize(const TimeSeries& series, const Eigen::MatrixXd& occupancy_guess, int order);

// EM with occupancy-weighted least squares per state.
ArHmmFitResult ar_hmm_fit(const TimeSeries& series, const Eigen::MatrixXd& occupancy_guess, int order,
                          const ArHmmFitConfig& config = {});
ArHmmFitResult ar_hmm_train(const ArHmm& initial, const TimeSeries& series, const ArHmmFitConfig& config = {});

// M x (T - p) conditional log-densities.
Eigen::MatrixXd ar_hmm_log_emissions(const ArHmm& model, const TimeSeries& series);

double ar_hmm_score(const ArHmm& model, const TimeSeries& heldout);

struct ArHmmSample {
  TimeSeries series;
  std::vector<int> states;
};

// Starts from a zero context and a stationary state and discards `burn_in` steps.
ArHmmSample ar_hmm_sample(const ArHmm& model, std::size_t length, std::uint64_t rng_seed, int burn_in = 1000);

}  // namespace kdehmm
