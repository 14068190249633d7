#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "kdehmm/hmm_core.hpp"
#include "kdehmm/kcde_pass.hpp"
#include "kdehmm/kernel.hpp"
#include "kdehmm/time_series.hpp"
#include "kdehmm/training_report.hpp"

namespace kdehmm {

// Hidden Markov model whose state-conditional next-step densities are
// weighted kernel conditional density estimates over one training series.
// Exemplar n (0-based) is the training point at index n + p; states are
// numbered from 0.
struct KdeHmm {
  TimeSeries training;
  int order = 0;
  int states = 1;
  Eigen::MatrixXd transition;  // M x M, row-stochastic
  Eigen::VectorXd stationary;  // leading left eigenvector of `transition`
  Eigen::MatrixXd weights;     // M x (N - p), rows on the simplex
  Eigen::MatrixXd bandwidths;  // M x (p + 1); column 0 is the emission bandwidth
  Kernel kernel{};

  void validate() const;
  std::size_t exemplar_count() const { return training.size() - static_cast<std::size_t>(order); }
};

// Parameters in the layout the kernel sweep expects.
KernelBank hmm_kernel_bank(const KdeHmm& model);

// log f_q(x | context); `context` is chronological. `exclude_exemplar` drops
// one exemplar from both sums, as done when scoring training data.
double hmm_emission_logpdf(const KdeHmm& model, int state, std::span<const double> context, double x,
                           std::optional<std::size_t> exclude_exemplar = std::nullopt);

struct Posteriors {
  ForwardBackward fb;             // occupancies, scaled alpha/beta, pairwise sums
  Eigen::MatrixXd log_emission;   // M x T, T = sequence length - p
  PassResult pass;                // kernel-sum normalizers for responsibilities
  bool cross_validated = false;

  double log_likelihood() const { return fb.log_likelihood; }
  const Eigen::MatrixXd& gamma() const { return fb.gamma; }
};

// Scaled forward-backward over steps t = p..T-1. Cross-validation excludes
// exemplar t at step t and is only meaningful for the training series itself.
Posteriors hmm_forward_backward(const KdeHmm& model, const TimeSeries& sequence, bool cross_validate,
                                Execution exec = Execution::kParallel);

struct Responsibilities {
  std::vector<double> num;  // rho_num over exemplars
  std::vector<double> den;  // rho_den over exemplars
};

// Component responsibilities for one (state, step), recomputed from the
// stored normalizers rather than kept for every step.
Responsibilities hmm_responsibilities(const KdeHmm& model, const TimeSeries& sequence,
                                      const Posteriors& posteriors, int state, std::size_t step);

// Baum-Welch transition update with the stationary vector recomputed.
TransitionUpdate hmm_update_transitions(const Posteriors& posteriors, const Eigen::MatrixXd& previous);

enum class GemMode { kExact, kAccelerated };

struct GemStepOptions {
  GemMode mode = GemMode::kAccelerated;
  bool update_weights = false;  // only allowed in exact mode
  double bandwidth_floor = 0.0;  // <= 0 selects 1e-6 times the training standard deviation
  Execution execution = Execution::kParallel;
};

struct GemStepResult {
  KdeHmm model;
  double objective_before = 0.0;  // pseudo-log-likelihood of the input model
  std::vector<double> w_factor;   // W_q per state
  std::vector<int> starved_states;
  bool transition_step_shortened = false;
};

GemStepResult hmm_gem_step(const KdeHmm& model, const GemStepOptions& options);

struct HmmTrainingConfig {
  GemMode mode = GemMode::kAccelerated;
  bool update_weights = false;
  int max_iterations = 500;
  double relative_tolerance = 1e-6;
  double bandwidth_floor = 0.0;
  Deadline deadline;
  Execution execution = Execution::kParallel;
};

struct HmmTrainResult {
  KdeHmm model;
  TrainingReport report;
};

HmmTrainResult hmm_train(const KdeHmm& model, const HmmTrainingConfig& config);

// Cross-validated log-likelihood of the training series.
double hmm_pseudo_log_likelihood(const KdeHmm& model, Execution exec = Execution::kParallel);

// Weights from the occupancy guess, transitions from its co-occurrences, and
// one weighted reference-rule bandwidth per state shared by all lags.
// `occupancy_guess` is M x N with columns on the simplex.
KdeHmm hmm_initialize(const TimeSeries& series, const Eigen::MatrixXd& occupancy_guess, int order);

// Forward-algorithm log-probability of a held-out sequence; its first p
// values only serve as context.
double hmm_score(const KdeHmm& model, const TimeSeries& heldout, Execution exec = Execution::kParallel);

struct HmmSample {
  TimeSeries series;
  std::vector<int> states;
  std::vector<std::size_t> exemplars;  // training index behind each value
};

// The first context is a uniformly drawn training context; `burn_in` < 0
// selects 10 p discarded steps.
HmmSample hmm_sample(const KdeHmm& model, std::size_t length, std::uint64_t rng_seed, int burn_in = -1);

// argmax_q gamma_{q t} for t = p..T-1, ties to the lowest state.
std::vector<int> hmm_state_assignments(const KdeHmm& model, const TimeSeries& series,
                                       Execution exec = Execution::kParallel);

const char* to_string(GemMode mode);
GemMode gem_mode_from_string(std::string_view name);

}  // namespace kdehmm
