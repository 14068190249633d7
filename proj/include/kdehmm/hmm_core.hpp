#pragma once

#include <Eigen/Dense>
#include <vector>

namespace kdehmm {

// Scaled forward-backward results over T scored steps and M states.
struct ForwardBackward {
  Eigen::MatrixXd gamma;         // M x T state occupancies
  Eigen::MatrixXd alpha_scaled;  // M x T, each column sums to 1
  Eigen::MatrixXd beta_scaled;   // M x T
  std::vector<double> log_scale;  // per-step log normalizers; they sum to the log-likelihood
  Eigen::MatrixXd expected_transitions;  // M x M, sum over t of pairwise posteriors
  double log_likelihood = 0.0;
};

// `log_emission` is M x T. Emissions are shifted by their per-step maximum
// before exponentiation, so only the relative scale within a step matters.
// Throws NumericalFailure (index = step) if a step has no finite mass.
ForwardBackward forward_backward(const Eigen::MatrixXd& log_emission, const Eigen::MatrixXd& transition,
                                 const Eigen::VectorXd& initial);

double forward_log_likelihood(const Eigen::MatrixXd& log_emission, const Eigen::MatrixXd& transition,
                              const Eigen::VectorXd& initial);

// Leading left eigenvector of a row-stochastic matrix, normalized to sum 1.
// Power iteration on the lazy chain (A + I) / 2 to tolerance 1e-12, with a
// linear solve as fallback.
Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& transition);

struct TransitionUpdate {
  Eigen::MatrixXd transition;
  Eigen::VectorXd stationary;
  std::vector<int> starved_states;  // rows left unchanged for lack of occupancy
  bool shortened = false;           // see guarded_transition_update
};

// Baum-Welch re-estimate from summed pairwise posteriors. Rows whose
// occupancy vanishes keep their previous values.
TransitionUpdate reestimate_transitions(const Eigen::MatrixXd& expected_transitions,
                                        const Eigen::MatrixXd& previous);

// Baum-Welch maximizes the transition terms of the EM auxiliary function but
// ignores that the initial distribution is the stationary vector of A. This
// variant backs off along the segment towards the previous A (halving the
// step) until the full transition part, initial term included, does not
// decrease, and keeps the previous A if no such step is found.
TransitionUpdate guarded_transition_update(const Eigen::MatrixXd& expected_transitions,
                                           const Eigen::VectorXd& initial_occupancy,
                                           const Eigen::MatrixXd& previous,
                                           const Eigen::VectorXd& previous_stationary);

// a_qq' = sum_t g_{q t} g_{q' t+1} / sum_t g_{q t} over t = 1..N-1.
Eigen::MatrixXd cooccurrence_transitions(const Eigen::MatrixXd& occupancy_guess);

bool is_row_stochastic(const Eigen::MatrixXd& m, double tol = 1e-12);

}  // namespace kdehmm
