#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace kdehmm {

using Deadline = std::optional<std::chrono::steady_clock::time_point>;

// Per-run training record. objective[i] is the (pseudo-)log-likelihood of the
// model after i updates, so objective.back() belongs to the returned model.
struct TrainingReport {
  std::vector<double> objective;
  std::vector<std::vector<double>> parameters;  // parameter snapshot per objective entry
  int iterations = 0;
  bool converged = false;
  bool timed_out = false;
  int decreasing_steps = 0;
  double largest_relative_decrease = 0.0;
  // Some pair of training points coincides, so the guarantees that need a
  // positive minimum separation do not apply.
  bool degenerate_separation = false;
  std::vector<int> starved_states;
  std::string notes;
};

// A step counts as decreasing when it loses more than this fraction of |f|;
// smaller changes are rounding noise.
inline constexpr double kDecreaseNoise = 1e-12;

inline void record_objective(TrainingReport& report, double f) {
  if (!report.objective.empty()) {
    const double prev = report.objective.back();
    const double rel = (prev - f) / std::max(std::abs(prev), 1e-300);
    if (rel > kDecreaseNoise) {
      ++report.decreasing_steps;
      report.largest_relative_decrease = std::max(report.largest_relative_decrease, rel);
    }
  }
  report.objective.push_back(f);
}

inline bool relative_change_below(double prev, double cur, double tol) {
  return std::abs(cur - prev) <= tol * std::max(std::abs(prev), 1e-300);
}

inline bool past(const Deadline& deadline) {
  return deadline && std::chrono::steady_clock::now() >= *deadline;
}

}  // namespace kdehmm
