#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kdehmm/numeric.hpp"

namespace kdehmm {

// Kernel shapes available for evaluation. Training updates are derived for the
// Gaussian shape only, so trainers reject anything else.
enum class KernelShape { kGaussian };

struct Kernel {
  KernelShape shape = KernelShape::kGaussian;
  friend bool operator==(const Kernel&, const Kernel&) = default;
};

std::string to_string(Kernel kernel);
Kernel kernel_from_string(std::string_view name);

double kernel_eval(Kernel kernel, double r);
double log_kernel_eval(Kernel kernel, double r);
// Standard draw from the kernel viewed as a density.
double kernel_draw(Kernel kernel, Rng& rng);

// Product-kernel KDE with one shared bandwidth across dimensions.
class KdeEstimate {
 public:
  // `centres` holds N points of `dimension` coordinates each, row-major.
  KdeEstimate(std::vector<double> centres, std::size_t dimension, double bandwidth,
              Kernel kernel = {});

  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t size() const noexcept { return centres_.size() / dimension_; }
  double bandwidth() const noexcept { return bandwidth_; }
  Kernel kernel() const noexcept { return kernel_; }
  std::span<const double> centre(std::size_t n) const {
    return std::span<const double>(centres_).subspan(n * dimension_, dimension_);
  }

 private:
  std::vector<double> centres_;
  std::size_t dimension_;
  double bandwidth_;
  Kernel kernel_;
};

double kde_logpdf(const KdeEstimate& est, std::span<const double> x);
double kde_pdf(const KdeEstimate& est, std::span<const double> x);

// How sample weights enter the effective sample size of the reference rule.
//   kReliability: Kish size (sum w)^2 / sum w^2; invariant to rescaling.
//   kFrequency:   sum w; integer weights behave like duplicated points.
enum class WeightKind { kReliability, kFrequency };

// Normal-reference-rule bandwidth sigma * (4 / ((d + 2) N_eff))^(1 / (d + 4)),
// sigma being the weighted standard deviation of `values`. An empty `weights`
// span means unit weights. Throws DegenerateSample on zero spread.
double reference_rule_bandwidth(std::span<const double> values, std::span<const double> weights,
                                int effective_dimension,
                                WeightKind kind = WeightKind::kReliability);

}  // namespace kdehmm
