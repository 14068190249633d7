#include "kdehmm/kernel.hpp"

#include <cmath>
#include <random>

#include "kdehmm/error.hpp"

namespace kdehmm {

std::string to_string(Kernel kernel) {
  switch (kernel.shape) {
    case KernelShape::kGaussian: return "gaussian";
  }
  return "unknown";
}

Kernel kernel_from_string(std::string_view name) {
  if (name == "gaussian") return Kernel{KernelShape::kGaussian};
  throw Error(ErrorKind::kParse, "unknown kernel '" + std::string(name) + "'");
}

double log_kernel_eval(Kernel kernel, double r) {
  switch (kernel.shape) {
    case KernelShape::kGaussian: return -0.5 * r * r - kLogSqrt2Pi;
  }
  return kNegInf;
}

double kernel_eval(Kernel kernel, double r) { return std::exp(log_kernel_eval(kernel, r)); }

double kernel_draw(Kernel kernel, Rng& rng) {
  switch (kernel.shape) {
    case KernelShape::kGaussian: {
      std::normal_distribution<double> normal(0.0, 1.0);
      return normal(rng);
    }
  }
  return 0.0;
}

KdeEstimate::KdeEstimate(std::vector<double> centres, std::size_t dimension, double bandwidth,
                         Kernel kernel)
    : centres_(std::move(centres)), dimension_(dimension), bandwidth_(bandwidth), kernel_(kernel) {
  if (dimension_ == 0) throw Error(ErrorKind::kInvalidArgument, "KDE dimension must be positive");
  if (!(bandwidth_ > 0.0) || !std::isfinite(bandwidth_))
    throw Error(ErrorKind::kInvalidArgument, "KDE bandwidth must be positive and finite");
  if (centres_.size() % dimension_ != 0)
    throw Error(ErrorKind::kInvalidArgument, "KDE centres are not a whole number of points");
}

double kde_logpdf(const KdeEstimate& est, std::span<const double> x) {
  const std::size_t n_centres = est.size();
  if (n_centres == 0) throw Error(ErrorKind::kInvalidArgument, "KDE has no centres");
  if (x.size() != est.dimension())
    throw Error(ErrorKind::kInvalidArgument, "KDE query has the wrong dimension");
  const double h = est.bandwidth();
  const double log_norm =
      -static_cast<double>(est.dimension()) * std::log(h) - std::log(static_cast<double>(n_centres));
  std::vector<double> terms(n_centres);
  for (std::size_t n = 0; n < n_centres; ++n) {
    auto c = est.centre(n);
    double s = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) s += log_kernel_eval(est.kernel(), (x[d] - c[d]) / h);
    terms[n] = s;
  }
  return log_sum_exp(terms) + log_norm;
}

double kde_pdf(const KdeEstimate& est, std::span<const double> x) {
  return std::exp(kde_logpdf(est, x));
}

double reference_rule_bandwidth(std::span<const double> values, std::span<const double> weights,
                                int effective_dimension, WeightKind kind) {
  if (effective_dimension < 1)
    throw Error(ErrorKind::kInvalidArgument, "effective dimension must be at least 1");
  if (!weights.empty() && weights.size() != values.size())
    throw Error(ErrorKind::kInvalidArgument, "weights and values differ in length");
  auto weight = [&](std::size_t i) { return weights.empty() ? 1.0 : weights[i]; };

  double sum_w = 0.0, sum_w2 = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double w = weight(i);
    if (w < 0.0 || !std::isfinite(w))
      throw Error(ErrorKind::kInvalidArgument, "weights must be finite and non-negative");
    sum_w += w;
    sum_w2 += w * w;
    mean += w * values[i];
  }
  if (!(sum_w > 0.0)) throw Error(ErrorKind::kInvalidArgument, "weights are all zero");
  mean /= sum_w;
  double ss = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double d = values[i] - mean;
    ss += weight(i) * d * d;
  }

  // Unbiased weighted variance and the matching effective sample size.
  double denom = 0.0, n_eff = 0.0;
  if (kind == WeightKind::kFrequency) {
    denom = sum_w - 1.0;
    n_eff = sum_w;
  } else {
    denom = sum_w - sum_w2 / sum_w;
    n_eff = sum_w * sum_w / sum_w2;
  }
  if (!(denom > 0.0) || !(ss > 0.0))
    throw Error(ErrorKind::kDegenerateSample, "sample has zero weighted variance");
  const double sigma = std::sqrt(ss / denom);
  const double d = effective_dimension;
  return sigma * std::pow(4.0 / ((d + 2.0) * n_eff), 1.0 / (d + 4.0));
}

}  // namespace kdehmm
