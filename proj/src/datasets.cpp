#include "kdehmm/datasets.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_interp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numbers>
#include <sstream>

#include "kdehmm/error.hpp"

namespace kdehmm {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

bool parse_double(std::string_view token, double& out) {
  token = trim(token);
  if (token.empty()) return false;
  if (token.front() == '+') token.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), out);
  return ec == std::errc() && ptr == token.data() + token.size() && std::isfinite(out);
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

// Linear-interpolation quantile of sorted data.
double quantile(const std::vector<double>& sorted, double prob) {
  const double pos = prob * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double prominence(std::span<const double> y, std::size_t i) {
  double left = y[i];
  for (std::size_t j = i; j-- > 0;) {
    if (y[j] > y[i]) break;
    left = std::min(left, y[j]);
  }
  double right = y[i];
  for (std::size_t j = i + 1; j < y.size(); ++j) {
    if (y[j] > y[i]) break;
    right = std::min(right, y[j]);
  }
  return y[i] - std::max(left, right);
}

}  // namespace

const char* to_string(NoiseFamily family) {
  return family == NoiseFamily::kGaussian ? "gaussian" : "bimodal_gmm";
}

NoiseFamily noise_family_from_string(std::string_view name) {
  if (name == "gaussian") return NoiseFamily::kGaussian;
  if (name == "bimodal_gmm" || name == "gmm") return NoiseFamily::kBimodalGmm;
  throw Error(ErrorKind::kConfig, "unknown noise family '" + std::string(name) + "'");
}

void SyntheticSpec::validate() const {
  if (!(stay_probability > 0.0 && stay_probability < 1.0))
    throw Error(ErrorKind::kConfig, "stay probability must lie in (0, 1)");
  if (!(noise_stds[0] > 0.0) || !(noise_stds[1] > 0.0))
    throw Error(ErrorKind::kConfig, "noise standard deviations must be positive");
  if (length == 0) throw Error(ErrorKind::kConfig, "synthetic length must be positive");
  if (forced_state && (*forced_state < 0 || *forced_state > 1))
    throw Error(ErrorKind::kConfig, "forced state must be 0 or 1");
}

double draw_unit_noise(NoiseFamily family, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  if (family == NoiseFamily::kGaussian) return normal(rng);
  std::bernoulli_distribution coin(0.5);
  const double mean = coin(rng) ? kGmmMean : -kGmmMean;
  return mean + kGmmStd * normal(rng);
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::bernoulli_distribution stay(spec.stay_probability);
  std::bernoulli_distribution coin(0.5);
  int q = spec.forced_state ? *spec.forced_state : (coin(rng) ? 1 : 0);
  double x = 0.0;
  SyntheticData out;
  out.series.values.reserve(spec.length);
  out.states.reserve(spec.length);
  for (std::size_t step = 0; step < spec.burn_in + spec.length; ++step) {
    if (step > 0 && !spec.forced_state && !stay(rng)) q = 1 - q;
    x = spec.ar_coefficient * x + spec.noise_stds[q] * draw_unit_noise(spec.noise_family, rng);
    if (step >= spec.burn_in) {
      out.series.values.push_back(x);
      out.states.push_back(q);
    }
  }
  out.series.source = std::string("synthetic ") + to_string(spec.noise_family) + " seed " + std::to_string(spec.seed);
  return out;
}

TimeSeries chaotic_surrogate(std::size_t length, std::uint64_t seed) {
  constexpr double sigma = 10.0, rho = 28.0, beta = 8.0 / 3.0;
  constexpr double dt = 0.01;
  constexpr int substeps = 10;
  constexpr int transient = 5000;
  Rng rng(seed);
  std::uniform_real_distribution<double> start(-1.0, 1.0);
  double s[3] = {start(rng), start(rng), 20.0 + start(rng)};
  auto deriv = [](const double* v, double* d) {
    d[0] = sigma * (v[1] - v[0]);
    d[1] = v[0] * (rho - v[2]) - v[1];
    d[2] = v[0] * v[1] - beta * v[2];
  };
  auto step = [&] {
    double k1[3], k2[3], k3[3], k4[3], tmp[3];
    deriv(s, k1);
    for (int i = 0; i < 3; ++i) tmp[i] = s[i] + 0.5 * dt * k1[i];
    deriv(tmp, k2);
    for (int i = 0; i < 3; ++i) tmp[i] = s[i] + 0.5 * dt * k2[i];
    deriv(tmp, k3);
    for (int i = 0; i < 3; ++i) tmp[i] = s[i] + dt * k3[i];
    deriv(tmp, k4);
    for (int i = 0; i < 3; ++i) s[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  };
  for (int i = 0; i < transient; ++i) step();
  TimeSeries out;
  out.values.reserve(length);
  for (std::size_t t = 0; t < length; ++t) {
    for (int i = 0; i < substeps; ++i) step();
    // z stays within roughly [0, 50]; map to 0..255.
    out.values.push_back(std::clamp(std::round(s[2] * 5.0), 0.0, 255.0));
  }
  out.source = "lorenz surrogate seed " + std::to_string(seed);
  return out;
}

TimeSeries parse_series(std::string_view text, SeriesFormat format, const std::string& column,
                        const std::string& source) {
  TimeSeries out;
  out.source = source;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  std::optional<std::size_t> col_index;
  bool header_done = format == SeriesFormat::kPlain;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    if (!header_done) {
      const auto cells = split_csv(line);
      for (std::size_t i = 0; i < cells.size(); ++i)
        if (cells[i] == column) col_index = i;
      if (!col_index && !column.empty() && std::all_of(column.begin(), column.end(), ::isdigit))
        col_index = static_cast<std::size_t>(std::stoul(column));
      if (!col_index || *col_index >= cells.size())
        throw Error(ErrorKind::kParse, "CSV header has no column '" + column + "'", line_no);
      header_done = true;
      continue;
    }
    std::string_view token = line;
    if (format == SeriesFormat::kCsv) {
      const auto cells = split_csv(line);
      if (*col_index >= cells.size())
        throw Error(ErrorKind::kParse, "line " + std::to_string(line_no) + " has too few columns", line_no);
      token = cells[*col_index];
    }
    double v = 0.0;
    if (!parse_double(token, v))
      throw Error(ErrorKind::kParse,
                  "line " + std::to_string(line_no) + ": cannot parse '" + std::string(trim(token)) + "'", line_no);
    out.values.push_back(v);
  }
  if (out.values.empty()) throw Error(ErrorKind::kParse, "no values in " + (source.empty() ? "input" : source));
  return out;
}

TimeSeries load_series(const std::string& path, SeriesFormat format, const std::string& column) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_series(buf.str(), format, column, path);
}

SeriesFormat series_format_from_path(const std::string& path) {
  const auto dot = path.rfind('.');
  if (dot != std::string::npos && path.substr(dot) == ".csv") return SeriesFormat::kCsv;
  return SeriesFormat::kPlain;
}

void write_series(const std::string& path, const TimeSeries& series) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw Error(ErrorKind::kIo, "cannot write '" + path + "'");
  for (double v : series.values) std::fprintf(f, "%.17g\n", v);
  if (std::fclose(f) != 0) throw Error(ErrorKind::kIo, "failed writing '" + path + "'");
}

TimeSeries dequantize(const TimeSeries& series, double amplitude, std::uint64_t seed) {
  if (!(amplitude > 0.0)) throw Error(ErrorKind::kInvalidArgument, "dequantization amplitude must be positive");
  Rng rng(seed);
  std::uniform_real_distribution<double> noise(-amplitude, amplitude);
  TimeSeries out = series;
  for (double& v : out.values) v += noise(rng);
  return out;
}

OccupancyGuess threshold_occupancies(const TimeSeries& series) {
  const std::size_t n = series.size();
  if (n < 2) throw Error(ErrorKind::kSequenceTooShort, "thresholding needs at least two points");
  std::vector<double> diffs(n - 1);
  for (std::size_t t = 1; t < n; ++t) diffs[t - 1] = std::abs(series[t] - series[t - 1]);
  std::vector<double> sorted = diffs;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  const double threshold = sorted.size() % 2 == 1 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
  OccupancyGuess g{Eigen::MatrixXd(2, static_cast<Eigen::Index>(n)), "threshold"};
  g.gamma_hat(0, 0) = 0.5;
  for (std::size_t t = 1; t < n; ++t) g.gamma_hat(0, static_cast<Eigen::Index>(t)) = diffs[t - 1] <= threshold ? 1.0 : 0.0;
  g.gamma_hat.row(1) = (1.0 - g.gamma_hat.row(0).array()).matrix();
  return g;
}

std::vector<std::size_t> find_peaks(const TimeSeries& series, const PeakOptions& options) {
  const auto y = series.view();
  const std::size_t n = y.size();
  if (n < 3) return {};
  std::vector<double> sorted(y.begin(), y.end());
  std::sort(sorted.begin(), sorted.end());
  const double min_prominence = options.prominence_fraction * (quantile(sorted, 0.75) - quantile(sorted, 0.25));

  std::vector<std::size_t> candidates;
  for (std::size_t i = 1; i + 1 < n;) {
    if (y[i] > y[i - 1]) {
      std::size_t j = i;
      while (j + 1 < n && y[j + 1] == y[i]) ++j;  // plateau
      if (j + 1 < n && y[j + 1] < y[i]) {
        if (prominence(y, i) >= min_prominence && prominence(y, i) > 0.0) candidates.push_back(i);
      }
      i = j + 1;
    } else {
      ++i;
    }
  }
  std::vector<std::size_t> order = candidates;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return y[a] > y[b]; });
  std::vector<std::size_t> kept;
  for (std::size_t c : order) {
    const bool clash = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return (c > k ? c - k : k - c) < options.min_spacing;
    });
    if (!clash) kept.push_back(c);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

std::vector<double> instantaneous_phase(std::size_t length, const std::vector<std::size_t>& peaks) {
  if (peaks.size() < 2) throw Error(ErrorKind::kNoCycleStructure, "fewer than two cycle peaks");
  const std::size_t k = peaks.size();
  std::vector<double> xs(k), ys(k);
  for (std::size_t i = 0; i < k; ++i) {
    xs[i] = static_cast<double>(peaks[i]);
    ys[i] = 2.0 * std::numbers::pi * static_cast<double>(i);
  }
  gsl_set_error_handler_off();
  const gsl_interp_type* type = k >= 3 ? gsl_interp_cspline : gsl_interp_linear;
  std::unique_ptr<gsl_interp, decltype(&gsl_interp_free)> interp(gsl_interp_alloc(type, k), gsl_interp_free);
  std::unique_ptr<gsl_interp_accel, decltype(&gsl_interp_accel_free)> acc(gsl_interp_accel_alloc(),
                                                                          gsl_interp_accel_free);
  if (!interp || !acc || gsl_interp_init(interp.get(), xs.data(), ys.data(), k) != GSL_SUCCESS)
    throw Error(ErrorKind::kNumericalFailure, "spline construction failed");
  const double slope_lo = gsl_interp_eval_deriv(interp.get(), xs.data(), ys.data(), xs.front(), acc.get());
  const double slope_hi = gsl_interp_eval_deriv(interp.get(), xs.data(), ys.data(), xs.back(), acc.get());
  std::vector<double> phase(length);
  for (std::size_t t = 0; t < length; ++t) {
    const double x = static_cast<double>(t);
    if (x < xs.front())
      phase[t] = ys.front() + slope_lo * (x - xs.front());
    else if (x > xs.back())
      phase[t] = ys.back() + slope_hi * (x - xs.back());
    else
      phase[t] = gsl_interp_eval(interp.get(), xs.data(), ys.data(), x, acc.get());
  }
  return phase;
}

Eigen::MatrixXd occupancies_from_phase(const std::vector<double>& phase, int states) {
  if (states < 1) throw Error(ErrorKind::kInvalidArgument, "state count must be positive");
  const Eigen::Index n = static_cast<Eigen::Index>(phase.size());
  Eigen::MatrixXd g(states, n);
  if (states == 1) {
    g.setOnes();
    return g;
  }
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (Eigen::Index t = 0; t < n; ++t) {
    for (int q = 0; q < states; ++q) {
      double d = std::fmod(phase[static_cast<std::size_t>(t)] - two_pi * q / states, two_pi);
      if (d < 0.0) d += two_pi;
      g(q, t) = std::max(0.0, 1.0 - states / two_pi * std::min(d, two_pi - d));
    }
    g.col(t) /= g.col(t).sum();
  }
  return g;
}

OccupancyGuess phase_occupancies(const TimeSeries& series, int states, const PeakOptions& options) {
  const auto peaks = find_peaks(series, options);
  if (peaks.size() < 2)
    throw Error(ErrorKind::kNoCycleStructure, "found " + std::to_string(peaks.size()) + " cycle peaks, need two");
  return {occupancies_from_phase(instantaneous_phase(series.size(), peaks), states), "phase"};
}

}  // namespace kdehmm
