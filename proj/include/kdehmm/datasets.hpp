#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kdehmm/numeric.hpp"
#include "kdehmm/time_series.hpp"

namespace kdehmm {

enum class NoiseFamily { kGaussian, kBimodalGmm };

const char* to_string(NoiseFamily family);
NoiseFamily noise_family_from_string(std::string_view name);

// Two-state switching AR(1): x_t = c x_{t-1} + sigma_{q_t} u_t with a
// symmetric state chain and unit-variance i.i.d. u_t.
struct SyntheticSpec {
  double ar_coefficient = 2.0 / 3.0;
  double noise_stds[2] = {1.0, 5.0};
  double stay_probability = 0.8;
  NoiseFamily noise_family = NoiseFamily::kGaussian;
  std::size_t length = 1000;
  std::uint64_t seed = 0;
  std::size_t burn_in = 1000;
  // Pin the chain to one state (used to check stationary moments).
  std::optional<int> forced_state;

  void validate() const;
};

// Mixture of N(+mu, s^2) and N(-mu, s^2) with mu^2 + s^2 = 1.
inline const double kGmmMean = std::sqrt(36.0 / 37.0);
inline const double kGmmStd = 1.0 / std::sqrt(37.0);

double draw_unit_noise(NoiseFamily family, Rng& rng);

struct SyntheticData {
  TimeSeries series;
  std::vector<int> states;  // 0 = quiet (sigma_1), 1 = volatile (sigma_2)
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

// Chaotic test signal for when no recorded series is at hand: the z
// coordinate of the Lorenz system sampled every 0.1 time units and rounded
// to 8-bit integers, giving a quantized oscillation of irregular amplitude.
TimeSeries chaotic_surrogate(std::size_t length, std::uint64_t seed);

enum class SeriesFormat { kPlain, kCsv };

// Plain: one value per line, blank lines ignored. CSV: header row, then the
// column named `column` (or with that 0-based index when it is all digits).
TimeSeries parse_series(std::string_view text, SeriesFormat format, const std::string& column = "0",
                        const std::string& source = {});
TimeSeries load_series(const std::string& path, SeriesFormat format, const std::string& column = "0");
SeriesFormat series_format_from_path(const std::string& path);
// One value per line with round-trip precision.
void write_series(const std::string& path, const TimeSeries& series);

// Adds i.i.d. uniform(-amplitude, amplitude) noise.
TimeSeries dequantize(const TimeSeries& series, double amplitude, std::uint64_t seed);

struct OccupancyGuess {
  Eigen::MatrixXd gamma_hat;  // M x N
  std::string method;
};

// Two states: steps whose absolute difference from the previous value is at
// most the median absolute difference go to state 0; t = 0 is split evenly.
OccupancyGuess threshold_occupancies(const TimeSeries& series);

struct PeakOptions {
  double prominence_fraction = 0.25;  // times the interquartile range
  std::size_t min_spacing = 3;
};

// Indices of accepted cycle peaks in increasing order.
std::vector<std::size_t> find_peaks(const TimeSeries& series, const PeakOptions& options = {});

// Phase 2 pi k at the k-th peak, natural cubic spline in between, linear
// continuation with the end slopes outside.
std::vector<double> instantaneous_phase(std::size_t length, const std::vector<std::size_t>& peaks);

// Triangular soft quantization of a phase track into M states.
Eigen::MatrixXd occupancies_from_phase(const std::vector<double>& phase, int states);

// Throws NoCycleStructure when fewer than two peaks are found.
OccupancyGuess phase_occupancies(const TimeSeries& series, int states, const PeakOptions& options = {});

}  // namespace kdehmm
