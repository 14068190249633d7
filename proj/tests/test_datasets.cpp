#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

#include "kdehmm/datasets.hpp"
#include "kdehmm/error.hpp"
#include "kdehmm/serialization.hpp"

using namespace kdehmm;

namespace {

double variance(const std::vector<double>& v) {
  double m = 0.0, s = 0.0;
  for (double x : v) m += x;
  m /= v.size();
  for (double x : v) s += (x - m) * (x - m);
  return s / v.size();
}

std::string temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "kdehmm_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

}  // namespace

TEST_CASE("forced quiet state has the AR(1) stationary variance") {
  SyntheticSpec spec;
  spec.length = 1000000;
  spec.seed = 3;
  spec.forced_state = 0;
  const auto data = generate_synthetic(spec);
  CHECK(variance(data.series.values) == doctest::Approx(1.0 / (1.0 - 4.0 / 9.0)).epsilon(0.03));
}

TEST_CASE("bimodal noise has unit variance") {
  Rng rng(9);
  std::vector<double> u(1000000);
  for (auto& v : u) v = draw_unit_noise(NoiseFamily::kBimodalGmm, rng);
  CHECK(variance(u) == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("state trace stays with probability 0.8") {
  SyntheticSpec spec;
  spec.length = 100000;
  spec.seed = 4;
  const auto data = generate_synthetic(spec);
  std::size_t stay = 0;
  for (std::size_t t = 1; t < data.states.size(); ++t) stay += data.states[t] == data.states[t - 1];
  CHECK(static_cast<double>(stay) / (data.states.size() - 1) == doctest::Approx(0.8).epsilon(0.0125));
}

TEST_CASE("generator is reproducible") {
  SyntheticSpec spec;
  spec.length = 500;
  spec.seed = 77;
  spec.noise_family = NoiseFamily::kBimodalGmm;
  CHECK(generate_synthetic(spec).series.values == generate_synthetic(spec).series.values);
  spec.seed = 78;
  SyntheticSpec other = spec;
  other.seed = 77;
  CHECK(generate_synthetic(spec).series.values != generate_synthetic(other).series.values);
}

TEST_CASE("series parsing") {
  CHECK(parse_series("1\n2\n3\n", SeriesFormat::kPlain).values == std::vector<double>{1, 2, 3});
  CHECK(parse_series("a,b\n1,10\n2,20\n", SeriesFormat::kCsv, "b").values == std::vector<double>{10, 20});
  CHECK(parse_series("a,b\n1,10\n2,20\n", SeriesFormat::kCsv, "0").values == std::vector<double>{1, 2});
  try {
    parse_series("1\nx\n", SeriesFormat::kPlain);
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kParse);
    CHECK(e.index().value() == 2);
  }
  CHECK_THROWS_AS(parse_series("a\n1\n", SeriesFormat::kCsv, "missing"), Error);
}

TEST_CASE("write then load is the identity") {
  SyntheticSpec spec;
  spec.length = 300;
  spec.seed = 2;
  const TimeSeries s = generate_synthetic(spec).series;
  const std::string path = temp_path("roundtrip.txt");
  write_series(path, s);
  CHECK(load_series(path, SeriesFormat::kPlain).values == s.values);
  CHECK_THROWS_AS(load_series(temp_path("does_not_exist.txt"), SeriesFormat::kPlain), Error);
}

TEST_CASE("dequantize") {
  std::vector<double> ints(2000);
  for (std::size_t i = 0; i < ints.size(); ++i) ints[i] = static_cast<double>(i % 7);
  const TimeSeries in(ints, "ints");
  const TimeSeries out = dequantize(in, 0.5, 12);
  CHECK(out.size() == in.size());
  CHECK(out.source == in.source);
  std::set<double> distinct(out.values.begin(), out.values.end());
  CHECK(distinct.size() == out.size());
  double shift = 0.0;
  for (std::size_t i = 0; i < ints.size(); ++i) shift += out[i] - in[i];
  shift /= ints.size();
  CHECK(std::abs(shift) < 3.0 * 0.5 / std::sqrt(3.0 * ints.size()));
  CHECK(dequantize(in, 0.5, 12).values == out.values);
}

TEST_CASE("threshold occupancies") {
  const auto g = threshold_occupancies(TimeSeries({0, 0, 10, 10})).gamma_hat;
  CHECK(g(0, 0) == 0.5);
  CHECK(g(0, 1) == 1.0);
  CHECK(g(0, 2) == 0.0);
  CHECK(g(0, 3) == 1.0);
  const auto c = threshold_occupancies(TimeSeries(std::vector<double>(6, 3.0))).gamma_hat;
  for (Eigen::Index t = 1; t < 6; ++t) CHECK(c(0, t) == 1.0);
  for (Eigen::Index t = 0; t < 6; ++t) CHECK(c.col(t).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("phase occupancies") {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  SUBCASE("grid phases are one-hot") {
    std::vector<double> phase;
    for (int q = 0; q < 5; ++q) phase.push_back(two_pi * q / 5);
    const auto g = occupancies_from_phase(phase, 5);
    for (int q = 0; q < 5; ++q) {
      CHECK(g(q, q) == doctest::Approx(1.0).epsilon(1e-12));
      for (int r = 0; r < 5; ++r)
        if (r != q) CHECK(g(r, q) == 0.0);
    }
  }
  SUBCASE("linear ramp gives triangles") {
    const int M = 4;
    std::vector<double> phase(41);
    for (std::size_t t = 0; t < phase.size(); ++t) phase[t] = two_pi * t / 40.0;
    const auto g = occupancies_from_phase(phase, M);
    for (std::size_t t = 0; t < phase.size(); ++t) {
      const double u = phase[t] / (two_pi / M);  // position in state widths
      for (int q = 0; q < M; ++q) {
        double d = std::abs(u - q);
        d = std::min(d, M - d);
        CHECK(g(q, static_cast<Eigen::Index>(t)) == doctest::Approx(std::max(0.0, 1.0 - d)).epsilon(1e-12));
      }
      CHECK(g.col(static_cast<Eigen::Index>(t)).sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  SUBCASE("peaks of a clean oscillation") {
    std::vector<double> y(200);
    for (std::size_t t = 0; t < y.size(); ++t) y[t] = std::sin(two_pi * t / 20.0);
    const auto peaks = find_peaks(TimeSeries(y));
    REQUIRE(peaks.size() == 10);
    for (std::size_t k = 0; k < peaks.size(); ++k) CHECK(peaks[k] == 5 + 20 * k);
    const auto phase = instantaneous_phase(y.size(), peaks);
    CHECK(phase[25] == doctest::Approx(two_pi).epsilon(1e-12));
    CHECK(phase[35] == doctest::Approx(3.0 * std::numbers::pi).epsilon(1e-9));
    const auto g = phase_occupancies(TimeSeries(y), 3).gamma_hat;
    for (Eigen::Index t = 0; t < g.cols(); ++t) {
      CHECK(g.col(t).minCoeff() >= 0.0);
      CHECK(g.col(t).sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  SUBCASE("no cycles") {
    std::vector<double> ramp(50);
    for (std::size_t t = 0; t < ramp.size(); ++t) ramp[t] = static_cast<double>(t);
    CHECK_THROWS_AS(phase_occupancies(TimeSeries(ramp), 3), Error);
  }
}

TEST_CASE("chaotic surrogate is quantized and reproducible") {
  const TimeSeries s = chaotic_surrogate(1000, 1);
  CHECK(s.size() == 1000);
  for (double v : s.values) {
    CHECK(v == std::round(v));
    CHECK(v >= 0.0);
    CHECK(v <= 255.0);
  }
  CHECK(chaotic_surrogate(1000, 1).values == s.values);
  CHECK(find_peaks(s).size() > 20);
}
