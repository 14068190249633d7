#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "kdehmm/error.hpp"
#include "kdehmm/kernel.hpp"
#include "kdehmm/numeric.hpp"
#include "support.hpp"

using namespace kdehmm;

TEST_CASE("gaussian kernel values") {
  const Kernel k{};
  CHECK(kernel_eval(k, 0.0) == doctest::Approx(1.0 / std::sqrt(2.0 * M_PI)).epsilon(1e-15));
  CHECK(kernel_eval(k, 1.0) == doctest::Approx(std::exp(-0.5) / std::sqrt(2.0 * M_PI)).epsilon(1e-15));
  CHECK(kernel_eval(k, 1.0) == doctest::Approx(0.241970724519143).epsilon(1e-12));
  for (double r : {0.3, 1.7}) CHECK(kernel_eval(k, r) == kernel_eval(k, -r));
  CHECK(log_kernel_eval(k, 40.0) == doctest::Approx(-800.0 - 0.5 * std::log(2.0 * M_PI)));
}

TEST_CASE("kernel moments by quadrature") {
  const Kernel k{};
  using boost::math::quadrature::gauss_kronrod;
  auto m = [&](int power) {
    return gauss_kronrod<double, 61>::integrate([&](double r) { return std::pow(r, power) * kernel_eval(k, r); },
                                                -40.0, 40.0, 10, 1e-14);
  };
  CHECK(m(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(std::abs(m(1)) < 1e-12);
  CHECK(m(2) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("kde_pdf small instances") {
  KdeEstimate one({0.0}, 1, 1.0);
  const double x0 = 0.0;
  CHECK(kde_pdf(one, std::span<const double>(&x0, 1)) == doctest::Approx(0.398942280401433).epsilon(1e-12));
  KdeEstimate two({-1.0, 1.0}, 1, 1.0);
  const double direct = 0.5 * (oracle::phi(1.0) + oracle::phi(-1.0));
  CHECK(kde_pdf(two, std::span<const double>(&x0, 1)) == doctest::Approx(direct).epsilon(1e-14));
}

TEST_CASE("kde_pdf integrates to one") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal(0.0, 3.0);
  std::vector<double> c(25);
  for (auto& v : c) v = normal(rng);
  KdeEstimate est(c, 1, 0.4);
  const double total = oracle::integrate_bumps([&](double x) { return kde_pdf(est, std::span<const double>(&x, 1)); },
                                               c, 0.4);
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("two-dimensional product kernel") {
  KdeEstimate est({0.0, 0.0, 1.0, 2.0}, 2, 0.5);
  const double x[2] = {0.5, 1.0};
  const double direct = 0.5 * (oracle::phi(1.0) * oracle::phi(2.0) + oracle::phi(-1.0) * oracle::phi(-2.0)) / 0.25;
  CHECK(kde_pdf(est, x) == doctest::Approx(direct).epsilon(1e-14));
}

TEST_CASE("reference rule bandwidth") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  std::vector<double> y(5000);
  for (auto& v : y) v = normal(rng);
  double mean = 0.0, ss = 0.0;
  for (double v : y) mean += v;
  mean /= y.size();
  for (double v : y) ss += (v - mean) * (v - mean);
  const double sigma = std::sqrt(ss / (y.size() - 1.0));
  const double expected = sigma * std::pow(4.0 / (3.0 * y.size()), 0.2);
  CHECK(reference_rule_bandwidth(y, {}, 1) == doctest::Approx(expected).epsilon(1e-12));

  SUBCASE("scaling weights leaves h unchanged") {
    std::vector<double> w(y.size());
    std::uniform_real_distribution<double> uni(0.1, 2.0);
    for (auto& v : w) v = uni(rng);
    std::vector<double> w2(w);
    for (auto& v : w2) v *= 2.0;
    CHECK(reference_rule_bandwidth(y, w, 2) == doctest::Approx(reference_rule_bandwidth(y, w2, 2)).epsilon(1e-14));
  }

  SUBCASE("frequency weights match duplicated points") {
    const std::vector<double> pts = {0.0, 1.0, 3.0, 4.5};
    const std::vector<double> w = {3.0, 1.0, 1.0, 1.0};  // half the mass on the first point
    const std::vector<double> dup = {0.0, 0.0, 0.0, 1.0, 3.0, 4.5};
    CHECK(reference_rule_bandwidth(pts, w, 1, WeightKind::kFrequency) ==
          doctest::Approx(reference_rule_bandwidth(dup, {}, 1)).epsilon(1e-12));
  }

  SUBCASE("zero spread is rejected") {
    const std::vector<double> flat(10, 2.0);
    CHECK_THROWS_AS(reference_rule_bandwidth(flat, {}, 1), Error);
  }
}

TEST_CASE("log_sum_exp and pairwise_sum") {
  const std::vector<double> v = {-1000.0, -1000.0};
  CHECK(log_sum_exp(v) == doctest::Approx(-1000.0 + std::log(2.0)).epsilon(1e-15));
  const std::vector<double> none = {kNegInf, kNegInf};
  CHECK(log_sum_exp(none) == kNegInf);
  std::vector<double> many(1000, 0.1);
  CHECK(pairwise_sum(many) == doctest::Approx(100.0).epsilon(1e-14));
}

TEST_CASE("seed derivation is stable and tag dependent") {
  CHECK(derive_seed(1, hash_tag("a")) == derive_seed(1, hash_tag("a")));
  CHECK(derive_seed(1, hash_tag("a")) != derive_seed(1, hash_tag("b")));
  CHECK(derive_seed(1, hash_tag("a")) != derive_seed(2, hash_tag("a")));
}
