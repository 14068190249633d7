#include <doctest.h>

#include <cmath>
#include <random>

#include "kdehmm/kcde_pass.hpp"
#include "kdehmm/lag_matrix.hpp"
#include "support.hpp"

using namespace kdehmm;

namespace {

KernelBank random_bank(std::mt19937_64& rng, int states, int order, std::size_t exemplars) {
  std::uniform_real_distribution<double> uni(0.3, 1.3);
  KernelBank bank;
  bank.states = states;
  bank.order = order;
  bank.exemplars = exemplars;
  for (int i = 0; i < states * (order + 1); ++i) bank.bandwidths.push_back(uni(rng));
  for (int q = 0; q < states; ++q) {
    std::vector<double> w(exemplars);
    double s = 0.0;
    for (auto& v : w) s += (v = uni(rng));
    for (double v : w) bank.log_weights.push_back(std::log(v / s));
  }
  return bank;
}

std::vector<double> random_series(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> normal;
  std::vector<double> y(n);
  for (auto& v : y) v = normal(rng);
  return y;
}

}  // namespace

TEST_CASE("reverse Jensen G") {
  CHECK(reverse_jensen_g(0.1) == doctest::Approx(0.261350).epsilon(1e-6));
  CHECK(reverse_jensen_g(1.0) == doctest::Approx(1.189172).epsilon(1e-6));
  CHECK(reverse_jensen_g(1.0) - 5.0 / 6.0 == doctest::Approx(0.355839).epsilon(1e-5));
  for (double x : {1e-300, 1e-20, 0.01, 0.1, 0.16, 0.3, 0.5, 1.0})
    CHECK(reverse_jensen_g(x) == doctest::Approx(oracle::g_closed(x)).epsilon(1e-13));
  const double a = reverse_jensen_g(1.0 / 6.0 - 1e-13), b = reverse_jensen_g(1.0 / 6.0 + 1e-13);
  CHECK(std::abs(a - b) < 1e-12);
  CHECK(reverse_jensen_g(0.0) == 0.0);
}

TEST_CASE("lag matrices") {
  const std::vector<double> y = {1, 2, 3, 4, 5};
  const LagMatrix t = LagMatrix::truncated(y, 2);
  CHECK(t.rows() == 3);
  CHECK(t.at(0, 0) == 3);
  CHECK(t.at(0, 1) == 2);
  CHECK(t.at(0, 2) == 1);
  const LagMatrix p = LagMatrix::periodic(y, 2);
  CHECK(p.rows() == 5);
  CHECK(p.at(0, 0) == 1);
  CHECK(p.at(0, 1) == 5);
  CHECK(p.at(0, 2) == 4);
  CHECK(p.at(1, 2) == 5);
}

TEST_CASE("sweep matches direct sums") {
  std::mt19937_64 rng(21);
  for (int order : {0, 1, 2}) {
    const auto y = random_series(rng, 30);
    KdeHmm m = oracle::random_hmm(rng, 30, 2, order);
    m.training = TimeSeries(y);
    const LagMatrix rows = LagMatrix::truncated(y, order);
    PassOptions opt;
    opt.exclude_self = true;
    const PassResult r = kcde_pass(rows, rows, hmm_kernel_bank(m), opt, Execution::kSerial);
    for (int q = 0; q < 2; ++q)
      for (std::size_t t = 0; t < rows.rows(); ++t) {
        const double direct = oracle::emission(m, q, y, t + order, static_cast<long>(t));
        CHECK(r.log_emission(q, t) == doctest::Approx(std::log(direct)).epsilon(1e-12));
      }
  }
}

TEST_CASE("serial, parallel and reference sweeps agree") {
  std::mt19937_64 rng(8);
  const auto y = random_series(rng, 120);
  for (int order : {0, 1, 2}) {
    const LagMatrix rows = LagMatrix::truncated(y, order);
    const KernelBank bank = random_bank(rng, 3, order, rows.rows());
    for (BoundKind bound : {BoundKind::kNone, BoundKind::kHmmExact, BoundKind::kHmmRelaxed}) {
      PassOptions opt;
      opt.exclude_self = true;
      opt.bound = bound;
      opt.weight_terms = bound == BoundKind::kHmmExact;
      const PassResult s = kcde_pass(rows, rows, bank, opt, Execution::kSerial);
      set_thread_count(3);
      const PassResult p = kcde_pass(rows, rows, bank, opt, Execution::kParallel);
      set_thread_count(0);
      const PassResult ref = reference::kcde_pass(rows, rows, bank, opt);
      CHECK(s.log_num == p.log_num);
      CHECK(s.log_den == p.log_den);
      CHECK(s.stats == p.stats);
      for (std::size_t i = 0; i < s.log_num.size(); ++i) {
        CHECK(s.log_num[i] == doctest::Approx(ref.log_num[i]).epsilon(1e-11));
        CHECK(s.log_den[i] == doctest::Approx(ref.log_den[i]).epsilon(1e-11));
      }
      REQUIRE(s.stats.size() == ref.stats.size());
      for (std::size_t i = 0; i < s.stats.size(); ++i)
        CHECK(s.stats[i] == doctest::Approx(ref.stats[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("tied-bandwidth bounds agree with the reference") {
  std::mt19937_64 rng(81);
  const auto y = random_series(rng, 80);
  const LagMatrix rows = LagMatrix::periodic(y, 2);
  KernelBank bank;
  bank.order = 2;
  bank.exemplars = rows.rows();
  bank.bandwidths.assign(3, 0.7);
  bank.log_weights.assign(rows.rows(), 0.0);
  for (BoundKind bound : {BoundKind::kMmExact, BoundKind::kMmRelaxed}) {
    PassOptions opt;
    opt.exclude_self = true;
    opt.bound = bound;
    const PassResult s = kcde_pass(rows, rows, bank, opt, Execution::kSerial);
    const PassResult ref = reference::kcde_pass(rows, rows, bank, opt);
    for (std::size_t i = 0; i < s.stats.size(); ++i) CHECK(s.stats[i] == doctest::Approx(ref.stats[i]).epsilon(1e-9));
  }
}

TEST_CASE("responsibility sums") {
  std::mt19937_64 rng(2);
  KdeHmm m = oracle::random_hmm(rng, 40, 2, 1);
  const Posteriors post = hmm_forward_backward(m, m.training, true, Execution::kSerial);
  for (int q = 0; q < 2; ++q)
    for (std::size_t s = 0; s < post.pass.rows; ++s) {
      const Responsibilities r = hmm_responsibilities(m, m.training, post, q, s);
      double num = 0.0, den = 0.0;
      for (double v : r.num) num += v;
      for (double v : r.den) den += v;
      CHECK(num == doctest::Approx(1.0).epsilon(1e-10));
      CHECK(den == doctest::Approx(1.0).epsilon(1e-10));
      CHECK(r.num[s] == 0.0);
      CHECK(r.den[s] == 0.0);
    }
}
