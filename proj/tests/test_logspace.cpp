#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "tube/logspace.hpp"
#include "tube/rng.hpp"

using namespace tube;

TEST_CASE("log_sum_exp basics") {
  std::vector<double> v{std::log(0.25), std::log(0.75)};
  CHECK(log_sum_exp(v) == Catch::Approx(0.0).margin(1e-14));
  CHECK(log_sum_exp(std::vector<double>{kNegInf, kNegInf}) == kNegInf);
  CHECK(log_sum_exp(std::vector<double>{}) == kNegInf);
  CHECK(log_sum_exp(std::log(0.5), kNegInf) == Catch::Approx(std::log(0.5)));
}

TEST_CASE("log_mean_exp keeps zero contributions in the denominator") {
  // mean of {0.5, 0} = 0.25
  std::vector<double> v{std::log(0.5), kNegInf};
  CHECK(log_mean_exp(v) == Catch::Approx(std::log(0.25)).epsilon(1e-14));
  CHECK(log_mean_exp(std::vector<double>{kNegInf, kNegInf, kNegInf}) == kNegInf);
}

TEST_CASE("log_mean_exp is bit-exact on constant input") {
  const double l = -2.3025850929940457;
  std::vector<double> v(24, l);
  CHECK(log_mean_exp(v) == l);
  std::vector<double> dup{l, l};
  std::vector<double> one{l};
  CHECK(log_mean_exp(dup) == log_mean_exp(one));
}

TEST_CASE("log_mean_exp matches a linear-space oracle") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> probs(5);
    std::vector<double> logs(5);
    double mean = 0.0;
    for (int i = 0; i < 5; ++i) {
      probs[i] = rng.next_unit() + 1e-3;
      logs[i] = std::log(probs[i]);
      mean += probs[i] / 5.0;
    }
    CHECK(log_mean_exp(logs) == Catch::Approx(std::log(mean)).epsilon(1e-12));
  }
}

TEST_CASE("softmax handles -inf and ties") {
  std::vector<double> v{std::log(1.0), std::log(1.0), kNegInf};
  std::vector<double> w(3);
  softmax(v, w);
  CHECK(w[0] == Catch::Approx(0.5));
  CHECK(w[1] == Catch::Approx(0.5));
  CHECK(w[2] == 0.0);
}

TEST_CASE("rng streams replay and derive independently") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  bool differs = false;
  Rng a2(42);
  for (int i = 0; i < 100; ++i) differs |= (a2.next_u64() != c.next_u64());
  CHECK(differs);

  Rng d1 = derive_stream(9, {1, 2});
  Rng d2 = derive_stream(9, {1, 2});
  Rng d3 = derive_stream(9, {2, 1});
  CHECK(d1.next_u64() == d2.next_u64());
  CHECK(d1.next_u64() != d3.next_u64());
}

TEST_CASE("next_below is unbiased enough at small n") {
  Rng rng(5);
  int counts[3] = {0, 0, 0};
  const int draws = 90000;
  for (int i = 0; i < draws; ++i) ++counts[rng.next_below(3)];
  for (int c : counts) CHECK(std::abs(c / double(draws) - 1.0 / 3) < 0.01);
}
