#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "modadc/modcore.hpp"
#include "modadc/rng.hpp"

using namespace modadc;

TEST_CASE("mod_reduce basics") {
  CHECK(mod_reduce(7.25, 4.0) == doctest::Approx(3.25).epsilon(1e-12));
  CHECK(mod_reduce(-0.5, 4.0) == doctest::Approx(3.5).epsilon(1e-12));
  CHECK(mod_reduce(8.0, 4.0) == 0.0);
  CHECK(mod_reduce(0.0, 4.0) == 0.0);
  // near-lattice values collapse to 0
  CHECK(mod_reduce(4.0 - 1e-12, 4.0) == 0.0);
  CHECK(mod_reduce(1e-12, 4.0) == 0.0);
  CHECK_THROWS_AS(mod_reduce(1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(mod_reduce(std::nan(""), 4.0), std::invalid_argument);
}

TEST_CASE("mod_reduce is shift invariant over the lattice") {
  Rng rng(11);
  const double delta = std::exp2(4.7);  // non-integer rate
  const double tol = 1e-9 * delta;
  for (int t = 0; t < 2000; ++t) {
    const double x = (rng.next_double() - 0.5) * 50.0;
    const long long k =
        static_cast<long long>(std::floor((rng.next_double() - 0.5) * 2097152.0));
    const double a = mod_reduce(x, delta);
    const double b = mod_reduce(x + static_cast<double>(k) * delta, delta);
    const double d = std::fabs(a - b);
    CHECK(std::min(d, std::fabs(d - delta)) <= tol);
  }
}

TEST_CASE("centered_mod lands in the symmetric window") {
  CHECK(centered_mod(3.6, 4.0) == doctest::Approx(-0.4).epsilon(1e-12));
  CHECK(centered_mod(1.3, 4.0) == doctest::Approx(1.3).epsilon(1e-12));
  CHECK(centered_mod(2.0, 4.0) == doctest::Approx(-2.0));
  Rng rng(7);
  for (int t = 0; t < 2000; ++t) {
    const double y = (rng.next_double() - 0.5) * 1000.0;
    const double c = centered_mod(y, 8.0);
    CHECK(c >= -4.0);
    CHECK(c < 4.0);
  }
}

TEST_CASE("adc_sample undithered") {
  ModAdcParams p(2.0, 1.0, Dither::none);
  Rng rng(1);
  CHECK(p.modulo_size() == doctest::Approx(4.0));
  CHECK(adc_sample(5.3, p, rng).code == doctest::Approx(1.0));
  CHECK(adc_sample(-0.3, p, rng).code == doctest::Approx(3.0));
  CHECK(adc_sample(5.3, p, rng).dither == 0.0);
  CHECK_THROWS_AS(adc_sample(std::nan(""), p, rng), std::invalid_argument);
}

TEST_CASE("undithered code equals folded affine model") {
  // y = [alpha x + z] mod delta with z = floor(alpha x) - alpha x in (-1, 0]
  ModAdcParams p(3.3, 2.7, Dither::none);
  const double delta = p.modulo_size();
  Rng rng(5);
  for (int t = 0; t < 5000; ++t) {
    const double x = (rng.next_double() - 0.5) * 40.0;
    Rng unused(0);
    const double code = adc_sample(x, p, unused).code;
    const double z = std::floor(p.alpha * x) - p.alpha * x;
    CHECK(z <= 0.0);
    CHECK(z > -1.0);
    const double folded = mod_reduce(p.alpha * x + z, delta);
    CHECK(std::fabs(code - folded) <= 1e-9 * delta);
  }
}

TEST_CASE("subtractive dither whitens the wrap error") {
  // With u ~ U[0,1), z = floor(alpha x + u) - (alpha x + u) should be
  // U((-1, 0]) regardless of the input sequence. KS test at the 1e-3 level.
  ModAdcParams p(4.0, 1.9, Dither::subtractive);
  Rng rng(42);
  const int n = 100000;
  std::vector<double> z(n);
  for (int i = 0; i < n; ++i) {
    // deliberately structured, non-random inputs
    const double x = 3.0 * std::sin(0.001 * i) + 0.25 * i / n;
    const AdcSample s = adc_sample(x, p, rng);
    z[i] = std::floor(p.alpha * x + s.dither) - (p.alpha * x + s.dither);
    CHECK(z[i] <= 0.0);
    CHECK(z[i] > -1.0);
  }
  std::sort(z.begin(), z.end());
  double ks = 0.0;
  for (int i = 0; i < n; ++i) {
    const double cdf = z[i] + 1.0;  // U((-1,0]) cdf
    ks = std::max(ks, std::fabs(cdf - static_cast<double>(i) / n));
    ks = std::max(ks, std::fabs(cdf - static_cast<double>(i + 1) / n));
  }
  // critical value at significance 1e-3
  const double crit = 1.9495 / std::sqrt(static_cast<double>(n));
  CHECK(ks < crit);
}

TEST_CASE("chernoff_tail closed forms") {
  CHECK(chernoff_tail({1.7, 0.0}) == 1.0);
  CHECK(chernoff_tail({2.0, std::sqrt(2.0)}) == doctest::Approx(std::exp(-0.5)));
  CHECK(chernoff_tail({1.0, 1.0}) == doctest::Approx(0.6065307).epsilon(1e-6));
  // half-range tau at backoff 2: two-sided bound 2 exp(-24)
  const double delta_bits = 2.0;
  const double rate = 6.0;
  const double sigma_p_sq = std::exp2(2.0 * (rate - delta_bits)) / 12.0;
  const double tau = 0.5 * std::exp2(rate);
  const double two_sided = 2.0 * chernoff_tail({sigma_p_sq, tau});
  CHECK(two_sided == doctest::Approx(7.550269e-11).epsilon(1e-5));
  CHECK(two_sided < 1e-10);
  CHECK_THROWS_AS(chernoff_tail({0.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(chernoff_tail({1.0, -1.0}), std::invalid_argument);
}

TEST_CASE("tail bound dominates sampled gaussian-uniform mixtures") {
  // Z = 0.7 G + 1.1 U(-1/2,1/2) + 0.37 U(-1,1)
  const double sigma_eff_sq =
      0.7 * 0.7 + 1.1 * 1.1 / 12.0 + 0.37 * 0.37 / 3.0;
  Rng rng(2024);
  const int n = 2000000;
  const double sigma = std::sqrt(sigma_eff_sq);
  const std::vector<double> taus = {0.3 * sigma, 0.8 * sigma, 1.3 * sigma,
                                    1.9 * sigma, 2.6 * sigma, 3.2 * sigma};
  std::vector<long> counts(taus.size(), 0);
  for (int i = 0; i < n; ++i) {
    const double z = 0.7 * rng.next_gaussian() +
                     1.1 * (rng.next_double() - 0.5) +
                     0.37 * (2.0 * rng.next_double() - 1.0);
    for (size_t j = 0; j < taus.size(); ++j)
      if (z > taus[j]) ++counts[j];
  }
  for (size_t j = 0; j < taus.size(); ++j) {
    const double freq = static_cast<double>(counts[j]) / n;
    const double bound = chernoff_tail({sigma_eff_sq, taus[j]});
    const double se = std::sqrt(std::max(freq * (1.0 - freq), 1.0 / n) / n);
    CHECK(freq <= bound + 3.0 * se);
  }
}

TEST_CASE("block backoff value") {
  const double d = backoff_for_block(2048.0, 1e-3);
  CHECK(d == doctest::Approx(1.671729).epsilon(1e-6));
  CHECK(std::fabs(d - 1.6717) < 5e-4);
  // more samples or a tighter eps both demand more backoff
  CHECK(backoff_for_block(4096.0, 1e-3) > d);
  CHECK(backoff_for_block(2048.0, 1e-4) > d);
  CHECK_THROWS_AS(backoff_for_block(0.5, 1e-3), std::invalid_argument);
  CHECK_THROWS_AS(backoff_for_block(2048.0, 0.0), std::invalid_argument);
}

TEST_CASE("rate_for_backoff round trip") {
  const double delta_bits = 1.5;
  const double rate = 7.25;
  const double sigma_p_sq = std::exp2(2.0 * (rate - delta_bits)) / 12.0;
  CHECK(rate_for_backoff(sigma_p_sq, delta_bits) == doctest::Approx(rate));
  CHECK_THROWS_AS(rate_for_backoff(-1.0, 1.0), std::invalid_argument);
}

TEST_CASE("rng streams are reproducible and decoupled") {
  Rng a = Rng::derive(99, 7, "trial");
  Rng b = Rng::derive(99, 7, "trial");
  Rng c = Rng::derive(99, 8, "trial");
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  bool same = true;
  Rng a2 = Rng::derive(99, 7, "trial");
  for (int i = 0; i < 100; ++i) same = same && (a2.next_u64() == c.next_u64());
  CHECK_FALSE(same);
  // gaussian moments sanity
  Rng g(123);
  double m = 0.0, v = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = g.next_gaussian();
    m += x;
    v += x * x;
  }
  m /= n;
  v = v / n - m * m;
  CHECK(std::fabs(m) < 0.01);
  CHECK(v == doctest::Approx(1.0).epsilon(0.02));
}
