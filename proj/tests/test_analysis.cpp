#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "bht/analysis.hpp"
#include "bht/core.hpp"

using namespace bht;

namespace {

std::vector<double> sampled_cosine(double f_mhz, double dt_s, int n,
                                   double amp = 1.0, double phase = 0.0) {
  std::vector<double> x(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j)
    x[static_cast<std::size_t>(j)] = amp * std::cos(mhz(f_mhz) * j * dt_s + phase);
  return x;
}

}  // namespace

TEST_CASE("on-grid cosine lands in one bin at amplitude 1/sqrt(2)", "[analysis]") {
  const int n = 100;
  const double dt = ns(1.0);
  const auto x = sampled_cosine(100.0, dt, n);  // bin 10 of 51
  const auto s = folded_spectrum(x, dt);
  REQUIRE(s.amplitude.size() == 51);
  CHECK(std::abs(to_mhz(s.resolution) - 10.0) < 1e-12);
  CHECK(std::abs(s.amplitude[10] - 1.0 / std::sqrt(2.0)) < 1e-12);
  for (int k = 0; k < 51; ++k)
    if (k != 10) CHECK(s.amplitude[static_cast<std::size_t>(k)] < 1e-12);

  const auto peaks = dominant_peaks(s);
  REQUIRE(peaks.size() == 1);
  CHECK(std::abs(to_mhz(peaks[0].frequency) - 100.0) < 1e-9);
}

TEST_CASE("spectrum preserves total power exactly", "[analysis]") {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> gauss(0.3, 1.0);
  for (int n : {64, 101}) {
    std::vector<double> x(static_cast<std::size_t>(n));
    for (auto& v : x) v = gauss(rng);
    double mean = 0;
    for (double v : x) mean += v;
    mean /= n;
    double power = 0;
    for (double v : x) power += (v - mean) * (v - mean);
    power /= n;

    const auto s = folded_spectrum(x, ns(1.0));
    double total = 0;
    for (double a : s.amplitude) total += a * a;
    CAPTURE(n);
    CHECK(std::abs(total - power) < 1e-12 * power);
  }
}

TEST_CASE("frequencies beyond nyquist alias back into band", "[analysis]") {
  const double nyq = 500.0;
  CHECK(std::abs(fold_frequency(750.0, nyq) - 250.0) < 1e-12);
  CHECK(std::abs(fold_frequency(1250.0, nyq) - 250.0) < 1e-12);
  CHECK(std::abs(fold_frequency(-750.0, nyq) - 250.0) < 1e-12);
  CHECK(std::abs(fold_frequency(400.0, nyq) - 400.0) < 1e-12);
  CHECK(std::abs(fold_frequency(500.0, nyq) - 500.0) < 1e-12);
  CHECK(std::abs(fold_frequency(1000.0, nyq) - 0.0) < 1e-12);

  // A 750 MHz tone sampled at 1 ns reads as 250 MHz.
  const auto x = sampled_cosine(750.0, ns(1.0), 100);
  const auto peaks = dominant_peaks(folded_spectrum(x, ns(1.0)));
  REQUIRE(peaks.size() == 1);
  CHECK(std::abs(to_mhz(peaks[0].frequency) - 250.0) < 1e-9);
}

TEST_CASE("off-grid tones interpolate below the bin spacing", "[analysis]") {
  const int n = 400;
  const double dt = ns(1.0);
  for (double f : {103.37, 251.6, 87.04}) {
    const auto x = sampled_cosine(f, dt, n, 0.8, 0.7);
    const auto s = folded_spectrum(x, dt);
    const auto peaks = dominant_peaks(s);
    REQUIRE_FALSE(peaks.empty());
    CAPTURE(f);
    // Bins are 2.5 MHz wide; the parabolic estimate should beat 1/4 bin.
    CHECK(std::abs(to_mhz(peaks[0].frequency) - f) < 0.625);

    const double w0 = peaks[0].frequency;
    const double refined = refine_peak_frequency(
        x, dt, w0 - s.resolution, w0 + s.resolution);
    CHECK(std::abs(to_mhz(refined) - f) < 0.02);
  }
}

TEST_CASE("equal twin tones are both reported", "[analysis]") {
  const int n = 200;
  const double dt = ns(1.0);
  auto x = sampled_cosine(100.0, dt, n);
  const auto y = sampled_cosine(205.0, dt, n);  // bin 41 of 101
  for (int j = 0; j < n; ++j) x[static_cast<std::size_t>(j)] += y[static_cast<std::size_t>(j)];

  const auto both = dominant_peaks(folded_spectrum(x, dt));
  REQUIRE(both.size() == 2);
  CHECK(std::abs(to_mhz(both[0].frequency) - to_mhz(both[1].frequency)) > 50.0);

  // With unequal heights only the stronger one remains dominant.
  auto z = sampled_cosine(100.0, dt, n);
  const auto w = sampled_cosine(205.0, dt, n, 0.5);
  for (int j = 0; j < n; ++j) z[static_cast<std::size_t>(j)] += w[static_cast<std::size_t>(j)];
  const auto s2 = folded_spectrum(z, dt);
  CHECK(dominant_peaks(s2).size() == 1);
  CHECK(spectral_peaks(s2, 0.2).size() == 2);
}

TEST_CASE("power decay fit recovers exact synthetic data", "[analysis]") {
  // y = (1 - 0.1)^(2 n) at n = 0, 2, 4.
  const std::vector<double> n_values = {0, 2, 4};
  const std::vector<double> y = {1.0, 0.6561, 0.43046721};
  const auto fit = fit_power_decay(n_values, y, 2.0);
  CHECK(std::abs(fit.amplitude - 1.0) < 1e-12);
  CHECK(std::abs(fit.rate - 0.1) < 1e-12);
  CHECK(fit.n_used == 3);
  CHECK(fit.rate_se < 1e-10);
}

TEST_CASE("noise floor drops unusable points before fitting", "[analysis]") {
  const std::vector<double> n_values = {0, 2, 4, 6};
  const std::vector<double> y = {1.0, 0.6561, 0.43046721, 1e-6};
  const std::vector<double> se = {1e-4, 1e-4, 1e-4, 1e-6};
  const auto fit = fit_power_decay(n_values, y, 2.0, &se);
  CHECK(fit.n_used == 3);
  CHECK(std::abs(fit.rate - 0.1) < 1e-12);

  // A non-positive value that survives the floor is a contract violation.
  const std::vector<double> bad = {1.0, -0.2, 0.4};
  CHECK_THROWS_AS(fit_power_decay({0, 1, 2}, bad, 2.0), DomainError);
  CHECK_THROWS_AS(fit_power_decay({0, 1}, y, 2.0), DomainError);
}

TEST_CASE("jackknife over group means matches the closed form", "[analysis]") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss(1.0, 0.3);
  const int groups = 10, per_group = 40;
  std::vector<double> x(static_cast<std::size_t>(groups * per_group));
  for (auto& v : x) v = gauss(rng);

  std::vector<double> group_mean(static_cast<std::size_t>(groups), 0.0);
  for (int g = 0; g < groups; ++g) {
    for (int i = 0; i < per_group; ++i)
      group_mean[static_cast<std::size_t>(g)] += x[static_cast<std::size_t>(g * per_group + i)];
    group_mean[static_cast<std::size_t>(g)] /= per_group;
  }
  double grand = 0;
  for (double v : group_mean) grand += v;
  grand /= groups;

  std::vector<double> loo(static_cast<std::size_t>(groups));
  for (int g = 0; g < groups; ++g)
    loo[static_cast<std::size_t>(g)] =
        (groups * grand - group_mean[static_cast<std::size_t>(g)]) / (groups - 1);

  double ss = 0;
  for (double v : group_mean) ss += (v - grand) * (v - grand);
  const double direct = std::sqrt(ss / (double(groups) * (groups - 1)));
  CHECK(std::abs(jackknife_se(loo) - direct) < 1e-12);
}

TEST_CASE("mean and standard error follow the textbook formulas", "[analysis]") {
  const auto r = mean_stderr({1.0, 2.0, 3.0, 4.0});
  CHECK(std::abs(r.mean - 2.5) < 1e-12);
  CHECK(std::abs(r.se - std::sqrt(5.0 / 12.0)) < 1e-12);
  CHECK(r.n == 4);
  CHECK_THROWS_AS(mean_stderr({}), DomainError);
}
