#pragma once
// Spectral and statistical analysis for fringe records: one-sided discrete
// spectra, sub-bin peak location, exponential-decay fits, jackknife errors.
//
// Frequencies are angular (rad/s), matching the rest of the library.

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "core.hpp"

namespace bht {

// One-sided amplitude spectrum of a uniformly sampled real record. The mean
// is removed before transforming. Weights are chosen so that
// sum_k amplitude[k]^2 == sum_j (x_j - mean)^2 / n exactly.
struct FoldedSpectrum {
  double dt = 0;                    // sample spacing (s)
  double nyquist = 0;               // pi / dt (rad/s)
  double resolution = 0;            // bin spacing 2 pi / (n dt)
  std::vector<double> frequency;    // bin centers, k * resolution
  std::vector<double> amplitude;    // sqrt(w_k) |X_k| / n
};

inline FoldedSpectrum folded_spectrum(const std::vector<double>& x, double dt) {
  const int n = static_cast<int>(x.size());
  if (n < 2) throw DomainError("folded_spectrum: need at least 2 samples");
  if (!(dt > 0)) throw DomainError("folded_spectrum: dt must be positive");

  double mean = 0;
  for (double v : x) mean += v;
  mean /= n;

  FoldedSpectrum s;
  s.dt = dt;
  s.nyquist = M_PI / dt;
  s.resolution = two_pi / (n * dt);
  const int n_bins = n / 2 + 1;
  s.frequency.resize(static_cast<std::size_t>(n_bins));
  s.amplitude.resize(static_cast<std::size_t>(n_bins));
  for (int k = 0; k < n_bins; ++k) {
    cplx acc = 0;
    for (int j = 0; j < n; ++j) {
      const double ang = -two_pi * double(j) * double(k) / double(n);
      acc += (x[static_cast<std::size_t>(j)] - mean) * cplx(std::cos(ang), std::sin(ang));
    }
    const bool shared = (k == 0) || (n % 2 == 0 && k == n / 2);
    const double w = shared ? 1.0 : 2.0;
    s.frequency[static_cast<std::size_t>(k)] = k * s.resolution;
    s.amplitude[static_cast<std::size_t>(k)] = std::sqrt(w) * std::abs(acc) / n;
  }
  return s;
}

// Aliases a frequency into the one-sided band [0, nyquist].
inline double fold_frequency(double f, double nyquist) {
  if (!(nyquist > 0)) throw DomainError("fold_frequency: nyquist must be positive");
  const double r = std::fmod(std::abs(f), 2.0 * nyquist);
  return std::min(r, 2.0 * nyquist - r);
}

struct SpectralPeak {
  double frequency = 0;   // sub-bin interpolated (rad/s)
  double amplitude = 0;   // interpolated height
  int bin = 0;
};

namespace detail {

// Parabolic vertex through log-magnitudes of the peak bin and its
// neighbours. Falls back to the bin center at edges or zero magnitudes.
inline SpectralPeak interpolate_peak(const FoldedSpectrum& s, int m) {
  SpectralPeak p;
  p.bin = m;
  p.frequency = s.frequency[static_cast<std::size_t>(m)];
  p.amplitude = s.amplitude[static_cast<std::size_t>(m)];
  const int last = static_cast<int>(s.amplitude.size()) - 1;
  if (m <= 0 || m >= last) return p;
  const double ym = s.amplitude[static_cast<std::size_t>(m - 1)];
  const double y0 = s.amplitude[static_cast<std::size_t>(m)];
  const double yp = s.amplitude[static_cast<std::size_t>(m + 1)];
  // Neighbours at rounding-noise level mean the tone sits on the bin grid;
  // interpolating their logs would inject a spurious shift.
  if (ym <= 1e-9 * y0 || yp <= 1e-9 * y0) return p;
  const double lm = std::log(ym), l0 = std::log(y0), lp = std::log(yp);
  const double denom = lm - 2.0 * l0 + lp;
  if (!(denom < 0)) return p;  // not a strict local maximum in log space
  const double delta = 0.5 * (lm - lp) / denom;
  if (std::abs(delta) > 0.5) return p;
  p.frequency = (m + delta) * s.resolution;
  p.amplitude = std::exp(l0 - 0.25 * (lm - lp) * delta);
  return p;
}

}  // namespace detail

// Interpolated local maxima at or above floor_fraction of the strongest one,
// strongest first. The removed-mean bin (k = 0) is excluded.
inline std::vector<SpectralPeak> spectral_peaks(const FoldedSpectrum& s,
                                                double floor_fraction = 0.0) {
  const int n_bins = static_cast<int>(s.amplitude.size());
  std::vector<SpectralPeak> peaks;
  for (int m = 1; m < n_bins; ++m) {
    const double y0 = s.amplitude[static_cast<std::size_t>(m)];
    const double ym = s.amplitude[static_cast<std::size_t>(m - 1)];
    const double yp = m + 1 < n_bins ? s.amplitude[static_cast<std::size_t>(m + 1)]
                                     : -std::numeric_limits<double>::infinity();
    if (y0 >= ym && y0 > yp) peaks.push_back(detail::interpolate_peak(s, m));
  }
  std::sort(peaks.begin(), peaks.end(),
            [](const SpectralPeak& a, const SpectralPeak& b) {
              return a.amplitude > b.amplitude;
            });
  if (peaks.empty()) return peaks;
  const double floor = floor_fraction * peaks.front().amplitude;
  peaks.erase(std::remove_if(peaks.begin(), peaks.end(),
                             [&](const SpectralPeak& p) {
                               return p.amplitude < floor;
                             }),
              peaks.end());
  return peaks;
}

// The strongest peak, plus any runner-up within tie_fraction of its height
// (a genuine tie has no unique answer, so both are reported).
inline std::vector<SpectralPeak> dominant_peaks(const FoldedSpectrum& s,
                                                double tie_fraction = 0.01) {
  return spectral_peaks(s, 1.0 - tie_fraction);
}

// Maximizes the mean-subtracted periodogram |sum_j x_j e^{-i w t_j}|^2 over
// [w_lo, w_hi] by golden-section search. Seeded from a coarse peak, this
// refines a single-tone frequency well below the bin spacing.
inline double refine_peak_frequency(const std::vector<double>& x, double dt,
                                    double w_lo, double w_hi) {
  const int n = static_cast<int>(x.size());
  if (n < 2) throw DomainError("refine_peak_frequency: need at least 2 samples");
  if (!(dt > 0) || !(w_hi > w_lo))
    throw DomainError("refine_peak_frequency: bad search window");
  double mean = 0;
  for (double v : x) mean += v;
  mean /= n;
  auto power = [&](double w) {
    cplx acc = 0;
    for (int j = 0; j < n; ++j) {
      const double ang = -w * j * dt;
      acc += (x[static_cast<std::size_t>(j)] - mean) * cplx(std::cos(ang), std::sin(ang));
    }
    return std::norm(acc);
  };
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = w_lo, b = w_hi;
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = power(c), fd = power(d);
  for (int it = 0; it < 200 && (b - a) > 1e-12 * std::max(1.0, std::abs(b)); ++it) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = power(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = power(d);
    }
  }
  return 0.5 * (a + b);
}

// Least-squares fit of y_m = A (1 - eps)^(passes_per_cycle * n_m) on log y.
struct DecayFit {
  double amplitude = 0;      // A
  double rate = 0;           // eps
  double amplitude_se = 0;
  double rate_se = 0;
  int n_used = 0;            // points kept after the noise floor cut
};

// y_se, when given, sets a noise floor: points with y < 3 y_se are dropped
// before fitting. Any remaining non-positive y is a contract violation.
inline DecayFit fit_power_decay(const std::vector<double>& n_values,
                                const std::vector<double>& y,
                                double passes_per_cycle,
                                const std::vector<double>* y_se = nullptr) {
  const std::size_t m = y.size();
  if (n_values.size() != m)
    throw DomainError("fit_power_decay: n_values and y sizes differ");
  if (y_se != nullptr && y_se->size() != m)
    throw DomainError("fit_power_decay: y_se size differs");
  if (!(passes_per_cycle != 0))
    throw DomainError("fit_power_decay: passes_per_cycle must be nonzero");

  std::vector<double> xs, zs;
  for (std::size_t i = 0; i < m; ++i) {
    if (y_se != nullptr && y[i] < 3.0 * (*y_se)[i]) continue;
    if (y[i] <= 0) {
      std::ostringstream msg;
      msg << "fit_power_decay: non-positive value " << y[i] << " at point " << i
          << " survived the noise floor";
      throw DomainError(msg.str());
    }
    xs.push_back(n_values[i]);
    zs.push_back(std::log(y[i]));
  }
  const int kept = static_cast<int>(xs.size());
  if (kept < 2) throw DomainError("fit_power_decay: fewer than 2 usable points");

  double sx = 0, sz = 0;
  for (int i = 0; i < kept; ++i) {
    sx += xs[static_cast<std::size_t>(i)];
    sz += zs[static_cast<std::size_t>(i)];
  }
  const double xbar = sx / kept, zbar = sz / kept;
  double sxx = 0, sxz = 0;
  for (int i = 0; i < kept; ++i) {
    const double dx = xs[static_cast<std::size_t>(i)] - xbar;
    sxx += dx * dx;
    sxz += dx * (zs[static_cast<std::size_t>(i)] - zbar);
  }
  if (!(sxx > 0)) throw DomainError("fit_power_decay: degenerate abscissae");
  const double b = sxz / sxx;
  const double a = zbar - b * xbar;

  DecayFit fit;
  fit.n_used = kept;
  fit.amplitude = std::exp(a);
  fit.rate = 1.0 - std::exp(b / passes_per_cycle);

  if (kept > 2) {
    double ssr = 0;
    for (int i = 0; i < kept; ++i) {
      const double r = zs[static_cast<std::size_t>(i)] - (a + b * xs[static_cast<std::size_t>(i)]);
      ssr += r * r;
    }
    const double s2 = ssr / (kept - 2);
    const double se_b = std::sqrt(s2 / sxx);
    const double se_a = std::sqrt(s2 * (1.0 / kept + xbar * xbar / sxx));
    fit.amplitude_se = fit.amplitude * se_a;
    fit.rate_se = (1.0 - fit.rate) / std::abs(passes_per_cycle) * se_b;
  } else {
    fit.amplitude_se = std::numeric_limits<double>::quiet_NaN();
    fit.rate_se = std::numeric_limits<double>::quiet_NaN();
  }
  return fit;
}

struct MeanSE {
  double mean = 0;
  double se = 0;
  int n = 0;
};

inline MeanSE mean_stderr(const std::vector<double>& x) {
  const int n = static_cast<int>(x.size());
  if (n < 1) throw DomainError("mean_stderr: empty sample");
  MeanSE r;
  r.n = n;
  for (double v : x) r.mean += v;
  r.mean /= n;
  if (n > 1) {
    double ss = 0;
    for (double v : x) ss += (v - r.mean) * (v - r.mean);
    r.se = std::sqrt(ss / (double(n) * (n - 1)));
  }
  return r;
}

// Standard error of a statistic from its leave-one-group-out values:
// sqrt((G-1)/G sum (theta_i - mean)^2).
inline double jackknife_se(const std::vector<double>& leave_one_out) {
  const int g = static_cast<int>(leave_one_out.size());
  if (g < 2) throw DomainError("jackknife_se: need at least 2 groups");
  double mean = 0;
  for (double v : leave_one_out) mean += v;
  mean /= g;
  double ss = 0;
  for (double v : leave_one_out) ss += (v - mean) * (v - mean);
  return std::sqrt((g - 1.0) / g * ss);
}

}  // namespace bht
