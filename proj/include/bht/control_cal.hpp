#pragma once
// Flux control calibration: per-site frequency vs flux inversion, the
// current crosstalk correction, and predistortion of bias waveforms.
//
// Flux is measured in flux quanta; currents are scaled so a unit diagonal
// response moves one flux quantum per unit current (rows of the crosstalk
// matrix are normalized to their diagonal on load).

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "core.hpp"

namespace bht {

// omega(phi) = (omega_max + c) sqrt(|cos(pi phi)|) - c, with c folding the
// quartic correction into the offset.
inline double site_frequency(double flux, double omega_max, double c) {
  return (omega_max + c) * std::sqrt(std::abs(std::cos(M_PI * flux))) - c;
}

// Inverts site_frequency on the first monotone branch [0, 1/2] by bisection.
inline double flux_for_frequency(double target, double omega_max, double c,
                                 double tol = mhz(0.001)) {
  if (!(omega_max > -c))
    throw DomainError("flux_for_frequency: omega_max must exceed -c");
  if (target > omega_max || target <= -c) {
    std::ostringstream msg;
    msg << "flux_for_frequency: target " << to_mhz(target)
        << " MHz outside reachable band (" << to_mhz(-c) << ", "
        << to_mhz(omega_max) << "] MHz";
    throw DomainError(msg.str());
  }
  double lo = 0.0, hi = 0.5;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double w = site_frequency(mid, omega_max, c);
    if (std::abs(w - target) < tol) return mid;
    (w > target ? lo : hi) = mid;
  }
  throw NumericError("flux_for_frequency: bisection did not reach tolerance");
}

// Flux response to control currents, diagonal-normalized: phi = M I.
struct CrosstalkMatrix {
  Eigen::MatrixXd m;
  int n_sites() const { return static_cast<int>(m.rows()); }
};

// Reads a whitespace-separated square matrix and normalizes each row to its
// diagonal entry. Every violation found is reported, not just the first.
inline CrosstalkMatrix load_crosstalk(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::vector<double> row;
    double v;
    while (ls >> v) row.push_back(v);
    if (!ls.eof() && ls.fail())
      throw ValidationError("load_crosstalk: non-numeric entry in row " +
                            std::to_string(rows.size()));
    if (!row.empty()) rows.push_back(std::move(row));
  }
  std::ostringstream bad;
  const std::size_t n = rows.size();
  if (n == 0) bad << "matrix is empty; ";
  for (std::size_t i = 0; i < n; ++i)
    if (rows[i].size() != n)
      bad << "row " << i << " has " << rows[i].size() << " entries, expected "
          << n << "; ";
  if (bad.str().empty())
    for (std::size_t i = 0; i < n; ++i)
      if (rows[i][i] == 0) bad << "row " << i << " has a zero diagonal; ";
  if (!bad.str().empty())
    throw ValidationError("load_crosstalk: " + bad.str());

  CrosstalkMatrix ct;
  ct.m.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      ct.m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[i][j] / rows[i][i];
  return ct;
}

inline void save_crosstalk(std::ostream& out, const CrosstalkMatrix& ct) {
  const int n = ct.n_sites();
  out.precision(17);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) out << ct.m(i, j) << (j + 1 < n ? " " : "\n");
  }
}

inline double condition_number(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  if (s(s.size() - 1) <= 0) return std::numeric_limits<double>::infinity();
  return s(0) / s(s.size() - 1);
}

// Currents realizing the requested fluxes: I = M^-1 phi. Refuses to invert
// past the conditioning cap, where current errors would be amplified beyond
// the calibration's validity.
inline Eigen::VectorXd solve_currents(const CrosstalkMatrix& ct,
                                      const Eigen::VectorXd& flux,
                                      double cond_cap = 1e6) {
  if (flux.size() != ct.m.rows())
    throw DomainError("solve_currents: flux size mismatch");
  const double cond = condition_number(ct.m);
  if (!(cond < cond_cap)) {
    std::ostringstream msg;
    msg << "solve_currents: condition number " << cond << " exceeds cap "
        << cond_cap;
    throw CapabilityError(msg.str());
  }
  return ct.m.fullPivLu().solve(flux);
}

struct SiteTuning {
  double omega_max = 0;
  double offset_c = 0;
};

// Full pipeline: detunings -> absolute frequencies -> fluxes -> currents.
inline Eigen::VectorXd currents_for_detunings(
    const std::vector<SiteTuning>& tuning, const CrosstalkMatrix& ct,
    double omega_ref, const std::vector<double>& detunings,
    double tol = mhz(0.001)) {
  const int n = ct.n_sites();
  if (static_cast<int>(tuning.size()) != n ||
      static_cast<int>(detunings.size()) != n)
    throw DomainError("currents_for_detunings: size mismatch");
  Eigen::VectorXd flux(n);
  for (int i = 0; i < n; ++i)
    flux(i) = flux_for_frequency(
        omega_ref + detunings[static_cast<std::size_t>(i)],
        tuning[static_cast<std::size_t>(i)].omega_max,
        tuning[static_cast<std::size_t>(i)].offset_c, tol);
  return solve_currents(ct, flux);
}

// Exact predistortion for a single-pole response with time constant tau
// discretized backward-Euler: feeding the result through
// y[k] (1 + tau/dt) - (tau/dt) y[k-1] = u[k] returns the original samples.
inline std::vector<double> deconvolve_single_pole(const std::vector<double>& x,
                                                  double tau, double dt) {
  if (!(tau >= 0) || !(dt > 0))
    throw DomainError("deconvolve_single_pole: need tau >= 0 and dt > 0");
  std::vector<double> u(x.size());
  const double r = tau / dt;
  double prev = 0;  // waveforms start from a settled zero baseline
  for (std::size_t k = 0; k < x.size(); ++k) {
    u[k] = x[k] + r * (x[k] - prev);
    prev = x[k];
  }
  return u;
}

}  // namespace bht
