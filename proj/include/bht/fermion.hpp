#pragma once
// Closed-form single-particle results for a uniform open chain, used as
// independent references for the hard-core (|U| >> |J|) regime where the
// bosons behave as free fermions.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "core.hpp"

namespace bht {

// Mode energies 2 J cos(pi k / (N+1)), k = 1..N.
inline std::vector<double> open_chain_energies(int n_modes, double j) {
  if (n_modes < 1) throw DomainError("open_chain_energies: n_modes < 1");
  std::vector<double> e(static_cast<std::size_t>(n_modes));
  for (int k = 1; k <= n_modes; ++k)
    e[static_cast<std::size_t>(k - 1)] =
        2.0 * j * std::cos(M_PI * k / (n_modes + 1.0));
  return e;
}

// Mode amplitudes sqrt(2/(N+1)) sin(pi k i / (N+1)), i = 1..N. k is 1-based.
inline Eigen::VectorXd open_chain_mode(int n_modes, int k) {
  if (n_modes < 1) throw DomainError("open_chain_mode: n_modes < 1");
  if (k < 1 || k > n_modes) throw DomainError("open_chain_mode: k out of range");
  Eigen::VectorXd phi(n_modes);
  const double norm = std::sqrt(2.0 / (n_modes + 1.0));
  for (int i = 1; i <= n_modes; ++i)
    phi(i - 1) = norm * std::sin(M_PI * k * i / (n_modes + 1.0));
  return phi;
}

namespace detail {

// Mode indices (1-based) sorted by increasing energy for the given hop sign.
inline std::vector<int> modes_by_energy(int n_modes, double j) {
  std::vector<int> order(static_cast<std::size_t>(n_modes));
  std::iota(order.begin(), order.end(), 1);
  const auto e = open_chain_energies(n_modes, j);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return e[static_cast<std::size_t>(a - 1)] < e[static_cast<std::size_t>(b - 1)];
  });
  return order;
}

}  // namespace detail

// Ground-state density of n_particles hard-core particles: the lowest modes
// filled once each. Independent of the sign of j.
inline Eigen::VectorXd fluid_density(int n_sites, int n_particles, double j) {
  if (n_particles < 0 || n_particles > n_sites)
    throw DomainError("fluid_density: n_particles out of range");
  const auto order = detail::modes_by_energy(n_sites, j);
  Eigen::VectorXd dens = Eigen::VectorXd::Zero(n_sites);
  for (int p = 0; p < n_particles; ++p) {
    const Eigen::VectorXd phi =
        open_chain_mode(n_sites, order[static_cast<std::size_t>(p)]);
    dens += phi.cwiseAbs2();
  }
  return dens;
}

// Sum of the n_particles lowest mode energies.
inline double fermi_sea_energy(int n_sites, int n_particles, double j) {
  if (n_particles < 0 || n_particles > n_sites)
    throw DomainError("fermi_sea_energy: n_particles out of range");
  const auto e = open_chain_energies(n_sites, j);
  const auto order = detail::modes_by_energy(n_sites, j);
  double sum = 0;
  for (int p = 0; p < n_particles; ++p)
    sum += e[static_cast<std::size_t>(order[static_cast<std::size_t>(p)] - 1)];
  return sum;
}

// Drive frequency that promotes each of the (N-1)/2 lowest modes to its
// partner (N+1)/2 above it, flipping the filled band edge onto the opposite
// one. Only defined when every pair transition shares the same gap; the
// half-band shift requires odd N.
inline double two_phonon_target(int n_sites, double j) {
  if (n_sites < 3 || n_sites % 2 == 0)
    throw DomainError("two_phonon_target: requires odd n_sites >= 3");
  const int shift = (n_sites + 1) / 2;
  const auto e = open_chain_energies(n_sites, j);
  std::vector<double> gaps;
  for (int k = 1; k + shift <= n_sites; ++k)
    gaps.push_back(std::abs(e[static_cast<std::size_t>(k + shift - 1)] -
                            e[static_cast<std::size_t>(k - 1)]));
  const auto [lo, hi] = std::minmax_element(gaps.begin(), gaps.end());
  if (*hi - *lo > 1e-9 * std::abs(j))
    throw AmbiguityError("two_phonon_target: pair gaps differ");
  return gaps.front();
}

}  // namespace bht
