#pragma once
// Measured device tables for the seven-site chain and its five-site window,
// plus the derived noise, readout, and control settings the protocols share.
//
// Detunings are relative to the 5310 MHz lattice frame. The transistor rows
// hold the ancilla at -U_anc, making the doublon exactly resonant; stagger
// rows alternate signs so neighbors are far detuned.

#include <cmath>
#include <cstdlib>
#include <vector>

#include "control_cal.hpp"
#include "core.hpp"
#include "fock.hpp"
#include "noise.hpp"
#include "schedule.hpp"

namespace bht {

struct DevicePreset {
  LatticeSpec lattice;
  int ancilla = 0;
  std::vector<int> left_sites;
  std::vector<int> right_sites;

  // Detuning rows, one entry per site (rad/s).
  std::vector<double> stagger_large;
  std::vector<double> stagger_small;
  std::vector<double> transistor;
  std::vector<double> inverted;

  std::vector<double> t1;                // seconds
  std::vector<double> t2_star;           // seconds
  std::vector<double> readout_fidelity;

  double t_ramp_ref = ns(240.0);
  double ramp_tau_fraction = 0.5;        // tau = fraction * t_ramp
  double carrier = mhz(5310.0);          // absolute lattice frame
  double fringe_ref = mhz(50.0);         // virtual-phase fringe reference
  double flux_omega_max = mhz(6000.0);   // zero-flux site frequency
  int drive_site = -1;                   // flux-modulated site, if any
};

namespace detail {

inline std::vector<double> scale_mhz(const std::vector<double>& f) {
  std::vector<double> w(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) w[i] = mhz(f[i]);
  return w;
}

inline std::vector<double> scale_us(const std::vector<double>& t) {
  std::vector<double> s(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) s[i] = us(t[i]);
  return s;
}

}  // namespace detail

inline DevicePreset seven_site_device() {
  DevicePreset p;
  p.lattice.n_sites = 7;
  p.lattice.n_max = 2;
  p.lattice.hop =
      detail::scale_mhz({-9.062, -9.032, -8.842, -8.936, -9.023, -9.040});
  p.lattice.interaction =
      detail::scale_mhz({-241, -240, -240, -231, -234, -239, -240});
  p.ancilla = 3;
  p.left_sites = {0, 1, 2};
  p.right_sites = {4, 5, 6};
  p.stagger_large = detail::scale_mhz({215, -265, 262, -205, 309, -308, 357});
  // Left cluster sits below the ancilla branch so the occupied-ancilla
  // branch is the transported one.
  p.stagger_small = detail::scale_mhz({-75, -125, -100, 231, 0, 0, 0});
  p.transistor = detail::scale_mhz({0, 0, 0, 231, 0, 0, 0});
  p.inverted = detail::scale_mhz({0, 0, 0, 231, -100, -125, -75});
  p.t1 = detail::scale_us({14.6, 35.5, 57.7, 28.4, 60.3, 54.7, 40.0});
  p.t2_star = detail::scale_us({0.85, 0.64, 1.31, 0.77, 3.57, 0.84, 1.4});
  p.readout_fidelity = {0.91, 0.92, 0.93, 0.95, 0.87, 0.92, 0.83};
  return p;
}

// Five-site window onto the same chain, centered on its own ancilla.
inline DevicePreset five_site_device() {
  DevicePreset p;
  p.lattice.n_sites = 5;
  p.lattice.n_max = 2;
  p.lattice.hop = detail::scale_mhz({-8.842, -8.936, -9.023, -9.040});
  p.lattice.interaction = detail::scale_mhz({-240, -231, -234, -239, -240});
  p.ancilla = 2;
  p.left_sites = {0, 1};
  p.right_sites = {3, 4};
  p.stagger_large = detail::scale_mhz({262, -205, 309, -308, 357});
  p.stagger_small = detail::scale_mhz({50, 100, 234, -100, -50});
  p.transistor = detail::scale_mhz({0, 0, 234, 0, 0});
  p.inverted = detail::scale_mhz({-50, -100, 234, 100, 50});
  p.t1 = detail::scale_us({57.7, 28.4, 60.3, 54.7, 40.0});
  p.t2_star = detail::scale_us({1.31, 0.77, 3.57, 0.84, 1.4});
  p.readout_fidelity = {0.93, 0.95, 0.87, 0.92, 0.83};
  p.drive_site = 1;
  return p;
}

// Relaxation from measured T1; pure dephasing is off and the measured T2*
// enters as slow per-shot frequency scatter instead.
inline NoiseModel preset_noise(const DevicePreset& p) {
  NoiseModel noise;
  noise.t1 = p.t1;
  noise.static_sigma.resize(p.t2_star.size());
  for (std::size_t i = 0; i < p.t2_star.size(); ++i)
    noise.static_sigma[i] = std::sqrt(2.0) / p.t2_star[i];
  return noise;
}

inline ReadoutModel preset_readout(const DevicePreset& p) {
  return ReadoutModel{p.readout_fidelity};
}

// Coarser sampling than the library default; step-halving on the preset
// ramps shows the residual is far below protocol tolerances.
inline RunPolicy preset_run_policy() {
  RunPolicy policy;
  policy.sample_dt = ns(0.5);
  policy.rotation_occ2_tol = 5e-2;
  return policy;
}

inline std::vector<SiteTuning> preset_site_tunings(const DevicePreset& p) {
  std::vector<SiteTuning> tunings(p.lattice.interaction.size());
  for (std::size_t i = 0; i < tunings.size(); ++i) {
    tunings[i].omega_max = p.flux_omega_max;
    tunings[i].offset_c = std::abs(p.lattice.interaction[i]);
  }
  return tunings;
}

}  // namespace bht
