// Scratch probe: phonon drive amplitude / duration / frequency response.
#include <cstdio>

#include "bht/protocols.hpp"

using namespace bht;

int main() {
  const DevicePreset d = five_site_device();
  const double target = phonon_drive_target(d);
  std::printf("target = %.4f MHz\n", to_mhz(target));

  auto reg = std::make_shared<SectorRegistry>(d.lattice);
  const RunPolicy policy = preset_run_policy();

  auto run_branch = [&](AncillaPrep prep, double freq, double amp,
                        double dur) {
    Schedule s = prep_schedule(d, prep);
    s.push_back(config_ramp(ns(240), 0.5, d.stagger_small, d.transistor, ""));
    SiteModulation mod;
    mod.site = d.drive_site;
    mod.duration = dur;
    mod.amplitude = amp;
    mod.frequency = freq;
    mod.base = d.transistor;
    s.push_back(mod);
    ExpRamp back =
        reversed_ramp(config_ramp(ns(240), 0.5, d.stagger_small, d.transistor, ""));
    s.push_back(back);
    CompositeState st = CompositeState::product_state(
        reg, std::vector<uint8_t>(d.lattice.n_sites, 0));
    run_schedule(st, s, policy);
    Eigen::VectorXd dens = density_expectation(st) / st.squared_norm();
    return dens;
  };

  std::printf("\n-- transfer vs amplitude/duration at target --\n");
  for (double amp_mhz : {1.0, 1.5, 2.0, 3.0}) {
    std::printf("amp %5.1f MHz:", amp_mhz);
    for (double dur_ns : {1200.0, 1800.0, 2400.0, 3000.0, 3600.0, 4200.0}) {
      Eigen::VectorXd dens =
          run_branch(AncillaPrep::excited, target, mhz(amp_mhz), ns(dur_ns));
      double right = dens(3) + dens(4);
      std::printf("  %4.0fns %.3f", dur_ns, right / 2.0);
    }
    std::printf("\n");
  }

  std::printf("\n-- solid change vs amplitude/duration --\n");
  for (double dur_ns : {1800.0, 3000.0}) {
    Eigen::VectorXd ref =
        run_branch(AncillaPrep::ground, target, 0.0, ns(dur_ns));
    for (double amp_mhz : {1.0, 1.5, 2.0, 3.0}) {
      Eigen::VectorXd dens =
          run_branch(AncillaPrep::ground, target, mhz(amp_mhz), ns(dur_ns));
      std::printf("amp %4.1f dur %4.0f: change %.6f\n", amp_mhz, dur_ns,
                  (dens - ref).cwiseAbs().maxCoeff());
    }
  }
  return 0;
}
