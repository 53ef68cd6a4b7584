#pragma once
// The measurement protocols: ancilla-conditioned transport, Ramsey fringe
// scans on entangled states, drive-induced fluid exchange, echo decoupling,
// and reversibility probes. Each runner assembles a pulse sequence from a
// device preset, executes it (exactly, or as noisy trajectories), and
// reduces the record to tables and named scalars.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "analysis.hpp"
#include "core.hpp"
#include "fock.hpp"
#include "noise.hpp"
#include "presets.hpp"
#include "propagator.hpp"
#include "schedule.hpp"

namespace bht {

enum class AncillaPrep { ground, excited, superposition };

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

struct ProtocolResult {
  Table results;
  std::map<std::string, double> scalars;
  std::optional<FoldedSpectrum> spectrum;
  std::optional<Table> fringes;  // per-variant raw fringes (echo)
};

// Photon injection on the left cluster plus the ancilla preparation pulse,
// all while the large stagger keeps every site isolated.
inline Schedule prep_schedule(const DevicePreset& device, AncillaPrep prep) {
  Schedule s;
  for (int site : device.left_sites)
    s.push_back(Rotation{site, M_PI, 0.0, "inject"});
  if (prep == AncillaPrep::excited)
    s.push_back(Rotation{device.ancilla, M_PI, 0.0, "ancilla_prep"});
  else if (prep == AncillaPrep::superposition)
    s.push_back(Rotation{device.ancilla, M_PI / 2, 0.0, "ancilla_prep"});
  return s;
}

inline ExpRamp config_ramp(double t_ramp, double tau_fraction,
                           const std::vector<double>& from,
                           const std::vector<double>& to, std::string label) {
  ExpRamp r;
  r.t_ramp = t_ramp;
  r.tau = tau_fraction * t_ramp;
  r.start = from;
  r.end = to;
  r.label = std::move(label);
  return r;
}

// U: engage the ordered lattice, then invert the stagger.  Each leg keeps its
// slow end at the near-degenerate configuration: engage decelerates into it,
// invert (mirrored profile, negative tau) accelerates away from it.
inline void append_entangler(Schedule& s, const DevicePreset& d, double t_ramp,
                             double tau_fraction) {
  s.push_back(config_ramp(t_ramp, tau_fraction, d.stagger_small, d.transistor,
                          "engage"));
  s.push_back(
      config_ramp(t_ramp, -tau_fraction, d.transistor, d.inverted, "invert"));
}

// U^dag: the same waveforms played backwards.
inline void append_disentangler(Schedule& s, const DevicePreset& d,
                                double t_ramp, double tau_fraction) {
  ExpRamp revert = reversed_ramp(
      config_ramp(t_ramp, -tau_fraction, d.transistor, d.inverted, ""));
  revert.label = "revert";
  ExpRamp disengage = reversed_ramp(
      config_ramp(t_ramp, tau_fraction, d.stagger_small, d.transistor, ""));
  disengage.label = "disengage";
  s.push_back(std::move(revert));
  s.push_back(std::move(disengage));
}

inline std::vector<std::vector<double>> linear_path(
    const std::vector<double>& from, const std::vector<double>& to,
    int n_steps) {
  if (from.size() != to.size())
    throw DomainError("linear_path: endpoint sizes differ");
  if (n_steps < 1) throw DomainError("linear_path: need at least one step");
  std::vector<std::vector<double>> path;
  path.reserve(static_cast<std::size_t>(n_steps) + 1);
  for (int k = 0; k <= n_steps; ++k) {
    const double s = double(k) / n_steps;
    std::vector<double> d(from.size());
    for (std::size_t i = 0; i < d.size(); ++i)
      d[i] = from[i] + s * (to[i] - from[i]);
    path.push_back(std::move(d));
  }
  return path;
}

inline int max_overlap_index(const EigenSystem& sys,
                             const Eigen::VectorXcd& psi) {
  const Eigen::VectorXd ov = (sys.vectors.adjoint() * psi).cwiseAbs2();
  int best = 0;
  for (int k = 1; k < ov.size(); ++k)
    if (ov(k) > ov(best)) best = k;
  return best;
}

// Dominant-sector component of a state, normalized.
inline std::pair<int, Eigen::VectorXcd> dominant_component(
    const CompositeState& st) {
  if (st.components().empty())
    throw DomainError("dominant_component: empty state");
  int best_n = st.components().begin()->first;
  double best_w = -1;
  for (const auto& [n, v] : st.components()) {
    const double w = v.squaredNorm();
    if (w > best_w) {
      best_w = w;
      best_n = n;
    }
  }
  Eigen::VectorXcd v = st.components().at(best_n);
  v /= v.norm();
  return {best_n, std::move(v)};
}

// Probability that every listed site reads occupation one.
inline double all_singly_occupied(const CompositeState& st,
                                  const std::vector<int>& sites) {
  double p = 0;
  const SectorRegistry& reg = *st.registry();
  for (const auto& [n, v] : st.components()) {
    const SectorBasis& basis = reg.sector(n);
    for (int b = 0; b < basis.dim(); ++b) {
      bool ok = true;
      for (int site : sites)
        if (basis.states[static_cast<std::size_t>(b)]
                        [static_cast<std::size_t>(site)] != 1) {
          ok = false;
          break;
        }
      if (ok) p += std::norm(v(b));
    }
  }
  return p;
}

namespace detail {

// Static frequency offsets shift every waveform additively: ramps stay
// affine in their endpoints, so shifting both endpoints shifts every sample.
inline Schedule shifted_schedule(const Schedule& sched,
                                 const std::vector<double>& offsets) {
  auto add = [&](std::vector<double>& d) {
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += offsets[i];
  };
  Schedule out = sched;
  for (auto& el : out)
    std::visit(
        [&](auto& e) {
          using T = std::decay_t<decltype(e)>;
          if constexpr (std::is_same_v<T, Hold>) add(e.detunings);
          else if constexpr (std::is_same_v<T, ExpRamp>) {
            add(e.start);
            add(e.end);
          } else if constexpr (std::is_same_v<T, SiteModulation>) add(e.base);
        },
        el);
  return out;
}

// Piecewise-constant propagator matrix of a dynamic block on one sector.
// Lets a fixed reversal sequence be evolved once and applied per hold point
// as a matvec instead of re-integrating the ramps every time.
inline Eigen::MatrixXcd schedule_operator(const SectorRegistry& reg,
                                          int n_total, const Schedule& sched,
                                          const std::vector<double>& offsets,
                                          const RunPolicy& policy) {
  std::vector<ConstantSegment> segs;
  for (const auto& el : sched) {
    if (std::holds_alternative<Rotation>(el) ||
        std::holds_alternative<VirtualPhase>(el))
      throw DomainError(
          "schedule_operator: instantaneous element in a dynamic block");
    auto s = sample_element(el, policy.sample_dt);
    segs.insert(segs.end(), s.begin(), s.end());
  }
  const auto merged = coalesce_segments(segs);
  const int dim = reg.sector(n_total).dim();
  if (dim > eigensolve_dimension_cap)
    throw CapabilityError("schedule_operator: dimension cap exceeded");
  Eigen::MatrixXcd op = Eigen::MatrixXcd::Identity(dim, dim);
  for (const auto& seg : merged) {
    std::vector<double> det = seg.detunings;
    if (!offsets.empty())
      for (std::size_t i = 0; i < det.size(); ++i) det[i] += offsets[i];
    DenseExp ex;
    ex.init(sector_ham(reg, n_total, det));
    const Eigen::VectorXcd phases =
        (cplx(0, -seg.duration) * ex.values.cast<cplx>().array())
            .exp()
            .matrix();
    op = ex.vectors * (phases.asDiagonal() * (ex.vectors.adjoint() * op));
  }
  return op;
}

}  // namespace detail

// A Ramsey fringe scan: a fixed prefix, a variable hold, a fixed dynamic
// suffix (time-extended elements only), then the virtual-phase stamp and the
// closing pi/2 on the phase site.
struct FringeJob {
  std::shared_ptr<SectorRegistry> registry;
  Schedule prefix;
  std::vector<double> hold_detunings;
  Schedule suffix;
  int phase_site = 0;
  double omega_v = 0;  // virtual-phase rate stamped per hold second
  int readout_site = 0;
  double hold_max = ns(200.0);
  double hold_step = ns(1.0);
  int shots = 0;  // 0: one exact pass
  NoiseModel noise;
  const ReadoutModel* readout = nullptr;  // sample outcomes when set
  int groups = 1;
  std::uint64_t seed = 1;
};

struct FringeData {
  std::vector<double> hold;  // seconds
  std::vector<double> p1;    // mean over shots (or exact)
  Eigen::MatrixXd group_p1;  // points x groups
};

inline FringeData run_fringe(const FringeJob& job, const RunPolicy& policy) {
  if (!(job.hold_step > 0) || job.hold_max < 0)
    throw DomainError("run_fringe: bad hold grid");
  if (job.shots < 0 || job.groups < 1 ||
      (job.shots > 0 && job.shots % job.groups != 0))
    throw DomainError("run_fringe: shots must split evenly into groups");

  const int n_pts =
      static_cast<int>(std::floor(job.hold_max / job.hold_step + 1e-9)) + 1;
  const int n_sites = job.registry->lattice().n_sites;
  const bool sampling = job.shots > 0;
  const int groups = sampling ? job.groups : 1;

  FringeData data;
  data.hold.resize(static_cast<std::size_t>(n_pts));
  for (int k = 0; k < n_pts; ++k)
    data.hold[static_cast<std::size_t>(k)] = k * job.hold_step;
  data.group_p1 = Eigen::MatrixXd::Zero(n_pts, groups);

  const CompositeState vacuum = CompositeState::product_state(
      job.registry, FockState(static_cast<std::size_t>(n_sites), 0));

  auto close_out = [&](CompositeState& st, double dt) {
    apply_virtual_phase(st, VirtualPhase{job.phase_site, job.omega_v * dt});
    apply_rotation(st, Rotation{job.phase_site, M_PI / 2, 0.0},
                   policy.rotation_occ2_tol);
  };
  auto read_exact = [&](const CompositeState& st) {
    return st.occupation_population(job.readout_site, 1) / st.squared_norm();
  };
  auto read_sampled = [&](CompositeState& st, std::mt19937_64& rng) {
    const FockState outcome =
        apply_readout(sample_fock(st, rng), *job.readout, rng);
    return outcome[static_cast<std::size_t>(job.readout_site)] == 1 ? 1.0
                                                                    : 0.0;
  };

  if (!sampling || !job.noise.any_decay()) {
    // Without jumps each realization is a fixed unitary: evolve the suffix
    // once as per-sector operators, then each hold point is a matvec.
    const int n_shots = sampling ? job.shots : 1;
    const bool per_shot_fields = sampling && job.noise.any_static();

    CompositeState head = vacuum;
    std::map<int, Eigen::MatrixXcd> reversal;
    std::unique_ptr<HoldPropagator> hold;

    for (int shot = 0; shot < n_shots; ++shot) {
      if (hold == nullptr || per_shot_fields) {
        std::vector<double> offsets(static_cast<std::size_t>(n_sites), 0.0);
        if (per_shot_fields) {
          // The probe draws offsets exactly as a full trajectory would.
          TrajectoryEngine probe(vacuum, job.noise, policy, job.seed,
                                 static_cast<std::uint64_t>(shot));
          offsets = probe.offsets();
        }
        head = vacuum;
        run_schedule(head, detail::shifted_schedule(job.prefix, offsets),
                     policy);
        std::vector<double> hd = job.hold_detunings;
        for (int i = 0; i < n_sites; ++i)
          hd[static_cast<std::size_t>(i)] +=
              offsets[static_cast<std::size_t>(i)];
        hold = std::make_unique<HoldPropagator>(job.registry, std::move(hd));
        reversal.clear();
        for (const auto& [n, v] : head.components())
          reversal.emplace(n,
                           detail::schedule_operator(*job.registry, n,
                                                     job.suffix, offsets,
                                                     policy));
      }
      const int g = sampling ? shot * groups / job.shots : 0;
      for (int k = 0; k < n_pts; ++k) {
        const double dt = data.hold[static_cast<std::size_t>(k)];
        CompositeState st = hold->advance(head, dt);
        for (auto& [n, v] : st.components()) v = reversal.at(n) * v;
        close_out(st, dt);
        double p1;
        if (sampling && job.readout != nullptr) {
          // Same per-point stream a trajectory branch would reseed to.
          std::mt19937_64 rng(
              mix_seed(mix_seed(job.seed, static_cast<std::uint64_t>(shot)),
                       static_cast<std::uint64_t>(k)));
          p1 = read_sampled(st, rng);
        } else {
          p1 = read_exact(st);
        }
        data.group_p1(k, g) += p1;
      }
    }
  } else {
    for (int shot = 0; shot < job.shots; ++shot) {
      const int g = shot * groups / job.shots;
      TrajectoryEngine head(vacuum, job.noise, policy, job.seed,
                            static_cast<std::uint64_t>(shot));
      head.run(job.prefix);
      for (int k = 0; k < n_pts; ++k) {
        const double dt = data.hold[static_cast<std::size_t>(k)];
        TrajectoryEngine branch = head;
        branch.reseed(mix_seed(job.seed, static_cast<std::uint64_t>(shot)),
                      static_cast<std::uint64_t>(k));
        Schedule tail;
        tail.push_back(Hold{dt, job.hold_detunings, "hold"});
        tail.insert(tail.end(), job.suffix.begin(), job.suffix.end());
        branch.run(tail);
        CompositeState st = branch.finish();
        close_out(st, dt);
        const double p1 = job.readout != nullptr
                              ? read_sampled(st, branch.rng())
                              : read_exact(st);
        data.group_p1(k, g) += p1;
      }
    }
  }
  if (sampling) data.group_p1 *= double(groups) / double(job.shots);

  data.p1.resize(static_cast<std::size_t>(n_pts));
  for (int k = 0; k < n_pts; ++k)
    data.p1[static_cast<std::size_t>(k)] = data.group_p1.row(k).mean();
  return data;
}

struct FringeSummary {
  FoldedSpectrum spectrum;
  double frequency = 0;  // rad/s, folded
  double amplitude = 0;
};

inline FringeSummary summarize_fringe(const std::vector<double>& p1, double dt,
                                      bool refine = false) {
  FringeSummary out;
  out.spectrum = folded_spectrum(p1, dt);
  const auto peaks = dominant_peaks(out.spectrum);
  if (peaks.empty()) return out;
  out.frequency = peaks.front().frequency;
  out.amplitude = peaks.front().amplitude;
  if (refine) {
    const double res = out.spectrum.resolution;
    const double lo = std::max(0.0, out.frequency - res);
    const double hi = std::min(out.spectrum.nyquist, out.frequency + res);
    out.frequency = refine_peak_frequency(p1, dt, lo, hi);
  }
  return out;
}

// Expected fringe frequency from the hold-configuration spectrum: run each
// pure ancilla branch to the hold point, read off the eigenvalue it overlaps
// most, and beat the branch splitting against the virtual-phase rate.
struct FringePrediction {
  double energy_ground = 0;   // rad/s, ancilla-ground branch
  double energy_excited = 0;  // rad/s, ancilla-excited branch
  double rate = 0;            // signed, before folding
  double folded = 0;
};

inline FringePrediction predict_fringe(
    const std::shared_ptr<SectorRegistry>& reg, const Schedule& prefix_ground,
    const Schedule& prefix_excited, const std::vector<double>& hold_detunings,
    double omega_v, double hold_step, const RunPolicy& policy) {
  const int n_sites = reg->lattice().n_sites;
  const CompositeState vacuum = CompositeState::product_state(
      reg, FockState(static_cast<std::size_t>(n_sites), 0));

  auto branch_energy = [&](const Schedule& prefix) {
    CompositeState st = vacuum;
    run_schedule(st, prefix, policy);
    const auto [n, v] = dominant_component(st);
    const EigenSystem sys = eigensolve(*reg, n, hold_detunings);
    return sys.values(max_overlap_index(sys, v));
  };

  FringePrediction out;
  out.energy_ground = branch_energy(prefix_ground);
  out.energy_excited = branch_energy(prefix_excited);
  out.rate = omega_v - (out.energy_excited - out.energy_ground);
  out.folded = fold_frequency(std::abs(out.rate), M_PI / hold_step);
  return out;
}

// ---------------------------------------------------------------------------
// conditional-transport: ramp into the transistor configuration and read the
// density profile; the ancilla state decides whether the photons move.

struct TransportOptions {
  DevicePreset device = seven_site_device();
  AncillaPrep prep = AncillaPrep::ground;
  double t_ramp = ns(960.0);
  double tau_fraction = 0.5;
  RunPolicy policy = preset_run_policy();
  int shots = 0;  // extra trajectory-averaged density column when > 0
  bool with_noise = false;
  std::uint64_t seed = 1;
  int track_steps = 80;
};

inline ProtocolResult run_conditional_transport(const TransportOptions& opt) {
  const DevicePreset& d = opt.device;
  auto reg = std::make_shared<SectorRegistry>(d.lattice);
  const int n_sites = d.lattice.n_sites;
  const CompositeState vacuum = CompositeState::product_state(
      reg, FockState(static_cast<std::size_t>(n_sites), 0));

  Schedule prep = prep_schedule(d, opt.prep);
  Schedule ramp;
  ramp.push_back(config_ramp(opt.t_ramp, opt.tau_fraction, d.stagger_small,
                             d.transistor, "engage"));

  CompositeState injected = vacuum;
  run_schedule(injected, prep, opt.policy);
  CompositeState final_state = injected;
  run_schedule(final_state, ramp, opt.policy);

  const Eigen::VectorXd density = density_expectation(final_state);

  ProtocolResult out;
  out.results.columns = {"site", "density"};
  for (int i = 0; i < n_sites; ++i)
    out.results.rows.push_back({double(i), density(i)});

  // Adiabatic target: the eigenstate the injected state overlaps most at the
  // start of the ramp, continued along the ramp's configuration path.
  const auto [n_dom, start_vec] = dominant_component(injected);
  const auto path = linear_path(d.stagger_small, d.transistor, opt.track_steps);
  const int start_index =
      max_overlap_index(eigensolve(*reg, n_dom, path.front()), start_vec);
  const auto tracked = track_eigenstate(*reg, n_dom, path, start_index, 0.25);
  const TrackedState& target = tracked.back();
  Eigen::VectorXcd final_dom = Eigen::VectorXcd::Zero(target.vector.size());
  const auto it = final_state.components().find(n_dom);
  if (it != final_state.components().end()) final_dom = it->second;
  const double fidelity = std::norm(target.vector.dot(final_dom));

  double left = 0, right = 0;
  for (int i : d.left_sites) left += density(i);
  for (int i : d.right_sites) right += density(i);

  auto& sc = out.scalars;
  sc["t_ramp_ns"] = to_ns(opt.t_ramp);
  sc["adiabatic_fidelity"] = fidelity;
  sc["tracked_energy_mhz"] = to_mhz(target.value);
  sc["tracked_min_overlap_sq"] = [&] {
    double m = 1.0;
    for (const auto& t : tracked) m = std::min(m, t.overlap_sq);
    return m;
  }();
  sc["left_occupation"] = left;
  sc["right_occupation"] = right;
  sc["ancilla_occupation"] = density(d.ancilla);

  if (opt.shots > 0) {
    Schedule sched = prep;
    sched.insert(sched.end(), ramp.begin(), ramp.end());
    const NoiseModel noise = opt.with_noise ? preset_noise(d) : NoiseModel{};
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(n_sites);
    for (int shot = 0; shot < opt.shots; ++shot)
      mean += density_expectation(
          run_trajectory(vacuum, sched, noise, opt.policy, opt.seed,
                         static_cast<std::uint64_t>(shot)));
    mean /= double(opt.shots);
    out.results.columns.push_back("density_mean");
    for (int i = 0; i < n_sites; ++i)
      out.results.rows[static_cast<std::size_t>(i)].push_back(mean(i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// noon-ramsey: prepare the ancilla-conditioned superposition, hold in the
// inverted stagger, reverse, and read the fringe on the ancilla.

struct NoonOptions {
  DevicePreset device = seven_site_device();
  double t_ramp = ns(240.0);
  double tau_fraction = 0.5;
  double hold_max = ns(200.0);
  double hold_step = ns(1.0);
  RunPolicy policy = preset_run_policy();
  int shots = 0;
  bool with_noise = false;
  bool sample_readout = false;
  int groups = 1;
  std::uint64_t seed = 1;
};

namespace detail {

// Shared fringe assembly for the interferometer protocols: prefix to the
// hold configuration, reversal back, with caller-chosen hold detunings.
inline ProtocolResult noon_style_run(const NoonOptions& opt,
                                     const std::vector<double>& hold_detunings,
                                     bool refine_peak) {
  const DevicePreset& d = opt.device;
  auto reg = std::make_shared<SectorRegistry>(d.lattice);

  FringeJob job;
  job.registry = reg;
  job.prefix = prep_schedule(d, AncillaPrep::superposition);
  append_entangler(job.prefix, d, opt.t_ramp, opt.tau_fraction);
  job.hold_detunings = hold_detunings;
  append_disentangler(job.suffix, d, opt.t_ramp, opt.tau_fraction);
  job.phase_site = d.ancilla;
  job.omega_v =
      hold_detunings[static_cast<std::size_t>(d.ancilla)] - d.fringe_ref;
  job.readout_site = d.ancilla;
  job.hold_max = opt.hold_max;
  job.hold_step = opt.hold_step;
  job.shots = opt.shots;
  if (opt.shots > 0 && opt.with_noise) job.noise = preset_noise(d);
  const ReadoutModel readout = preset_readout(d);
  if (opt.shots > 0 && opt.sample_readout) job.readout = &readout;
  job.groups = opt.groups;
  job.seed = opt.seed;

  // Finite-speed ramps leave percent-level doublon residue on the ancilla;
  // the close-out rotation must tolerate it (it surfaces as contrast loss).
  RunPolicy policy = opt.policy;
  policy.rotation_occ2_tol = 1.0;
  const FringeData data = run_fringe(job, policy);
  const FringeSummary fringe =
      summarize_fringe(data.p1, opt.hold_step, refine_peak);

  Schedule prefix_ground = prep_schedule(d, AncillaPrep::ground);
  append_entangler(prefix_ground, d, opt.t_ramp, opt.tau_fraction);
  Schedule prefix_excited = prep_schedule(d, AncillaPrep::excited);
  append_entangler(prefix_excited, d, opt.t_ramp, opt.tau_fraction);
  const FringePrediction pred =
      predict_fringe(reg, prefix_ground, prefix_excited, hold_detunings,
                     job.omega_v, opt.hold_step, opt.policy);

  ProtocolResult out;
  out.results.columns = {"hold_ns", "p1"};
  for (std::size_t k = 0; k < data.hold.size(); ++k)
    out.results.rows.push_back({to_ns(data.hold[k]), data.p1[k]});
  out.spectrum = fringe.spectrum;

  auto& sc = out.scalars;
  sc["t_ramp_ns"] = to_ns(opt.t_ramp);
  sc["omega_v_mhz"] = to_mhz(job.omega_v);
  sc["fringe_mhz"] = to_mhz(fringe.frequency);
  sc["fringe_amplitude"] = fringe.amplitude;
  sc["predicted_folded_mhz"] = to_mhz(pred.folded);
  sc["predicted_unfolded_mhz"] = to_mhz(std::abs(pred.rate));
  sc["branch_ground_mhz"] = to_mhz(pred.energy_ground);
  sc["branch_excited_mhz"] = to_mhz(pred.energy_excited);
  return out;
}

}  // namespace detail

inline ProtocolResult run_noon_ramsey(const NoonOptions& opt) {
  return detail::noon_style_run(opt, opt.device.inverted, false);
}

// ---------------------------------------------------------------------------
// sensing: the same interferometer with an extra antisymmetric detuning on
// the two clusters during the hold; every transported photon trades -delta
// for +delta, so the fringe moves (n_sites - 1) times faster than delta.

struct SensingOptions {
  DevicePreset device = seven_site_device();
  double delta = mhz(1.0);
  double t_ramp = ns(240.0);
  double tau_fraction = 0.5;
  double hold_max = ns(400.0);
  double hold_step = ns(1.0);
  RunPolicy policy = preset_run_policy();
  int shots = 0;
  bool with_noise = false;
  bool sample_readout = false;
  int groups = 1;
  std::uint64_t seed = 1;
};

inline ProtocolResult run_sensing(const SensingOptions& opt) {
  const DevicePreset& d = opt.device;
  std::vector<double> hold = d.inverted;
  for (int i : d.left_sites) hold[static_cast<std::size_t>(i)] -= opt.delta;
  for (int i : d.right_sites) hold[static_cast<std::size_t>(i)] += opt.delta;

  NoonOptions base;
  base.device = opt.device;
  base.t_ramp = opt.t_ramp;
  base.tau_fraction = opt.tau_fraction;
  base.hold_max = opt.hold_max;
  base.hold_step = opt.hold_step;
  base.policy = opt.policy;
  base.shots = opt.shots;
  base.with_noise = opt.with_noise;
  base.sample_readout = opt.sample_readout;
  base.groups = opt.groups;
  base.seed = opt.seed;

  ProtocolResult out = detail::noon_style_run(base, hold, true);
  out.scalars["delta_mhz"] = to_mhz(opt.delta);
  return out;
}

// ---------------------------------------------------------------------------
// ramp-sweep: the fringe content of the interferometer as the ramp time
// crosses from diabatic to adiabatic.

struct RampSweepOptions {
  DevicePreset device = five_site_device();
  double t_ramp_min = ns(4.0);
  double t_ramp_max = us(2.0);
  int n_points = 22;
  double tau_fraction = 0.5;
  double hold_max = ns(200.0);
  double hold_step = ns(1.0);
  double peak_floor = 0.05;  // fraction of the strongest peak kept
  RunPolicy policy = preset_run_policy();
  std::uint64_t seed = 1;
};

inline ProtocolResult run_ramp_sweep(const RampSweepOptions& opt) {
  if (opt.n_points < 2) throw DomainError("run_ramp_sweep: need >= 2 points");
  const DevicePreset& d = opt.device;
  auto reg = std::make_shared<SectorRegistry>(d.lattice);

  // Mid-transition reversal leaves doublon weight on the ancilla. The
  // closing pulse still addresses the 0-1 doublet and the readout classifies
  // occupancy 2 separately, so the guard would only abort valid physics.
  RunPolicy policy = opt.policy;
  policy.rotation_occ2_tol = 1.0;

  ProtocolResult out;
  out.results.columns = {"t_ramp_ns", "n_peaks", "f1_mhz", "a1", "f2_mhz",
                         "a2"};

  double first_dominant = 0, last_dominant = 0;
  for (int p = 0; p < opt.n_points; ++p) {
    const double t_ramp =
        opt.t_ramp_min * std::pow(opt.t_ramp_max / opt.t_ramp_min,
                                  double(p) / (opt.n_points - 1));

    FringeJob job;
    job.registry = reg;
    job.prefix = prep_schedule(d, AncillaPrep::superposition);
    append_entangler(job.prefix, d, t_ramp, opt.tau_fraction);
    job.hold_detunings = d.inverted;
    append_disentangler(job.suffix, d, t_ramp, opt.tau_fraction);
    job.phase_site = d.ancilla;
    job.omega_v =
        d.inverted[static_cast<std::size_t>(d.ancilla)] - d.fringe_ref;
    job.readout_site = d.ancilla;
    job.hold_max = opt.hold_max;
    job.hold_step = opt.hold_step;
    job.seed = opt.seed;

    const FringeData data = run_fringe(job, policy);
    const FoldedSpectrum spec = folded_spectrum(data.p1, opt.hold_step);
    const auto peaks = spectral_peaks(spec, opt.peak_floor);

    std::vector<double> row{to_ns(t_ramp), double(peaks.size()), 0, 0, 0, 0};
    if (!peaks.empty()) {
      row[2] = to_mhz(peaks[0].frequency);
      row[3] = peaks[0].amplitude;
      if (p == 0) first_dominant = to_mhz(peaks[0].frequency);
      if (p == opt.n_points - 1) last_dominant = to_mhz(peaks[0].frequency);
    }
    if (peaks.size() > 1) {
      row[4] = to_mhz(peaks[1].frequency);
      row[5] = peaks[1].amplitude;
    }
    out.results.rows.push_back(std::move(row));
  }

  out.scalars["fast_limit_mhz"] = first_dominant;
  out.scalars["slow_limit_mhz"] = last_dominant;
  return out;
}

// ---------------------------------------------------------------------------
// phonon-swap: modulate the lattice site next to the ancilla while the
// ordered lattice holds either a pinned pair or a delocalized fluid.  Each
// drive quantum supplies half the fluid band splitting, so on resonance the
// two band-edge states exchange and the return ramp converts that into a
// left-right photon swap; the pinned branch has no matching transition.

struct PhononOptions {
  DevicePreset device = five_site_device();
  double t_ramp = ns(240.0);
  double tau_fraction = 0.5;
  // The two-quantum exchange stays a clean single line only while the drive
  // is weak: stronger tones mix the sequential and direct pathways and the
  // transfer stops being sinusoidal in time.  At this amplitude the half
  // cycle of the exchange sits near 3.6 us.
  double drive_amplitude = mhz(1.0);
  double drive_center = 0;  // scan center; 0 derives the two-quantum resonance
  std::vector<double> durations = {ns(1200.0), ns(2400.0), ns(3600.0)};
  int n_freq = 25;
  double band = 0.05;  // scan covers target * (1 +- band)
  std::vector<double> fringe_durations = {0.0, ns(900.0), ns(1800.0),
                                          ns(2700.0), ns(3600.0)};
  double hold_max = ns(200.0);
  double hold_step = ns(1.0);
  RunPolicy policy = preset_run_policy();
  int shots = 0;
  bool with_noise = false;
  std::uint64_t seed = 1;
  int track_steps = 160;
};

// Two-photon resonance from continuation: the left and right fluid states of
// the ancilla-excited manifold, followed from their staggered parents to the
// ordered lattice; the drive must supply half their splitting.
inline double phonon_drive_target(const DevicePreset& d,
                                  int track_steps = 160) {
  auto reg = std::make_shared<SectorRegistry>(d.lattice);
  const int n_sites = d.lattice.n_sites;
  FockState left(static_cast<std::size_t>(n_sites), 0);
  for (int i : d.left_sites) left[static_cast<std::size_t>(i)] = 1;
  left[static_cast<std::size_t>(d.ancilla)] = 1;
  FockState right(static_cast<std::size_t>(n_sites), 0);
  for (int i : d.right_sites) right[static_cast<std::size_t>(i)] = 1;
  right[static_cast<std::size_t>(d.ancilla)] = 1;

  const int n_total = total_occupation(left);
  const auto path = linear_path(d.stagger_small, d.transistor, track_steps);
  const EigenSystem start = eigensolve(*reg, n_total, path.front());

  auto edge_energy = [&](const FockState& s) {
    const CompositeState st = CompositeState::product_state(reg, s);
    const int idx = max_overlap_index(start, st.components().at(n_total));
    return track_eigenstate(*reg, n_total, path, idx, 0.25).back().value;
  };

  return 0.5 * std::abs(edge_energy(left) - edge_energy(right));
}

inline ProtocolResult run_phonon_swap(const PhononOptions& opt) {
  if (opt.n_freq < 3) throw DomainError("run_phonon_swap: need >= 3 points");
  if (opt.durations.empty())
    throw DomainError("run_phonon_swap: need at least one drive duration");
  const DevicePreset& d = opt.device;
  if (d.drive_site < 0)
    throw DomainError("run_phonon_swap: device has no drive site");
  auto reg = std::make_shared<SectorRegistry>(d.lattice);
  const int n_sites = d.lattice.n_sites;
  const CompositeState vacuum = CompositeState::product_state(
      reg, FockState(static_cast<std::size_t>(n_sites), 0));

  const double target = opt.drive_center > 0
                            ? opt.drive_center
                            : phonon_drive_target(d, opt.track_steps);

  auto drive_element = [&](double freq, double amplitude, double duration) {
    SiteModulation mod;
    mod.site = d.drive_site;
    mod.duration = duration;
    mod.amplitude = amplitude;
    mod.frequency = freq;
    mod.base = d.transistor;
    mod.label = "drive";
    return mod;
  };
  auto return_ramp = [&]() {
    ExpRamp back = reversed_ramp(config_ramp(
        opt.t_ramp, opt.tau_fraction, d.stagger_small, d.transistor, ""));
    back.label = "return";
    return back;
  };
  auto branch_schedule = [&](AncillaPrep prep, double freq, double amplitude,
                             double duration) {
    Schedule sched = prep_schedule(d, prep);
    sched.push_back(config_ramp(opt.t_ramp, opt.tau_fraction, d.stagger_small,
                                d.transistor, "engage"));
    if (duration > 0)
      sched.push_back(drive_element(freq, amplitude, duration));
    sched.push_back(return_ramp());
    return sched;
  };
  auto run_branch = [&](AncillaPrep prep, double freq, double amplitude,
                        double duration) {
    const Schedule sched = branch_schedule(prep, freq, amplitude, duration);
    CompositeState st = vacuum;
    if (opt.shots > 0) {
      const NoiseModel noise = opt.with_noise ? preset_noise(d) : NoiseModel{};
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(n_sites);
      for (int shot = 0; shot < opt.shots; ++shot)
        mean += density_expectation(
            run_trajectory(vacuum, sched, noise, opt.policy, opt.seed,
                           static_cast<std::uint64_t>(shot)));
      mean /= double(opt.shots);
      return std::pair<Eigen::VectorXd, double>{mean, 0.0};
    }
    run_schedule(st, sched, opt.policy);
    return std::pair<Eigen::VectorXd, double>{
        density_expectation(st) / st.squared_norm(),
        doublon_expectation(st) / st.squared_norm()};
  };

  std::vector<int> swap_sites;
  for (int i : d.left_sites) swap_sites.push_back(i);
  for (int i : d.right_sites) swap_sites.push_back(i);

  ProtocolResult out;
  out.results.columns = {"drive_mhz", "duration_ns", "transfer"};
  for (int i : swap_sites)
    out.results.columns.push_back("n" + std::to_string(i));
  out.results.columns.push_back("solid_change");

  const double n_injected = double(d.left_sites.size());
  const double probe_duration = opt.durations.back();
  double best_transfer = -1, best_freq = 0;
  std::vector<double> freqs, probe_transfers;
  double solid_max = 0, doublon_max = 0;

  for (double duration : opt.durations) {
    // Drive-off reference for the pinned branch: same sequence and timing,
    // so any reported change is the drive's doing alone.
    const auto ref = run_branch(AncillaPrep::ground, target, 0.0, duration);
    for (int k = 0; k < opt.n_freq; ++k) {
      const double freq =
          target *
          (1.0 - opt.band + 2.0 * opt.band * double(k) / (opt.n_freq - 1));
      const auto moved =
          run_branch(AncillaPrep::excited, freq, opt.drive_amplitude,
                     duration);
      double right = 0;
      for (int i : d.right_sites) right += moved.first(i);
      const double transfer = right / n_injected;

      const auto solid =
          run_branch(AncillaPrep::ground, freq, opt.drive_amplitude,
                     duration);
      const double change =
          (solid.first - ref.first).cwiseAbs().maxCoeff();
      solid_max = std::max(solid_max, change);
      doublon_max =
          std::max(doublon_max, std::abs(solid.second - ref.second));

      std::vector<double> row{to_mhz(freq), to_ns(duration), transfer};
      for (int i : swap_sites) row.push_back(moved.first(i));
      row.push_back(change);
      out.results.rows.push_back(std::move(row));

      if (duration == probe_duration) {
        freqs.push_back(freq);
        probe_transfers.push_back(transfer);
        if (transfer > best_transfer) {
          best_transfer = transfer;
          best_freq = freq;
        }
      }
    }
  }

  // Sub-grid peak from a parabola through the best point and its neighbors,
  // on the longest-duration row where the exchange is deepest.
  double peak = best_freq;
  for (std::size_t k = 1; k + 1 < freqs.size(); ++k) {
    if (freqs[k] != best_freq) continue;
    const double ym = probe_transfers[k - 1], y0 = probe_transfers[k],
                 yp = probe_transfers[k + 1];
    const double den = ym - 2 * y0 + yp;
    if (den < 0) {
      const double shift = 0.5 * (ym - yp) / den;
      if (std::abs(shift) <= 0.5)
        peak = freqs[k] + shift * (freqs[k + 1] - freqs[k]);
    }
  }

  // Both branches once more at the refined frequency itself: the scan step is
  // comparable to the exchange linewidth, so the best grid point understates
  // the on-peak transfer.
  if (peak != best_freq) {
    const auto ref =
        run_branch(AncillaPrep::ground, peak, 0.0, probe_duration);
    const auto moved = run_branch(AncillaPrep::excited, peak,
                                  opt.drive_amplitude, probe_duration);
    double right = 0;
    for (int i : d.right_sites) right += moved.first(i);
    best_transfer = std::max(best_transfer, right / n_injected);
    const auto solid = run_branch(AncillaPrep::ground, peak,
                                  opt.drive_amplitude, probe_duration);
    solid_max =
        std::max(solid_max, (solid.first - ref.first).cwiseAbs().maxCoeff());
    doublon_max =
        std::max(doublon_max, std::abs(solid.second - ref.second));
  }

  // Conditional variant: the drive sandwiched between the ramps acts on a
  // solid+fluid superposition, and a mirrored reversal (tone replayed, ramps
  // reversed) localizes the branch phase back onto the ancilla.  The beat of
  // the swapped fluid against the pinned pair witnesses the left-right cat:
  // its amplitude cycles with the drive time, from nothing at zero drive to
  // its largest near a half exchange cycle.  The tone sits on the scan-
  // refined peak, as a calibrated instrument would set it.
  if (!opt.fringe_durations.empty()) {
    Table fr;
    fr.columns = {"duration_ns", "fringe_mhz", "amplitude", "cat_mhz",
                  "cat_amplitude"};
    RunPolicy fringe_policy = opt.policy;
    fringe_policy.rotation_occ2_tol = 1.0;

    // Swapped-branch beat predicted from the hold spectrum itself: the
    // eigenstates carrying the pinned pair and the fully swapped fluid.
    auto hold_energy = [&](const FockState& s) {
      const int n = total_occupation(s);
      const EigenSystem sys = eigensolve(*reg, n, d.stagger_small);
      const CompositeState st = CompositeState::product_state(reg, s);
      return sys.values(max_overlap_index(sys, st.components().at(n)));
    };
    FockState pinned(static_cast<std::size_t>(n_sites), 0);
    for (int i : d.left_sites) pinned[static_cast<std::size_t>(i)] = 1;
    FockState swapped(static_cast<std::size_t>(n_sites), 0);
    for (int i : d.right_sites) swapped[static_cast<std::size_t>(i)] = 1;
    swapped[static_cast<std::size_t>(d.ancilla)] = 1;
    const double omega_v =
        d.stagger_small[static_cast<std::size_t>(d.ancilla)] - d.fringe_ref;
    const double cat_rate =
        std::abs(omega_v - (hold_energy(swapped) - hold_energy(pinned)));

    for (double duration : opt.fringe_durations) {
      FringeJob job;
      job.registry = reg;
      job.prefix = prep_schedule(d, AncillaPrep::superposition);
      job.prefix.push_back(config_ramp(opt.t_ramp, opt.tau_fraction,
                                       d.stagger_small, d.transistor,
                                       "engage"));
      if (duration > 0)
        job.prefix.push_back(
            drive_element(peak, opt.drive_amplitude, duration));
      job.prefix.push_back(return_ramp());
      job.hold_detunings = d.stagger_small;
      job.suffix.push_back(config_ramp(opt.t_ramp, opt.tau_fraction,
                                       d.stagger_small, d.transistor,
                                       "re_engage"));
      if (duration > 0)
        job.suffix.push_back(
            drive_element(peak, opt.drive_amplitude, duration));
      job.suffix.push_back(return_ramp());
      job.phase_site = d.ancilla;
      job.omega_v = omega_v;
      job.readout_site = d.ancilla;
      job.hold_max = opt.hold_max;
      job.hold_step = opt.hold_step;
      job.shots = opt.shots;
      if (opt.shots > 0 && opt.with_noise) job.noise = preset_noise(d);
      job.seed = opt.seed;
      const FringeData data = run_fringe(job, fringe_policy);
      const FringeSummary fringe =
          summarize_fringe(data.p1, opt.hold_step, false);
      const double cat_folded =
          fold_frequency(cat_rate, fringe.spectrum.nyquist);
      double cat_amp = 0;
      for (std::size_t b = 0; b < fringe.spectrum.frequency.size(); ++b)
        if (std::abs(fringe.spectrum.frequency[b] - cat_folded) <=
            fringe.spectrum.resolution)
          cat_amp = std::max(cat_amp, fringe.spectrum.amplitude[b]);
      fr.rows.push_back({to_ns(duration), to_mhz(fringe.frequency),
                         fringe.amplitude, to_mhz(cat_folded), cat_amp});
    }
    out.fringes = std::move(fr);
    out.scalars["fringe_cat_mhz"] = to_mhz(fold_frequency(
        cat_rate, M_PI / opt.hold_step));
  }

  double mean_hop = 0;
  for (double j : d.lattice.hop) mean_hop += std::abs(j);
  mean_hop /= double(d.lattice.hop.size());

  auto& sc = out.scalars;
  sc["target_mhz"] = to_mhz(target);
  sc["band_splitting_mhz"] = to_mhz(2.0 * target);
  sc["peak_mhz"] = to_mhz(peak);
  sc["peak_transfer"] = best_transfer;
  sc["mean_hop_mhz"] = to_mhz(mean_hop);
  sc["target_over_hop"] = target / mean_hop;
  sc["peak_over_hop"] = peak / mean_hop;
  sc["drive_amplitude_mhz"] = to_mhz(opt.drive_amplitude);
  sc["duration_max_ns"] = to_ns(probe_duration);
  sc["solid_change_max"] = solid_max;
  sc["solid_doublon_change_max"] = doublon_max;
  return out;
}

// ---------------------------------------------------------------------------
// echo: entangle-disentangle pairs around an ancilla pi pulse refocus slow
// detuning scatter that a plain repetition turns into a random fringe phase.

struct EchoOptions {
  DevicePreset device = five_site_device();
  double t_ramp = ns(240.0);
  double tau_fraction = 0.5;
  int n_pairs = 1;
  double sigma = mhz(1.0);  // per-shot static detuning scatter, all sites
  int shots = 200;
  int groups = 10;
  bool sample_readout = false;  // sampled readout even when sigma is zero
  double hold_max = ns(200.0);
  double hold_step = ns(1.0);
  RunPolicy policy = preset_run_policy();
  std::uint64_t seed = 1;
};

inline ProtocolResult run_echo(const EchoOptions& opt) {
  if (opt.n_pairs < 1) throw DomainError("run_echo: n_pairs must be >= 1");
  const DevicePreset& d = opt.device;
  auto reg = std::make_shared<SectorRegistry>(d.lattice);
  const ReadoutModel readout = preset_readout(d);
  const bool sampling = opt.sigma > 0 || opt.sample_readout;

  auto build_job = [&](bool with_pi) {
    FringeJob job;
    job.registry = reg;
    job.prefix = prep_schedule(d, AncillaPrep::superposition);
    for (int k = 0; k < opt.n_pairs; ++k) {
      append_entangler(job.prefix, d, opt.t_ramp, opt.tau_fraction);
      append_disentangler(job.prefix, d, opt.t_ramp, opt.tau_fraction);
    }
    if (with_pi)
      job.prefix.push_back(Rotation{d.ancilla, M_PI, 0.0, "echo_pi"});
    for (int k = 0; k < opt.n_pairs - 1; ++k) {
      append_entangler(job.prefix, d, opt.t_ramp, opt.tau_fraction);
      append_disentangler(job.prefix, d, opt.t_ramp, opt.tau_fraction);
    }
    append_entangler(job.prefix, d, opt.t_ramp, opt.tau_fraction);
    job.hold_detunings = d.inverted;
    append_disentangler(job.suffix, d, opt.t_ramp, opt.tau_fraction);
    job.phase_site = d.ancilla;
    job.omega_v =
        d.inverted[static_cast<std::size_t>(d.ancilla)] - d.fringe_ref;
    job.readout_site = d.ancilla;
    job.hold_max = opt.hold_max;
    job.hold_step = opt.hold_step;
    if (sampling) {
      job.shots = opt.shots;
      job.groups = opt.groups;
      if (opt.sigma > 0)
        job.noise.static_sigma.assign(
            static_cast<std::size_t>(d.lattice.n_sites), opt.sigma);
      if (opt.sample_readout) job.readout = &readout;
    }
    job.seed = opt.seed;
    return job;
  };

  // As in noon_style_run: ramp residue on the ancilla is tolerated at the
  // pi pulse and close-out rather than aborting the run.
  RunPolicy policy = opt.policy;
  policy.rotation_occ2_tol = 1.0;
  const FringeData echo = run_fringe(build_job(true), policy);
  const FringeData plain = run_fringe(build_job(false), policy);

  // Contrast: spectral amplitude at the echo fringe bin. The same bin is
  // read for both variants so the comparison is like for like.
  const FoldedSpectrum echo_spec = folded_spectrum(echo.p1, opt.hold_step);
  const auto echo_peaks = dominant_peaks(echo_spec);
  const int bin = echo_peaks.empty() ? 1 : echo_peaks.front().bin;

  auto contrast_at = [&](const std::vector<double>& p1) {
    const FoldedSpectrum s = folded_spectrum(p1, opt.hold_step);
    return s.amplitude[static_cast<std::size_t>(bin)];
  };

  auto leave_one_out = [&](const FringeData& data) {
    const int groups = static_cast<int>(data.group_p1.cols());
    std::vector<double> loo;
    if (groups < 2) return loo;
    for (int g = 0; g < groups; ++g) {
      std::vector<double> mean(data.hold.size(), 0.0);
      for (int h = 0; h < groups; ++h) {
        if (h == g) continue;
        for (std::size_t k = 0; k < mean.size(); ++k)
          mean[k] += data.group_p1(static_cast<int>(k), h);
      }
      for (double& v : mean) v /= double(groups - 1);
      loo.push_back(contrast_at(mean));
    }
    return loo;
  };

  const double c_echo = contrast_at(echo.p1);
  const double c_plain = contrast_at(plain.p1);
  const auto loo_echo = leave_one_out(echo);
  const auto loo_plain = leave_one_out(plain);
  const double se_echo = loo_echo.empty() ? 0.0 : jackknife_se(loo_echo);
  const double se_plain = loo_plain.empty() ? 0.0 : jackknife_se(loo_plain);

  ProtocolResult out;
  out.results.columns = {"group", "echo_loo_contrast", "plain_loo_contrast"};
  for (std::size_t g = 0; g < loo_echo.size(); ++g)
    out.results.rows.push_back(
        {double(g), loo_echo[g], g < loo_plain.size() ? loo_plain[g] : 0.0});

  Table fringes;
  fringes.columns = {"hold_ns", "p1_echo", "p1_plain"};
  for (std::size_t k = 0; k < echo.hold.size(); ++k)
    fringes.rows.push_back({to_ns(echo.hold[k]), echo.p1[k], plain.p1[k]});
  out.fringes = std::move(fringes);
  out.spectrum = echo_spec;

  auto& sc = out.scalars;
  sc["n_pairs"] = double(opt.n_pairs);
  sc["sigma_mhz"] = to_mhz(opt.sigma);
  sc["fringe_bin"] = double(bin);
  sc["fringe_mhz"] = to_mhz(echo_spec.frequency[static_cast<std::size_t>(bin)]);
  sc["contrast_echo"] = c_echo;
  sc["contrast_plain"] = c_plain;
  sc["contrast_echo_se"] = se_echo;
  sc["contrast_plain_se"] = se_plain;
  return out;
}

// ---------------------------------------------------------------------------
// reversibility: repeated entangle-disentangle pairs, scored by the
// probability of finding every injected site back at unit occupation.

struct ReversibilityOptions {
  DevicePreset device = five_site_device();
  double t_ramp = ns(240.0);
  double tau_fraction = 0.5;
  int n_pairs_max = 4;
  int shots = 400;
  bool with_noise = true;
  bool sample_readout = true;
  RunPolicy policy = preset_run_policy();
  std::uint64_t seed = 1;
};

inline ProtocolResult run_reversibility(const ReversibilityOptions& opt) {
  if (opt.n_pairs_max < 1)
    throw DomainError("run_reversibility: n_pairs_max must be >= 1");
  const DevicePreset& d = opt.device;
  auto reg = std::make_shared<SectorRegistry>(d.lattice);
  const int n_sites = d.lattice.n_sites;
  const CompositeState vacuum = CompositeState::product_state(
      reg, FockState(static_cast<std::size_t>(n_sites), 0));
  const ReadoutModel readout = preset_readout(d);

  ProtocolResult out;
  out.results.columns = {"n_pairs", "fidelity", "fidelity_se"};

  std::vector<double> cycles, fidelity, fidelity_se;
  for (int n = 0; n <= opt.n_pairs_max; ++n) {
    Schedule sched = prep_schedule(d, AncillaPrep::excited);
    for (int k = 0; k < n; ++k) {
      append_entangler(sched, d, opt.t_ramp, opt.tau_fraction);
      append_disentangler(sched, d, opt.t_ramp, opt.tau_fraction);
    }

    double p, se;
    if (opt.shots == 0) {
      CompositeState st = vacuum;
      run_schedule(st, sched, opt.policy);
      p = all_singly_occupied(st, d.left_sites) / st.squared_norm();
      se = 0;
    } else {
      const NoiseModel noise = opt.with_noise ? preset_noise(d) : NoiseModel{};
      int hits = 0;
      for (int shot = 0; shot < opt.shots; ++shot) {
        TrajectoryEngine eng(vacuum, noise, opt.policy, opt.seed,
                             mix_seed(static_cast<std::uint64_t>(n),
                                      static_cast<std::uint64_t>(shot)));
        eng.run(sched);
        CompositeState fin = eng.finish();
        bool ok;
        if (opt.sample_readout) {
          const FockState reported =
              apply_readout(sample_fock(fin, eng.rng()), readout, eng.rng());
          ok = true;
          for (int site : d.left_sites)
            if (reported[static_cast<std::size_t>(site)] != 1) {
              ok = false;
              break;
            }
        } else {
          std::uniform_real_distribution<double> uni(0.0, 1.0);
          ok = uni(eng.rng()) < all_singly_occupied(fin, d.left_sites);
        }
        if (ok) ++hits;
      }
      p = double(hits) / opt.shots;
      se = std::sqrt(std::max(p * (1 - p), 1e-12) / opt.shots);
    }
    out.results.rows.push_back({double(n), p, se});
    cycles.push_back(double(n));
    fidelity.push_back(p);
    fidelity_se.push_back(se);
  }

  // F(n) = A (1 - eps)^(2n): two ramp passes per entangle-disentangle pair.
  const DecayFit fit = opt.shots == 0
                           ? fit_power_decay(cycles, fidelity, 2.0)
                           : fit_power_decay(cycles, fidelity, 2.0,
                                             &fidelity_se);

  auto& sc = out.scalars;
  sc["amplitude"] = fit.amplitude;
  sc["epsilon_rev"] = fit.rate;
  sc["epsilon_rev_se"] = fit.rate_se;
  sc["n_used"] = double(fit.n_used);
  return out;
}

}  // namespace bht
