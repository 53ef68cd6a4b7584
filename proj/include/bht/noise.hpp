#pragma once
// Open-system ingredients: relaxation and dephasing as quantum-jump
// trajectories, slow per-shot frequency offsets, and the occupancy readout
// confusion model.
//
// Jump operators are sqrt(1/T1_i) a_i and sqrt(2/Tphi_i) n_i, so the
// non-Hermitian part of the effective Hamiltonian is diagonal in the Fock
// basis and splits off exactly.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <vector>

#include "core.hpp"
#include "fock.hpp"
#include "propagator.hpp"
#include "schedule.hpp"

namespace bht {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Decorrelates (seed, shot, branch) into one generator seed; any change in
// any argument moves every bit.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a,
                              std::uint64_t b = 0) {
  return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b);
}

inline constexpr double no_decay = std::numeric_limits<double>::infinity();

struct NoiseModel {
  std::vector<double> t1;            // seconds; infinity disables a site
  std::vector<double> t_phi;         // seconds; infinity disables a site
  std::vector<double> static_sigma;  // rad/s; slow per-shot offsets

  void validate(int n_sites) const {
    std::ostringstream bad;
    auto check = [&](const std::vector<double>& v, const char* name,
                     bool strictly_positive) {
      if (v.empty()) return;
      if (static_cast<int>(v.size()) != n_sites)
        bad << name << " must be empty or have one entry per site; ";
      for (double x : v)
        if (strictly_positive ? !(x > 0) : !(x >= 0))
          bad << name << " entries must be "
              << (strictly_positive ? "positive; " : "non-negative; ");
    };
    check(t1, "t1", true);
    check(t_phi, "t_phi", true);
    check(static_sigma, "static_sigma", false);
    const std::string msg = bad.str();
    if (!msg.empty()) throw DomainError("NoiseModel: " + msg);
  }

  bool any_decay() const {
    for (double x : t1)
      if (std::isfinite(x)) return true;
    for (double x : t_phi)
      if (std::isfinite(x)) return true;
    return false;
  }

  bool any_static() const {
    for (double x : static_sigma)
      if (x > 0) return true;
    return false;
  }

  // Shortest active decay time, for the substep cap.
  double min_decay_time() const {
    double m = no_decay;
    for (double x : t1) m = std::min(m, x);
    for (double x : t_phi) m = std::min(m, x);
    return m;
  }
};

// Marginal dephasing rate consistent with measured T1 and T2:
// 1/Tphi = 1/T2 - 1/(2 T1).
inline double t_phi_from_t2(double t1, double t2) {
  if (!(t2 > 0)) throw DomainError("t_phi_from_t2: t2 must be positive");
  const double inv = 1.0 / t2 - (std::isfinite(t1) ? 0.5 / t1 : 0.0);
  if (inv < 0)
    throw DomainError("t_phi_from_t2: t2 exceeds the 2 T1 limit");
  return inv > 0 ? 1.0 / inv : no_decay;
}

namespace detail {

// a_site, mapping each sector into the one below.
inline void apply_lowering(CompositeState& st, int site) {
  auto reg = st.registry();
  std::map<int, Eigen::VectorXcd> out;
  for (const auto& [n, v] : st.components()) {
    if (n == 0) continue;
    const auto& entries =
        reg->tables(n).lowering[static_cast<std::size_t>(site)];
    if (entries.empty()) continue;
    auto it = out.find(n - 1);
    if (it == out.end())
      it = out.emplace(n - 1,
                       Eigen::VectorXcd::Zero(reg->sector(n - 1).dim()))
               .first;
    for (const auto& e : entries) it->second(e.dst) += e.amplitude * v(e.src);
  }
  st.components() = std::move(out);
}

// n_site as a diagonal operator.
inline void apply_occupation(CompositeState& st, int site) {
  auto reg = st.registry();
  for (auto& [n, v] : st.components()) {
    const SectorBasis& basis = reg->sector(n);
    for (int b = 0; b < basis.dim(); ++b)
      v(b) *= double(basis.states[static_cast<std::size_t>(b)]
                                 [static_cast<std::size_t>(site)]);
  }
  st.prune(1e-300);
}

}  // namespace detail

// One quantum-jump trajectory through a schedule. Copyable mid-run, so a
// common prefix can be evolved once and branched per scan point; reseed()
// redraws the jump threshold consistently for the branch.
class TrajectoryEngine {
 public:
  TrajectoryEngine(CompositeState psi0, NoiseModel noise, RunPolicy policy,
                   std::uint64_t seed, std::uint64_t shot)
      : state_(std::move(psi0)),
        noise_(std::move(noise)),
        policy_(policy),
        rng_(mix_seed(seed, shot)) {
    const int n_sites = state_.registry()->lattice().n_sites;
    noise_.validate(n_sites);
    offsets_.assign(static_cast<std::size_t>(n_sites), 0.0);
    if (noise_.any_static()) {
      std::normal_distribution<double> gauss;
      for (int i = 0; i < n_sites; ++i)
        if (noise_.static_sigma[static_cast<std::size_t>(i)] > 0)
          offsets_[static_cast<std::size_t>(i)] =
              noise_.static_sigma[static_cast<std::size_t>(i)] * gauss(rng_);
    }
    if (noise_.any_decay()) draw_threshold();
  }

  const CompositeState& state() const { return state_; }
  int jumps() const { return jumps_; }
  const std::vector<double>& offsets() const { return offsets_; }
  std::mt19937_64& rng() { return rng_; }

  // Fresh randomness for a branch; the pending jump threshold is redrawn
  // conditioned on survival so far (uniform on [0, current norm^2]).
  void reseed(std::uint64_t a, std::uint64_t b) {
    rng_.seed(mix_seed(a, b));
    if (noise_.any_decay()) {
      std::uniform_real_distribution<double> uni(0.0, 1.0);
      threshold_ = uni(rng_) * state_.squared_norm();
    }
  }

  void run(const Schedule& sched) {
    if (!noise_.any_decay() && !noise_.any_static()) {
      run_schedule(state_, sched, policy_);
      return;
    }
    std::vector<ConstantSegment> pending;
    auto flush = [&] {
      if (pending.empty()) return;
      for (const auto& seg : coalesce_segments(pending)) advance(seg);
      pending.clear();
    };
    for (const auto& el : sched) {
      if (std::holds_alternative<Rotation>(el)) {
        flush();
        apply_rotation(state_, std::get<Rotation>(el),
                       policy_.rotation_occ2_tol);
      } else if (std::holds_alternative<VirtualPhase>(el)) {
        flush();
        apply_virtual_phase(state_, std::get<VirtualPhase>(el));
      } else {
        auto segs = sample_element(el, policy_.sample_dt);
        pending.insert(pending.end(), segs.begin(), segs.end());
      }
    }
    flush();
  }

  // Measurement-time state. Only decay moves the norm off unity; skipping
  // the divide otherwise keeps the noise-free path bit-identical to
  // run_schedule.
  CompositeState finish() const {
    CompositeState out = state_;
    if (noise_.any_decay()) out.normalize();
    return out;
  }

 private:
  void draw_threshold() {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    threshold_ = uni(rng_);
  }

  const Eigen::VectorXd& gamma(int n_total) {
    auto it = gamma_.find(n_total);
    if (it == gamma_.end()) {
      const SectorBasis& basis = state_.registry()->sector(n_total);
      const int n_sites = state_.registry()->lattice().n_sites;
      Eigen::VectorXd g = Eigen::VectorXd::Zero(basis.dim());
      for (int b = 0; b < basis.dim(); ++b) {
        double sum = 0;
        for (int i = 0; i < n_sites; ++i) {
          const double occ = double(basis.states[static_cast<std::size_t>(b)]
                                                [static_cast<std::size_t>(i)]);
          if (!noise_.t1.empty() &&
              std::isfinite(noise_.t1[static_cast<std::size_t>(i)]))
            sum += occ / noise_.t1[static_cast<std::size_t>(i)];
          if (!noise_.t_phi.empty() &&
              std::isfinite(noise_.t_phi[static_cast<std::size_t>(i)]))
            sum += 2.0 * occ * occ / noise_.t_phi[static_cast<std::size_t>(i)];
        }
        g(b) = sum;
      }
      it = gamma_.emplace(n_total, std::move(g)).first;
    }
    return it->second;
  }

  void half_decay(double dt) {
    for (auto& [n, v] : state_.components()) {
      const Eigen::VectorXd& g = gamma(n);
      v.array() *= (-0.25 * dt * g.array()).exp().cast<cplx>();
    }
  }

  void advance(const ConstantSegment& seg) {
    std::vector<double> det = seg.detunings;
    for (std::size_t i = 0; i < det.size(); ++i) det[i] += offsets_[i];

    if (!noise_.any_decay()) {
      for (auto& [n, v] : state_.components())
        evolve_sector(*state_.registry(), n, det, seg.duration, v, policy_.step);
      return;
    }

    const double cap = noise_.min_decay_time() / 200.0;
    const int n_sub = std::max(
        1, static_cast<int>(std::ceil(seg.duration / cap - 1e-9)));
    const double dt = seg.duration / n_sub;
    for (int k = 0; k < n_sub; ++k) {
      half_decay(dt);
      for (auto& [n, v] : state_.components())
        evolve_sector(*state_.registry(), n, det, dt, v, policy_.step);
      half_decay(dt);
      if (state_.squared_norm() < threshold_) jump();
    }
  }

  void jump() {
    const int n_sites = state_.registry()->lattice().n_sites;
    // Channel weights <L^dag L>: occupation moments against the rates.
    std::vector<double> weight;       // parallel to channel list
    std::vector<std::pair<int, bool>> channel;  // (site, is_relaxation)
    for (int i = 0; i < n_sites; ++i) {
      double m1 = 0, m2 = 0;
      for (const auto& [n, v] : state_.components()) {
        const SectorBasis& basis = state_.registry()->sector(n);
        for (int b = 0; b < basis.dim(); ++b) {
          const double occ = double(basis.states[static_cast<std::size_t>(b)]
                                                [static_cast<std::size_t>(i)]);
          const double w = std::norm(v(b));
          m1 += occ * w;
          m2 += occ * occ * w;
        }
      }
      if (!noise_.t1.empty() &&
          std::isfinite(noise_.t1[static_cast<std::size_t>(i)]) && m1 > 0) {
        channel.emplace_back(i, true);
        weight.push_back(m1 / noise_.t1[static_cast<std::size_t>(i)]);
      }
      if (!noise_.t_phi.empty() &&
          std::isfinite(noise_.t_phi[static_cast<std::size_t>(i)]) && m2 > 0) {
        channel.emplace_back(i, false);
        weight.push_back(2.0 * m2 / noise_.t_phi[static_cast<std::size_t>(i)]);
      }
    }
    double total = 0;
    for (double w : weight) total += w;
    if (!(total > 0))
      throw NumericError("TrajectoryEngine: jump with no open channel");

    std::uniform_real_distribution<double> uni(0.0, 1.0);
    double pick = uni(rng_) * total;
    std::size_t c = 0;
    for (; c + 1 < weight.size(); ++c) {
      if (pick < weight[c]) break;
      pick -= weight[c];
    }
    if (channel[c].second)
      detail::apply_lowering(state_, channel[c].first);
    else
      detail::apply_occupation(state_, channel[c].first);
    state_.normalize();
    ++jumps_;
    draw_threshold();
  }

  CompositeState state_;
  NoiseModel noise_;
  RunPolicy policy_;
  std::mt19937_64 rng_;
  std::vector<double> offsets_;
  std::map<int, Eigen::VectorXd> gamma_;
  double threshold_ = 0;
  int jumps_ = 0;
};

// Convenience wrapper: one full trajectory, normalized at the end.
inline CompositeState run_trajectory(const CompositeState& psi0,
                                     const Schedule& sched,
                                     const NoiseModel& noise,
                                     const RunPolicy& policy,
                                     std::uint64_t seed, std::uint64_t shot) {
  TrajectoryEngine engine(psi0, noise, policy, seed, shot);
  engine.run(sched);
  return engine.finish();
}

// Born-rule draw of a joint occupation outcome.
inline FockState sample_fock(const CompositeState& st, std::mt19937_64& rng) {
  if (st.components().empty())
    throw DomainError("sample_fock: empty state");
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  double pick = uni(rng) * st.squared_norm();
  const SectorRegistry& reg = *st.registry();
  for (const auto& [n, v] : st.components()) {
    const SectorBasis& basis = reg.sector(n);
    for (int b = 0; b < basis.dim(); ++b) {
      pick -= std::norm(v(b));
      if (pick < 0) return basis.states[static_cast<std::size_t>(b)];
    }
  }
  // Rounding pushed the cursor past the last state; return it.
  const auto& last = std::prev(st.components().end());
  return reg.sector(last->first).states.back();
}

// Three-outcome occupancy readout: the label is correct with probability f,
// otherwise it falls symmetrically on the two other labels.
struct ReadoutModel {
  std::vector<double> fidelity;  // per site

  void validate(int n_sites) const {
    if (static_cast<int>(fidelity.size()) != n_sites)
      throw DomainError("ReadoutModel: one fidelity per site required");
    for (double f : fidelity)
      if (!(f > 1.0 / 3.0) || !(f <= 1.0))
        throw DomainError("ReadoutModel: fidelity must lie in (1/3, 1]");
  }
};

inline Eigen::Matrix3d confusion_matrix(double fidelity) {
  Eigen::Matrix3d c;
  const double off = 0.5 * (1.0 - fidelity);
  c.setConstant(off);
  c.diagonal().setConstant(fidelity);
  return c;
}

inline FockState apply_readout(const FockState& truth, const ReadoutModel& model,
                               std::mt19937_64& rng) {
  model.validate(static_cast<int>(truth.size()));
  FockState reported(truth.size());
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] > 2)
      throw DomainError("apply_readout: occupancy above the 3-level model");
    const Eigen::Matrix3d c = confusion_matrix(model.fidelity[i]);
    double pick = uni(rng);
    int label = 2;
    for (int j = 0; j < 2; ++j) {
      pick -= c(truth[i], j);
      if (pick < 0) {
        label = j;
        break;
      }
    }
    reported[i] = static_cast<std::uint8_t>(label);
  }
  return reported;
}

// Undoes the confusion channel on a reported label histogram. Reported
// fractions satisfy h = C^T p, so p = (C^T)^-1 h; statistical noise can push
// the estimate outside [0, 1], which is flagged rather than clipped.
struct CorrectedHistogram {
  Eigen::Vector3d p;
  bool in_range = true;
};

inline CorrectedHistogram correct_histogram(const Eigen::Vector3d& reported,
                                            double fidelity) {
  const Eigen::Matrix3d c = confusion_matrix(fidelity);
  CorrectedHistogram out;
  out.p = c.transpose().fullPivLu().solve(reported);
  for (int k = 0; k < 3; ++k)
    if (out.p(k) < -1e-9 || out.p(k) > 1.0 + 1e-9) out.in_range = false;
  return out;
}

}  // namespace bht
