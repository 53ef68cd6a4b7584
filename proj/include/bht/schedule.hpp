#pragma once
// Pulse sequences: detuning waveforms plus instantaneous single-site
// operations. Time-extended elements are lowered to piecewise-constant
// segments by midpoint sampling; instantaneous elements act directly on the
// state. JSON serialization uses ns/MHz fields, the in-memory representation
// stays in seconds and rad/s.

#include <json.hpp>

#include <cmath>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "core.hpp"
#include "fock.hpp"
#include "propagator.hpp"

namespace bht {

struct Hold {
  double duration = 0;
  std::vector<double> detunings;
  std::string label;
};

// Exponential approach from start to end, normalized to land exactly on end:
// f(t) = (1 - e^(-t/tau)) / (1 - e^(-t_ramp/tau)).
struct ExpRamp {
  double t_ramp = 0;
  std::vector<double> start;
  std::vector<double> end;
  double tau = 0;
  std::string label;
};

// Resonant rotation on the {0, 1} occupation doublet of one site. Amplitude
// on occupancies >= 2 is left untouched; callers bound it beforehand.
struct Rotation {
  int site = 0;
  double theta = 0;
  double phi = 0;
  std::string label;
};

// Multiplies amplitudes by e^(i phase n_site): a frame rotation applied in
// software rather than by waiting.
struct VirtualPhase {
  int site = 0;
  double phase = 0;
  std::string label;
};

// Sinusoidal detuning drive on one site over constant base detunings, with
// flat-top Gaussian edges truncated at 2 sigma.
struct SiteModulation {
  int site = 0;
  double duration = 0;
  double amplitude = 0;   // rad/s
  double frequency = 0;   // rad/s
  double phase = 0;
  double sigma = ns(5.0);
  std::vector<double> base;
  std::string label;
};

using ScheduleElement =
    std::variant<Hold, ExpRamp, Rotation, VirtualPhase, SiteModulation>;
using Schedule = std::vector<ScheduleElement>;

inline double ramp_fraction(const ExpRamp& r, double t) {
  // Negative tau gives the convex mirror shape; only tau = 0 is undefined.
  if (!(r.t_ramp > 0) || r.tau == 0)
    throw DomainError("ExpRamp: t_ramp must be positive and tau nonzero");
  if (t <= 0) return 0;
  if (t >= r.t_ramp) return 1;
  return std::expm1(-t / r.tau) / std::expm1(-r.t_ramp / r.tau);
}

inline std::vector<double> ramp_detunings(const ExpRamp& r, double t) {
  if (r.start.size() != r.end.size())
    throw DomainError("ExpRamp: start and end sizes differ");
  const double f = ramp_fraction(r, t);
  std::vector<double> d(r.start.size());
  for (std::size_t i = 0; i < d.size(); ++i)
    d[i] = r.start[i] + (r.end[i] - r.start[i]) * f;
  return d;
}

// Time-mirror of a ramp: plays the same waveform backwards, which swaps the
// endpoints and negates tau.
inline ExpRamp reversed_ramp(const ExpRamp& r) {
  ExpRamp rev = r;
  rev.start = r.end;
  rev.end = r.start;
  rev.tau = -r.tau;
  return rev;
}

inline double modulation_envelope(const SiteModulation& m, double t) {
  if (!(m.sigma > 0)) throw DomainError("SiteModulation: sigma must be positive");
  if (m.duration < 4 * m.sigma)
    throw DomainError("SiteModulation: duration shorter than 4 sigma");
  if (t < 0 || t > m.duration) return 0;
  const double edge = 2 * m.sigma;
  if (t < edge) {
    const double d = (t - edge) / m.sigma;
    return std::exp(-0.5 * d * d);
  }
  if (t > m.duration - edge) {
    const double d = (t - (m.duration - edge)) / m.sigma;
    return std::exp(-0.5 * d * d);
  }
  return 1.0;
}

inline std::vector<double> modulation_detunings(const SiteModulation& m,
                                                double t) {
  if (m.site < 0 || m.site >= static_cast<int>(m.base.size()))
    throw DomainError("SiteModulation: site out of range");
  std::vector<double> d = m.base;
  d[static_cast<std::size_t>(m.site)] +=
      modulation_envelope(m, t) * m.amplitude * std::cos(m.frequency * t + m.phase);
  return d;
}

namespace detail {

// Rounds down when duration/sample_dt sits a rounding error above an
// integer, so nominal grids keep their nominal sample count.
inline int sample_count(double duration, double sample_dt) {
  return std::max(1, static_cast<int>(std::ceil(duration / sample_dt - 1e-9)));
}

}  // namespace detail

inline double element_duration(const ScheduleElement& el) {
  return std::visit(
      [](const auto& e) -> double {
        using T = std::decay_t<decltype(e)>;
        if constexpr (std::is_same_v<T, Hold>) return e.duration;
        else if constexpr (std::is_same_v<T, ExpRamp>) return e.t_ramp;
        else if constexpr (std::is_same_v<T, SiteModulation>) return e.duration;
        else return 0.0;
      },
      el);
}

inline double schedule_duration(const Schedule& sched) {
  double t = 0;
  for (const auto& el : sched) t += element_duration(el);
  return t;
}

// Midpoint-sampled piecewise-constant segments for one time-extended
// element. Instantaneous elements yield nothing.
inline std::vector<ConstantSegment> sample_element(const ScheduleElement& el,
                                                   double sample_dt) {
  if (!(sample_dt > 0)) throw DomainError("sample_element: sample_dt must be positive");
  std::vector<ConstantSegment> segs;
  if (std::holds_alternative<Hold>(el)) {
    const auto& h = std::get<Hold>(el);
    if (h.duration < 0) throw DomainError("Hold: negative duration");
    if (h.duration > 0) segs.push_back({h.duration, h.detunings});
    return segs;
  }
  if (std::holds_alternative<ExpRamp>(el)) {
    const auto& r = std::get<ExpRamp>(el);
    const int n = detail::sample_count(r.t_ramp, sample_dt);
    const double dt = r.t_ramp / n;
    for (int k = 0; k < n; ++k)
      segs.push_back({dt, ramp_detunings(r, (k + 0.5) * dt)});
    return segs;
  }
  if (std::holds_alternative<SiteModulation>(el)) {
    const auto& m = std::get<SiteModulation>(el);
    const int n = detail::sample_count(m.duration, sample_dt);
    const double dt = m.duration / n;
    for (int k = 0; k < n; ++k)
      segs.push_back({dt, modulation_detunings(m, (k + 0.5) * dt)});
    return segs;
  }
  return segs;
}

// Weight on occupancies of `site` at or above `k`.
inline double occupation_weight_at_least(const CompositeState& st, int site,
                                         int k) {
  double w = 0;
  for (int occ = k; occ <= st.registry()->lattice().n_max; ++occ)
    w += st.occupation_population(site, occ);
  return w;
}

inline void apply_rotation(CompositeState& st, const Rotation& rot,
                           double occ2_tol = 1e-6) {
  auto reg = st.registry();
  const LatticeSpec& lat = reg->lattice();
  if (rot.site < 0 || rot.site >= lat.n_sites)
    throw DomainError("apply_rotation: site out of range");
  const double w2 = occupation_weight_at_least(st, rot.site, 2);
  if (w2 > occ2_tol) {
    std::ostringstream msg;
    msg << "apply_rotation: weight " << w2 << " on occupancy >= 2 at site "
        << rot.site << " exceeds tolerance " << occ2_tol
        << "; the doublet rotation does not act there";
    throw ValidityError(msg.str());
  }

  const cplx c = std::cos(0.5 * rot.theta);
  const double s = std::sin(0.5 * rot.theta);
  const cplx up = cplx(0, -1) * std::exp(cplx(0, -rot.phi)) * s;   // |1> -> |0>
  const cplx down = cplx(0, -1) * std::exp(cplx(0, rot.phi)) * s;  // |0> -> |1>

  // The rotation couples occupancy 0 in sector n with occupancy 1 in n+1,
  // so results spread at most one sector beyond what is populated.
  const auto& old = st.components();
  std::map<int, Eigen::VectorXcd> next;
  auto materialize = [&](int n) {
    if (n < 0 || n > reg->max_total() || next.count(n)) return;
    auto it = old.find(n);
    next[n] = it != old.end()
                  ? it->second
                  : Eigen::VectorXcd::Zero(reg->sector(n).dim());
  };
  for (const auto& [n, v] : old) {
    materialize(n - 1);
    materialize(n);
    materialize(n + 1);
  }

  for (auto& [n, vec] : next) {
    if (next.count(n + 1) == 0) continue;
    const SectorBasis& upper_basis = reg->sector(n + 1);
    const auto& entries = reg->tables(n + 1).lowering[static_cast<std::size_t>(rot.site)];
    auto old_at = [&](int sector, int idx) -> cplx {
      auto it = old.find(sector);
      return it != old.end() ? it->second(idx) : cplx(0);
    };
    for (const auto& e : entries) {
      if (upper_basis.states[static_cast<std::size_t>(e.src)]
                           [static_cast<std::size_t>(rot.site)] != 1)
        continue;
      const cplx a = old_at(n, e.dst);      // occupancy 0 component
      const cplx b = old_at(n + 1, e.src);  // occupancy 1 component
      vec(e.dst) = c * a + up * b;
      next[n + 1](e.src) = down * a + c * b;
    }
  }

  st.components() = std::move(next);
  // cos(pi/2) leaves rounding dust instead of exact zeros; weights at this
  // level are far below anything physical.
  st.prune(1e-24);
}

inline void apply_virtual_phase(CompositeState& st, const VirtualPhase& vp) {
  auto reg = st.registry();
  const LatticeSpec& lat = reg->lattice();
  if (vp.site < 0 || vp.site >= lat.n_sites)
    throw DomainError("apply_virtual_phase: site out of range");
  for (auto& [n, vec] : st.components()) {
    const SectorBasis& basis = reg->sector(n);
    for (int b = 0; b < basis.dim(); ++b) {
      const int occ = basis.states[static_cast<std::size_t>(b)]
                                  [static_cast<std::size_t>(vp.site)];
      if (occ != 0) vec(b) *= std::exp(cplx(0, vp.phase * occ));
    }
  }
}

struct RunPolicy {
  double sample_dt = ns(0.1);
  StepPolicy step;
  double rotation_occ2_tol = 1e-6;
};

// Executes the sequence in order. Consecutive sampled elements share one
// segment list so identical-detuning runs coalesce across boundaries.
inline void run_schedule(CompositeState& st, const Schedule& sched,
                         const RunPolicy& policy = {}) {
  std::vector<ConstantSegment> pending;
  auto flush = [&] {
    if (pending.empty()) return;
    evolve_segments(st, pending, policy.step);
    pending.clear();
  };
  for (const auto& el : sched) {
    if (std::holds_alternative<Rotation>(el)) {
      flush();
      apply_rotation(st, std::get<Rotation>(el), policy.rotation_occ2_tol);
    } else if (std::holds_alternative<VirtualPhase>(el)) {
      flush();
      apply_virtual_phase(st, std::get<VirtualPhase>(el));
    } else {
      auto segs = sample_element(el, policy.sample_dt);
      pending.insert(pending.end(), segs.begin(), segs.end());
    }
  }
  flush();
}

namespace detail {

inline std::vector<double> mhz_list(const nlohmann::json& j) {
  std::vector<double> out;
  for (const auto& v : j) out.push_back(mhz(v.get<double>()));
  return out;
}

inline nlohmann::json to_mhz_list(const std::vector<double>& v) {
  nlohmann::json j = nlohmann::json::array();
  for (double x : v) j.push_back(to_mhz(x));
  return j;
}

}  // namespace detail

inline nlohmann::json element_to_json(const ScheduleElement& el) {
  using nlohmann::json;
  json j = std::visit(
      [](const auto& e) -> json {
        using T = std::decay_t<decltype(e)>;
        json j;
        if constexpr (std::is_same_v<T, Hold>) {
          j["type"] = "hold";
          j["duration_ns"] = to_ns(e.duration);
          j["detunings_mhz"] = detail::to_mhz_list(e.detunings);
        } else if constexpr (std::is_same_v<T, ExpRamp>) {
          j["type"] = "exp_ramp";
          j["t_ramp_ns"] = to_ns(e.t_ramp);
          j["start_mhz"] = detail::to_mhz_list(e.start);
          j["end_mhz"] = detail::to_mhz_list(e.end);
          j["tau_ns"] = to_ns(e.tau);
        } else if constexpr (std::is_same_v<T, Rotation>) {
          j["type"] = "rotation";
          j["site"] = e.site;
          j["theta_rad"] = e.theta;
          j["phi_rad"] = e.phi;
        } else if constexpr (std::is_same_v<T, VirtualPhase>) {
          j["type"] = "virtual_phase";
          j["site"] = e.site;
          j["phase_rad"] = e.phase;
        } else {
          j["type"] = "site_modulation";
          j["site"] = e.site;
          j["duration_ns"] = to_ns(e.duration);
          j["amplitude_mhz"] = to_mhz(e.amplitude);
          j["frequency_mhz"] = to_mhz(e.frequency);
          j["phase_rad"] = e.phase;
          j["sigma_ns"] = to_ns(e.sigma);
          j["base_mhz"] = detail::to_mhz_list(e.base);
        }
        return j;
      },
      el);
  const std::string& label = std::visit([](const auto& e) -> const std::string& { return e.label; }, el);
  if (!label.empty()) j["label"] = label;
  return j;
}

inline ScheduleElement element_from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  const std::string label = j.value("label", std::string{});
  if (type == "hold") {
    Hold e;
    e.duration = ns(j.at("duration_ns").get<double>());
    e.detunings = detail::mhz_list(j.at("detunings_mhz"));
    e.label = label;
    return e;
  }
  if (type == "exp_ramp") {
    ExpRamp e;
    e.t_ramp = ns(j.at("t_ramp_ns").get<double>());
    e.start = detail::mhz_list(j.at("start_mhz"));
    e.end = detail::mhz_list(j.at("end_mhz"));
    e.tau = ns(j.at("tau_ns").get<double>());
    e.label = label;
    return e;
  }
  if (type == "rotation") {
    Rotation e;
    e.site = j.at("site").get<int>();
    e.theta = j.at("theta_rad").get<double>();
    e.phi = j.at("phi_rad").get<double>();
    e.label = label;
    return e;
  }
  if (type == "virtual_phase") {
    VirtualPhase e;
    e.site = j.at("site").get<int>();
    e.phase = j.at("phase_rad").get<double>();
    e.label = label;
    return e;
  }
  if (type == "site_modulation") {
    SiteModulation e;
    e.site = j.at("site").get<int>();
    e.duration = ns(j.at("duration_ns").get<double>());
    e.amplitude = mhz(j.at("amplitude_mhz").get<double>());
    e.frequency = mhz(j.at("frequency_mhz").get<double>());
    e.phase = j.at("phase_rad").get<double>();
    e.sigma = ns(j.at("sigma_ns").get<double>());
    e.base = detail::mhz_list(j.at("base_mhz"));
    e.label = label;
    return e;
  }
  throw ValidationError("element_from_json: unknown type '" + type + "'");
}

inline nlohmann::json schedule_to_json(const Schedule& sched) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& el : sched) j.push_back(element_to_json(el));
  return j;
}

inline Schedule schedule_from_json(const nlohmann::json& j) {
  Schedule sched;
  for (const auto& e : j) sched.push_back(element_from_json(e));
  return sched;
}

}  // namespace bht
