#pragma once
// Time evolution under piecewise-constant detunings. Within a segment the
// Hamiltonian is constant, so evolution is an exact matrix exponential,
// computed either by dense eigendecomposition or by a Lanczos (Krylov)
// expansion with a posterior error estimate. Detunings only touch the
// diagonal, so per-sector hopping structure is reused across segments.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <vector>

#include "core.hpp"
#include "fock.hpp"

namespace bht {

inline constexpr int eigensolve_dimension_cap = 4096;

struct StepPolicy {
  enum class Method { Auto, ExactExp, Krylov };
  double max_step = ns(1.0);  // largest time advanced by one Krylov apply
  double tolerance = 1e-8;    // posterior error target per segment
  Method method = Method::Auto;
};

// One interval of constant detunings.
struct ConstantSegment {
  double duration = 0;             // s
  std::vector<double> detunings;   // per site, rad/s
};

namespace detail {

// H = hopping + diag acting on one sector.
struct SectorHamOp {
  const Eigen::SparseMatrix<cplx>* hopping;
  Eigen::VectorXd diag;

  Eigen::VectorXcd apply(const Eigen::VectorXcd& v) const {
    Eigen::VectorXcd w = (*hopping) * v;
    w.array() += diag.array().cast<cplx>() * v.array();
    return w;
  }

  Eigen::MatrixXcd dense() const {
    Eigen::MatrixXcd m(*hopping);
    m.diagonal() += diag.cast<cplx>();
    return m;
  }
};

inline SectorHamOp sector_ham(const SectorRegistry& reg, int n_total,
                              const std::vector<double>& detunings) {
  const LatticeSpec& lat = reg.lattice();
  if (static_cast<int>(detunings.size()) != lat.n_sites)
    throw DomainError("sector_ham: detunings size mismatch");
  const SectorTables& t = reg.tables(n_total);
  SectorHamOp op;
  op.hopping = &t.hopping;
  Eigen::Map<const Eigen::VectorXd> d(detunings.data(), lat.n_sites);
  op.diag = t.u_diag + t.occupations * d;
  return op;
}

// Cached eigendecomposition for repeated exponentials of one Hamiltonian.
struct DenseExp {
  Eigen::VectorXd values;
  Eigen::MatrixXcd vectors;

  void init(const SectorHamOp& h) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h.dense());
    if (es.info() != Eigen::Success)
      throw NumericError("DenseExp: eigendecomposition failed");
    values = es.eigenvalues();
    vectors = es.eigenvectors();
  }

  Eigen::VectorXcd apply(double t, const Eigen::VectorXcd& v) const {
    Eigen::VectorXcd coef = vectors.adjoint() * v;
    coef.array() *=
        (cplx(0, -t) * values.array().cast<cplx>()).exp();
    return vectors * coef;
  }
};

// One Lanczos pass: exp(-i t H) v to the requested tolerance, or no value if
// the basis cap is reached first. Full reorthogonalization keeps the basis
// clean at the cost of O(m^2) dots, cheap at m <= 40.
inline bool lanczos_exp_apply(const SectorHamOp& h, double t,
                              const Eigen::VectorXcd& v, double tol,
                              Eigen::VectorXcd& out, int m_max = 40) {
  const double beta0 = v.norm();
  if (beta0 == 0 || t == 0) {
    out = v;
    return true;
  }
  const Eigen::Index dim = v.size();
  m_max = std::min<int>(m_max, static_cast<int>(dim));

  std::vector<Eigen::VectorXcd> basis;
  basis.push_back(v / beta0);
  std::vector<double> alpha, beta;

  for (int j = 0; j < m_max; ++j) {
    Eigen::VectorXcd w = h.apply(basis[static_cast<std::size_t>(j)]);
    alpha.push_back(basis[static_cast<std::size_t>(j)].dot(w).real());
    for (std::size_t i = 0; i < basis.size(); ++i)
      w -= basis[i].dot(w) * basis[i];
    for (std::size_t i = 0; i < basis.size(); ++i)  // second sweep for safety
      w -= basis[i].dot(w) * basis[i];
    const double b = w.norm();

    const int m = j + 1;
    Eigen::MatrixXd tm = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) tm(i, i) = alpha[static_cast<std::size_t>(i)];
    for (int i = 0; i + 1 < m; ++i)
      tm(i, i + 1) = tm(i + 1, i) = beta[static_cast<std::size_t>(i)];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(tm);
    Eigen::VectorXcd y =
        (es.eigenvectors() *
         ((cplx(0, -t) * es.eigenvalues().array().cast<cplx>()).exp() *
          es.eigenvectors().row(0).transpose().array().cast<cplx>())
             .matrix());

    const double err = b * std::abs(y(m - 1)) * std::abs(t);
    const bool happy = b < 1e-14 * std::max(1.0, std::abs(alpha[0]));
    if (err <= tol || happy || m == m_max) {
      if (err > tol && !happy) return false;
      out.setZero(dim);
      for (int i = 0; i < m; ++i) out += y(i) * basis[static_cast<std::size_t>(i)];
      out *= beta0;
      const double n = out.norm();
      if (n > 0) out *= beta0 / n;  // exponential of Hermitian H is unitary
      return true;
    }
    beta.push_back(b);
    basis.push_back(w / b);
  }
  return false;
}

// Krylov exponential with substep refinement: start from n_sub substeps and
// double until every substep converges within its share of the tolerance.
inline void krylov_evolve(const SectorHamOp& h, double t, Eigen::VectorXcd& psi,
                          double tol, int n_sub) {
  const Eigen::VectorXcd start = psi;
  for (; n_sub <= (1 << 20); n_sub *= 2) {
    psi = start;
    const double dt = t / n_sub;
    const double sub_tol = tol / n_sub;
    bool ok = true;
    for (int k = 0; k < n_sub && ok; ++k) {
      Eigen::VectorXcd next;
      ok = lanczos_exp_apply(h, dt, psi, sub_tol, next);
      if (ok) psi = next;
    }
    if (ok) return;
  }
  throw NumericError("krylov_evolve: no convergence after substep refinement");
}

}  // namespace detail

// Dense spectrum of one sector Hamiltonian. Columns of vectors are
// eigenvectors in ascending eigenvalue order.
struct EigenSystem {
  Eigen::VectorXd values;
  Eigen::MatrixXcd vectors;
};

inline EigenSystem eigensolve(const SectorRegistry& reg, int n_total,
                              const std::vector<double>& detunings) {
  const SectorBasis& basis = reg.sector(n_total);
  if (basis.dim() > eigensolve_dimension_cap) {
    std::ostringstream msg;
    msg << "eigensolve: dimension " << basis.dim() << " exceeds cap "
        << eigensolve_dimension_cap;
    throw CapabilityError(msg.str());
  }
  const auto h = detail::sector_ham(reg, n_total, detunings);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h.dense());
  if (es.info() != Eigen::Success)
    throw NumericError("eigensolve: eigendecomposition failed");
  return {es.eigenvalues(), es.eigenvectors()};
}

// Advances one sector vector by exp(-i H duration).
inline void evolve_sector(const SectorRegistry& reg, int n_total,
                          const std::vector<double>& detunings, double duration,
                          Eigen::VectorXcd& psi, const StepPolicy& policy = {}) {
  if (duration < 0) throw DomainError("evolve_sector: negative duration");
  if (duration == 0) return;
  const auto h = detail::sector_ham(reg, n_total, detunings);
  const int dim = static_cast<int>(psi.size());
  if (dim != reg.sector(n_total).dim())
    throw DomainError("evolve_sector: state dimension mismatch");

  const int n_sub =
      std::max(1, static_cast<int>(std::ceil(duration / policy.max_step)));
  bool dense = policy.method == StepPolicy::Method::ExactExp;
  if (policy.method == StepPolicy::Method::Auto)
    dense = dim <= 64 || (dim <= 512 && n_sub >= 64);
  if (dense) {
    if (dim > eigensolve_dimension_cap)
      throw CapabilityError("evolve_sector: dense path dimension cap exceeded");
    detail::DenseExp ex;
    ex.init(h);
    psi = ex.apply(duration, psi);
  } else {
    detail::krylov_evolve(h, duration, psi, policy.tolerance, n_sub);
  }
}

// Merges adjacent segments with identical detunings; the Hamiltonian is the
// same, so summing durations changes nothing.
inline std::vector<ConstantSegment> coalesce_segments(
    const std::vector<ConstantSegment>& segments) {
  std::vector<ConstantSegment> out;
  for (const auto& s : segments) {
    if (s.duration < 0) throw DomainError("coalesce_segments: negative duration");
    if (s.duration == 0) continue;
    if (!out.empty() && out.back().detunings == s.detunings)
      out.back().duration += s.duration;
    else
      out.push_back(s);
  }
  return out;
}

// Advances every sector component through the segment list.
inline void evolve_segments(CompositeState& st,
                            const std::vector<ConstantSegment>& segments,
                            const StepPolicy& policy = {}) {
  const auto merged = coalesce_segments(segments);
  for (auto& [n_total, psi] : st.components())
    for (const auto& seg : merged)
      evolve_sector(*st.registry(), n_total, seg.detunings, seg.duration, psi,
                    policy);
}

inline void evolve_constant(CompositeState& st,
                            const std::vector<double>& detunings,
                            double duration, const StepPolicy& policy = {}) {
  evolve_segments(st, {{duration, detunings}}, policy);
}

// Sum of <psi|H|psi> over sectors at the given detunings.
inline double energy_expectation(const CompositeState& st,
                                 const std::vector<double>& detunings) {
  double e = 0;
  for (const auto& [n_total, psi] : st.components()) {
    const auto h = detail::sector_ham(*st.registry(), n_total, detunings);
    e += psi.dot(h.apply(psi)).real();
  }
  return e;
}

// Repeated exponentials of one fixed-detuning Hamiltonian, e.g. scanning a
// hold duration. Per-sector eigendecompositions are built once on demand.
class HoldPropagator {
 public:
  HoldPropagator(std::shared_ptr<SectorRegistry> registry,
                 std::vector<double> detunings)
      : registry_(std::move(registry)), detunings_(std::move(detunings)) {
    if (static_cast<int>(detunings_.size()) != registry_->lattice().n_sites)
      throw DomainError("HoldPropagator: detunings size mismatch");
  }

  CompositeState advance(const CompositeState& st, double t) const {
    if (t < 0) throw DomainError("HoldPropagator::advance: negative duration");
    CompositeState out = st;
    for (auto& [n_total, psi] : out.components())
      psi = sector_exp(n_total).apply(t, psi);
    return out;
  }

 private:
  const detail::DenseExp& sector_exp(int n_total) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = cache_.find(n_total);
    if (it == cache_.end()) {
      if (registry_->sector(n_total).dim() > eigensolve_dimension_cap)
        throw CapabilityError("HoldPropagator: dimension cap exceeded");
      detail::DenseExp ex;
      ex.init(detail::sector_ham(*registry_, n_total, detunings_));
      it = cache_.emplace(n_total, std::move(ex)).first;
    }
    return it->second;
  }

  std::shared_ptr<SectorRegistry> registry_;
  std::vector<double> detunings_;
  mutable std::mutex mu_;
  mutable std::map<int, detail::DenseExp> cache_;
};

// An eigenstate followed along a detuning path by maximal overlap with the
// previous point. The phase is aligned so consecutive vectors have a real
// positive inner product.
struct TrackedState {
  double value = 0;
  Eigen::VectorXcd vector;
  double overlap_sq = 1.0;  // with the previous point's vector
};

inline std::vector<TrackedState> track_eigenstate(
    const SectorRegistry& reg, int n_total,
    const std::vector<std::vector<double>>& path, int start_index,
    double min_overlap_sq = 0.5) {
  if (path.empty()) throw DomainError("track_eigenstate: empty path");
  std::vector<TrackedState> out;
  out.reserve(path.size());

  auto first = eigensolve(reg, n_total, path.front());
  if (start_index < 0 || start_index >= first.values.size())
    throw DomainError("track_eigenstate: start_index out of range");
  out.push_back({first.values(start_index), first.vectors.col(start_index), 1.0});

  for (std::size_t p = 1; p < path.size(); ++p) {
    const auto sys = eigensolve(reg, n_total, path[p]);
    const Eigen::VectorXcd& prev = out.back().vector;
    const Eigen::VectorXd ov = (sys.vectors.adjoint() * prev).cwiseAbs2();
    int best = 0, second = -1;
    for (int k = 1; k < ov.size(); ++k)
      if (ov(k) > ov(best)) best = k;
    for (int k = 0; k < ov.size(); ++k)
      if (k != best && (second < 0 || ov(k) > ov(second))) second = k;
    if (second >= 0 && ov(best) - ov(second) <= 1e-9 * ov(best)) {
      std::ostringstream msg;
      msg << "track_eigenstate: degenerate overlap " << ov(best)
          << " at path point " << p;
      throw AmbiguityError(msg.str());
    }
    if (ov(best) < min_overlap_sq) {
      std::ostringstream msg;
      msg << "track_eigenstate: lost the tracked state at path point " << p
          << " (best overlap^2 " << ov(best) << ")";
      throw AmbiguityError(msg.str());
    }
    Eigen::VectorXcd vec = sys.vectors.col(best);
    const cplx phase = prev.dot(vec);
    if (std::abs(phase) > 0) vec *= std::conj(phase) / std::abs(phase);
    out.push_back({sys.values(best), std::move(vec), ov(best)});
  }
  return out;
}

}  // namespace bht
