#pragma once
// Fock-space machinery for a 1D Bose-Hubbard chain: fixed-particle-number
// sector bases, sparse sector Hamiltonians, and states spanning several
// sectors at once (microwave rotations connect n and n+1).

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <utility>
#include <vector>

#include "core.hpp"

namespace bht {

// Chain geometry and couplings. All rates are angular (rad/s).
struct LatticeSpec {
  int n_sites = 0;
  int n_max = 2;                    // per-site occupation cutoff
  std::vector<double> hop;          // J per bond (i, i+1), size n_sites - 1
  std::vector<double> interaction;  // U per site, size n_sites

  void validate() const {
    std::ostringstream bad;
    if (n_sites < 1) bad << "n_sites must be >= 1; ";
    if (n_max < 1) bad << "n_max must be >= 1; ";
    if (n_sites >= 1 && static_cast<int>(hop.size()) != n_sites - 1)
      bad << "hop must have n_sites-1 entries; ";
    if (static_cast<int>(interaction.size()) != n_sites)
      bad << "interaction must have n_sites entries; ";
    const std::string msg = bad.str();
    if (!msg.empty()) throw DomainError("LatticeSpec: " + msg);
  }
};

// Site occupations, one entry per site.
using FockState = std::vector<std::uint8_t>;

inline int total_occupation(const FockState& s) {
  int n = 0;
  for (auto v : s) n += v;
  return n;
}

// All occupation vectors with the given total, in lexicographic order.
// Empty when n_total is not reachable under the cutoff.
inline std::vector<FockState> enumerate_sector(const LatticeSpec& lattice,
                                               int n_total) {
  lattice.validate();
  if (n_total < 0) throw DomainError("enumerate_sector: n_total < 0");
  std::vector<FockState> out;
  FockState cur(static_cast<std::size_t>(lattice.n_sites), 0);
  // Depth-first fill keeps lexicographic order by construction.
  auto fill = [&](auto&& self, int site, int remaining) -> void {
    if (site == lattice.n_sites) {
      if (remaining == 0) out.push_back(cur);
      return;
    }
    const int sites_left = lattice.n_sites - site - 1;
    for (int occ = 0; occ <= lattice.n_max; ++occ) {
      if (occ > remaining) break;
      if (remaining - occ > sites_left * lattice.n_max) continue;
      cur[static_cast<std::size_t>(site)] = static_cast<std::uint8_t>(occ);
      self(self, site + 1, remaining - occ);
    }
    cur[static_cast<std::size_t>(site)] = 0;
  };
  fill(fill, 0, n_total);
  return out;
}

// A fixed-particle-number basis. States are lexicographically sorted, so
// index_of is the inverse of states[] by binary search.
struct SectorBasis {
  std::shared_ptr<const LatticeSpec> lattice;
  int n_total = 0;
  std::vector<FockState> states;

  int dim() const { return static_cast<int>(states.size()); }

  std::optional<int> index_of(const FockState& s) const {
    auto it = std::lower_bound(states.begin(), states.end(), s);
    if (it == states.end() || *it != s) return std::nullopt;
    return static_cast<int>(it - states.begin());
  }
};

// Sparse Hermitian operator on one sector.
struct SparseOperator {
  std::int64_t dimension = 0;
  Eigen::SparseMatrix<cplx> matrix;

  struct Entry {
    std::int64_t row, col;
    cplx value;
  };

  std::vector<Entry> entries() const {
    std::vector<Entry> out;
    out.reserve(static_cast<std::size_t>(matrix.nonZeros()));
    for (int k = 0; k < matrix.outerSize(); ++k)
      for (Eigen::SparseMatrix<cplx>::InnerIterator it(matrix, k); it; ++it)
        out.push_back({it.row(), it.col(), it.value()});
    return out;
  }

  double hermiticity_defect() const {
    Eigen::SparseMatrix<cplx> d = Eigen::SparseMatrix<cplx>(matrix.adjoint()) - matrix;
    double m = 0;
    for (int k = 0; k < d.outerSize(); ++k)
      for (Eigen::SparseMatrix<cplx>::InnerIterator it(d, k); it; ++it)
        m = std::max(m, std::abs(it.value()));
    return m;
  }
};

// Precomputed per-sector structure reused across propagation steps: the
// detuning-independent hopping matrix, per-basis-state occupations, the
// interaction diagonal, and per-site lowering maps into sector n-1.
struct SectorTables {
  Eigen::SparseMatrix<cplx> hopping;  // off-diagonal part, Hermitian
  Eigen::MatrixXd occupations;        // dim x n_sites
  Eigen::VectorXd u_diag;             // sum_i U_i/2 n_i(n_i-1) per state

  struct LoweringEntry {
    int src, dst;       // index in sector n, index in sector n-1
    double amplitude;   // sqrt(n_i)
  };
  std::vector<std::vector<LoweringEntry>> lowering;  // per site
};

namespace detail {

inline SectorBasis make_sector_basis(std::shared_ptr<const LatticeSpec> lattice,
                                     int n_total) {
  SectorBasis b;
  b.lattice = lattice;
  b.n_total = n_total;
  b.states = enumerate_sector(*lattice, n_total);
  return b;
}

inline SectorTables make_sector_tables(const SectorBasis& basis,
                                       const SectorBasis* below) {
  const LatticeSpec& lat = *basis.lattice;
  const int dim = basis.dim();
  SectorTables t;

  std::vector<Eigen::Triplet<cplx>> trips;
  for (int b = 0; b < dim; ++b) {
    const FockState& s = basis.states[static_cast<std::size_t>(b)];
    for (int bond = 0; bond + 1 < lat.n_sites; ++bond) {
      const int i = bond, j = bond + 1;
      // a_j^dag a_i moves one boson i -> j; the Hermitian partner is added
      // when the loop visits the mirrored pair.
      if (s[i] > 0 && s[j] < lat.n_max) {
        FockState d = s;
        --d[i];
        ++d[j];
        const auto idx = basis.index_of(d);
        const double amp = std::sqrt(double(s[i])) * std::sqrt(double(s[j]) + 1.0);
        trips.emplace_back(*idx, b, lat.hop[static_cast<std::size_t>(bond)] * amp);
        trips.emplace_back(b, *idx, lat.hop[static_cast<std::size_t>(bond)] * amp);
      }
    }
  }
  t.hopping.resize(dim, dim);
  t.hopping.setFromTriplets(trips.begin(), trips.end());

  t.occupations.resize(dim, lat.n_sites);
  t.u_diag.resize(dim);
  for (int b = 0; b < dim; ++b) {
    const FockState& s = basis.states[static_cast<std::size_t>(b)];
    double u = 0;
    for (int i = 0; i < lat.n_sites; ++i) {
      const double n = double(s[static_cast<std::size_t>(i)]);
      t.occupations(b, i) = n;
      u += 0.5 * lat.interaction[static_cast<std::size_t>(i)] * n * (n - 1.0);
    }
    t.u_diag(b) = u;
  }

  t.lowering.resize(static_cast<std::size_t>(lat.n_sites));
  if (below != nullptr) {
    for (int i = 0; i < lat.n_sites; ++i) {
      for (int b = 0; b < dim; ++b) {
        const FockState& s = basis.states[static_cast<std::size_t>(b)];
        if (s[static_cast<std::size_t>(i)] == 0) continue;
        FockState d = s;
        --d[static_cast<std::size_t>(i)];
        const auto idx = below->index_of(d);
        t.lowering[static_cast<std::size_t>(i)].push_back(
            {b, *idx, std::sqrt(double(s[static_cast<std::size_t>(i)]))});
      }
    }
  }
  return t;
}

}  // namespace detail

// Caches sector bases and derived tables for one lattice. Immutable from the
// caller's view; internal memoization is mutex-protected so concurrent reads
// are safe.
class SectorRegistry {
 public:
  explicit SectorRegistry(LatticeSpec spec)
      : lattice_(std::make_shared<const LatticeSpec>(std::move(spec))) {
    lattice_->validate();
  }

  const LatticeSpec& lattice() const { return *lattice_; }
  std::shared_ptr<const LatticeSpec> lattice_ptr() const { return lattice_; }

  int max_total() const { return lattice_->n_sites * lattice_->n_max; }

  const SectorBasis& sector(int n_total) const {
    std::lock_guard<std::mutex> lock(mu_);
    return sector_locked(n_total);
  }

  const SectorTables& tables(int n_total) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = tables_.find(n_total);
    if (it == tables_.end()) {
      const SectorBasis& basis = sector_locked(n_total);
      const SectorBasis* below =
          n_total > 0 ? &sector_locked(n_total - 1) : nullptr;
      it = tables_
               .emplace(n_total, std::make_unique<SectorTables>(
                                     detail::make_sector_tables(basis, below)))
               .first;
    }
    return *it->second;
  }

 private:
  const SectorBasis& sector_locked(int n_total) const {
    if (n_total < 0 || n_total > max_total())
      throw DomainError("SectorRegistry: n_total out of range");
    auto it = sectors_.find(n_total);
    if (it == sectors_.end())
      it = sectors_
               .emplace(n_total, std::make_unique<SectorBasis>(
                                     detail::make_sector_basis(lattice_, n_total)))
               .first;
    return *it->second;
  }

  std::shared_ptr<const LatticeSpec> lattice_;
  mutable std::mutex mu_;
  mutable std::map<int, std::unique_ptr<SectorBasis>> sectors_;
  mutable std::map<int, std::unique_ptr<SectorTables>> tables_;
};

// Bose-Hubbard sector Hamiltonian in the frame rotating at the lattice
// frequency: sum_b J_b (a_i^dag a_j + h.c.) + sum_i U_i/2 n_i(n_i-1)
// + sum_i delta_i n_i. Detunings are angular (rad/s).
inline SparseOperator build_hamiltonian(const SectorRegistry& reg, int n_total,
                                        const std::vector<double>& detunings) {
  const LatticeSpec& lat = reg.lattice();
  if (static_cast<int>(detunings.size()) != lat.n_sites)
    throw DomainError("build_hamiltonian: detunings size mismatch");
  const SectorBasis& basis = reg.sector(n_total);
  const SectorTables& t = reg.tables(n_total);

  SparseOperator op;
  op.dimension = basis.dim();
  op.matrix = t.hopping;
  Eigen::Map<const Eigen::VectorXd> d(detunings.data(), lat.n_sites);
  const Eigen::VectorXd diag = t.u_diag + t.occupations * d;
  for (int b = 0; b < basis.dim(); ++b)
    op.matrix.coeffRef(b, b) += diag(b);
  op.matrix.makeCompressed();
  return op;
}

// Per-site mean occupations of a normalized sector vector.
inline Eigen::VectorXd density_expectation(const SectorRegistry& reg,
                                           int n_total,
                                           const Eigen::VectorXcd& psi) {
  const SectorTables& t = reg.tables(n_total);
  if (psi.size() != t.occupations.rows())
    throw DomainError("density_expectation: dimension mismatch");
  const Eigen::VectorXd weights = psi.cwiseAbs2();
  return t.occupations.transpose() * weights;
}

// A state spanning one or more fixed-number sectors of a single lattice.
// Sector components are stored per n_total; the state is normalized across
// sectors unless a caller explicitly works mid-trajectory.
class CompositeState {
 public:
  explicit CompositeState(std::shared_ptr<SectorRegistry> registry)
      : registry_(std::move(registry)) {}

  // |occ> as a one-sector state of amplitude 1.
  static CompositeState product_state(std::shared_ptr<SectorRegistry> registry,
                                      const FockState& occ) {
    const LatticeSpec& lat = registry->lattice();
    if (static_cast<int>(occ.size()) != lat.n_sites)
      throw DomainError("product_state: wrong number of sites");
    for (auto v : occ)
      if (v > lat.n_max)
        throw DomainError("product_state: occupancy above n_max");
    CompositeState st(std::move(registry));
    const int n = total_occupation(occ);
    const SectorBasis& basis = st.registry_->sector(n);
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(basis.dim());
    v(*basis.index_of(occ)) = 1.0;
    st.components_[n] = std::move(v);
    return st;
  }

  const std::shared_ptr<SectorRegistry>& registry() const { return registry_; }

  std::map<int, Eigen::VectorXcd>& components() { return components_; }
  const std::map<int, Eigen::VectorXcd>& components() const {
    return components_;
  }

  // Returns the component vector for a sector, materializing zeros if absent.
  Eigen::VectorXcd& sector_component(int n_total) {
    auto it = components_.find(n_total);
    if (it == components_.end()) {
      const SectorBasis& basis = registry_->sector(n_total);
      it = components_
               .emplace(n_total, Eigen::VectorXcd::Zero(basis.dim()))
               .first;
    }
    return it->second;
  }

  double squared_norm() const {
    double s = 0;
    for (const auto& [n, v] : components_) s += v.squaredNorm();
    return s;
  }
  double norm() const { return std::sqrt(squared_norm()); }

  void scale(double f) {
    for (auto& [n, v] : components_) v *= f;
  }

  void normalize() {
    const double n = norm();
    if (n <= 0) throw NumericError("CompositeState::normalize: zero norm");
    scale(1.0 / n);
  }

  // Drops sectors whose weight is at or below tol (exact zeros by default).
  void prune(double tol = 0.0) {
    for (auto it = components_.begin(); it != components_.end();) {
      if (it->second.squaredNorm() <= tol)
        it = components_.erase(it);
      else
        ++it;
    }
  }

  // Population with site occupation exactly k, summed over sectors.
  double occupation_population(int site, int k) const {
    double p = 0;
    for (const auto& [n, v] : components_) {
      const SectorBasis& basis = registry_->sector(n);
      for (int b = 0; b < basis.dim(); ++b)
        if (basis.states[static_cast<std::size_t>(b)][static_cast<std::size_t>(site)] == k)
          p += std::norm(v(b));
    }
    return p;
  }

 private:
  std::shared_ptr<SectorRegistry> registry_;
  std::map<int, Eigen::VectorXcd> components_;
};

// <a|b> summed over sectors present in both states.
inline cplx sector_overlap(const CompositeState& a, const CompositeState& b) {
  cplx s = 0;
  for (const auto& [n, va] : a.components()) {
    auto it = b.components().find(n);
    if (it == b.components().end()) continue;
    if (va.size() != it->second.size())
      throw DomainError("sector_overlap: mismatched sector dimensions");
    s += va.dot(it->second);  // conjugates the left argument
  }
  return s;
}

// Per-site mean occupations across all sectors of a composite state.
inline Eigen::VectorXd density_expectation(const CompositeState& st) {
  const SectorRegistry& reg = *st.registry();
  Eigen::VectorXd total = Eigen::VectorXd::Zero(reg.lattice().n_sites);
  for (const auto& [n, v] : st.components())
    total += density_expectation(reg, n, v);
  return total;
}

// Mean total pair occupancy sum_i <n_i (n_i - 1)>; zero for hard-core states.
inline double doublon_expectation(const CompositeState& st) {
  const SectorRegistry& reg = *st.registry();
  double total = 0;
  for (const auto& [n, v] : st.components()) {
    const SectorBasis& basis = reg.sector(n);
    for (int b = 0; b < basis.dim(); ++b) {
      const FockState& s = basis.states[static_cast<std::size_t>(b)];
      double pairs = 0;
      for (uint8_t occ : s) pairs += double(occ) * (double(occ) - 1.0);
      total += pairs * std::norm(v(b));
    }
  }
  return total;
}

}  // namespace bht
