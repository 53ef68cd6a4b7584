#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "bht/fermion.hpp"
#include "bht/fock.hpp"

using namespace bht;

TEST_CASE("chain mode energies match tridiagonal numerics", "[fermion]") {
  for (double j : {-9.0, 4.5}) {
    for (int n : {2, 5, 7, 11}) {
      CAPTURE(j, n);
      Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
      for (int i = 0; i + 1 < n; ++i) h(i, i + 1) = h(i + 1, i) = j;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);

      auto e = open_chain_energies(n, j);
      std::sort(e.begin(), e.end());
      for (int k = 0; k < n; ++k)
        CHECK(std::abs(e[static_cast<std::size_t>(k)] - es.eigenvalues()(k)) <
              1e-12 * std::abs(j) * n);
    }
  }
}

TEST_CASE("chain modes are orthonormal eigenvectors", "[fermion]") {
  const int n = 7;
  const double j = -9.0;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i + 1 < n; ++i) h(i, i + 1) = h(i + 1, i) = j;
  const auto e = open_chain_energies(n, j);
  for (int k = 1; k <= n; ++k) {
    const Eigen::VectorXd phi = open_chain_mode(n, k);
    CHECK((h * phi - e[static_cast<std::size_t>(k - 1)] * phi).norm() < 1e-12);
    for (int k2 = 1; k2 <= n; ++k2) {
      const double dot = phi.dot(open_chain_mode(n, k2));
      CHECK(std::abs(dot - (k == k2 ? 1.0 : 0.0)) < 1e-12);
    }
  }
}

TEST_CASE("two-particle fluid density has the frozen profile", "[fermion]") {
  // Modes 1 and 2 of a five-site chain add up to (1/3, 1/2, 1/3, 1/2, 1/3).
  const double expect[] = {1.0 / 3, 0.5, 1.0 / 3, 0.5, 1.0 / 3};
  for (double j : {-1.0, 1.0}) {
    const Eigen::VectorXd dens = fluid_density(5, 2, j);
    for (int i = 0; i < 5; ++i) {
      CAPTURE(j, i);
      CHECK(std::abs(dens(i) - expect[i]) < 1e-12);
    }
  }
}

TEST_CASE("fluid density sums to the particle number", "[fermion]") {
  for (int n_p = 0; n_p <= 7; ++n_p)
    CHECK(std::abs(fluid_density(7, n_p, -1.0).sum() - n_p) < 1e-12);
}

TEST_CASE("fermi sea energy is the frozen closed form", "[fermion]") {
  // Two modes at 2 cos(pi/6) and 2 cos(2pi/6): sum sqrt(3) + 1.
  CHECK(std::abs(fermi_sea_energy(5, 2, -1.0) - (-(std::sqrt(3.0) + 1.0))) <
        1e-12);
  CHECK(std::abs(fermi_sea_energy(5, 2, 1.0) - (-(std::sqrt(3.0) + 1.0))) <
        1e-12);
  CHECK(fermi_sea_energy(5, 0, -1.0) == 0.0);
}

TEST_CASE("interacting ground energy approaches the fermi sea", "[fermion]") {
  // Two bosons on five sites with repulsion: the hard-core correction is
  // second order in j/u, bounded here by 5 n_particles j^2/u.
  const double j = -1.0;
  for (double u : {1e2, 1e3, 1e4}) {
    CAPTURE(u);
    LatticeSpec lat;
    lat.n_sites = 5;
    lat.n_max = 2;
    lat.hop.assign(4, j);
    lat.interaction.assign(5, u);
    SectorRegistry reg(lat);
    const auto h = build_hamiltonian(reg, 2, std::vector<double>(5, 0.0));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es{
        Eigen::MatrixXcd(h.matrix)};
    const double e_exact = es.eigenvalues()(0);
    const double e_fermi = fermi_sea_energy(5, 2, j);
    CHECK(std::abs(e_exact - e_fermi) < 5.0 * 2 * j * j / u);
  }
}

TEST_CASE("half-band promotion has one shared gap on five sites", "[fermion]") {
  // Pairs 1->4 and 2->5 both span 2|j| (cos(pi/6) - cos(4pi/6)).
  const double j = -2.0;
  const double expect = 2.0 * std::abs(j) *
                        (std::cos(M_PI / 6) - std::cos(4 * M_PI / 6));
  CHECK(std::abs(two_phonon_target(5, j) - expect) < 1e-12);
  CHECK(std::abs(expect - std::abs(j) * 2.7320508075688772) < 1e-12);
}

TEST_CASE("half-band promotion rejects mismatched gaps", "[fermion]") {
  // On nine sites the pair gaps split, so there is no single target.
  CHECK_THROWS_AS(two_phonon_target(9, -1.0), AmbiguityError);
  CHECK_THROWS_AS(two_phonon_target(4, -1.0), DomainError);
  CHECK_THROWS_AS(open_chain_mode(5, 0), DomainError);
  CHECK_THROWS_AS(fluid_density(5, 6, -1.0), DomainError);
}
