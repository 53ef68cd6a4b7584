#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <vector>

#include "bht/fock.hpp"
#include "bht/propagator.hpp"

using namespace bht;

namespace {

LatticeSpec uniform_chain(int n_sites, int n_max, double j, double u) {
  LatticeSpec lat;
  lat.n_sites = n_sites;
  lat.n_max = n_max;
  lat.hop.assign(static_cast<std::size_t>(n_sites - 1), j);
  lat.interaction.assign(static_cast<std::size_t>(n_sites), u);
  return lat;
}

Eigen::VectorXcd random_state(int dim, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss;
  Eigen::VectorXcd v(dim);
  for (int i = 0; i < dim; ++i) v(i) = cplx(gauss(rng), gauss(rng));
  v.normalize();
  return v;
}

}  // namespace

TEST_CASE("single particle on two sites oscillates as cos^2(Jt)", "[propagator]") {
  const double j = mhz(-9.0);
  auto reg = std::make_shared<SectorRegistry>(uniform_chain(2, 2, j, mhz(-240.0)));
  const std::vector<double> det = {0.0, 0.0};

  for (auto method : {StepPolicy::Method::ExactExp, StepPolicy::Method::Krylov}) {
    StepPolicy policy;
    policy.method = method;
    policy.tolerance = 1e-12;
    for (double t_ns : {3.0, 11.5, 27.8, 55.6}) {
      CAPTURE(static_cast<int>(method), t_ns);
      auto st = CompositeState::product_state(reg, {1, 0});
      evolve_constant(st, det, ns(t_ns), policy);
      const double p_stay = st.occupation_population(0, 1);
      const double expect = std::pow(std::cos(j * ns(t_ns)), 2);
      CHECK(std::abs(p_stay - expect) < 1e-9);
      CHECK(std::abs(st.norm() - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("krylov agrees with the dense exponential", "[propagator]") {
  auto lat = uniform_chain(5, 2, mhz(-9.0), mhz(-238.0));
  auto reg = std::make_shared<SectorRegistry>(lat);
  const std::vector<double> det = {mhz(50.0), mhz(-20.0), mhz(234.0), mhz(5.0), 0.0};

  for (int n_total : {2, 3}) {
    const int dim = reg->sector(n_total).dim();
    Eigen::VectorXcd psi0 = random_state(dim, 11u + static_cast<unsigned>(n_total));

    Eigen::VectorXcd dense = psi0, krylov = psi0;
    StepPolicy pd;
    pd.method = StepPolicy::Method::ExactExp;
    StepPolicy pk;
    pk.method = StepPolicy::Method::Krylov;
    pk.tolerance = 1e-10;
    evolve_sector(*reg, n_total, det, ns(3.0), dense, pd);
    evolve_sector(*reg, n_total, det, ns(3.0), krylov, pk);
    CAPTURE(n_total, dim);
    CHECK((dense - krylov).norm() < 1e-8);
  }
}

TEST_CASE("krylov matches dense on the largest sector in use", "[propagator]") {
  auto reg = std::make_shared<SectorRegistry>(uniform_chain(7, 2, mhz(-9.0), mhz(-240.0)));
  const std::vector<double> det = {mhz(215.0), mhz(-265.0), mhz(262.0),
                                   mhz(231.0), mhz(309.0),  mhz(-308.0),
                                   mhz(357.0)};
  const int dim = reg->sector(4).dim();
  REQUIRE(dim == 161);
  Eigen::VectorXcd psi0 = random_state(dim, 99);

  Eigen::VectorXcd dense = psi0, krylov = psi0;
  StepPolicy pd;
  pd.method = StepPolicy::Method::ExactExp;
  StepPolicy pk;
  pk.method = StepPolicy::Method::Krylov;
  pk.tolerance = 1e-10;
  evolve_sector(*reg, 4, det, ns(5.0), dense, pd);
  evolve_sector(*reg, 4, det, ns(5.0), krylov, pk);
  CHECK((dense - krylov).norm() < 1e-8);
}

TEST_CASE("norm survives many alternating segments", "[propagator]") {
  auto reg = std::make_shared<SectorRegistry>(uniform_chain(5, 2, mhz(-9.0), mhz(-238.0)));
  const std::vector<double> a = {mhz(50.0), mhz(100.0), mhz(234.0), mhz(-100.0), mhz(-50.0)};
  const std::vector<double> b = {0.0, 0.0, mhz(234.0), 0.0, 0.0};

  auto st = CompositeState::product_state(reg, {1, 1, 0, 0, 0});
  std::vector<ConstantSegment> segs;
  segs.reserve(20000);
  for (int k = 0; k < 10000; ++k) {
    segs.push_back({ns(0.1), a});
    segs.push_back({ns(0.1), b});
  }
  StepPolicy pk;
  pk.method = StepPolicy::Method::Krylov;
  evolve_segments(st, segs, pk);
  CHECK(std::abs(st.norm() - 1.0) < 1e-9);
}

TEST_CASE("piecewise evolution reproduces the dense segment product", "[propagator]") {
  auto reg = std::make_shared<SectorRegistry>(uniform_chain(5, 2, mhz(-9.0), mhz(-238.0)));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> uni(-300.0, 300.0);

  std::vector<ConstantSegment> segs;
  for (int k = 0; k < 100; ++k) {
    std::vector<double> det(5);
    for (auto& d : det) d = mhz(uni(rng));
    segs.push_back({ns(0.5), det});
  }

  const int dim = reg->sector(2).dim();
  Eigen::VectorXcd reference = random_state(dim, 21);
  auto st = CompositeState(reg);
  st.sector_component(2) = reference;

  StepPolicy pd;
  pd.method = StepPolicy::Method::ExactExp;
  for (const auto& seg : segs)
    evolve_sector(*reg, 2, seg.detunings, seg.duration, reference, pd);

  StepPolicy pk;
  pk.method = StepPolicy::Method::Krylov;
  pk.tolerance = 1e-10;
  evolve_segments(st, segs, pk);
  CHECK((st.sector_component(2) - reference).norm() < 1e-7);
}

TEST_CASE("energy is conserved under a constant hamiltonian", "[propagator]") {
  auto reg = std::make_shared<SectorRegistry>(uniform_chain(5, 2, mhz(-9.0), mhz(-238.0)));
  const std::vector<double> det = {mhz(262.0), mhz(-205.0), mhz(309.0), mhz(-308.0), mhz(357.0)};
  auto st = CompositeState::product_state(reg, {1, 1, 0, 0, 0});
  const double e0 = energy_expectation(st, det);
  StepPolicy pk;
  pk.method = StepPolicy::Method::Krylov;
  evolve_constant(st, det, ns(500.0), pk);
  const double e1 = energy_expectation(st, det);
  CHECK(std::abs(e1 - e0) < 1e-8 * std::abs(e0));
}

TEST_CASE("identical adjacent segments coalesce exactly", "[propagator]") {
  const std::vector<double> a = {1.0, 2.0};
  const std::vector<double> b = {3.0, 4.0};
  const auto merged = coalesce_segments({{1.0, a}, {2.0, a}, {1.0, b}, {0.0, a}, {1.0, b}});
  REQUIRE(merged.size() == 2);
  CHECK(merged[0].duration == 3.0);
  CHECK(merged[0].detunings == a);
  CHECK(merged[1].duration == 2.0);
  CHECK_THROWS_AS(coalesce_segments({{-1.0, a}}), DomainError);
}

TEST_CASE("hold propagator matches direct evolution", "[propagator]") {
  auto reg = std::make_shared<SectorRegistry>(uniform_chain(5, 2, mhz(-9.0), mhz(-238.0)));
  const std::vector<double> det = {mhz(-50.0), mhz(-100.0), mhz(234.0), mhz(100.0), mhz(50.0)};
  auto st = CompositeState::product_state(reg, {1, 1, 1, 0, 0});
  evolve_constant(st, {0.0, 0.0, mhz(234.0), 0.0, 0.0}, ns(40.0));

  HoldPropagator hold(reg, det);
  for (double t_ns : {0.0, 17.0, 113.0}) {
    CAPTURE(t_ns);
    auto via_hold = hold.advance(st, ns(t_ns));
    auto direct = st;
    StepPolicy pd;
    pd.method = StepPolicy::Method::ExactExp;
    evolve_constant(direct, det, ns(t_ns), pd);
    double diff = 0;
    for (const auto& [n, v] : via_hold.components())
      diff = std::max(diff, (v - direct.components().at(n)).norm());
    CHECK(diff < 1e-9);
  }
}

TEST_CASE("eigensolve reproduces the assembled matrix spectrum", "[propagator]") {
  SectorRegistry reg(uniform_chain(5, 2, mhz(-9.0), mhz(-238.0)));
  const std::vector<double> det = {mhz(10.0), mhz(-3.0), mhz(234.0), 0.0, mhz(7.0)};
  const auto sys = eigensolve(reg, 2, det);
  const auto h = build_hamiltonian(reg, 2, det);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es{Eigen::MatrixXcd(h.matrix)};
  CHECK((sys.values - es.eigenvalues()).cwiseAbs().maxCoeff() <
        1e-10 * es.eigenvalues().cwiseAbs().maxCoeff());
}

TEST_CASE("eigensolve refuses oversized sectors", "[propagator]") {
  SectorRegistry reg(uniform_chain(14, 2, -1.0, -10.0));
  CHECK_THROWS_AS(eigensolve(reg, 7, std::vector<double>(14, 0.0)),
                  CapabilityError);
}

TEST_CASE("tracking follows the adiabatic branch through a crossing", "[propagator]") {
  SectorRegistry reg(uniform_chain(2, 1, -1.0, 0.0));
  std::vector<std::vector<double>> path;
  for (int k = 0; k <= 80; ++k)
    path.push_back({-10.0 + 20.0 * k / 80.0, 0.0});

  const auto tracked = track_eigenstate(reg, 1, path, 0);
  REQUIRE(tracked.size() == path.size());
  // Basis order is (0,1), (1,0): the particle starts on site 0 and the
  // ground branch carries it to site 1 as the bias reverses.
  CHECK(std::norm(tracked.front().vector(1)) > 0.95);
  CHECK(std::norm(tracked.back().vector(0)) > 0.95);
  for (std::size_t p = 1; p < tracked.size(); ++p) {
    CHECK(tracked[p].overlap_sq > 0.9);
    CHECK(tracked[p].value <= tracked[p - 1].value + 0.51);
  }
}

TEST_CASE("tracking rejects degenerate or lost targets", "[propagator]") {
  SectorRegistry reg(uniform_chain(2, 1, -1.0, 0.0));
  // A single step onto the symmetric point leaves two equal overlaps.
  CHECK_THROWS_AS(
      track_eigenstate(reg, 1, {{-1e12, 0.0}, {0.0, 0.0}}, 0),
      AmbiguityError);
  // A coarse step near the crossing falls below a tight overlap floor.
  CHECK_THROWS_WITH(
      track_eigenstate(reg, 1, {{-2.0, 0.0}, {-0.5, 0.0}}, 0, 0.999),
      Catch::Matchers::ContainsSubstring("lost"));
  CHECK_THROWS_AS(track_eigenstate(reg, 1, {}, 0), DomainError);
  CHECK_THROWS_AS(track_eigenstate(reg, 1, {{0.0, 0.0}}, 5), DomainError);
}
