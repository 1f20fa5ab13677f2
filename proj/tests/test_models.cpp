#include "doctest.h"

#include <cmath>
#include <set>

#include "bellsim/models.hpp"
#include "bellsim/rng.hpp"

using namespace bellsim;

namespace {

Vec random_state(int n, CounterRng& rng) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = cplx(rng.normal(), rng.normal());
  return v / v.norm();
}

BellModel small_crea1() {
  return build_crea1({6, 1.0, Boundary::Periodic}, 1, 2,
                     SmearingProfile::gaussian(6, 0.5, 1.2), 1.0, 1.0);
}

FieldSchedule small_field(int sites, double strength) {
  std::vector<Mat> a(sites);
  for (int x = 0; x < sites; ++x) {
    Mat ax(2, 2);
    const double profile = strength * std::exp(-0.5 * std::pow(std::min(x, sites - x) / 1.5, 2));
    ax << profile, 0.3 * profile, 0.3 * profile, -0.2 * profile;
    a[x] = ax;
  }
  return FieldSchedule::constant(a);
}

}  // namespace

TEST_CASE("two-level model reproduces the worked rate") {
  BellModel m = build_two_level(0.7);
  Vec psi(2);
  psi << cplx(1, 0), cplx(0, 1);
  psi /= std::sqrt(2.0);
  JumpRateTable t = m.rates(psi, 0.0);
  CHECK(t.rate(0, 1) == doctest::Approx(1.4));
  CHECK(t.rate(1, 0) == 0.0);
}

TEST_CASE("bell-lattice: plane wave hops at the closed-form rate") {
  const int g = 12;
  const double a = 0.5, mass = 1.3;
  BellModel m = build_bell_lattice({g, a, Boundary::Periodic}, mass, RVec());
  const double k = 2.0 * M_PI * 2 / (g * a);
  Vec psi(g);
  for (int s = 0; s < g; ++s) psi[s] = std::exp(I_UNIT * k * a * double(s)) / std::sqrt(double(g));
  JumpRateTable t = m.rates(psi, 0.0);
  const double expected = std::sin(k * a) / (mass * a * a);
  for (int s = 0; s < g; ++s) {
    CHECK(t.rate((s + 1) % g, s) == doctest::Approx(expected).epsilon(1e-10));
    CHECK(t.rate((s + g - 1) % g, s) == 0.0);
  }
}

TEST_CASE("bell-lattice: real ground state of a double well is stationary") {
  const int g = 16;
  RVec v(g);
  for (int s = 0; s < g; ++s) {
    const double x = (s - g / 2.0) / 2.0;
    v[s] = 0.3 * (x * x - 4.0) * (x * x - 4.0) / 16.0;
  }
  BellModel m = build_bell_lattice({g, 0.5, Boundary::Periodic}, 1.0, v);
  Eigen::SelfAdjointEigenSolver<Mat> es(m.hamiltonian(0.0).dense());
  Vec ground = es.eigenvectors().col(0);
  JumpRateTable t = m.rates(ground, 0.0);
  for (const auto& row : t.out) CHECK(row.empty());
}

TEST_CASE("bell-lattice: pure multiplication operators generate no motion") {
  const int g = 8;
  RVec v(g);
  for (int s = 0; s < g; ++s) v[s] = 0.2 * s;
  // Infinite-mass limit: kinetic term off; keep only the potential.
  BellModel m = build_bell_lattice({g, 1.0, Boundary::Periodic}, 1e12, v);
  CounterRng rng(3);
  JumpRateTable t = m.rates(random_state(g, rng), 0.0);
  for (const auto& row : t.out)
    for (const auto& [d, r] : row) CHECK(r < 1e-11);
}

TEST_CASE("crea1: dimensions, hermiticity, and truncation edge") {
  BellModel m = small_crea1();
  REQUIRE(m.dim() == 6 * (1 + 6 + 21));
  CHECK(hermiticity_defect(m.hamiltonian(0.0).sparse()) < 1e-12);

  // phi = 0 gives a pure free process.
  BellModel free = build_crea1({4, 1.0, Boundary::Periodic}, 1, 1,
                               SmearingProfile{std::vector<double>(4, 0.0)}, 1.0, 1.0);
  CHECK(free.hint(0.0).sparse().nonZeros() == 0);

  // Boson cap 0 with a nonzero profile is rejected.
  CHECK_THROWS(build_crea1({4, 1.0, Boundary::Periodic}, 1, 0,
                           SmearingProfile::gaussian(4, 0.5, 1.0), 1.0, 1.0));
}

TEST_CASE("crea1: interaction jumps only create or annihilate one boson") {
  BellModel m = small_crea1();
  CounterRng rng(5);
  Vec psi = random_state(m.dim(), rng);
  JumpRateTable t = minimal_rates(psi, m.hint(0.0), m.povm);
  int creations = 0, annihilations = 0;
  for (int q = 0; q < t.n; ++q)
    for (const auto& [d, r] : t.out[q]) {
      JumpClass c = classify_jump(m, q, d);
      REQUIRE((c == JumpClass::BosonCreate || c == JumpClass::BosonAnnihilate));
      if (c == JumpClass::BosonCreate) ++creations;
      if (c == JumpClass::BosonAnnihilate) ++annihilations;
    }
  CHECK(creations > 0);
  CHECK(annihilations > 0);

  // Full-model jumps add single-particle hops, nothing else.
  JumpRateTable full = m.rates(psi, 0.0);
  for (int q = 0; q < full.n; ++q)
    for (const auto& [d, r] : full.out[q]) {
      JumpClass c = classify_jump(m, q, d);
      REQUIRE((c == JumpClass::SingleMove || c == JumpClass::BosonCreate ||
               c == JumpClass::BosonAnnihilate));
    }
}

TEST_CASE("crea1: free and interaction rate supports are disjoint, so the recipes agree") {
  BellModel m = small_crea1();
  CounterRng rng(7);
  Vec psi = random_state(m.dim(), rng);
  JumpRateTable total = minimal_rates(psi, m.hamiltonian(0.0), m.povm);
  JumpRateTable added = add_rates(minimal_rates(psi, m.h0, m.povm),
                                  minimal_rates(psi, m.hint(0.0), m.povm));
  CHECK(added.minimal);
  for (int q = 0; q < total.n; ++q) {
    REQUIRE(total.out[q].size() == added.out[q].size());
    for (const auto& [d, r] : total.out[q])
      REQUIRE(std::abs(r - added.rate(d, q)) < 1e-12);
  }
}

TEST_CASE("crea1: truncation boundary allows only annihilation out of full sectors") {
  BellModel m = small_crea1();
  CounterRng rng(9);
  // State supported on the maximal boson sector only.
  Vec psi = Vec::Zero(m.dim());
  for (int i = 0; i < m.dim(); ++i)
    if (m.space->config(i).count(1) == 2) psi[i] = cplx(rng.normal(), rng.normal());
  psi /= psi.norm();
  JumpRateTable t = minimal_rates(psi, m.hint(0.0), m.povm);
  for (int q = 0; q < t.n; ++q)
    for (const auto& [d, r] : t.out[q])
      CHECK(classify_jump(m, q, d) == JumpClass::BosonAnnihilate);
}

TEST_CASE("crea1: closed-form oracle matches the generic pipeline on random states") {
  BellModel m = small_crea1();
  CounterRng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    Vec psi = random_state(m.dim(), rng);
    JumpRateTable t = minimal_rates(psi, m.hint(0.0), m.povm);
    for (int q = 0; q < m.dim(); ++q) {
      auto oracle = closed_form_crea1_rates(m, psi, q);
      REQUIRE(oracle.size() == t.out[q].size());
      for (const auto& [d, r] : oracle) REQUIRE(std::abs(t.rate(d, q) - r) < 1e-12);
    }
  }
}

TEST_CASE("crea1: closed form reproduces the total-count factors at coincidence-free configs") {
  // At configurations with all boson occupations <= 1, converting to ordered
  // amplitudes Psi_ord = Psi_occ / sqrt(m!) turns the per-site factor
  // sqrt(m_y + 1) = 1 into the total-count factor sqrt(m' + 1).
  BellModel m = small_crea1();
  CounterRng rng(13);
  Vec psi = random_state(m.dim(), rng);
  const FockSpace& space = *m.space;
  auto factorial = [](int n) { double f = 1; for (int k = 2; k <= n; ++k) f *= k; return f; };
  int checked = 0;
  for (int src = 0; src < m.dim(); ++src) {
    const Configuration& c = space.config(src);
    bool coincidence_free = true;
    for (auto occ : c.occupation[1]) coincidence_free &= occ <= 1;
    if (!coincidence_free) continue;
    const int mprime = c.count(1);
    for (const auto& [dest, rate] : closed_form_crea1_rates(m, psi, src)) {
      const Configuration& d = space.config(dest);
      if (d.count(1) != mprime + 1) continue;  // creation moves only
      bool dest_free = true;
      for (auto occ : d.occupation[1]) dest_free &= occ <= 1;
      if (!dest_free) continue;
      // Locate the landing site and rebuild the rate in ordered-function form.
      int y = -1;
      for (int s = 0; s < space.lattice().sites; ++s)
        if (d.occupation[1][s] > c.occupation[1][s]) y = s;
      double coupling = 0.0;
      for (int x = 0; x < space.lattice().sites; ++x)
        if (c.occupation[0][x])
          coupling += m.phi->at(y - x, space.lattice().sites, Boundary::Periodic);
      const cplx psi_ord_dest = psi[dest] / std::sqrt(factorial(mprime + 1));
      const cplx psi_ord_src = psi[src] / std::sqrt(factorial(mprime));
      const double paper_rate =
          2.0 * std::sqrt(double(mprime + 1)) *
          std::max(0.0, std::imag(std::conj(psi_ord_dest) * coupling * psi_ord_src)) /
          std::norm(psi_ord_src);
      REQUIRE(std::abs(paper_rate - rate) < 1e-12);
      ++checked;
    }
  }
  CHECK(checked > 10);
}

TEST_CASE("crea1: locality - compactly supported phi cannot reach distant bosons") {
  const int g = 8;
  // Profile cut to exact zero beyond 1 site.
  SmearingProfile phi = SmearingProfile::gaussian(g, 0.8, 0.8, 1);
  BellModel m = build_crea1({g, 1.0, Boundary::Periodic}, 1, 1, phi, 1.0, 1.0);
  CounterRng rng(15);
  Vec psi = random_state(m.dim(), rng);
  JumpRateTable t = minimal_rates(psi, m.hint(0.0), m.povm);
  for (int q = 0; q < t.n; ++q) {
    const Configuration& src = m.space->config(q);
    int fermion_site = -1;
    for (int s = 0; s < g; ++s)
      if (src.occupation[0][s]) fermion_site = s;
    for (const auto& [d, r] : t.out[q]) {
      const Configuration& dst = m.space->config(d);
      for (int s = 0; s < g; ++s)
        if (dst.occupation[1][s] != src.occupation[1][s]) {
          int dist = std::abs(s - fermion_site);
          dist = std::min(dist, g - dist);
          REQUIRE(dist <= 1);
        }
    }
  }
}

TEST_CASE("crea1: interaction diagram accessor matches the model kernel") {
  BellModel m = small_crea1();
  KernelDiagram d = crea1_interaction_diagram(m);
  CHECK((d.realize() - m.hint(0.0).dense()).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("dirac-pair: construction invariants") {
  BellModel m = build_dirac_pair({8, 1.0, Boundary::Periodic}, 1.0, small_field(8, 0.4), 2);
  // Dimension: sectors (0,0),(1,0),(0,1),(2,0),(1,1),(0,2).
  REQUIRE(m.dim() == 1 + 8 + 8 + 28 + 64 + 28);
  CHECK(hermiticity_defect(m.hamiltonian(0.0).sparse()) < 1e-12);

  // Charge-conjugation reversal was verified at build; zero-mass lattices
  // with zero modes are rejected.
  CHECK_THROWS(build_dirac_pair({8, 1.0, Boundary::Periodic}, 0.0, small_field(8, 0.1), 1));

  // Number operators: H0 conserves both, Hint conserves the net charge.
  const FockSpace& sp = *m.space;
  Mat nel = number_operator(sp, 0, {0, 1, 2, 3, 4, 5, 6, 7}).dense();
  Mat npo = number_operator(sp, 1, {0, 1, 2, 3, 4, 5, 6, 7}).dense();
  Mat h0 = m.h0.dense(), hint = m.hint(0.0).dense();
  CHECK((h0 * nel - nel * h0).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((h0 * npo - npo * h0).cwiseAbs().maxCoeff() < 1e-12);
  Mat charge = npo - nel;
  CHECK((hint * charge - charge * hint).cwiseAbs().maxCoeff() < 1e-12);

  // A = 0 kills the interaction entirely.
  std::vector<Mat> zero(8, Mat::Zero(2, 2));
  BellModel free = build_dirac_pair({8, 1.0, Boundary::Periodic}, 1.0,
                                    FieldSchedule::constant(zero), 2);
  CHECK(free.hint(0.0).dense().cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("dirac-pair: POVM cells are complete and the Born weights track sectors") {
  BellModel m = build_dirac_pair({6, 0.8, Boundary::Periodic}, 1.2, small_field(6, 0.3), 2);
  CounterRng rng(17);
  Vec psi = random_state(m.dim(), rng);
  RVec p = born_distribution(psi, m.povm);
  CHECK(std::abs(p.sum() - 1.0) < 1e-10);
  // Sector marginals equal the squared sector components.
  const FockSpace& sp = *m.space;
  for (int sec = 0; sec < sp.sectors(); ++sec) {
    double from_cells = 0.0;
    for (int q = 0; q < m.configs(); ++q)
      if (m.config_sector[q] == sec) from_cells += p[q];
    double block = psi.segment(sp.sector_begin(sec), sp.sector_dim(sec)).squaredNorm();
    CHECK(from_cells == doctest::Approx(block).epsilon(1e-10));
  }
}

TEST_CASE("dirac-pair: jump support is exactly the four field-operator classes") {
  BellModel m = build_dirac_pair({6, 0.8, Boundary::Periodic}, 1.1, small_field(6, 0.4), 2);
  CounterRng rng(19);
  Vec psi = random_state(m.dim(), rng);
  JumpRateTable t = m.rates(psi, 0.0);
  std::set<JumpClass> seen;
  for (int q = 0; q < t.n; ++q)
    for (const auto& [d, r] : t.out[q]) {
      JumpClass c = classify_jump(m, q, d);
      REQUIRE((c == JumpClass::SingleMove || c == JumpClass::PairCreate ||
               c == JumpClass::PairAnnihilate));
      seen.insert(c);
      // Charge is conserved along every admissible transition.
      REQUIRE(m.config_charge[q] == m.config_charge[d]);
    }
  CHECK(seen.count(JumpClass::SingleMove));
  CHECK(seen.count(JumpClass::PairCreate));
  CHECK(seen.count(JumpClass::PairAnnihilate));
}

TEST_CASE("dirac-pair: extended diagram realizes the interaction kernel") {
  BellModel m = build_dirac_pair({4, 1.0, Boundary::Periodic}, 1.0, small_field(4, 0.5), 2);
  KernelDiagram d = dirac_interaction_diagram(m, 0.0);
  Mat realized = d.realize();
  CHECK((realized - Mat(m.dirac->hint_ext[0].second)).cwiseAbs().maxCoeff() < 1e-12);
  // Restricting through the embedding recovers the mode-space interaction.
  Mat e = Mat(m.dirac->embedding);
  Mat pulled_back = e.adjoint() * realized * e;
  CHECK((pulled_back - m.hint(0.0).dense()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("dirac-pair: diagram rates equal the model's interaction rates") {
  BellModel m = build_dirac_pair({4, 1.0, Boundary::Periodic}, 1.0, small_field(4, 0.5), 2);
  KernelDiagram d = dirac_interaction_diagram(m, 0.0);
  CounterRng rng(23);
  for (int rep = 0; rep < 5; ++rep) {
    Vec psi = random_state(m.dim(), rng);
    Vec psi_ext = m.dirac->embedding * psi;
    JumpRateTable from_diagram = rates_from_diagram(d, psi_ext);
    JumpRateTable from_model = dirac_part_rates(m, psi, 0.0, true);
    for (int q = 0; q < from_model.n; ++q) {
      for (const auto& [dest, r] : from_model.out[q])
        REQUIRE(std::abs(from_diagram.rate(dest, q) - r) < 1e-12);
      for (const auto& [dest, r] : from_diagram.out[q])
        REQUIRE(std::abs(from_model.rate(dest, q) - r) < 1e-12);
    }
  }
}

TEST_CASE("dirac-pair: the two equivariant rate recipes genuinely differ") {
  // The extended-kernel rates (four transition classes) and the projected
  // Naimark-sandwich rates are both equivariant; they are not the same
  // family, which is exactly the freedom noted for POVMs vs PVMs.
  BellModel m = build_dirac_pair({4, 1.0, Boundary::Periodic}, 1.0, small_field(4, 0.5), 2);
  CounterRng rng(29);
  Vec psi = random_state(m.dim(), rng);
  JumpRateTable ext = m.rates(psi, 0.0);
  JumpRateTable sandwich = add_rates(minimal_rates(psi, m.h0, m.povm),
                                     minimal_rates(psi, m.hint(0.0), m.povm));
  double diff = 0.0;
  for (int q = 0; q < ext.n; ++q)
    for (const auto& [dst, r] : ext.out[q]) diff = std::max(diff, std::abs(r - sandwich.rate(dst, q)));
  CHECK(diff > 1e-6);
  // Both satisfy the deterministic equivariance identity.
  RVec p = m.born(psi);
  Vec hpsi = m.hamiltonian(0.0).apply(psi);
  RVec lhs_ext = apply_jump_generator(ext, p);
  RVec lhs_sand = apply_jump_generator(sandwich, p);
  for (int q = 0; q < m.configs(); ++q) {
    const double dpdt = 2.0 * std::imag(m.povm.apply_cell(q, psi).dot(hpsi));
    REQUIRE(std::abs(lhs_ext[q] - dpdt) < 1e-11);
    REQUIRE(std::abs(lhs_sand[q] - dpdt) < 1e-11);
  }
}

TEST_CASE("model manifests are stable and hashable") {
  BellModel m = small_crea1();
  CHECK(m.manifest() == small_crea1().manifest());
  CHECK(m.manifest_hash() == small_crea1().manifest_hash());
  CHECK(m.manifest().find("crea1") != std::string::npos);
}
