#include "doctest.h"

#include <cmath>

#include "bellsim/hilbert.hpp"
#include "bellsim/rng.hpp"

using namespace bellsim;

namespace {

Mat random_hermitian(int n, CounterRng& rng) {
  Mat a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = cplx(rng.normal(), rng.normal());
  return 0.5 * (a + Mat(a.adjoint()));
}

Vec random_state(int n, CounterRng& rng) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = cplx(rng.normal(), rng.normal());
  return v / v.norm();
}

// Random PVM: eigenprojectors of a random Hermitian matrix grouped into cells.
PovmFamily random_pvm(int dim, int ncells, CounterRng& rng) {
  Eigen::SelfAdjointEigenSolver<Mat> es(random_hermitian(dim, rng));
  Mat u = es.eigenvectors();
  std::vector<SparseMat> cells(ncells, SparseMat(dim, dim));
  std::vector<Mat> dense(ncells, Mat::Zero(dim, dim));
  for (int k = 0; k < dim; ++k) {
    const int cell = k % ncells;
    dense[cell] += u.col(k) * u.col(k).adjoint();
  }
  for (int c = 0; c < ncells; ++c) cells[c] = dense[c].sparseView(1.0, 1e-300);
  return PovmFamily::from_cells(PovmFamily::Kind::PVM, std::move(cells));
}

}  // namespace

TEST_CASE("evolve: identity Hamiltonian leaves the state unchanged") {
  Vec psi(3);
  psi << cplx(0.5, 0.1), cplx(-0.3, 0.4), cplx(0.2, -0.67);
  psi /= psi.norm();
  StateVector s = StateVector::checked(psi);
  StateVector out = evolve(s, OperatorMatrix::zero(3), 1.0);
  CHECK((out.amplitudes - psi).norm() < 1e-14);
  CHECK(out.time == doctest::Approx(1.0));
}

TEST_CASE("evolve: two-level Rabi oscillation matches the closed form") {
  const double omega = 0.83;
  Mat h(2, 2);
  h << 0.0, omega, omega, 0.0;  // hbar = 1
  OperatorMatrix hm = OperatorMatrix::from_dense(h, true);
  Vec psi0(2);
  psi0 << 1.0, 0.0;
  StateVector s = StateVector::checked(psi0);
  for (double t : {0.17, 0.9, 2.4}) {
    StateVector out = evolve(s, hm, t);
    const double p2 = std::norm(out.amplitudes[1]);
    CHECK(std::abs(p2 - std::sin(omega * t) * std::sin(omega * t)) < 1e-9);
  }
}

TEST_CASE("evolve: forward then backward recovers the state, norm preserved") {
  CounterRng rng(7);
  OperatorMatrix h = OperatorMatrix::from_dense(random_hermitian(8, rng), true);
  StateVector s = StateVector::checked(random_state(8, rng));
  StateVector fwd = evolve(s, h, 0.37);
  CHECK(std::abs(fwd.amplitudes.norm() - 1.0) < 1e-10);
  StateVector back = evolve(fwd, h, -0.37);
  CHECK((back.amplitudes - s.amplitudes).norm() < 1e-9);
}

TEST_CASE("evolve rejects non-Hermitian input") {
  Mat h(2, 2);
  h << 0.0, 1.0, 2.0, 0.0;
  CHECK_THROWS(OperatorMatrix::from_dense(h, true));
}

TEST_CASE("Krylov propagation above the dense limit matches eigendecomposition") {
  const int n = 600;
  CounterRng rng(11);
  // Sparse banded Hermitian.
  std::vector<Triplet> trips;
  for (int i = 0; i < n; ++i) {
    trips.emplace_back(i, i, rng.normal());
    if (i + 1 < n) {
      cplx v(rng.normal(), rng.normal());
      trips.emplace_back(i, i + 1, v);
      trips.emplace_back(i + 1, i, std::conj(v));
    }
  }
  SparseMat m(n, n);
  m.setFromTriplets(trips.begin(), trips.end());
  OperatorMatrix h(m, true);
  Vec psi = random_state(n, rng);

  Propagator krylov(h, 1.0, 512);
  CHECK_FALSE(krylov.dense_mode());
  Propagator dense(h, 1.0, 1024);
  Vec a = krylov.apply(psi, 0.8);
  Vec b = dense.apply(psi, 0.8);
  CHECK(std::abs(a.norm() - 1.0) < 1e-10);
  CHECK((a - b).norm() < 1e-9);
}

TEST_CASE("born_distribution: basis vector gives a point mass") {
  Vec psi = Vec::Zero(4);
  psi[2] = cplx(0.0, 1.0);
  RVec p = born_distribution(StateVector::checked(psi), PovmFamily::coordinate(4));
  CHECK(p[2] == doctest::Approx(1.0));
  CHECK(p.sum() == doctest::Approx(1.0));
}

TEST_CASE("born_distribution: symmetric two-cell split") {
  Vec psi(2);
  psi << cplx(1.0, 0.0), cplx(0.0, 1.0);
  psi /= std::sqrt(2.0);
  RVec p = born_distribution(StateVector::checked(psi), PovmFamily::coordinate(2));
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(p[1] == doctest::Approx(0.5));
}

TEST_CASE("born_distribution: projected POVM matches dense quadratic forms") {
  CounterRng rng(23);
  const int big = 6, small = 4;
  PovmFamily pvm = random_pvm(big, 3, rng);
  // Random isometry from a QR factorization.
  Mat g(big, small);
  for (int i = 0; i < big; ++i)
    for (int j = 0; j < small; ++j) g(i, j) = cplx(rng.normal(), rng.normal());
  Eigen::HouseholderQR<Mat> qr(g);
  Mat e = Mat(qr.householderQ()).leftCols(small);
  PovmFamily povm = project_povm(pvm, e);
  CHECK(povm.kind() == PovmFamily::Kind::POVM);

  Vec psi = random_state(small, rng);
  RVec p = born_distribution(psi, povm);
  for (int q = 0; q < povm.cells(); ++q) {
    const cplx direct = psi.dot(Mat(povm.cell(q)) * psi);
    CHECK(std::abs(p[q] - direct.real()) < 1e-12);
  }
  CHECK(std::abs(p.sum() - 1.0) < 1e-12);
}

TEST_CASE("born_distribution rejects mismatched bases") {
  Vec psi = Vec::Zero(3);
  psi[0] = 1.0;
  CHECK_THROWS(born_distribution(StateVector::checked(psi), PovmFamily::coordinate(4)));
}

TEST_CASE("partial_trace: product state reduces to the kept factor") {
  CounterRng rng(3);
  Vec a = random_state(2, rng), b = random_state(3, rng);
  Vec full(6);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) full[i * 3 + j] = a[i] * b[j];
  DensityMatrix w = DensityMatrix::pure(full);
  DensityMatrix r1 = partial_trace(w, 0, {2, 3});
  CHECK((r1.matrix - a * a.adjoint()).cwiseAbs().maxCoeff() < 1e-13);
  CHECK(std::abs(r1.matrix.trace().real() - 1.0) < 1e-13);
}

TEST_CASE("partial_trace: maximally entangled pair reduces to identity/2") {
  Vec bell(4);
  bell << 1.0 / std::sqrt(2.0), 0.0, 0.0, 1.0 / std::sqrt(2.0);
  DensityMatrix r = partial_trace(DensityMatrix::pure(bell), 1, {2, 2});
  CHECK((r.matrix - 0.5 * Mat::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("partial_trace: random pure state matches the index-sum oracle") {
  CounterRng rng(17);
  Vec psi = random_state(4, rng);
  DensityMatrix w = DensityMatrix::pure(psi);
  DensityMatrix r = partial_trace(w, 0, {2, 2});
  // Independent index-sum oracle.
  Mat oracle = Mat::Zero(2, 2);
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int k = 0; k < 2; ++k) oracle(a, b) += psi[a * 2 + k] * std::conj(psi[b * 2 + k]);
  CHECK((r.matrix - oracle).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("partial_trace rejects inconsistent factorizations") {
  Vec psi = Vec::Zero(6);
  psi[0] = 1.0;
  CHECK_THROWS(partial_trace(DensityMatrix::pure(psi), 0, {2, 2}));
}

TEST_CASE("heisenberg_evolve: t = 0 is the identity, pictures agree") {
  CounterRng rng(31);
  const int dim = 5;
  OperatorMatrix h = OperatorMatrix::from_dense(random_hermitian(dim, rng), true);
  PovmFamily pvm = PovmFamily::coordinate(dim);
  PovmFamily same = heisenberg_evolve(pvm, h, 0.0);
  Vec psi = random_state(dim, rng);
  RVec p0 = born_distribution(psi, pvm), p1 = born_distribution(psi, same);
  CHECK((p0 - p1).cwiseAbs().maxCoeff() < 1e-12);

  const double t = 0.63;
  PovmFamily moved = heisenberg_evolve(pvm, h, t);
  StateVector evolved = evolve(StateVector::checked(psi), h, t);
  RVec heis = born_distribution(psi, moved);
  RVec schr = born_distribution(evolved.amplitudes, pvm);
  CHECK((heis - schr).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("heisenberg_evolve: commuting PVM cells are fixed points") {
  CounterRng rng(37);
  Mat h = random_hermitian(6, rng);
  Eigen::SelfAdjointEigenSolver<Mat> es(h);
  // PVM built from eigenprojector groups commutes with H.
  std::vector<SparseMat> cells;
  std::vector<Mat> groups(3, Mat::Zero(6, 6));
  for (int k = 0; k < 6; ++k) groups[k / 2] += es.eigenvectors().col(k) * es.eigenvectors().col(k).adjoint();
  for (auto& g : groups) cells.push_back(g.sparseView(1.0, 1e-300));
  PovmFamily pvm = PovmFamily::from_cells(PovmFamily::Kind::PVM, std::move(cells));
  PovmFamily moved = heisenberg_evolve(pvm, OperatorMatrix::from_dense(h, true), 1.7);
  for (int q = 0; q < pvm.cells(); ++q)
    CHECK((Mat(moved.cell(q)) - Mat(pvm.cell(q))).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("picture equivalence over random draws") {
  CounterRng rng(101);
  for (int rep = 0; rep < 100; ++rep) {
    const int dim = 2 + static_cast<int>(rng.next_u64() % 15);  // <= 16 keeps it quick
    OperatorMatrix h = OperatorMatrix::from_dense(random_hermitian(dim, rng), true);
    Vec psi = random_state(dim, rng);
    const double t = rng.u01();
    PovmFamily pvm = PovmFamily::coordinate(dim);
    RVec heis = born_distribution(psi, heisenberg_evolve(pvm, h, t));
    RVec schr = born_distribution(Propagator(h).apply(psi, t), pvm);
    REQUIRE((heis - schr).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("PovmFamily validates completeness and positivity") {
  SparseMat half(2, 2);
  half.insert(0, 0) = 0.5;
  std::vector<SparseMat> cells{half};
  CHECK_THROWS(PovmFamily::from_cells(PovmFamily::Kind::POVM, cells));
}
