#include "doctest.h"

#include <cmath>

#include "bellsim/flow.hpp"
#include "bellsim/fock.hpp"
#include "bellsim/rng.hpp"

using namespace bellsim;

namespace {

GridWaveFunction plane_wave(int n, double h, double k) {
  GridWaveFunction psi;
  psi.points = n;
  psi.spacing = h;
  psi.data.resize(n);
  for (int x = 0; x < n; ++x) psi.data[x] = std::exp(I_UNIT * k * (h * x)) / std::sqrt(double(n));
  return psi;
}

GridWaveFunction gaussian_packet(int n, double h, double center, double width, double k) {
  GridWaveFunction psi;
  psi.points = n;
  psi.spacing = h;
  psi.data.resize(n);
  for (int x = 0; x < n; ++x) {
    const double d = h * x - center;
    psi.data[x] = std::exp(cplx(-d * d / (4.0 * width * width), k * h * x));
  }
  psi.data /= psi.data.norm();
  return psi;
}

OperatorMatrix lattice_laplacian(int g, double mass, double a) {
  const double hop = -1.0 / (2.0 * mass * a * a);
  std::vector<Triplet> trips;
  for (int s = 0; s < g; ++s) {
    trips.emplace_back(s, s, -2.0 * hop);
    trips.emplace_back(s, (s + 1) % g, hop);
    trips.emplace_back(s, (s + g - 1) % g, hop);
  }
  SparseMat m(g, g);
  m.setFromTriplets(trips.begin(), trips.end());
  return OperatorMatrix(std::move(m), true);
}

}  // namespace

TEST_CASE("bohm_velocity: real wave function is at rest") {
  GridWaveFunction psi;
  psi.points = 32;
  psi.spacing = 0.3;
  psi.data.resize(32);
  for (int x = 0; x < 32; ++x) psi.data[x] = std::exp(-0.1 * (x - 16.0) * (x - 16.0));
  psi.data /= psi.data.norm();
  for (double pt : {3.7, 4.8, 5.55}) {
    VelocityResult r = bohm_velocity(psi, {1.0}, {pt});
    CHECK_FALSE(r.escaped);
    CHECK(std::abs(r.v[0]) < 1e-12);
  }
}

TEST_CASE("bohm_velocity: plane wave moves at hbar k / m") {
  const int n = 64;
  const double h = 0.25, mass = 1.4;
  const double k = 2.0 * M_PI * 3 / (n * h);
  GridWaveFunction psi = plane_wave(n, h, k);
  for (double pt : {0.0, 2.0, 7.3, 11.11}) {
    VelocityResult r = bohm_velocity(psi, {mass}, {pt});
    CHECK(std::abs(r.v[0] - k / mass) < 1e-10);
  }
}

TEST_CASE("bohm_velocity: Gaussian packet with uniform phase gradient") {
  const int n = 128;
  const double h = 0.2;
  const double k = 2.0 * M_PI * 5 / (n * h);
  GridWaveFunction psi = gaussian_packet(n, h, 12.8, 1.0, k);
  for (double pt : {11.5, 12.8, 14.1}) {
    VelocityResult r = bohm_velocity(psi, {1.0}, {pt});
    CHECK(std::abs(r.v[0] - k) < 1e-8);
  }
}

TEST_CASE("bohm_velocity: density floor marks escapes") {
  GridWaveFunction psi = gaussian_packet(64, 0.25, 8.0, 0.4, 0.0);
  VelocityResult r = bohm_velocity(psi, {1.0}, {0.05}, 1.0, 1e-12);
  CHECK(r.escaped);
}

TEST_CASE("bohm_dirac_velocity: sigma_x eigenspinor saturates the light speed") {
  const double c = 2.5;
  GridWaveFunction psi;
  psi.points = 16;
  psi.spacing = 0.5;
  psi.components = 2;
  psi.data.resize(32);
  for (int x = 0; x < 16; ++x) {
    psi.data[2 * x] = 1.0;      // (1,1)/sqrt2 is the +1 eigenvector of sigma_x
    psi.data[2 * x + 1] = 1.0;
  }
  psi.data /= psi.data.norm();
  VelocityResult r = bohm_dirac_velocity(psi, {3.0}, c);
  CHECK(r.v[0] == doctest::Approx(c));

  // Orthogonal superposition with vanishing sigma_x expectation.
  for (int x = 0; x < 16; ++x) {
    psi.data[2 * x] = 1.0;
    psi.data[2 * x + 1] = 0.0;
  }
  psi.data /= psi.data.norm();
  r = bohm_dirac_velocity(psi, {3.0}, c);
  CHECK(std::abs(r.v[0]) < 1e-14);
}

TEST_CASE("bohm_dirac_velocity: random spinor fields obey |v| <= c") {
  CounterRng rng(5);
  const double c = 1.0;
  GridWaveFunction psi;
  psi.points = 24;
  psi.spacing = 0.4;
  psi.components = 2;
  psi.data.resize(48);
  for (int i = 0; i < 48; ++i) psi.data[i] = cplx(rng.normal(), rng.normal());
  psi.data /= psi.data.norm();
  for (int rep = 0; rep < 200; ++rep) {
    const double pt = rng.u01() * 24 * 0.4;
    VelocityResult r = bohm_dirac_velocity(psi, {pt}, c);
    if (!r.escaped) CHECK(std::abs(r.v[0]) <= c);
  }
}

TEST_CASE("velocity_from_density: pure state reduces to the Bohm law") {
  GridWaveFunction psi = gaussian_packet(48, 0.3, 7.0, 1.5, 0.9);
  Mat w = psi.data * psi.data.adjoint();
  for (double pt : {5.5, 7.0, 8.2}) {
    VelocityResult a = velocity_from_density(w, psi, DensityVelocityKind::Schrodinger, {1.3}, {pt});
    VelocityResult b = bohm_velocity(psi, {1.3}, {pt});
    CHECK(std::abs(a.v[0] - b.v[0]) < 1e-10);
  }
}

TEST_CASE("velocity_from_density: mixture of real states is at rest") {
  GridWaveFunction a = gaussian_packet(32, 0.4, 5.0, 1.0, 0.0);
  GridWaveFunction b = gaussian_packet(32, 0.4, 8.0, 1.5, 0.0);
  Mat w = 0.5 * (a.data * a.data.adjoint()) + 0.5 * (b.data * b.data.adjoint());
  VelocityResult r = velocity_from_density(w, a, DensityVelocityKind::Schrodinger, {1.0}, {6.0});
  CHECK(std::abs(r.v[0]) < 1e-12);
}

TEST_CASE("velocity_from_density: conditional state of a product factorizes") {
  // Two-particle product state on a shared grid; particle 1's conditional
  // density matrix is its own pure state for every fixed second coordinate.
  const int n = 24;
  const double h = 0.35;
  GridWaveFunction one = gaussian_packet(n, h, 3.5, 1.0, 0.8);
  GridWaveFunction two = gaussian_packet(n, h, 5.0, 1.2, -0.4);
  Mat w1 = one.data * one.data.adjoint();
  for (double pt : {3.0, 4.2}) {
    VelocityResult a = velocity_from_density(w1, one, DensityVelocityKind::Schrodinger, {1.0}, {pt});
    VelocityResult b = bohm_velocity(one, {1.0}, {pt});
    CHECK(std::abs(a.v[0] - b.v[0]) < 1e-10);
  }
  (void)two;
}

TEST_CASE("minimal_free_generator: constants and diagonal Hamiltonians are annihilated") {
  CounterRng rng(9);
  const int g = 12;
  OperatorMatrix h = lattice_laplacian(g, 1.0, 0.5);
  Vec psi(g);
  for (int i = 0; i < g; ++i) psi[i] = cplx(rng.normal(), rng.normal());
  psi /= psi.norm();
  PovmFamily pvm = PovmFamily::coordinate(g);
  RVec ones = RVec::Ones(g);
  RVec lf = minimal_free_generator_apply(ones, psi, h, pvm);
  CHECK(lf.cwiseAbs().maxCoeff() == 0.0);

  Mat hd = Mat::Zero(g, g);
  for (int i = 0; i < g; ++i) hd(i, i) = rng.normal();
  RVec f(g);
  for (int i = 0; i < g; ++i) f[i] = rng.normal();
  RVec lf2 = minimal_free_generator_apply(f, psi, OperatorMatrix::from_dense(hd, true), pvm);
  CHECK(lf2.cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("minimal_free_generator: position function converges to the Bohm velocity") {
  // Second-order convergence of Lx to v under grid refinement.
  const double length = 12.0, mass = 1.0, width = 1.3;
  const double k = 2.0 * M_PI * 2 / length;
  std::vector<double> errors;
  for (int n : {48, 96, 192}) {
    const double a = length / n;
    GridWaveFunction grid = gaussian_packet(n, a, length / 2, width, k);
    OperatorMatrix h = lattice_laplacian(n, mass, a);
    PovmFamily pvm = PovmFamily::coordinate(n);
    RVec x(n);
    for (int i = 0; i < n; ++i) x[i] = a * i;
    RVec lx = minimal_free_generator_apply(x, grid.data, h, pvm);
    double worst = 0.0;
    for (int i = n / 4; i < 3 * n / 4; ++i) {  // stay away from the wrap seam of f(x)=x
      VelocityResult v = bohm_velocity(grid, {mass}, {a * i});
      worst = std::max(worst, std::abs(lx[i] - v.v[0]));
    }
    errors.push_back(worst);
  }
  CHECK(errors[0] / errors[1] > 3.0);  // ~4 for 2nd order
  CHECK(errors[1] / errors[2] > 3.0);
}

TEST_CASE("leibniz_residual: zero for diagonal H, refining for the Laplacian, order one for kernels") {
  CounterRng rng(13);
  // Diagonal H.
  const int g = 16;
  Mat hd = Mat::Zero(g, g);
  for (int i = 0; i < g; ++i) hd(i, i) = rng.normal();
  GridWaveFunction psi0 = gaussian_packet(g, 0.7, 5.0, 1.4, 0.5);
  RVec f(g), gg(g);
  for (int i = 0; i < g; ++i) {
    f[i] = std::sin(2.0 * M_PI * i / g);
    gg[i] = std::cos(2.0 * M_PI * i / g);
  }
  CHECK(leibniz_residual(psi0.data, OperatorMatrix::from_dense(hd, true),
                         PovmFamily::coordinate(g), f, gg) < 1e-13);

  // Discretized Laplacian: residual decreases at 2nd order.
  const double length = 10.0;
  std::vector<double> residuals;
  for (int n : {40, 80, 160}) {
    const double a = length / n;
    GridWaveFunction grid = gaussian_packet(n, a, length / 2, 1.1, 2.0 * M_PI * 2 / length);
    RVec fs(n), gs(n);
    for (int i = 0; i < n; ++i) {
      fs[i] = std::sin(2.0 * M_PI * i / n);
      gs[i] = std::cos(4.0 * M_PI * i / n);
    }
    residuals.push_back(leibniz_residual(grid.data, lattice_laplacian(n, 1.0, a),
                                         PovmFamily::coordinate(n), fs, gs));
  }
  CHECK(residuals[0] / residuals[1] > 3.0);
  CHECK(residuals[1] / residuals[2] > 3.0);

  // Integral-kernel Hamiltonian (crea1-like interaction): residual does not refine.
  std::vector<double> kernel_residuals;
  for (int sites : {4, 8}) {
    FockSpace space({sites, 1.0, Boundary::Periodic},
                    {{Statistics::Fermi, 1, 1, "f"}, {Statistics::Bose, 1, 0, "b"}});
    SmearingProfile phi = SmearingProfile::gaussian(sites, 1.0, 1.0);
    SparseMat hi(space.dim(), space.dim());
    for (int x = 0; x < sites; ++x) {
      SparseMat nf = number_operator(space, 0, {x}).sparse();
      SparseMat up = smeared_ladder(space, 1, x, phi, LadderKind::Create).sparse();
      SparseMat down = smeared_ladder(space, 1, x, phi, LadderKind::Annihilate).sparse();
      hi += SparseMat(nf * (up + down));
    }
    OperatorMatrix hint(hi, true);
    CounterRng local(21);
    Vec psi(space.dim());
    for (int i = 0; i < space.dim(); ++i) psi[i] = cplx(local.normal(), local.normal());
    psi /= psi.norm();
    RVec fb(space.dim()), gb(space.dim());
    for (int i = 0; i < space.dim(); ++i) {
      fb[i] = space.config(i).count(1);          // boson number
      gb[i] = space.config(i).occupation[1][0];  // boson occupation of site 0
    }
    kernel_residuals.push_back(
        leibniz_residual(psi, hint, PovmFamily::coordinate(space.dim()), fb, gb));
  }
  CHECK(kernel_residuals[0] > 0.05);
  CHECK(kernel_residuals[1] > 0.05);
}

TEST_CASE("nelson_drift: lambda = 0 is Bohm; plane wave unaffected; Gaussian osmotic term") {
  GridWaveFunction psi = gaussian_packet(96, 0.2, 9.6, 1.5, 1.3);
  for (double pt : {8.0, 9.6, 10.4}) {
    VelocityResult a = nelson_drift(psi, 0.0, {1.0}, {pt});
    VelocityResult b = bohm_velocity(psi, {1.0}, {pt});
    CHECK(a.v[0] == doctest::Approx(b.v[0]));
  }

  const double k = 2.0 * M_PI * 4 / (64 * 0.3);
  GridWaveFunction plane = plane_wave(64, 0.3, k);
  VelocityResult flat = nelson_drift(plane, 1.0, {1.0}, {5.0});
  CHECK(std::abs(flat.v[0] - k) < 1e-9);

  // Real Gaussian: drift = (lambda/2) d/dx log rho = -lambda (x - c)/(2 s^2).
  const double width = 1.2, center = 9.6, lambda = 1.0;
  GridWaveFunction real_packet = gaussian_packet(96, 0.2, center, width, 0.0);
  for (double pt : {8.6, 9.0, 10.2}) {
    VelocityResult r = nelson_drift(real_packet, lambda, {1.0}, {pt});
    const double expected = -lambda * (pt - center) / (2.0 * width * width);
    CHECK(std::abs(r.v[0] - expected) < 1e-8);
  }
}

TEST_CASE("nelson_em_step: zero diffusion reduces to an Euler step of the Bohm flow") {
  GridWaveFunction psi = gaussian_packet(64, 0.25, 8.0, 1.5, 0.7);
  CounterRng rng(3);
  std::vector<double> next = nelson_em_step(psi, 0.0, {1.0}, {8.0}, 0.01, rng);
  VelocityResult v = bohm_velocity(psi, {1.0}, {8.0});
  CHECK(next[0] == doctest::Approx(8.0 + 0.01 * v.v[0]));
}

TEST_CASE("continuity residual refines at the discretization order") {
  const double length = 10.0;
  std::vector<double> res;
  for (int n : {32, 64, 128}) {
    const double a = length / n;
    GridWaveFunction grid = gaussian_packet(n, a, length / 2, 1.0, 2.0 * M_PI * 3 / length);
    res.push_back(continuity_residual(grid, lattice_laplacian(n, 1.0, a), {1.0}));
  }
  CHECK(res[0] / res[1] > 3.0);
  CHECK(res[1] / res[2] > 3.0);
}

TEST_CASE("velocity field CSV has one row per node") {
  GridWaveFunction psi = gaussian_packet(16, 0.5, 4.0, 1.0, 0.3);
  std::string csv = velocity_field_csv(psi, {1.0});
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 17);  // header + 16 nodes
}
