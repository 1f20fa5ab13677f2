#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "bellsim/hilbert.hpp"
#include "bellsim/rng.hpp"
#include "bellsim/types.hpp"

namespace bellsim {

/// Wave function sampled on a regular 1D grid per particle coordinate, with
/// an internal (spin) index.  Layout: data[(x_1 * points + x_2 ...) *
/// components + s], coordinates row-major, spin fastest.
struct GridWaveFunction {
  int coords = 1;       // number of particle coordinates
  int points = 2;       // grid points per coordinate
  double spacing = 1.0;
  bool periodic = true;
  int components = 1;   // internal dimension (product of spin factors)
  Vec data;
  double time = 0.0;

  long long grid_size() const;
  long long flat(const std::vector<int>& nodes, int component) const;
  double density(const std::vector<int>& nodes) const;
  double max_density() const;
  double norm_l2() const;  // discrete L2 norm including the cell volume
};

struct VelocityResult {
  std::vector<double> v;  // one component per particle coordinate
  bool escaped = false;   // density floor violated at the evaluation point
};

/// Bohm velocity v_k = (hbar/m_k) Im(Psi^* d_k Psi)/|Psi|^2 with spin
/// contracted; spectral gradient on periodic grids, 4th-order central
/// differences otherwise; off-grid points by cubic interpolation of
/// numerator and denominator separately.
VelocityResult bohm_velocity(const GridWaveFunction& psi, const std::vector<double>& masses,
                             const std::vector<double>& point, double hbar = 1.0,
                             double density_floor_rel = 1e-12);

/// Bohm-Dirac velocity v_k = c (Psi^* alpha^(k) Psi)/(Psi^* Psi) with
/// alpha = sigma_1 acting on the k-th spinor index; |v_k| <= c by
/// construction.  components must equal 2^coords.
VelocityResult bohm_dirac_velocity(const GridWaveFunction& psi, const std::vector<double>& point,
                                   double light_speed = 1.0, double density_floor_rel = 1e-12);

enum class DensityVelocityKind { Schrodinger, Dirac };

/// Velocity laws extended to density matrices on the grid basis; reduces to
/// the pure-state law for W = |Psi><Psi|.
VelocityResult velocity_from_density(const Mat& w, const GridWaveFunction& layout,
                                     DensityVelocityKind kind, const std::vector<double>& masses,
                                     const std::vector<double>& point, double hbar = 1.0,
                                     double light_speed = 1.0, double density_floor_rel = 1e-12);

/// Minimal free backward generator applied to a basis function:
/// Lf(q) = Re <Psi|P(q) (i/hbar)[H, f_hat]|Psi> / <Psi|P(q)|Psi>, with
/// f_hat = sum_q f(q) P(q).  PVM only; exact L1 = 0 and realness.
RVec minimal_free_generator_apply(const RVec& f, const Vec& psi, const OperatorMatrix& h,
                                  const PovmFamily& pvm, double hbar = 1.0,
                                  double probability_floor = 1e-14);

/// max_q |L(fg) - f Lg - g Lf|: near zero for discretized differential
/// operators, order one for integral kernels.
double leibniz_residual(const Vec& psi, const OperatorMatrix& h, const PovmFamily& pvm,
                        const RVec& f, const RVec& g, double hbar = 1.0,
                        double probability_floor = 1e-14);

/// Nelson drift v + (lambda/2) grad log |Psi|^2; lambda = 0 is Bohm exactly.
VelocityResult nelson_drift(const GridWaveFunction& psi, double lambda,
                            const std::vector<double>& masses, const std::vector<double>& point,
                            double hbar = 1.0, double density_floor_rel = 1e-12);

/// One Euler-Maruyama step of the comparison diffusion with diffusion
/// constant lambda (reference integrator, not part of any model).
std::vector<double> nelson_em_step(const GridWaveFunction& psi, double lambda,
                                   const std::vector<double>& masses,
                                   const std::vector<double>& point, double dt, CounterRng& rng,
                                   double hbar = 1.0);

/// Continuity-equation residual max_x |d|Psi|^2/dt + div(|Psi|^2 v)| for a
/// grid Hamiltonian (diagnostic for the discrete equivariance of the flow).
double continuity_residual(const GridWaveFunction& psi, const OperatorMatrix& h,
                           const std::vector<double>& masses, double hbar = 1.0);

/// Velocity field over all grid nodes, CSV rows "x_1,...,x_N,v_1,...,v_N".
std::string velocity_field_csv(const GridWaveFunction& psi, const std::vector<double>& masses,
                               double hbar = 1.0);

}  // namespace bellsim
