#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace bellsim {

using cplx = std::complex<double>;
using Vec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;
using Mat = Eigen::MatrixXcd;
using RMat = Eigen::MatrixXd;
using SparseMat = Eigen::SparseMatrix<cplx>;
using Triplet = Eigen::Triplet<cplx>;

inline constexpr cplx I_UNIT{0.0, 1.0};

/// Natural units by default (hbar = c = 1); masses stay explicit so the
/// formulas remain dimensionally checkable.
struct PhysicalConstants {
  double hbar = 1.0;
  double c = 1.0;
  std::vector<double> masses;  // per species

  double mass(int species) const {
    return species < static_cast<int>(masses.size()) ? masses[species] : 1.0;
  }
};

/// Default numerical tolerances; every one of them can be overridden at the
/// call sites that take a Tolerances argument.
struct Tolerances {
  double hermiticity = 1e-12;
  double povm_completeness = 1e-12;
  double positivity = -1e-10;
  double norm = 1e-10;
  double krylov = 1e-10;
  double probability_floor = 1e-14;  // sources below carry no outgoing rate
  double rate_prune = 1e-14;         // relative to per-source total
};

inline const Tolerances& default_tol() {
  static const Tolerances t{};
  return t;
}

}  // namespace bellsim
