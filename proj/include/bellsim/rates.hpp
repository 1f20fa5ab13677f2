#pragma once

#include <functional>
#include <string>
#include <vector>

#include "bellsim/hilbert.hpp"
#include "bellsim/types.hpp"

namespace bellsim {

/// Antisymmetric current J(q,q') = (2/hbar) Im <Psi|P(q) H P(q')|Psi>,
/// stored row-wise (row = destination q).
struct CurrentMatrix {
  int n = 0;
  std::vector<std::vector<std::pair<int, double>>> rows;  // (q', J(q,q')), sorted by q'

  double at(int q, int qp) const;
  double antisymmetry_defect() const;
  /// Row marginals sum_{q'} J(q,q').
  RVec marginals() const;
  std::string to_csv() const;
};

/// Sparse nonnegative rate family sigma(destination | source), stored by
/// source.  `flagged` marks zero-probability sources that carry no outgoing
/// rate; `minimal` records that the one-way-street property holds by
/// construction.
struct JumpRateTable {
  int n = 0;
  std::vector<std::vector<std::pair<int, double>>> out;  // per source: (dest, rate)
  std::vector<double> total;                             // sigma(Q|source)
  std::vector<char> flagged;
  bool minimal = false;

  double rate(int dest, int source) const;
  void recompute_totals();
  /// Drops entries below rel_floor * total(source).
  void prune(double rel_floor);
  std::string to_csv() const;
};

/// Eq.-level building blocks.  For coordinate PVMs these run over the sparse
/// Hamiltonian structure; general POVMs go through cell vectors.
CurrentMatrix current_matrix(const Vec& psi, const OperatorMatrix& h, const PovmFamily& povm,
                             double hbar = 1.0);

JumpRateTable minimal_rates(const Vec& psi, const OperatorMatrix& h, const PovmFamily& povm,
                            double hbar = 1.0, const Tolerances& tol = default_tol());

JumpRateTable minimal_rates_density(const DensityMatrix& w, const OperatorMatrix& h,
                                    const PovmFamily& povm, double hbar = 1.0,
                                    const Tolerances& tol = default_tol());

/// Positive-part-over-probability extraction from an already computed
/// current table (used by model-specific kernel routes).
JumpRateTable minimal_rates_from_current(const CurrentMatrix& j, const RVec& p,
                                         const Tolerances& tol = default_tol());

/// Entrywise sum; the result is flagged minimal only when the two supports
/// are disjoint (different sorts of jumps).
JumpRateTable add_rates(const JumpRateTable& a, const JumpRateTable& b);

/// Forward generator action of a rate table on a distribution:
/// (L rho)(q) = sum_{q'} sigma(q|q') rho(q') - sigma(Q|q) rho(q).
RVec apply_jump_generator(const JumpRateTable& rates, const RVec& rho);

struct StandardCurrentReport {
  double max_current_residual = 0.0;  // |sigma p - sigma^T p - J|
  double min_slack = 0.0;             // min of sigma(q|q') p(q') - J^+(q,q')
  double max_slack = 0.0;
  bool equality_everywhere = false;   // sigma p == J^+ within tol
  bool strict_somewhere = false;      // slack above tol somewhere
  bool passed = false;                // standard-current identity holds
  std::string summary() const;
};

/// Verifies the standard-current property sigma(q|q')p(q') - sigma(q'|q)p(q)
/// = J(q,q') and the minimality inequality sigma(q|q') p(q') >= J^+(q,q').
StandardCurrentReport check_standard_current(const JumpRateTable& rates, const RVec& p,
                                             const CurrentMatrix& j, double tol = 1e-12);

struct ReversalReport {
  bool applicable = false;  // T H T^{-1} == H held
  double hamiltonian_defect = 0.0;
  double max_residual = 0.0;
  bool passed = false;
};

/// Time reversal T psi = U conj(psi) (U = identity when absent).  Checks
/// sigma^Psi(q|q') <Psi|P(q')|Psi> = sigma^{T Psi}(q'|q) <Psi|P(q)|Psi>.
ReversalReport reversed_rates_check(const Vec& psi, const OperatorMatrix& h,
                                    const PovmFamily& povm, const Mat* unitary = nullptr,
                                    double hbar = 1.0, double tol = 1e-12);

struct TwoTimeReport {
  double dt = 0.0;
  double max_residual = 0.0;       // over off-diagonal pairs
  double halved_residual = 0.0;    // same at dt/2
  double residual_ratio = 0.0;     // ~4 for O(dt^2) agreement
  int skipped_diagonal = 0;
};

/// Heisenberg two-time identity at first order in dt:
/// Prob(q at t+dt, q' at t) = sigma(q|q') p(q') dt vs
/// <Psi|{P_dt(q), P(q')}|Psi>^+, PVM only.
TwoTimeReport two_time_check(const Vec& psi, const OperatorMatrix& h, const PovmFamily& pvm,
                             double dt = 1e-4, double hbar = 1.0);

}  // namespace bellsim
