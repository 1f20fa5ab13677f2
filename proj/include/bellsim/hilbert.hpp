#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bellsim/types.hpp"

namespace bellsim {

/// Position of a basis element inside the sector-blocked global enumeration.
struct BasisIndex {
  int sector = 0;
  int ordinal = 0;
};

/// Unit vector over the global basis, tagged with the physical time it
/// belongs to.
struct StateVector {
  Vec amplitudes;
  double time = 0.0;

  int dim() const { return static_cast<int>(amplitudes.size()); }
  double norm() const { return amplitudes.norm(); }

  static StateVector normalized(Vec v, double time = 0.0);
  /// Rejects vectors whose squared norm is off unity by more than tol.norm.
  static StateVector checked(Vec v, double time = 0.0, const Tolerances& tol = default_tol());
};

/// Sparse complex matrix over the global basis.  When the hermitian flag is
/// set, construction verifies max |A - A^dag| entrywise.
class OperatorMatrix {
 public:
  OperatorMatrix() = default;
  OperatorMatrix(SparseMat m, bool hermitian, const Tolerances& tol = default_tol());
  static OperatorMatrix from_dense(const Mat& m, bool hermitian,
                                   const Tolerances& tol = default_tol());
  static OperatorMatrix zero(int dim);
  static OperatorMatrix identity(int dim);

  int dim() const { return static_cast<int>(matrix_.rows()); }
  bool hermitian() const { return hermitian_; }
  const SparseMat& sparse() const { return matrix_; }
  Mat dense() const { return Mat(matrix_); }

  Vec apply(const Vec& v) const { return matrix_ * v; }

  OperatorMatrix add(const OperatorMatrix& other) const;
  OperatorMatrix scaled(cplx factor) const;

 private:
  SparseMat matrix_;
  bool hermitian_ = false;
};

double hermiticity_defect(const SparseMat& m);

/// POVM/PVM over a finite configuration set.  Cells are stored sparse; the
/// coordinate PVM (cell q = |q><q|) is recognized and kept implicit so that
/// simulation-critical paths avoid touching cell matrices at all.
class PovmFamily {
 public:
  enum class Kind { PVM, POVM };

  static PovmFamily coordinate(int dim, std::vector<std::string> labels = {});
  /// General family; verifies completeness, positivity and (for PVMs)
  /// orthogonal idempotence.
  static PovmFamily from_cells(Kind kind, std::vector<SparseMat> cells,
                               std::vector<std::string> labels = {},
                               const Tolerances& tol = default_tol());

  Kind kind() const { return kind_; }
  bool coordinate_pvm() const { return coordinate_; }
  int dim() const { return dim_; }
  int cells() const { return ncells_; }
  const std::string& label(int q) const { return labels_[q]; }
  const std::vector<std::string>& labels() const { return labels_; }

  /// Cell operator (materialized on demand for the coordinate case).
  SparseMat cell(int q) const;
  /// P(q) |psi>.
  Vec apply_cell(int q, const Vec& psi) const;
  /// <psi| P(q) |psi>, guaranteed real.
  double cell_probability(int q, const Vec& psi) const;

  /// Heisenberg transport of every cell: q -> U^dag P(q) U.
  PovmFamily conjugated(const Mat& u, const Tolerances& tol = default_tol()) const;

 private:
  Kind kind_ = Kind::PVM;
  bool coordinate_ = false;
  int dim_ = 0;
  int ncells_ = 0;
  std::vector<SparseMat> cells_;
  std::vector<std::string> labels_;
};

/// Hermitian positive unit-trace matrix.
struct DensityMatrix {
  Mat matrix;

  int dim() const { return static_cast<int>(matrix.rows()); }
  static DensityMatrix pure(const Vec& psi);
  static DensityMatrix checked(Mat w, const Tolerances& tol = default_tol());
};

/// Unitary propagation e^{-i t H / hbar}: exact eigendecomposition up to
/// dense_limit, Lanczos above it.  The eigendecomposition is cached, so
/// repeated steps with the same H cost one dense matvec each.
class Propagator {
 public:
  Propagator(const OperatorMatrix& h, double hbar = 1.0, int dense_limit = 512,
             const Tolerances& tol = default_tol());

  Vec apply(const Vec& psi, double dt) const;
  /// Dense U(dt); only available in eigendecomposition mode.
  Mat unitary(double dt) const;
  bool dense_mode() const { return dense_; }

 private:
  Vec apply_krylov(const Vec& psi, double dt) const;

  bool dense_ = true;
  double hbar_ = 1.0;
  double krylov_tol_ = 1e-10;
  SparseMat h_;
  RVec eigenvalues_;
  Mat eigenvectors_;
};

/// e^{-i dt H / hbar} |psi>; convenience wrapper over Propagator.
StateVector evolve(const StateVector& state, const OperatorMatrix& h, double dt,
                   double hbar = 1.0, const Tolerances& tol = default_tol());

/// Born distribution P(q) = <psi|P(q)|psi> per cell; nonnegative, sums to 1.
RVec born_distribution(const StateVector& state, const PovmFamily& povm,
                       const Tolerances& tol = default_tol());
RVec born_distribution(const Vec& psi, const PovmFamily& povm);
RVec born_distribution(const DensityMatrix& w, const PovmFamily& povm);

/// Reduced density matrix on factor `keep` of a tensor product with the given
/// factor dimensions.
DensityMatrix partial_trace(const DensityMatrix& w, int keep, const std::vector<int>& dims);

/// Heisenberg picture cells P_t(q) = U_t^dag P(q) U_t.
PovmFamily heisenberg_evolve(const PovmFamily& povm, const OperatorMatrix& h, double t,
                             double hbar = 1.0, const Tolerances& tol = default_tol());

/// Cells E^dag P(q) E of a family pushed through an isometry E (columns
/// orthonormal); a PVM generally becomes a genuine POVM.
PovmFamily project_povm(const PovmFamily& povm, const Mat& isometry,
                        const Tolerances& tol = default_tol());

}  // namespace bellsim
