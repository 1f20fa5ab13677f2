#include "bellsim/hilbert.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace bellsim {

namespace {

std::vector<std::string> default_labels(int n) {
  std::vector<std::string> labels(n);
  for (int i = 0; i < n; ++i) labels[i] = std::to_string(i);
  return labels;
}

}  // namespace

StateVector StateVector::normalized(Vec v, double time) {
  const double n = v.norm();
  if (!(n > 0.0)) throw std::invalid_argument("StateVector: zero vector");
  return StateVector{v / n, time};
}

StateVector StateVector::checked(Vec v, double time, const Tolerances& tol) {
  if (std::abs(v.squaredNorm() - 1.0) > tol.norm) {
    std::ostringstream os;
    os << "StateVector: squared norm " << v.squaredNorm() << " violates unit normalization";
    throw std::invalid_argument(os.str());
  }
  return StateVector{std::move(v), time};
}

double hermiticity_defect(const SparseMat& m) {
  SparseMat d = SparseMat(m.adjoint()) - m;
  double worst = 0.0;
  for (int k = 0; k < d.outerSize(); ++k)
    for (SparseMat::InnerIterator it(d, k); it; ++it) worst = std::max(worst, std::abs(it.value()));
  return worst;
}

OperatorMatrix::OperatorMatrix(SparseMat m, bool hermitian, const Tolerances& tol)
    : matrix_(std::move(m)), hermitian_(hermitian) {
  if (matrix_.rows() != matrix_.cols()) throw std::invalid_argument("OperatorMatrix: not square");
  matrix_.makeCompressed();
  if (hermitian_) {
    const double defect = hermiticity_defect(matrix_);
    if (defect > tol.hermiticity) {
      std::ostringstream os;
      os << "OperatorMatrix: hermiticity defect " << defect;
      throw std::invalid_argument(os.str());
    }
  }
}

OperatorMatrix OperatorMatrix::from_dense(const Mat& m, bool hermitian, const Tolerances& tol) {
  return OperatorMatrix(m.sparseView(), hermitian, tol);
}

OperatorMatrix OperatorMatrix::zero(int dim) {
  return OperatorMatrix(SparseMat(dim, dim), true);
}

OperatorMatrix OperatorMatrix::identity(int dim) {
  SparseMat m(dim, dim);
  m.setIdentity();
  return OperatorMatrix(std::move(m), true);
}

OperatorMatrix OperatorMatrix::add(const OperatorMatrix& other) const {
  return OperatorMatrix(SparseMat(matrix_ + other.matrix_), hermitian_ && other.hermitian_);
}

OperatorMatrix OperatorMatrix::scaled(cplx factor) const {
  const bool herm = hermitian_ && factor.imag() == 0.0;
  return OperatorMatrix(SparseMat(factor * matrix_), herm);
}

PovmFamily PovmFamily::coordinate(int dim, std::vector<std::string> labels) {
  PovmFamily p;
  p.kind_ = Kind::PVM;
  p.coordinate_ = true;
  p.dim_ = dim;
  p.ncells_ = dim;
  p.labels_ = labels.empty() ? default_labels(dim) : std::move(labels);
  if (static_cast<int>(p.labels_.size()) != dim)
    throw std::invalid_argument("PovmFamily: label count mismatch");
  return p;
}

PovmFamily PovmFamily::from_cells(Kind kind, std::vector<SparseMat> cells,
                                  std::vector<std::string> labels, const Tolerances& tol) {
  if (cells.empty()) throw std::invalid_argument("PovmFamily: no cells");
  PovmFamily p;
  p.kind_ = kind;
  p.dim_ = static_cast<int>(cells[0].rows());
  p.ncells_ = static_cast<int>(cells.size());
  p.labels_ = labels.empty() ? default_labels(p.ncells_) : std::move(labels);
  if (static_cast<int>(p.labels_.size()) != p.ncells_)
    throw std::invalid_argument("PovmFamily: label count mismatch");

  SparseMat sum(p.dim_, p.dim_);
  for (auto& c : cells) {
    if (c.rows() != p.dim_ || c.cols() != p.dim_)
      throw std::invalid_argument("PovmFamily: inconsistent cell dimensions");
    c.makeCompressed();
    sum += c;
  }
  Mat defect = Mat(sum) - Mat::Identity(p.dim_, p.dim_);
  if (defect.cwiseAbs().maxCoeff() > tol.povm_completeness)
    throw std::invalid_argument("PovmFamily: cells do not sum to the identity");

  for (const auto& c : cells) {
    if (hermiticity_defect(c) > tol.hermiticity)
      throw std::invalid_argument("PovmFamily: non-Hermitian cell");
    Eigen::SelfAdjointEigenSolver<Mat> es(Mat(c), Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < tol.positivity)
      throw std::invalid_argument("PovmFamily: cell not positive semidefinite");
  }
  if (kind == Kind::PVM) {
    for (const auto& c : cells) {
      Mat cd(c);
      if ((cd * cd - cd).cwiseAbs().maxCoeff() > 1e-10)
        throw std::invalid_argument("PovmFamily: PVM cell is not a projector");
    }
    for (std::size_t a = 0; a < cells.size(); ++a)
      for (std::size_t b = a + 1; b < cells.size(); ++b) {
        Mat prod = Mat(cells[a]) * Mat(cells[b]);
        if (prod.cwiseAbs().maxCoeff() > 1e-10)
          throw std::invalid_argument("PovmFamily: PVM cells are not mutually orthogonal");
      }
  }
  p.cells_ = std::move(cells);
  return p;
}

SparseMat PovmFamily::cell(int q) const {
  if (coordinate_) {
    SparseMat c(dim_, dim_);
    c.insert(q, q) = 1.0;
    c.makeCompressed();
    return c;
  }
  return cells_.at(q);
}

Vec PovmFamily::apply_cell(int q, const Vec& psi) const {
  if (coordinate_) {
    Vec v = Vec::Zero(dim_);
    v[q] = psi[q];
    return v;
  }
  return cells_[q] * psi;
}

double PovmFamily::cell_probability(int q, const Vec& psi) const {
  if (coordinate_) return std::norm(psi[q]);
  return psi.dot(cells_[q] * psi).real();
}

PovmFamily PovmFamily::conjugated(const Mat& u, const Tolerances& tol) const {
  std::vector<SparseMat> cells(ncells_);
  for (int q = 0; q < ncells_; ++q) {
    Mat c = u.adjoint() * Mat(cell(q)) * u;
    cells[q] = c.sparseView(1.0, 1e-300);
  }
  return from_cells(kind_, std::move(cells), labels_, tol);
}

DensityMatrix DensityMatrix::pure(const Vec& psi) {
  const double n2 = psi.squaredNorm();
  if (!(n2 > 0.0)) throw std::invalid_argument("DensityMatrix: zero vector");
  return DensityMatrix{(psi * psi.adjoint()) / n2};
}

DensityMatrix DensityMatrix::checked(Mat w, const Tolerances& tol) {
  if (w.rows() != w.cols()) throw std::invalid_argument("DensityMatrix: not square");
  if (std::abs(w.trace().real() - 1.0) > 1e-12 || std::abs(w.trace().imag()) > 1e-12)
    throw std::invalid_argument("DensityMatrix: trace not 1");
  if ((w - w.adjoint()).cwiseAbs().maxCoeff() > tol.hermiticity)
    throw std::invalid_argument("DensityMatrix: not Hermitian");
  Eigen::SelfAdjointEigenSolver<Mat> es(w, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < tol.positivity)
    throw std::invalid_argument("DensityMatrix: negative eigenvalue");
  return DensityMatrix{std::move(w)};
}

Propagator::Propagator(const OperatorMatrix& h, double hbar, int dense_limit,
                       const Tolerances& tol)
    : hbar_(hbar), krylov_tol_(tol.krylov), h_(h.sparse()) {
  if (!h.hermitian()) throw std::invalid_argument("Propagator: non-Hermitian Hamiltonian");
  dense_ = h.dim() <= dense_limit;
  if (dense_) {
    Eigen::SelfAdjointEigenSolver<Mat> es(h.dense());
    if (es.info() != Eigen::Success) throw std::runtime_error("Propagator: eigensolver failed");
    eigenvalues_ = es.eigenvalues();
    eigenvectors_ = es.eigenvectors();
  }
}

Mat Propagator::unitary(double dt) const {
  if (!dense_) throw std::logic_error("Propagator::unitary requires dense mode");
  Vec phases(eigenvalues_.size());
  for (int i = 0; i < eigenvalues_.size(); ++i)
    phases[i] = std::exp(-I_UNIT * eigenvalues_[i] * dt / hbar_);
  return eigenvectors_ * phases.asDiagonal() * eigenvectors_.adjoint();
}

Vec Propagator::apply(const Vec& psi, double dt) const {
  if (dense_) {
    Vec coeffs = eigenvectors_.adjoint() * psi;
    for (int i = 0; i < coeffs.size(); ++i)
      coeffs[i] *= std::exp(-I_UNIT * eigenvalues_[i] * dt / hbar_);
    return eigenvectors_ * coeffs;
  }
  return apply_krylov(psi, dt);
}

Vec Propagator::apply_krylov(const Vec& psi, double dt) const {
  // Lanczos with full reorthogonalization; the step is split until the
  // subspace-exponential residual estimate meets the tolerance.
  const int n = static_cast<int>(psi.size());
  const int m = std::min(n, 60);
  double remaining = dt;
  Vec v = psi;
  const double norm0 = v.norm();
  int halvings = 0;
  double step = dt;
  while (std::abs(remaining) > 0.0) {
    if (std::abs(step) > std::abs(remaining)) step = remaining;
    Mat basis(n, m);
    RVec alpha(m), beta(m);
    basis.col(0) = v / v.norm();
    int k = 0;
    for (; k < m; ++k) {
      Vec w = h_ * basis.col(k);
      alpha[k] = basis.col(k).dot(w).real();
      w -= alpha[k] * basis.col(k);
      if (k > 0) w -= beta[k - 1] * basis.col(k - 1);
      for (int j = 0; j <= k; ++j) w -= basis.col(j).dot(w) * basis.col(j);
      const double b = w.norm();
      if (k + 1 == m || b < 1e-14 * std::abs(alpha[k] + 1.0)) {
        beta[k] = b;
        ++k;
        break;
      }
      beta[k] = b;
      basis.col(k + 1) = w / b;
    }
    Mat t = Mat::Zero(k, k);
    for (int i = 0; i < k; ++i) {
      t(i, i) = alpha[i];
      if (i + 1 < k) {
        t(i, i + 1) = beta[i];
        t(i + 1, i) = beta[i];
      }
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(t);
    Vec e1 = Vec::Zero(k);
    e1[0] = v.norm();
    Vec coeffs = es.eigenvectors().adjoint() * e1;
    for (int i = 0; i < k; ++i)
      coeffs[i] *= std::exp(-I_UNIT * es.eigenvalues()[i] * step / hbar_);
    Vec small = es.eigenvectors() * coeffs;
    const double residual = (k < m) ? 0.0 : std::abs(beta[k - 1] * std::abs(small[k - 1]));
    if (residual > krylov_tol_ * norm0 && halvings < 40) {
      step *= 0.5;
      ++halvings;
      continue;
    }
    if (residual > krylov_tol_ * norm0) {
      std::ostringstream os;
      os << "Propagator: Krylov tolerance not met, achieved residual " << residual;
      throw std::runtime_error(os.str());
    }
    v = basis.leftCols(k) * small;
    remaining -= step;
  }
  return v;
}

StateVector evolve(const StateVector& state, const OperatorMatrix& h, double dt, double hbar,
                   const Tolerances& tol) {
  if (!std::isfinite(dt)) throw std::invalid_argument("evolve: non-finite dt");
  Propagator prop(h, hbar, 512, tol);
  Vec next = prop.apply(state.amplitudes, dt);
  if (std::abs(next.squaredNorm() - 1.0) > tol.norm) {
    std::ostringstream os;
    os << "evolve: norm drift " << std::abs(next.norm() - 1.0);
    throw std::runtime_error(os.str());
  }
  return StateVector{std::move(next), state.time + dt};
}

RVec born_distribution(const Vec& psi, const PovmFamily& povm) {
  if (psi.size() != povm.dim()) throw std::invalid_argument("born_distribution: basis mismatch");
  RVec p(povm.cells());
  if (povm.coordinate_pvm()) {
    for (int q = 0; q < povm.cells(); ++q) p[q] = std::norm(psi[q]);
  } else {
    for (int q = 0; q < povm.cells(); ++q) p[q] = std::max(0.0, povm.cell_probability(q, psi));
  }
  return p;
}

RVec born_distribution(const StateVector& state, const PovmFamily& povm, const Tolerances& tol) {
  RVec p = born_distribution(state.amplitudes, povm);
  if (std::abs(p.sum() - 1.0) > std::max(tol.povm_completeness * povm.cells(), 1e-12 * povm.cells()))
    throw std::runtime_error("born_distribution: probabilities do not sum to 1");
  return p;
}

RVec born_distribution(const DensityMatrix& w, const PovmFamily& povm) {
  RVec p(povm.cells());
  for (int q = 0; q < povm.cells(); ++q)
    p[q] = std::max(0.0, (Mat(povm.cell(q)) * w.matrix).trace().real());
  return p;
}

DensityMatrix partial_trace(const DensityMatrix& w, int keep, const std::vector<int>& dims) {
  long long total = 1;
  for (int d : dims) total *= d;
  if (total != w.dim()) throw std::invalid_argument("partial_trace: inconsistent factorization");
  if (keep < 0 || keep >= static_cast<int>(dims.size()))
    throw std::invalid_argument("partial_trace: bad factor index");

  // Split the flat index as (left, kept, right) with row-major layout.
  long long left = 1, right = 1;
  for (int f = 0; f < keep; ++f) left *= dims[f];
  for (int f = keep + 1; f < static_cast<int>(dims.size()); ++f) right *= dims[f];
  const int dk = dims[keep];

  Mat out = Mat::Zero(dk, dk);
  for (long long l = 0; l < left; ++l)
    for (long long r = 0; r < right; ++r)
      for (int a = 0; a < dk; ++a)
        for (int b = 0; b < dk; ++b) {
          const long long ia = (l * dk + a) * right + r;
          const long long ib = (l * dk + b) * right + r;
          out(a, b) += w.matrix(ia, ib);
        }
  return DensityMatrix{std::move(out)};
}

PovmFamily heisenberg_evolve(const PovmFamily& povm, const OperatorMatrix& h, double t,
                             double hbar, const Tolerances& tol) {
  Propagator prop(h, hbar, 512, tol);
  return povm.conjugated(prop.unitary(t), tol);
}

PovmFamily project_povm(const PovmFamily& povm, const Mat& isometry, const Tolerances& tol) {
  std::vector<SparseMat> cells(povm.cells());
  for (int q = 0; q < povm.cells(); ++q) {
    Mat c = isometry.adjoint() * Mat(povm.cell(q)) * isometry;
    cells[q] = c.sparseView(1.0, 1e-300);
  }
  return PovmFamily::from_cells(PovmFamily::Kind::POVM, std::move(cells), povm.labels(), tol);
}

}  // namespace bellsim
