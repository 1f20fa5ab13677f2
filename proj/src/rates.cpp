#include "bellsim/rates.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace bellsim {

namespace {

double lookup(const std::vector<std::pair<int, double>>& row, int idx) {
  auto it = std::lower_bound(row.begin(), row.end(), idx,
                             [](const auto& e, int v) { return e.first < v; });
  return (it != row.end() && it->first == idx) ? it->second : 0.0;
}

void sort_rows(std::vector<std::vector<std::pair<int, double>>>& rows) {
  for (auto& r : rows) std::sort(r.begin(), r.end());
}

// Dense bilinear table M(q,q') = <P(q)Psi | H | P(q')Psi> for general POVMs.
RMat povm_current_table(const Vec& psi, const OperatorMatrix& h, const PovmFamily& povm,
                        double hbar) {
  const int nc = povm.cells();
  Mat v(psi.size(), nc);
  for (int q = 0; q < nc; ++q) v.col(q) = povm.apply_cell(q, psi);
  Mat hv = h.sparse() * v;
  Mat m = v.adjoint() * hv;
  return (2.0 / hbar) * m.imag();
}

}  // namespace

double CurrentMatrix::at(int q, int qp) const { return lookup(rows[q], qp); }

double CurrentMatrix::antisymmetry_defect() const {
  double worst = 0.0;
  for (int q = 0; q < n; ++q)
    for (const auto& [qp, j] : rows[q]) worst = std::max(worst, std::abs(j + at(qp, q)));
  return worst;
}

RVec CurrentMatrix::marginals() const {
  RVec m = RVec::Zero(n);
  for (int q = 0; q < n; ++q)
    for (const auto& [qp, j] : rows[q]) m[q] += j;
  return m;
}

std::string CurrentMatrix::to_csv() const {
  std::ostringstream os;
  os << "destination,source,current\n";
  os.precision(17);
  for (int q = 0; q < n; ++q)
    for (const auto& [qp, j] : rows[q]) os << q << ',' << qp << ',' << j << '\n';
  return os.str();
}

double JumpRateTable::rate(int dest, int source) const { return lookup(out[source], dest); }

void JumpRateTable::recompute_totals() {
  total.assign(n, 0.0);
  for (int q = 0; q < n; ++q)
    for (const auto& [d, r] : out[q]) total[q] += r;
}

void JumpRateTable::prune(double rel_floor) {
  for (int q = 0; q < n; ++q) {
    const double floor = rel_floor * total[q];
    auto& row = out[q];
    row.erase(std::remove_if(row.begin(), row.end(),
                             [&](const auto& e) { return e.second <= floor; }),
              row.end());
  }
  recompute_totals();
}

std::string JumpRateTable::to_csv() const {
  std::ostringstream os;
  os << "source,destination,rate\n";
  os.precision(17);
  for (int q = 0; q < n; ++q)
    for (const auto& [d, r] : out[q]) os << q << ',' << d << ',' << r << '\n';
  return os.str();
}

CurrentMatrix current_matrix(const Vec& psi, const OperatorMatrix& h, const PovmFamily& povm,
                             double hbar) {
  if (psi.size() != h.dim() || h.dim() != povm.dim())
    throw std::invalid_argument("current_matrix: basis mismatch");
  CurrentMatrix cm;
  cm.n = povm.cells();
  cm.rows.assign(cm.n, {});
  if (povm.coordinate_pvm()) {
    const SparseMat& m = h.sparse();
    for (int k = 0; k < m.outerSize(); ++k)
      for (SparseMat::InnerIterator it(m, k); it; ++it) {
        const int q = static_cast<int>(it.row());
        const int qp = static_cast<int>(it.col());
        if (q == qp) continue;
        const double j = (2.0 / hbar) * std::imag(std::conj(psi[q]) * it.value() * psi[qp]);
        cm.rows[q].emplace_back(qp, j);
      }
  } else {
    RMat m = povm_current_table(psi, h, povm, hbar);
    for (int q = 0; q < cm.n; ++q)
      for (int qp = 0; qp < cm.n; ++qp)
        if (q != qp && m(q, qp) != 0.0) cm.rows[q].emplace_back(qp, m(q, qp));
  }
  sort_rows(cm.rows);
  return cm;
}

namespace {

JumpRateTable rates_from_current(const CurrentMatrix& j, const RVec& p, double floor,
                                 double prune_floor) {
  JumpRateTable t;
  t.n = j.n;
  t.out.assign(t.n, {});
  t.flagged.assign(t.n, 0);
  t.minimal = true;
  for (int q = 0; q < t.n; ++q)
    if (p[q] <= floor) t.flagged[q] = 1;
  for (int q = 0; q < t.n; ++q)
    for (const auto& [qp, val] : j.rows[q]) {
      if (val <= 0.0 || t.flagged[qp]) continue;
      t.out[qp].emplace_back(q, val / p[qp]);
    }
  sort_rows(t.out);
  t.recompute_totals();
  t.prune(prune_floor);
  return t;
}

}  // namespace

JumpRateTable minimal_rates(const Vec& psi, const OperatorMatrix& h, const PovmFamily& povm,
                            double hbar, const Tolerances& tol) {
  CurrentMatrix j = current_matrix(psi, h, povm, hbar);
  RVec p = born_distribution(psi, povm);
  return rates_from_current(j, p, tol.probability_floor, tol.rate_prune);
}

JumpRateTable minimal_rates_from_current(const CurrentMatrix& j, const RVec& p,
                                         const Tolerances& tol) {
  return rates_from_current(j, p, tol.probability_floor, tol.rate_prune);
}

JumpRateTable minimal_rates_density(const DensityMatrix& w, const OperatorMatrix& h,
                                    const PovmFamily& povm, double hbar, const Tolerances& tol) {
  const int nc = povm.cells();
  CurrentMatrix j;
  j.n = nc;
  j.rows.assign(nc, {});
  RVec p(nc);
  if (povm.coordinate_pvm()) {
    // tr(W P(q) H P(q')) = W(q',q) H(q,q').
    for (int q = 0; q < nc; ++q) p[q] = std::max(0.0, w.matrix(q, q).real());
    const SparseMat& m = h.sparse();
    for (int k = 0; k < m.outerSize(); ++k)
      for (SparseMat::InnerIterator it(m, k); it; ++it) {
        const int q = static_cast<int>(it.row());
        const int qp = static_cast<int>(it.col());
        if (q == qp) continue;
        const double val = (2.0 / hbar) * std::imag(w.matrix(qp, q) * it.value());
        if (val != 0.0) j.rows[q].emplace_back(qp, val);
      }
  } else {
    for (int q = 0; q < nc; ++q) p[q] = std::max(0.0, (Mat(povm.cell(q)) * w.matrix).trace().real());
    for (int q = 0; q < nc; ++q) {
      Mat pq = Mat(povm.cell(q));
      for (int qp = 0; qp < nc; ++qp) {
        if (q == qp) continue;
        Mat pqp = Mat(povm.cell(qp));
        const cplx tr = (w.matrix * pq * h.dense() * pqp).trace();
        const double val = (2.0 / hbar) * tr.imag();
        if (val != 0.0) j.rows[q].emplace_back(qp, val);
      }
    }
  }
  sort_rows(j.rows);
  return rates_from_current(j, p, tol.probability_floor, tol.rate_prune);
}

JumpRateTable add_rates(const JumpRateTable& a, const JumpRateTable& b) {
  if (a.n != b.n) throw std::invalid_argument("add_rates: different bases");
  JumpRateTable t;
  t.n = a.n;
  t.out.assign(t.n, {});
  t.flagged.assign(t.n, 0);
  bool disjoint = true;
  for (int q = 0; q < t.n; ++q) {
    t.flagged[q] = a.flagged[q] || b.flagged[q];
    std::map<int, double> merged;
    for (const auto& [d, r] : a.out[q]) merged[d] += r;
    for (const auto& [d, r] : b.out[q]) {
      if (merged.count(d) && merged[d] != 0.0) disjoint = false;
      merged[d] += r;
    }
    t.out[q].assign(merged.begin(), merged.end());
  }
  t.minimal = a.minimal && b.minimal && disjoint;
  t.recompute_totals();
  return t;
}

RVec apply_jump_generator(const JumpRateTable& rates, const RVec& rho) {
  RVec out = RVec::Zero(rates.n);
  for (int q = 0; q < rates.n; ++q) {
    for (const auto& [d, r] : rates.out[q]) out[d] += r * rho[q];
    out[q] -= rates.total[q] * rho[q];
  }
  return out;
}

StandardCurrentReport check_standard_current(const JumpRateTable& rates, const RVec& p,
                                             const CurrentMatrix& j, double tol) {
  StandardCurrentReport rep;
  rep.min_slack = std::numeric_limits<double>::infinity();
  rep.equality_everywhere = true;
  // Pairs appearing in either structure.
  std::vector<std::vector<char>> seen(j.n, std::vector<char>());
  auto visit = [&](int q, int qp) {
    const double flow = rates.rate(q, qp) * p[qp] - rates.rate(qp, q) * p[q];
    const double jval = j.at(q, qp);
    rep.max_current_residual = std::max(rep.max_current_residual, std::abs(flow - jval));
    const double slack = rates.rate(q, qp) * p[qp] - std::max(jval, 0.0);
    rep.min_slack = std::min(rep.min_slack, slack);
    rep.max_slack = std::max(rep.max_slack, slack);
    if (std::abs(slack) > tol) rep.equality_everywhere = false;
    if (slack > tol) rep.strict_somewhere = true;
  };
  for (int q = 0; q < j.n; ++q)
    for (const auto& [qp, val] : j.rows[q]) visit(q, qp);
  for (int src = 0; src < rates.n; ++src)
    for (const auto& [dest, r] : rates.out[src])
      if (j.at(dest, src) == 0.0) visit(dest, src);
  if (rates.n == 0 || !std::isfinite(rep.min_slack)) rep.min_slack = 0.0;
  rep.passed = rep.max_current_residual <= tol && rep.min_slack >= -tol;
  return rep;
}

std::string StandardCurrentReport::summary() const {
  std::ostringstream os;
  os << (passed ? "pass" : "fail") << " max_current_residual=" << max_current_residual
     << " min_slack=" << min_slack << " equality_everywhere=" << (equality_everywhere ? 1 : 0)
     << " strict_somewhere=" << (strict_somewhere ? 1 : 0);
  return os.str();
}

ReversalReport reversed_rates_check(const Vec& psi, const OperatorMatrix& h,
                                    const PovmFamily& povm, const Mat* unitary, double hbar,
                                    double tol) {
  ReversalReport rep;
  Mat hd = h.dense();
  Mat th = unitary ? Mat(*unitary * hd.conjugate() * unitary->adjoint()) : Mat(hd.conjugate());
  rep.hamiltonian_defect = (th - hd).cwiseAbs().maxCoeff();
  if (rep.hamiltonian_defect > tol) {
    rep.applicable = false;  // irreversible H: inapplicable, not a failure
    return rep;
  }
  rep.applicable = true;
  Vec tpsi = unitary ? Vec(*unitary * psi.conjugate()) : Vec(psi.conjugate());
  JumpRateTable fwd = minimal_rates(psi, h, povm, hbar);
  JumpRateTable rev = minimal_rates(tpsi, h, povm, hbar);
  RVec p = born_distribution(psi, povm);
  auto check = [&](int q, int qp) {
    const double lhs = fwd.rate(q, qp) * p[qp];
    const double rhs = rev.rate(qp, q) * p[q];
    rep.max_residual = std::max(rep.max_residual, std::abs(lhs - rhs));
  };
  for (int src = 0; src < fwd.n; ++src)
    for (const auto& [dest, r] : fwd.out[src]) check(dest, src);
  for (int src = 0; src < rev.n; ++src)
    for (const auto& [dest, r] : rev.out[src]) check(src, dest);
  rep.passed = rep.max_residual <= tol;
  return rep;
}

namespace {

double two_time_max_residual(const Vec& psi, const OperatorMatrix& h, const PovmFamily& pvm,
                             double dt, double hbar, int* skipped) {
  JumpRateTable rates = minimal_rates(psi, h, pvm, hbar);
  RVec p = born_distribution(psi, pvm);
  Propagator prop(h, hbar);
  Mat u = prop.unitary(dt);
  const int nc = pvm.cells();
  // Evolved cells applied to psi.
  Mat v(psi.size(), nc), vdt(psi.size(), nc);
  for (int q = 0; q < nc; ++q) {
    v.col(q) = pvm.apply_cell(q, psi);
    vdt.col(q) = u.adjoint() * pvm.apply_cell(q, Vec(u * psi));
  }
  double worst = 0.0;
  if (skipped) *skipped = 0;
  for (int q = 0; q < nc; ++q)
    for (int qp = 0; qp < nc; ++qp) {
      if (q == qp) {
        if (skipped) ++(*skipped);
        continue;
      }
      const double lhs = rates.rate(q, qp) * p[qp] * dt;
      const cplx inner = vdt.col(q).dot(v.col(qp)) + v.col(qp).dot(vdt.col(q));
      const double rhs = std::max(inner.real(), 0.0);
      worst = std::max(worst, std::abs(lhs - rhs));
    }
  return worst;
}

}  // namespace

TwoTimeReport two_time_check(const Vec& psi, const OperatorMatrix& h, const PovmFamily& pvm,
                             double dt, double hbar) {
  if (pvm.kind() != PovmFamily::Kind::PVM)
    throw std::invalid_argument("two_time_check: requires a PVM");
  TwoTimeReport rep;
  rep.dt = dt;
  rep.max_residual = two_time_max_residual(psi, h, pvm, dt, hbar, &rep.skipped_diagonal);
  rep.halved_residual = two_time_max_residual(psi, h, pvm, dt / 2.0, hbar, nullptr);
  rep.residual_ratio = rep.halved_residual > 0.0 ? rep.max_residual / rep.halved_residual : 0.0;
  return rep;
}

}  // namespace bellsim
