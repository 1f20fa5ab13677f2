#include "bellsim/flow.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace bellsim {

namespace {

// Spectral differentiation matrix for a periodic grid (Nyquist mode dropped
// to keep the operator antisymmetric), dense 4th-order central differences
// with one-sided closures otherwise.
Mat diff_matrix(int n, double h, bool periodic) {
  Mat d = Mat::Zero(n, n);
  if (periodic) {
    for (int j = 0; j < n; ++j) {
      int m = j <= (n - 1) / 2 ? j : j - n;
      if (2 * j == n) m = 0;
      const cplx ik = I_UNIT * (2.0 * M_PI * m / (n * h));
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b)
          d(a, b) += ik * std::exp(I_UNIT * (2.0 * M_PI * m * (a - b) / double(n))) / double(n);
    }
    return d;
  }
  if (n < 5) throw std::invalid_argument("diff_matrix: open grid needs at least 5 points");
  const double w = 1.0 / (12.0 * h);
  for (int i = 2; i < n - 2; ++i) {
    d(i, i - 2) = w;
    d(i, i - 1) = -8.0 * w;
    d(i, i + 1) = 8.0 * w;
    d(i, i + 2) = -w;
  }
  const double f0[5] = {-25, 48, -36, 16, -3};
  const double f1[5] = {-3, -10, 18, -6, 1};
  for (int c = 0; c < 5; ++c) {
    d(0, c) = f0[c] * w;
    d(1, c) = f1[c] * w;
    d(n - 1, n - 1 - c) = -f0[c] * w;
    d(n - 2, n - 1 - c) = -f1[c] * w;
  }
  return d;
}

struct Layout {
  int coords, points, components;
  long long stride(int axis) const {
    long long s = components;
    for (int a = coords - 1; a > axis; --a) s *= points;
    return s;
  }
};

// Apply a per-axis linear operator (n x n) along one coordinate axis.
Vec apply_axis(const Vec& data, const Layout& lay, const Mat& d, int axis) {
  Vec out = Vec::Zero(data.size());
  const long long stride = lay.stride(axis);
  const long long block = stride * lay.points;  // one full sweep of the axis
  const long long nblocks = data.size() / block;
  for (long long b = 0; b < nblocks; ++b)
    for (long long off = 0; off < stride; ++off) {
      const long long base = b * block + off;
      for (int i = 0; i < lay.points; ++i) {
        cplx acc = 0.0;
        for (int j = 0; j < lay.points; ++j) acc += d(i, j) * data[base + j * stride];
        out[base + i * stride] = acc;
      }
    }
  return out;
}

// Cubic Lagrange weights for fractional offset s in [0,1), nodes -1,0,1,2.
void cubic_weights(double s, double w[4]) {
  w[0] = -s * (s - 1.0) * (s - 2.0) / 6.0;
  w[1] = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0;
  w[2] = -(s + 1.0) * s * (s - 2.0) / 2.0;
  w[3] = (s + 1.0) * s * (s - 1.0) / 6.0;
}

// Tensor-product cubic interpolation of a scalar grid field at a continuous
// point (physical coordinates).
double interpolate(const RVec& field, const Layout& lay, bool periodic, double h,
                   const std::vector<double>& point) {
  std::vector<std::array<int, 4>> nodes(lay.coords);
  std::vector<std::array<double, 4>> weights(lay.coords);
  for (int c = 0; c < lay.coords; ++c) {
    const double x = point[c] / h;
    double base = std::floor(x);
    double frac = x - base;
    int i0 = static_cast<int>(base);
    if (!periodic) {
      // Shift the 4-point window inside the grid.
      if (i0 < 1) {
        frac -= (1 - i0);
        i0 = 1;
      }
      if (i0 > lay.points - 3) {
        frac += (i0 - (lay.points - 3));
        i0 = lay.points - 3;
      }
    }
    double w[4];
    cubic_weights(frac, w);
    for (int k = 0; k < 4; ++k) {
      int idx = i0 - 1 + k;
      if (periodic) idx = ((idx % lay.points) + lay.points) % lay.points;
      nodes[c][k] = idx;
      weights[c][k] = w[k];
    }
  }
  // Sum over the 4^coords stencil.
  double total = 0.0;
  std::vector<int> pick(lay.coords, 0);
  while (true) {
    double w = 1.0;
    long long flat = 0;
    for (int c = 0; c < lay.coords; ++c) {
      w *= weights[c][pick[c]];
      flat = flat * lay.points + nodes[c][pick[c]];
    }
    total += w * field[flat];
    int c = lay.coords - 1;
    for (; c >= 0; --c) {
      if (++pick[c] < 4) break;
      pick[c] = 0;
    }
    if (c < 0) break;
  }
  return total;
}

Layout layout_of(const GridWaveFunction& psi) {
  return Layout{psi.coords, psi.points, psi.components};
}

// Spin-contracted density and per-coordinate current numerators
// Im(Psi^* d_k Psi) on the grid nodes.
struct FlowFields {
  RVec density;                 // size points^coords
  std::vector<RVec> numerator;  // per coordinate
};

FlowFields flow_fields(const GridWaveFunction& psi) {
  const Layout lay = layout_of(psi);
  const long long nodes = psi.grid_size();
  FlowFields f;
  f.density = RVec::Zero(nodes);
  Mat d = diff_matrix(psi.points, psi.spacing, psi.periodic);
  for (int c = 0; c < psi.coords; ++c) f.numerator.push_back(RVec::Zero(nodes));
  std::vector<Vec> grads(psi.coords);
  for (int c = 0; c < psi.coords; ++c) grads[c] = apply_axis(psi.data, lay, d, c);
  for (long long x = 0; x < nodes; ++x)
    for (int s = 0; s < psi.components; ++s) {
      const long long i = x * psi.components + s;
      f.density[x] += std::norm(psi.data[i]);
      for (int c = 0; c < psi.coords; ++c)
        f.numerator[c][x] += std::imag(std::conj(psi.data[i]) * grads[c][i]);
    }
  return f;
}

}  // namespace

long long GridWaveFunction::grid_size() const {
  long long n = 1;
  for (int c = 0; c < coords; ++c) n *= points;
  return n;
}

long long GridWaveFunction::flat(const std::vector<int>& nodes, int component) const {
  long long idx = 0;
  for (int c = 0; c < coords; ++c) idx = idx * points + nodes[c];
  return idx * components + component;
}

double GridWaveFunction::density(const std::vector<int>& nodes) const {
  double rho = 0.0;
  for (int s = 0; s < components; ++s) rho += std::norm(data[flat(nodes, s)]);
  return rho;
}

double GridWaveFunction::max_density() const {
  const long long n = grid_size();
  double best = 0.0;
  for (long long x = 0; x < n; ++x) {
    double rho = 0.0;
    for (int s = 0; s < components; ++s) rho += std::norm(data[x * components + s]);
    best = std::max(best, rho);
  }
  return best;
}

double GridWaveFunction::norm_l2() const {
  double cell = 1.0;
  for (int c = 0; c < coords; ++c) cell *= spacing;
  return std::sqrt(data.squaredNorm() * cell);
}

VelocityResult bohm_velocity(const GridWaveFunction& psi, const std::vector<double>& masses,
                             const std::vector<double>& point, double hbar,
                             double density_floor_rel) {
  if (static_cast<int>(point.size()) != psi.coords)
    throw std::invalid_argument("bohm_velocity: point dimension mismatch");
  const Layout lay = layout_of(psi);
  FlowFields f = flow_fields(psi);
  const double rho = interpolate(f.density, lay, psi.periodic, psi.spacing, point);
  VelocityResult r;
  r.v.assign(psi.coords, 0.0);
  if (rho <= density_floor_rel * psi.max_density()) {
    r.escaped = true;
    return r;
  }
  for (int c = 0; c < psi.coords; ++c) {
    const double num = interpolate(f.numerator[c], lay, psi.periodic, psi.spacing, point);
    const double m = c < static_cast<int>(masses.size()) ? masses[c] : 1.0;
    r.v[c] = hbar / m * num / rho;
  }
  return r;
}

VelocityResult bohm_dirac_velocity(const GridWaveFunction& psi, const std::vector<double>& point,
                                   double light_speed, double density_floor_rel) {
  int expect = 1;
  for (int c = 0; c < psi.coords; ++c) expect *= 2;
  if (psi.components != expect)
    throw std::invalid_argument("bohm_dirac_velocity: need 2 spinor components per coordinate");
  const Layout lay = layout_of(psi);
  const long long nodes = psi.grid_size();
  RVec rho = RVec::Zero(nodes);
  std::vector<RVec> num(psi.coords, RVec::Zero(nodes));
  for (long long x = 0; x < nodes; ++x)
    for (int s = 0; s < psi.components; ++s) {
      const cplx amp = psi.data[x * psi.components + s];
      rho[x] += std::norm(amp);
      for (int c = 0; c < psi.coords; ++c) {
        // sigma_1 on the c-th spinor bit: flips that bit.
        const int bit = psi.coords - 1 - c;
        const int sp = s ^ (1 << bit);
        num[c][x] += std::real(std::conj(amp) * psi.data[x * psi.components + sp]);
      }
    }
  VelocityResult r;
  r.v.assign(psi.coords, 0.0);
  const double rho_at = interpolate(rho, lay, psi.periodic, psi.spacing, point);
  if (rho_at <= density_floor_rel * psi.max_density()) {
    r.escaped = true;
    return r;
  }
  for (int c = 0; c < psi.coords; ++c) {
    const double n = interpolate(num[c], lay, psi.periodic, psi.spacing, point);
    r.v[c] = std::clamp(light_speed * n / rho_at, -light_speed, light_speed);
  }
  return r;
}

VelocityResult velocity_from_density(const Mat& w, const GridWaveFunction& layout,
                                     DensityVelocityKind kind, const std::vector<double>& masses,
                                     const std::vector<double>& point, double hbar,
                                     double light_speed, double density_floor_rel) {
  const Layout lay = layout_of(layout);
  const long long nodes = layout.grid_size();
  const int comp = layout.components;
  if (w.rows() != nodes * comp) throw std::invalid_argument("velocity_from_density: dimension");
  RVec rho = RVec::Zero(nodes);
  for (long long x = 0; x < nodes; ++x)
    for (int s = 0; s < comp; ++s) rho[x] += w(x * comp + s, x * comp + s).real();
  double max_rho = rho.maxCoeff();

  VelocityResult r;
  r.v.assign(layout.coords, 0.0);
  const double rho_at = interpolate(rho, lay, layout.periodic, layout.spacing, point);
  if (rho_at <= density_floor_rel * max_rho) {
    r.escaped = true;
    return r;
  }

  if (kind == DensityVelocityKind::Schrodinger) {
    Mat d = diff_matrix(layout.points, layout.spacing, layout.periodic);
    for (int c = 0; c < layout.coords; ++c) {
      // d/dq on the first index of W, spin trace, diagonal.
      RVec num = RVec::Zero(nodes);
      Mat dw = Mat::Zero(w.rows(), w.cols());
      for (Eigen::Index col = 0; col < w.cols(); ++col)
        dw.col(col) = apply_axis(w.col(col), lay, d, c);
      for (long long x = 0; x < nodes; ++x)
        for (int s = 0; s < comp; ++s)
          num[x] += std::imag(dw(x * comp + s, x * comp + s));
      const double n = interpolate(num, lay, layout.periodic, layout.spacing, point);
      const double m = c < static_cast<int>(masses.size()) ? masses[c] : 1.0;
      r.v[c] = hbar / m * n / rho_at;
    }
  } else {
    for (int c = 0; c < layout.coords; ++c) {
      RVec num = RVec::Zero(nodes);
      const int bit = layout.coords - 1 - c;
      for (long long x = 0; x < nodes; ++x)
        for (int s = 0; s < comp; ++s)
          num[x] += std::real(w(x * comp + (s ^ (1 << bit)), x * comp + s));
      const double n = interpolate(num, lay, layout.periodic, layout.spacing, point);
      r.v[c] = std::clamp(light_speed * n / rho_at, -light_speed, light_speed);
    }
  }
  return r;
}

RVec minimal_free_generator_apply(const RVec& f, const Vec& psi, const OperatorMatrix& h,
                                  const PovmFamily& pvm, double hbar, double probability_floor) {
  if (pvm.kind() != PovmFamily::Kind::PVM)
    throw std::invalid_argument("minimal_free_generator_apply: requires a PVM");
  if (f.size() != pvm.cells()) throw std::invalid_argument("minimal_free_generator_apply: f size");
  RVec out = RVec::Zero(pvm.cells());
  if (pvm.coordinate_pvm()) {
    // [f_hat, H] Psi computed as f*(H Psi) - H(f Psi), all elementwise.
    Vec hpsi = h.apply(psi);
    Vec fpsi = psi;
    for (int q = 0; q < f.size(); ++q) fpsi[q] *= f[q];
    Vec hfpsi = h.apply(fpsi);
    for (int q = 0; q < f.size(); ++q) {
      const double p = std::norm(psi[q]);
      if (p <= probability_floor) continue;
      const cplx comm = f[q] * hpsi[q] - hfpsi[q];
      out[q] = std::imag(std::conj(psi[q]) * comm) / (hbar * p);
    }
    return out;
  }
  Mat fhat = Mat::Zero(pvm.dim(), pvm.dim());
  for (int q = 0; q < pvm.cells(); ++q) fhat += f[q] * Mat(pvm.cell(q));
  Mat comm = (I_UNIT / hbar) * (h.dense() * fhat - fhat * h.dense());
  Vec cpsi = comm * psi;
  for (int q = 0; q < pvm.cells(); ++q) {
    const double p = pvm.cell_probability(q, psi);
    if (p <= probability_floor) continue;
    out[q] = pvm.apply_cell(q, psi).dot(cpsi).real() / p;
  }
  return out;
}

double leibniz_residual(const Vec& psi, const OperatorMatrix& h, const PovmFamily& pvm,
                        const RVec& f, const RVec& g, double hbar, double probability_floor) {
  RVec lf = minimal_free_generator_apply(f, psi, h, pvm, hbar, probability_floor);
  RVec lg = minimal_free_generator_apply(g, psi, h, pvm, hbar, probability_floor);
  RVec fg = f.cwiseProduct(g);
  RVec lfg = minimal_free_generator_apply(fg, psi, h, pvm, hbar, probability_floor);
  double worst = 0.0;
  for (int q = 0; q < pvm.cells(); ++q) {
    const double p = pvm.cell_probability(q, psi);
    if (p <= probability_floor) continue;
    worst = std::max(worst, std::abs(lfg[q] - f[q] * lg[q] - g[q] * lf[q]));
  }
  return worst;
}

VelocityResult nelson_drift(const GridWaveFunction& psi, double lambda,
                            const std::vector<double>& masses, const std::vector<double>& point,
                            double hbar, double density_floor_rel) {
  VelocityResult bohm = bohm_velocity(psi, masses, point, hbar, density_floor_rel);
  if (bohm.escaped || lambda == 0.0) return bohm;
  const Layout lay = layout_of(psi);
  FlowFields f = flow_fields(psi);
  Mat d = diff_matrix(psi.points, psi.spacing, psi.periodic);
  const double rho = interpolate(f.density, lay, psi.periodic, psi.spacing, point);
  for (int c = 0; c < psi.coords; ++c) {
    Vec drho = apply_axis(f.density.cast<cplx>(), lay, d, c);
    RVec drho_r = drho.real();
    const double g = interpolate(drho_r, lay, psi.periodic, psi.spacing, point);
    bohm.v[c] += 0.5 * lambda * g / rho;
  }
  return bohm;
}

std::vector<double> nelson_em_step(const GridWaveFunction& psi, double lambda,
                                   const std::vector<double>& masses,
                                   const std::vector<double>& point, double dt, CounterRng& rng,
                                   double hbar) {
  VelocityResult drift = nelson_drift(psi, lambda, masses, point, hbar);
  std::vector<double> next(point);
  for (int c = 0; c < psi.coords; ++c)
    next[c] += drift.v[c] * dt + std::sqrt(lambda * dt) * rng.normal();
  return next;
}

double continuity_residual(const GridWaveFunction& psi, const OperatorMatrix& h,
                           const std::vector<double>& masses, double hbar) {
  const Layout lay = layout_of(psi);
  const long long nodes = psi.grid_size();
  Vec hpsi = h.apply(psi.data);
  RVec dpdt = RVec::Zero(nodes);
  for (long long x = 0; x < nodes; ++x)
    for (int s = 0; s < psi.components; ++s) {
      const long long i = x * psi.components + s;
      dpdt[x] += (2.0 / hbar) * std::imag(std::conj(psi.data[i]) * hpsi[i]);
    }
  FlowFields f = flow_fields(psi);
  Mat d = diff_matrix(psi.points, psi.spacing, psi.periodic);
  RVec divergence = RVec::Zero(nodes);
  for (int c = 0; c < psi.coords; ++c) {
    const double m = c < static_cast<int>(masses.size()) ? masses[c] : 1.0;
    Vec flux = (hbar / m) * f.numerator[c].cast<cplx>();
    divergence += apply_axis(flux, Layout{psi.coords, psi.points, 1}, d, c).real();
  }
  return (dpdt + divergence).cwiseAbs().maxCoeff();
}

std::string velocity_field_csv(const GridWaveFunction& psi, const std::vector<double>& masses,
                               double hbar) {
  const Layout lay = layout_of(psi);
  FlowFields f = flow_fields(psi);
  std::ostringstream os;
  os.precision(17);
  for (int c = 0; c < psi.coords; ++c) os << "x" << c << ',';
  for (int c = 0; c < psi.coords; ++c) os << 'v' << c << (c + 1 < psi.coords ? ',' : '\n');
  const long long nodes = psi.grid_size();
  std::vector<int> node(psi.coords, 0);
  for (long long x = 0; x < nodes; ++x) {
    for (int c = 0; c < psi.coords; ++c) os << node[c] * psi.spacing << ',';
    for (int c = 0; c < psi.coords; ++c) {
      const double m = c < static_cast<int>(masses.size()) ? masses[c] : 1.0;
      const double v = f.density[x] > 0 ? hbar / m * f.numerator[c][x] / f.density[x] : 0.0;
      os << v << (c + 1 < psi.coords ? ',' : '\n');
    }
    for (int c = psi.coords - 1; c >= 0; --c) {
      if (++node[c] < psi.points) break;
      node[c] = 0;
    }
  }
  (void)lay;
  return os.str();
}

}  // namespace bellsim
