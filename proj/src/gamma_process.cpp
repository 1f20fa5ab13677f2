#include "bellsim/gamma_process.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace bellsim {

GeneratorFamily minimal_jump_family(const OperatorMatrix& h, const PovmFamily& povm, double hbar) {
  GeneratorFamily f;
  f.nconf = povm.cells();
  f.eval = [h, povm, hbar](const Mat& w) {
    GeneratorAction a;
    a.rates = minimal_rates_density(DensityMatrix{w}, h, povm, hbar);
    return a;
  };
  return f;
}

long long flatten_config(const std::vector<int>& dims, const std::vector<int>& config) {
  long long flat = 0;
  for (std::size_t f = 0; f < dims.size(); ++f) flat = flat * dims[f] + config[f];
  return flat;
}

std::vector<int> unflatten_config(const std::vector<int>& dims, long long flat) {
  std::vector<int> config(dims.size());
  for (int f = static_cast<int>(dims.size()) - 1; f >= 0; --f) {
    config[f] = static_cast<int>(flat % dims[f]);
    flat /= dims[f];
  }
  return config;
}

namespace {

std::vector<int> insert_kept(const std::vector<int>& environment, int keep, int value,
                             std::size_t nfactors) {
  std::vector<int> config(nfactors);
  std::size_t e = 0;
  for (std::size_t f = 0; f < nfactors; ++f)
    config[f] = (static_cast<int>(f) == keep) ? value : environment[e++];
  return config;
}

}  // namespace

ConditionalDensity conditional_density(const Vec& psi, const std::vector<int>& dims, int keep,
                                       const std::vector<int>& environment) {
  long long total = 1;
  for (int d : dims) total *= d;
  if (total != psi.size()) throw std::invalid_argument("conditional_density: factorization");
  if (keep < 0 || keep >= static_cast<int>(dims.size()))
    throw std::invalid_argument("conditional_density: bad factor");
  if (environment.size() + 1 != dims.size())
    throw std::invalid_argument("conditional_density: environment size");

  const int dk = dims[keep];
  Vec slice(dk);
  for (int a = 0; a < dk; ++a)
    slice[a] = psi[flatten_config(dims, insert_kept(environment, keep, a, dims.size()))];
  const double norm2 = slice.squaredNorm();
  if (norm2 <= 0.0) {
    std::ostringstream os;
    os << "conditional_density: zero-probability environment (";
    for (std::size_t e = 0; e < environment.size(); ++e)
      os << environment[e] << (e + 1 < environment.size() ? "," : "");
    os << ")";
    throw std::invalid_argument(os.str());
  }
  ConditionalDensity out;
  out.matrix = DensityMatrix{Mat((slice * slice.adjoint()) / norm2)};
  out.environment = environment;
  return out;
}

ConditionalDensity conditional_density(const Mat& w, const std::vector<int>& dims, int keep,
                                       const std::vector<int>& environment) {
  const int dk = dims[keep];
  Mat cond(dk, dk);
  for (int a = 0; a < dk; ++a)
    for (int b = 0; b < dk; ++b) {
      const long long ia = flatten_config(dims, insert_kept(environment, keep, a, dims.size()));
      const long long ib = flatten_config(dims, insert_kept(environment, keep, b, dims.size()));
      cond(a, b) = w(ia, ib);
    }
  const double tr = cond.trace().real();
  if (tr <= 0.0) throw std::invalid_argument("conditional_density: zero-probability environment");
  ConditionalDensity out;
  out.matrix = DensityMatrix{Mat(cond / tr)};
  out.environment = environment;
  return out;
}

GeneratorAction direct_sum_generator(const std::vector<GeneratorFamily>& families,
                                     const SectorLayout& layout, const Vec& psi,
                                     double sector_floor) {
  if (families.size() != layout.begin.size())
    throw std::invalid_argument("direct_sum_generator: sector count mismatch");
  int total = 0;
  for (std::size_t s = 0; s < families.size(); ++s) {
    if (families[s].nconf != layout.dim[s])
      throw std::invalid_argument("direct_sum_generator: family size mismatch");
    total += layout.dim[s];
  }
  GeneratorAction out;
  out.rates.n = total;
  out.rates.out.assign(total, {});
  out.rates.flagged.assign(total, 0);
  out.rates.minimal = true;
  for (std::size_t s = 0; s < families.size(); ++s) {
    const int b = layout.begin[s], d = layout.dim[s];
    Vec block = psi.segment(b, d);
    const double weight = block.squaredNorm();
    if (weight <= sector_floor) {
      for (int q = 0; q < d; ++q) out.rates.flagged[b + q] = 1;
      continue;
    }
    block /= std::sqrt(weight);
    GeneratorAction part = families[s].from_state(block);
    out.rates.minimal = out.rates.minimal && part.rates.minimal;
    for (int q = 0; q < d; ++q) {
      out.rates.flagged[b + q] = part.rates.flagged[q];
      for (const auto& [dest, r] : part.rates.out[q]) out.rates.out[b + q].emplace_back(b + dest, r);
    }
  }
  out.rates.recompute_totals();
  return out;
}

GeneratorAction tensor_product_generator(const std::vector<GeneratorFamily>& families,
                                         const std::vector<int>& dims, const Mat& w,
                                         double env_floor) {
  const int nfactors = static_cast<int>(dims.size());
  if (static_cast<int>(families.size()) != nfactors)
    throw std::invalid_argument("tensor_product_generator: factor count mismatch");
  long long total = 1;
  for (int d : dims) total *= d;
  if (w.rows() != total) throw std::invalid_argument("tensor_product_generator: dimension");

  GeneratorAction out;
  out.rates.n = static_cast<int>(total);
  out.rates.out.assign(total, {});
  out.rates.flagged.assign(total, 0);
  out.rates.minimal = true;

  // Probe each family for a deterministic part to size the velocity matrix.
  int ncoords = 0;
  std::vector<int> vel_cols(nfactors, -1);
  for (int i = 0; i < nfactors; ++i) {
    GeneratorAction probe = families[i](Mat(Mat::Identity(dims[i], dims[i])) / double(dims[i]));
    if (probe.velocity) {
      vel_cols[i] = ncoords;
      ncoords += static_cast<int>(probe.velocity->cols());
    }
  }
  RMat vel = RMat::Zero(total, std::max(ncoords, 1));

  for (int i = 0; i < nfactors; ++i) {
    long long env_count = total / dims[i];
    std::vector<int> env_dims;
    for (int f = 0; f < nfactors; ++f)
      if (f != i) env_dims.push_back(dims[f]);
    for (long long e = 0; e < env_count; ++e) {
      std::vector<int> env =
          env_count == 1 ? std::vector<int>{} : unflatten_config(env_dims, e);
      // Environment probability: trace of the unnormalized conditional block.
      double env_prob = 0.0;
      for (int a = 0; a < dims[i]; ++a) {
        const long long ia = flatten_config(dims, insert_kept(env, i, a, dims.size()));
        env_prob += w(ia, ia).real();
      }
      if (env_prob <= env_floor) continue;  // never visited from equilibrium
      ConditionalDensity cond = conditional_density(w, dims, i, env);
      GeneratorAction part = families[i](cond.matrix.matrix);
      out.rates.minimal = out.rates.minimal && part.rates.minimal;
      for (int a = 0; a < dims[i]; ++a) {
        const long long src = flatten_config(dims, insert_kept(env, i, a, dims.size()));
        for (const auto& [b, r] : part.rates.out[a]) {
          const long long dest = flatten_config(dims, insert_kept(env, i, b, dims.size()));
          out.rates.out[src].emplace_back(static_cast<int>(dest), r);
        }
        if (part.velocity && vel_cols[i] >= 0)
          vel.block(src, vel_cols[i], 1, part.velocity->cols()) = part.velocity->row(a);
      }
    }
  }
  if (ncoords > 0) out.velocity = vel.leftCols(ncoords);

  for (auto& row : out.rates.out) std::sort(row.begin(), row.end());
  out.rates.recompute_totals();
  return out;
}

namespace {

// Ordered-slot amplitude: the component of the ordered wave function with the
// environment fixed in a reference ordering and the marked particle at site
// s, up to a factor common to all s (it cancels in the conditional density).
cplx ordered_amplitude(const FockSpace& space, const Configuration& env, int species, int site,
                       const Vec& psi) {
  Configuration c = env;
  const auto& spec = space.species()[species];
  if (spec.statistics == Statistics::Fermi && c.occupation[species][site] != 0) return 0.0;
  ++c.occupation[species][site];
  const int idx = space.index_of(c);
  if (idx < 0) return 0.0;
  if (spec.statistics == Statistics::Bose) {
    double fact = 1.0;
    for (int y = 0; y < space.lattice().sites; ++y)
      for (int m = 2; m <= c.occupation[species][y]; ++m) fact *= m;
    return psi[idx] * std::sqrt(fact);
  }
  // Fermions: sign of moving the appended particle from the last slot to its
  // sorted position.
  int above = 0;
  for (int y = site + 1; y < space.lattice().sites; ++y) above += env.occupation[species][y];
  return (above % 2 == 0) ? psi[idx] : -psi[idx];
}

}  // namespace

GeneratorAction second_quantize_process(const GeneratorFamily& one_particle,
                                        const FockSpace& space, const Vec& psi,
                                        double sector_floor) {
  if (space.num_species() != 1)
    throw std::invalid_argument("second_quantize_process: single-species spaces only");
  if (one_particle.nconf != space.lattice().sites)
    throw std::invalid_argument("second_quantize_process: family must live on the lattice");
  if (psi.size() != space.dim())
    throw std::invalid_argument("second_quantize_process: state dimension");

  const int sites = space.lattice().sites;
  GeneratorAction out;
  out.rates.n = space.dim();
  out.rates.out.assign(space.dim(), {});
  out.rates.flagged.assign(space.dim(), 0);
  out.rates.minimal = true;

  std::vector<double> sector_weight(space.sectors(), 0.0);
  for (int i = 0; i < space.dim(); ++i) sector_weight[space.sector_of(i)] += std::norm(psi[i]);

  for (int src = 0; src < space.dim(); ++src) {
    const Configuration& c = space.config(src);
    const int sector = space.sector_of(src);
    if (sector_weight[sector] <= sector_floor) {
      out.rates.flagged[src] = 1;
      continue;
    }
    if (c.count(0) == 0) continue;  // vacuum sector: zero generator
    std::map<int, double> merged;
    for (int s = 0; s < sites; ++s) {
      const int multiplicity = c.occupation[0][s];
      if (multiplicity == 0) continue;
      Configuration env = c;
      --env.occupation[0][s];
      // Conditional one-particle density of the marked particle given the
      // environment: W(a,b) = u(a) conj(u(b)) / sum |u|^2.
      Vec u(sites);
      for (int a = 0; a < sites; ++a) u[a] = ordered_amplitude(space, env, 0, a, psi);
      const double norm2 = u.squaredNorm();
      if (norm2 <= 0.0) continue;
      Mat cond = (u * u.adjoint()) / norm2;
      GeneratorAction part = one_particle(cond);
      out.rates.minimal = out.rates.minimal && part.rates.minimal;
      for (const auto& [dest_site, r] : part.rates.out[s]) {
        Configuration moved = env;
        ++moved.occupation[0][dest_site];
        const int dest = space.index_of(moved);
        if (dest < 0 || dest == src) continue;
        merged[dest] += multiplicity * r;
      }
    }
    out.rates.out[src].assign(merged.begin(), merged.end());
  }
  out.rates.recompute_totals();
  return out;
}

double generator_equivariance_residual(const GeneratorAction& action, const Vec& psi,
                                       const OperatorMatrix& h, const PovmFamily& povm,
                                       double hbar) {
  RVec p = born_distribution(psi, povm);
  RVec lhs = action.apply(p);
  Vec hpsi = h.apply(psi);
  double worst = 0.0;
  for (int q = 0; q < povm.cells(); ++q) {
    const double rhs = (2.0 / hbar) * std::imag(povm.apply_cell(q, psi).dot(hpsi));
    worst = std::max(worst, std::abs(lhs[q] - rhs));
  }
  return worst;
}

double generator_equivariance_residual(const GeneratorAction& action, const Mat& w,
                                       const OperatorMatrix& h, const PovmFamily& povm,
                                       double hbar) {
  RVec p = born_distribution(DensityMatrix{w}, povm);
  RVec lhs = action.apply(p);
  double worst = 0.0;
  for (int q = 0; q < povm.cells(); ++q) {
    const cplx tr = (w * Mat(povm.cell(q)) * h.dense()).trace();
    const double rhs = (2.0 / hbar) * tr.imag();
    worst = std::max(worst, std::abs(lhs[q] - rhs));
  }
  return worst;
}

}  // namespace bellsim
