#include "bellsim/fock.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace bellsim {

int Configuration::count(int species) const {
  int n = 0;
  for (auto v : occupation[species]) n += v;
  return n;
}

int Configuration::total() const {
  int n = 0;
  for (std::size_t s = 0; s < occupation.size(); ++s) n += count(static_cast<int>(s));
  return n;
}

std::string Configuration::label(const std::vector<SpeciesSpec>& species) const {
  std::ostringstream os;
  for (std::size_t s = 0; s < occupation.size(); ++s) {
    if (s) os << '|';
    os << (species[s].name.empty() ? "s" + std::to_string(s) : species[s].name) << ':';
    bool first = true;
    for (std::size_t site = 0; site < occupation[s].size(); ++site)
      for (int m = 0; m < occupation[s][site]; ++m) {
        if (!first) os << ',';
        os << site;
        first = false;
      }
    if (first) os << '-';
  }
  return os.str();
}

double SmearingProfile::at(int displacement, int sites, Boundary boundary) const {
  if (boundary == Boundary::Periodic) {
    int d = displacement % sites;
    if (d < 0) d += sites;
    return values[d];
  }
  // Open lattice: signed displacement folded into (-G/2, G/2]; out of range
  // when the fold is ambiguous.
  int d = displacement;
  if (d <= -sites || d >= sites) return 0.0;
  if (d < 0) d += sites;
  return values[d];
}

SmearingProfile SmearingProfile::delta(int sites, int at) {
  SmearingProfile p;
  p.values.assign(sites, 0.0);
  p.values[((at % sites) + sites) % sites] = 1.0;
  return p;
}

SmearingProfile SmearingProfile::gaussian(int sites, double amplitude, double width,
                                          std::optional<int> support) {
  SmearingProfile p;
  p.values.assign(sites, 0.0);
  for (int d = 0; d < sites; ++d) {
    const int wrapped = std::min(d, sites - d);
    if (support && wrapped > *support) continue;
    p.values[d] = amplitude * std::exp(-0.5 * wrapped * wrapped / (width * width));
  }
  return p;
}

namespace {

// Occupied-position lists of a given total, lexicographically ascending:
// nondecreasing site sequences for bosons, strictly increasing for fermions.
void enumerate_species_configs(int sites, Statistics stat, int count,
                               std::vector<std::vector<std::uint8_t>>& out) {
  std::vector<int> positions;
  std::function<void(int)> rec = [&](int from) {
    if (static_cast<int>(positions.size()) == count) {
      std::vector<std::uint8_t> occ(sites, 0);
      for (int p : positions) ++occ[p];
      out.push_back(std::move(occ));
      return;
    }
    for (int s = from; s < sites; ++s) {
      positions.push_back(s);
      rec(stat == Statistics::Fermi ? s + 1 : s);
      positions.pop_back();
    }
  };
  rec(0);
}

}  // namespace

std::string FockSpace::key(const Configuration& c) {
  std::string k;
  for (const auto& occ : c.occupation) {
    k.append(reinterpret_cast<const char*>(occ.data()), occ.size());
    k.push_back('\xff');
  }
  return k;
}

FockSpace::FockSpace(LatticeSpec lattice, std::vector<SpeciesSpec> species,
                     std::optional<int> joint_cap, long long basis_size_cap)
    : lattice_(lattice), species_(std::move(species)) {
  if (lattice_.sites < 2) throw std::invalid_argument("FockSpace: need at least 2 sites");
  if (species_.empty()) throw std::invalid_argument("FockSpace: no species");
  for (const auto& sp : species_) {
    if (sp.max_count < 0 || sp.min_count < 0 || sp.min_count > sp.max_count)
      throw std::invalid_argument("FockSpace: bad truncation range");
    if (sp.statistics == Statistics::Fermi && sp.max_count > lattice_.sites)
      throw std::invalid_argument("FockSpace: fermionic truncation exceeds site count");
  }

  // Sector tuples, ascending lexicographic.
  std::vector<std::vector<int>> tuples;
  std::vector<int> tuple(species_.size(), 0);
  std::function<void(int)> rec_tuple = [&](int s) {
    if (s == static_cast<int>(species_.size())) {
      int total = 0;
      for (int t : tuple) total += t;
      if (!joint_cap || total <= *joint_cap) tuples.push_back(tuple);
      return;
    }
    for (int n = species_[s].min_count; n <= species_[s].max_count; ++n) {
      tuple[s] = n;
      rec_tuple(s + 1);
    }
    tuple[s] = species_[s].min_count;
  };
  rec_tuple(0);
  std::sort(tuples.begin(), tuples.end());

  long long running = 0;
  for (const auto& t : tuples) {
    std::vector<std::vector<std::vector<std::uint8_t>>> per_species(species_.size());
    long long sector_dim = 1;
    for (std::size_t s = 0; s < species_.size(); ++s) {
      enumerate_species_configs(lattice_.sites, species_[s].statistics, t[s], per_species[s]);
      sector_dim *= static_cast<long long>(per_species[s].size());
    }
    running += sector_dim;
    if (running > basis_size_cap) {
      std::ostringstream os;
      os << "FockSpace: basis size exceeds cap " << basis_size_cap << " (at least " << running
         << " states)";
      throw std::invalid_argument(os.str());
    }
    sector_counts_.push_back(t);
    sector_begin_.push_back(static_cast<int>(basis_.size()));

    std::vector<std::size_t> idx(species_.size(), 0);
    bool done = sector_dim == 0;
    while (!done) {
      Configuration c;
      c.occupation.resize(species_.size());
      for (std::size_t s = 0; s < species_.size(); ++s) c.occupation[s] = per_species[s][idx[s]];
      basis_.push_back(std::move(c));
      // Odometer, species 0 outermost.
      int s = static_cast<int>(species_.size()) - 1;
      for (; s >= 0; --s) {
        if (++idx[s] < per_species[s].size()) break;
        idx[s] = 0;
      }
      done = s < 0;
    }
    sector_end_.push_back(static_cast<int>(basis_.size()));
  }

  sector_of_.resize(basis_.size());
  for (int sec = 0; sec < sectors(); ++sec)
    for (int i = sector_begin_[sec]; i < sector_end_[sec]; ++i) sector_of_[i] = sec;
  index_.reserve(basis_.size() * 2);
  for (std::size_t i = 0; i < basis_.size(); ++i) index_[key(basis_[i])] = static_cast<int>(i);
}

int FockSpace::index_of(const Configuration& c) const {
  auto it = index_.find(key(c));
  return it == index_.end() ? -1 : it->second;
}

BasisIndex FockSpace::basis_index(int index) const {
  const int sec = sector_of_[index];
  return BasisIndex{sec, index - sector_begin_[sec]};
}

std::vector<std::string> FockSpace::labels() const {
  std::vector<std::string> out(dim());
  for (int i = 0; i < dim(); ++i) out[i] = label(i);
  return out;
}

std::string FockSpace::manifest() const {
  std::ostringstream os;
  os << "lattice sites=" << lattice_.sites << " spacing=" << lattice_.spacing << " boundary="
     << (lattice_.boundary == Boundary::Periodic ? "periodic" : "open") << '\n';
  for (std::size_t s = 0; s < species_.size(); ++s) {
    const auto& sp = species_[s];
    os << "species " << s << " name=" << (sp.name.empty() ? "s" + std::to_string(s) : sp.name)
       << " statistics=" << (sp.statistics == Statistics::Bose ? "bose" : "fermi")
       << " counts=" << sp.min_count << ".." << sp.max_count << '\n';
  }
  os << "dimension " << dim() << '\n';
  for (int sec = 0; sec < sectors(); ++sec) {
    os << "sector";
    for (int n : sector_counts_[sec]) os << ' ' << n;
    os << " dim=" << sector_dim(sec) << '\n';
  }
  return os.str();
}

LadderResult apply_ladder(const FockSpace& space, const Configuration& c, int species, int site,
                          LadderKind kind) {
  const auto& spec = space.species()[species];
  LadderResult r;
  r.config = c;
  auto& occ = r.config.occupation[species][site];
  if (spec.statistics == Statistics::Bose) {
    if (kind == LadderKind::Create) {
      r.amplitude = std::sqrt(static_cast<double>(occ) + 1.0);
      ++occ;
    } else {
      if (occ == 0) return r;
      r.amplitude = std::sqrt(static_cast<double>(occ));
      --occ;
    }
  } else {
    if (kind == LadderKind::Create ? occ != 0 : occ == 0) return r;
    // Jordan-Wigner sign over the global fermionic mode order.
    int parity = 0;
    for (int s = 0; s < space.num_species(); ++s) {
      if (space.species()[s].statistics != Statistics::Fermi) continue;
      const int limit = (s == species) ? site : (s < species ? space.lattice().sites : 0);
      for (int y = 0; y < limit; ++y) parity += c.occupation[s][y];
    }
    r.amplitude = (parity % 2 == 0) ? 1.0 : -1.0;
    occ = kind == LadderKind::Create ? 1 : 0;
  }
  r.ok = true;
  return r;
}

OperatorMatrix ladder(const FockSpace& space, int species, int site, LadderKind kind) {
  if (species < 0 || species >= space.num_species())
    throw std::invalid_argument("ladder: bad species");
  if (site < 0 || site >= space.lattice().sites) throw std::invalid_argument("ladder: bad site");
  std::vector<Triplet> trips;
  for (int j = 0; j < space.dim(); ++j) {
    LadderResult r = apply_ladder(space, space.config(j), species, site, kind);
    if (!r.ok) continue;
    const int i = space.index_of(r.config);
    if (i < 0) continue;  // truncation: hard cutoff to zero
    trips.emplace_back(i, j, r.amplitude);
  }
  SparseMat m(space.dim(), space.dim());
  m.setFromTriplets(trips.begin(), trips.end());
  return OperatorMatrix(std::move(m), false);
}

OperatorMatrix smeared_ladder(const FockSpace& space, int species, int site,
                              const SmearingProfile& phi, LadderKind kind) {
  if (static_cast<int>(phi.values.size()) != space.lattice().sites)
    throw std::invalid_argument("smeared_ladder: profile on a different lattice");
  SparseMat m(space.dim(), space.dim());
  for (int y = 0; y < space.lattice().sites; ++y) {
    const double w = phi.at(y - site, space.lattice().sites, space.lattice().boundary);
    if (w == 0.0) continue;
    m += SparseMat(w * ladder(space, species, y, kind).sparse());
  }
  return OperatorMatrix(std::move(m), false);
}

OperatorMatrix second_quantize_h(const FockSpace& space, int species, const Mat& h1,
                                 const Tolerances& tol) {
  const int sites = space.lattice().sites;
  if (h1.rows() != sites || h1.cols() != sites)
    throw std::invalid_argument("second_quantize_h: one-particle dimension mismatch");
  if ((h1 - h1.adjoint()).cwiseAbs().maxCoeff() > tol.hermiticity)
    throw std::invalid_argument("second_quantize_h: h1 not Hermitian");

  std::vector<Triplet> trips;
  for (int j = 0; j < space.dim(); ++j) {
    const Configuration& c = space.config(j);
    for (int sp = 0; sp < sites; ++sp) {
      if (c.occupation[species][sp] == 0) continue;
      LadderResult low = apply_ladder(space, c, species, sp, LadderKind::Annihilate);
      for (int s = 0; s < sites; ++s) {
        const cplx amp = h1(s, sp);
        if (amp == cplx(0.0)) continue;
        LadderResult up = apply_ladder(space, low.config, species, s, LadderKind::Create);
        if (!up.ok) continue;
        const int i = space.index_of(up.config);
        if (i < 0) continue;
        trips.emplace_back(i, j, amp * low.amplitude * up.amplitude);
      }
    }
  }
  SparseMat m(space.dim(), space.dim());
  m.setFromTriplets(trips.begin(), trips.end());
  return OperatorMatrix(std::move(m), true, tol);
}

PovmFamily gamma_povm(const FockSpace& space) {
  return PovmFamily::coordinate(space.dim(), space.labels());
}

OperatorMatrix number_operator(const FockSpace& space, int species,
                               const std::vector<int>& region) {
  for (int s : region)
    if (s < 0 || s >= space.lattice().sites)
      throw std::invalid_argument("number_operator: site outside lattice");
  std::vector<Triplet> trips;
  for (int i = 0; i < space.dim(); ++i) {
    int n = 0;
    for (int s : region) n += space.config(i).occupation[species][s];
    if (n) trips.emplace_back(i, i, static_cast<double>(n));
  }
  SparseMat m(space.dim(), space.dim());
  m.setFromTriplets(trips.begin(), trips.end());
  return OperatorMatrix(std::move(m), true);
}

OperatorMatrix number_operator_ladder(const FockSpace& space, int species,
                                      const std::vector<int>& region) {
  SparseMat m(space.dim(), space.dim());
  for (int s : region) {
    SparseMat up = ladder(space, species, s, LadderKind::Create).sparse();
    SparseMat down = ladder(space, species, s, LadderKind::Annihilate).sparse();
    m += SparseMat(up * down);
  }
  return OperatorMatrix(std::move(m), true);
}

}  // namespace bellsim
