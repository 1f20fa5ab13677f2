#include "bellsim/models.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "bellsim/rng.hpp"
#include "json.hpp"

namespace bellsim {

namespace {

using nlohmann::json;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

OperatorMatrix lattice_schrodinger(const LatticeSpec& lattice, double mass, const RVec& potential,
                                   double hbar) {
  const int g = lattice.sites;
  const double hop = -hbar * hbar / (2.0 * mass * lattice.spacing * lattice.spacing);
  std::vector<Triplet> trips;
  for (int s = 0; s < g; ++s) {
    const double diag = -2.0 * hop + (potential.size() ? potential[s] : 0.0);
    trips.emplace_back(s, s, diag);
    if (lattice.boundary == Boundary::Periodic || s + 1 < g) {
      trips.emplace_back(s, (s + 1) % g, hop);
      trips.emplace_back((s + 1) % g, s, hop);
    }
  }
  SparseMat m(g, g);
  m.setFromTriplets(trips.begin(), trips.end());
  return OperatorMatrix(std::move(m), true);
}

}  // namespace

FieldSchedule FieldSchedule::constant(std::vector<Mat> a) {
  FieldSchedule f;
  f.segments.push_back({std::numeric_limits<double>::infinity(), std::move(a)});
  return f;
}

const std::vector<Mat>& FieldSchedule::at(double t) const {
  for (const auto& seg : segments)
    if (t < seg.t_until) return seg.a;
  return segments.back().a;
}

const OperatorMatrix& BellModel::hint(double t) const {
  for (const auto& [until, h] : hint_schedule)
    if (t < until) return h;
  return hint_schedule.back().second;
}

OperatorMatrix BellModel::hamiltonian(double t) const { return h0.add(hint(t)); }

namespace {

// Current of an extended-space kernel grouped by position configurations.
CurrentMatrix extended_current(const Vec& phi, const SparseMat& kernel,
                               const std::vector<int>& config_of_ext, int nconf, double hbar) {
  std::vector<std::map<int, double>> acc(nconf);
  for (int k = 0; k < kernel.outerSize(); ++k)
    for (SparseMat::InnerIterator it(kernel, k); it; ++it) {
      const int q = config_of_ext[it.row()];
      const int qp = config_of_ext[it.col()];
      if (q == qp) continue;
      const double v = (2.0 / hbar) * std::imag(std::conj(phi[it.row()]) * it.value() * phi[it.col()]);
      if (v != 0.0) acc[q][qp] += v;
    }
  CurrentMatrix j;
  j.n = nconf;
  j.rows.resize(nconf);
  for (int q = 0; q < nconf; ++q) j.rows[q].assign(acc[q].begin(), acc[q].end());
  return j;
}

const SparseMat& ext_hint_at(const DiracArtifacts& art, double t) {
  for (const auto& [until, h] : art.hint_ext)
    if (t < until) return h;
  return art.hint_ext.back().second;
}

}  // namespace

JumpRateTable BellModel::rates(const Vec& psi, double t, const Tolerances& tol) const {
  if (dirac) {
    // Field-operator kernel route on the extended position PVM.
    Vec phi = dirac->embedding * psi;
    RVec p = born(psi);
    CurrentMatrix j0 =
        extended_current(phi, dirac->h0_ext, dirac->config_of_ext, configs(), constants.hbar);
    CurrentMatrix ji = extended_current(phi, ext_hint_at(*dirac, t), dirac->config_of_ext,
                                        configs(), constants.hbar);
    return add_rates(minimal_rates_from_current(j0, p, tol),
                     minimal_rates_from_current(ji, p, tol));
  }
  if (recipe == RateRecipe::Total) return minimal_rates(psi, hamiltonian(t), povm, constants.hbar, tol);
  JumpRateTable free_part = minimal_rates(psi, h0, povm, constants.hbar, tol);
  JumpRateTable jump_part = minimal_rates(psi, hint(t), povm, constants.hbar, tol);
  return add_rates(free_part, jump_part);
}

JumpRateTable dirac_part_rates(const BellModel& model, const Vec& psi, double t,
                               bool interaction) {
  if (!model.dirac) throw std::invalid_argument("dirac_part_rates: wrong model");
  Vec phi = model.dirac->embedding * psi;
  RVec p = model.born(psi);
  const SparseMat& kernel = interaction ? ext_hint_at(*model.dirac, t) : model.dirac->h0_ext;
  CurrentMatrix j = extended_current(phi, kernel, model.dirac->config_of_ext, model.configs(),
                                     model.constants.hbar);
  return minimal_rates_from_current(j, p);
}

RVec BellModel::born(const Vec& psi) const {
  if (dirac) {
    Vec phi = dirac->embedding * psi;
    RVec p = RVec::Zero(configs());
    for (int i = 0; i < phi.size(); ++i) p[dirac->config_of_ext[i]] += std::norm(phi[i]);
    return p;
  }
  return born_distribution(psi, povm);
}

std::string BellModel::manifest() const {
  json j;
  j["kind"] = kind;
  j["dimension"] = dim();
  j["configurations"] = configs();
  j["hbar"] = constants.hbar;
  j["c"] = constants.c;
  j["masses"] = constants.masses;
  j["rate_recipe"] = recipe == RateRecipe::Total ? "total" : "additive";
  j["time_dependent"] = time_dependent();
  if (space) {
    j["lattice"] = {{"sites", space->lattice().sites},
                    {"spacing", space->lattice().spacing},
                    {"boundary", space->lattice().boundary == Boundary::Periodic ? "periodic" : "open"}};
    json sectors = json::array();
    for (int s = 0; s < space->sectors(); ++s)
      sectors.push_back({{"counts", space->sector_counts(s)}, {"dim", space->sector_dim(s)}});
    j["sectors"] = sectors;
  }
  // Spectrum summary of H(0).
  Eigen::SelfAdjointEigenSolver<Mat> es(hamiltonian(0.0).dense(), Eigen::EigenvaluesOnly);
  j["spectrum"] = {{"min", es.eigenvalues().minCoeff()}, {"max", es.eigenvalues().maxCoeff()}};
  if (phi) j["phi"] = phi->values;
  return j.dump(2);
}

std::string BellModel::manifest_hash() const {
  std::ostringstream os;
  os << std::hex << fnv1a(manifest());
  return os.str();
}

BellModel build_two_level(double omega, double hbar) {
  BellModel m;
  m.kind = "two-level";
  m.constants.hbar = hbar;
  Mat h(2, 2);
  h << 0.0, hbar * omega, hbar * omega, 0.0;
  m.h0 = OperatorMatrix::from_dense(h, true);
  m.hint_schedule.emplace_back(std::numeric_limits<double>::infinity(), OperatorMatrix::zero(2));
  m.povm = PovmFamily::coordinate(2, {"1", "2"});
  m.config_labels = {"1", "2"};
  m.config_sector = {0, 0};
  m.config_charge = {0, 0};
  return m;
}

BellModel build_bell_lattice(const LatticeSpec& lattice, double mass, const RVec& potential,
                             double hbar) {
  if (potential.size() && potential.size() != lattice.sites)
    throw std::invalid_argument("build_bell_lattice: potential size mismatch");
  BellModel m;
  m.kind = "bell-lattice";
  m.constants.hbar = hbar;
  m.constants.masses = {mass};
  m.h0 = lattice_schrodinger(lattice, mass, potential, hbar);
  m.hint_schedule.emplace_back(std::numeric_limits<double>::infinity(),
                               OperatorMatrix::zero(lattice.sites));
  std::vector<std::string> labels(lattice.sites);
  for (int s = 0; s < lattice.sites; ++s) labels[s] = std::to_string(s);
  m.povm = PovmFamily::coordinate(lattice.sites, labels);
  m.config_labels = labels;
  m.config_sector.assign(lattice.sites, 0);
  m.config_charge.assign(lattice.sites, 0);
  // Single-species occupation view for jump classification.
  m.space = std::make_shared<FockSpace>(lattice,
                                        std::vector<SpeciesSpec>{{Statistics::Fermi, 1, 1, "p"}});
  return m;
}

namespace {

// Direct operator assembly of the crea1 interaction on a given space.
OperatorMatrix crea1_hint_direct(const FockSpace& space, const SmearingProfile& phi) {
  SparseMat h(space.dim(), space.dim());
  for (int x = 0; x < space.lattice().sites; ++x) {
    SparseMat nf = number_operator(space, 0, {x}).sparse();
    SparseMat up = smeared_ladder(space, 1, x, phi, LadderKind::Create).sparse();
    SparseMat down = smeared_ladder(space, 1, x, phi, LadderKind::Annihilate).sparse();
    h += SparseMat(nf * (up + down));
  }
  return OperatorMatrix(std::move(h), true);
}

KernelDiagram crea1_chain(std::shared_ptr<const FockSpace> relaxed, const SmearingProfile& phi,
                          LadderKind boson_kind) {
  KernelDiagram erase_f =
      point_ladder_diagram(relaxed, 0, LadderKind::Annihilate, SiteOrSlot::var("r"));
  KernelDiagram boson = ladder_diagram(relaxed, 1,
                                       boson_kind == LadderKind::Create
                                           ? ElementaryKind::Create
                                           : ElementaryKind::Annihilate,
                                       phi, SiteOrSlot::var("r"));
  KernelDiagram append_f =
      point_ladder_diagram(relaxed, 0, LadderKind::Create, SiteOrSlot::var("r"));
  KernelDiagram chain = concat(concat(erase_f, boson), append_f);
  return integrate_parameter(chain, "r", RVec::Ones(relaxed->lattice().sites));
}

}  // namespace

BellModel build_crea1(const LatticeSpec& lattice, int fermions, int boson_cap,
                      const SmearingProfile& phi, double fermion_mass, double boson_mass,
                      double hbar) {
  if (fermions < 1) throw std::invalid_argument("build_crea1: need at least one fermion");
  if (boson_cap < 1) {
    double strength = 0.0;
    for (double v : phi.values) strength += std::abs(v);
    if (strength > 0.0)
      throw std::invalid_argument("build_crea1: boson cap 0 cannot represent the interaction");
  }
  BellModel m;
  m.kind = "crea1";
  m.constants.hbar = hbar;
  m.constants.masses = {fermion_mass, boson_mass};
  m.phi = phi;
  m.space = std::make_shared<FockSpace>(
      lattice, std::vector<SpeciesSpec>{{Statistics::Fermi, fermions, fermions, "f"},
                                        {Statistics::Bose, boson_cap, 0, "b"}});
  const FockSpace& space = *m.space;

  Mat hf = lattice_schrodinger(lattice, fermion_mass, RVec(), hbar).dense();
  Mat hb = lattice_schrodinger(lattice, boson_mass, RVec(), hbar).dense();
  m.h0 = OperatorMatrix(
      SparseMat(second_quantize_h(space, 0, hf).sparse() + second_quantize_h(space, 1, hb).sparse()),
      true);

  // Interaction via the diagram chain, cross-checked against the direct
  // operator assembly.
  auto relaxed = std::make_shared<FockSpace>(
      lattice, std::vector<SpeciesSpec>{{Statistics::Fermi, fermions, fermions - 1 > 0 ? fermions - 1 : 0, "f"},
                                        {Statistics::Bose, boson_cap, 0, "b"}});
  KernelDiagram hint_diagram = sum_diagrams(crea1_chain(relaxed, phi, LadderKind::Create),
                                            crea1_chain(relaxed, phi, LadderKind::Annihilate));
  KernelDiagram restricted = restrict_to_space(hint_diagram, relaxed, m.space);
  Mat from_diagram = restricted.realize();
  Mat direct = crea1_hint_direct(space, phi).dense();
  const double defect = (from_diagram - direct).cwiseAbs().maxCoeff();
  if (defect > 1e-13) {
    std::ostringstream os;
    os << "build_crea1: diagram and direct kernels disagree by " << defect;
    throw std::runtime_error(os.str());
  }
  m.hint_schedule.emplace_back(std::numeric_limits<double>::infinity(),
                               OperatorMatrix::from_dense(direct, true));

  m.povm = gamma_povm(space);
  m.config_labels = space.labels();
  m.config_sector.resize(space.dim());
  m.config_charge.assign(space.dim(), 0);
  for (int i = 0; i < space.dim(); ++i) m.config_sector[i] = space.sector_of(i);
  m.recipe = BellModel::RateRecipe::Total;  // hop and create/annihilate supports are disjoint
  return m;
}

KernelDiagram crea1_interaction_diagram(const BellModel& model) {
  if (model.kind != "crea1") throw std::invalid_argument("crea1_interaction_diagram: wrong model");
  const auto& lattice = model.space->lattice();
  const auto& fspec = model.space->species()[0];
  const auto& bspec = model.space->species()[1];
  auto relaxed = std::make_shared<FockSpace>(
      lattice,
      std::vector<SpeciesSpec>{{Statistics::Fermi, fspec.max_count,
                                fspec.max_count - 1 > 0 ? fspec.max_count - 1 : 0, "f"},
                               {Statistics::Bose, bspec.max_count, 0, "b"}});
  KernelDiagram d = sum_diagrams(crea1_chain(relaxed, *model.phi, LadderKind::Create),
                                 crea1_chain(relaxed, *model.phi, LadderKind::Annihilate));
  return restrict_to_space(d, relaxed, model.space);
}

std::vector<std::pair<int, double>> closed_form_crea1_rates(const BellModel& model, const Vec& psi,
                                                            int source) {
  if (model.kind != "crea1") throw std::invalid_argument("closed_form_crea1_rates: wrong model");
  const FockSpace& space = *model.space;
  const SmearingProfile& phi = *model.phi;
  const int sites = space.lattice().sites;
  const double hbar = model.constants.hbar;
  const Configuration& src = space.config(source);
  const double p = std::norm(psi[source]);
  std::vector<std::pair<int, double>> out;
  if (p <= 1e-14) return out;

  // Occupation form of the closed-form rates: creation amplitude
  // sqrt(m_y + 1) sum_{x in x'} phi(y - x), annihilation sqrt(m_y) ditto.
  for (int y = 0; y < sites; ++y) {
    double coupling = 0.0;
    for (int x = 0; x < sites; ++x)
      if (src.occupation[0][x])
        coupling += src.occupation[0][x] * phi.at(y - x, sites, space.lattice().boundary);
    // Creation of a boson at y.
    Configuration up = src;
    ++up.occupation[1][y];
    int dest = space.index_of(up);
    if (dest >= 0 && coupling != 0.0) {
      const double amp = std::sqrt(double(src.occupation[1][y] + 1)) * coupling;
      const double num = std::imag(std::conj(psi[dest]) * amp * psi[source]);
      const double rate = std::max(0.0, (2.0 / hbar) * num) / p;
      if (rate > 0.0) out.emplace_back(dest, rate);
    }
    // Annihilation of a boson at y.
    if (src.occupation[1][y] > 0 && coupling != 0.0) {
      Configuration down = src;
      --down.occupation[1][y];
      dest = space.index_of(down);
      const double amp = std::sqrt(double(src.occupation[1][y])) * coupling;
      const double num = std::imag(std::conj(psi[dest]) * amp * psi[source]);
      const double rate = std::max(0.0, (2.0 / hbar) * num) / p;
      if (rate > 0.0) out.emplace_back(dest, rate);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

struct TwoModeOp {
  int species;
  LadderKind kind;
};

// sum_{k,k'} coeff(k,k') OpA_k OpB_{k'} with OpB applied first.
SparseMat two_mode_term(const FockSpace& space, TwoModeOp a, TwoModeOp b, const Mat& coeff) {
  const int modes = space.lattice().sites;
  std::vector<Triplet> trips;
  for (int j = 0; j < space.dim(); ++j) {
    const Configuration& c = space.config(j);
    for (int kb = 0; kb < modes; ++kb) {
      LadderResult rb = apply_ladder(space, c, b.species, kb, b.kind);
      if (!rb.ok) continue;
      for (int ka = 0; ka < modes; ++ka) {
        if (coeff(ka, kb) == cplx(0.0)) continue;
        LadderResult ra = apply_ladder(space, rb.config, a.species, ka, a.kind);
        if (!ra.ok) continue;
        const int i = space.index_of(ra.config);
        if (i < 0) continue;
        trips.emplace_back(i, j, coeff(ka, kb) * rb.amplitude * ra.amplitude);
      }
    }
  }
  SparseMat m(space.dim(), space.dim());
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

Mat field_block_matrix(const std::vector<Mat>& a) {
  const int g = static_cast<int>(a.size());
  Mat m = Mat::Zero(2 * g, 2 * g);
  for (int x = 0; x < g; ++x) m.block(2 * x, 2 * x, 2, 2) = a[x];
  return m;
}

// The four normal-ordered interaction terms in the mode basis.
OperatorMatrix dirac_hint_matrix(const FockSpace& space, const Mat& u_plus, const Mat& cm,
                                 const std::vector<Mat>& a_field, const Tolerances& tol) {
  Mat a_mat = field_block_matrix(a_field);
  Mat g_mat = cm.adjoint() * u_plus;
  Mat m1 = u_plus.adjoint() * a_mat * u_plus;                  // b^dag b
  Mat m2 = g_mat.transpose() * a_mat * u_plus;                 // d b (pair annihilation)
  Mat m4 = g_mat.adjoint() * a_mat.transpose() * g_mat;        // d^dag d

  SparseMat h = two_mode_term(space, {0, LadderKind::Create}, {0, LadderKind::Annihilate}, m1);
  SparseMat t2 = two_mode_term(space, {1, LadderKind::Annihilate}, {0, LadderKind::Annihilate}, m2);
  h += t2;
  h += SparseMat(t2.adjoint());  // b^dag d^dag (pair creation)
  h -= two_mode_term(space, {1, LadderKind::Create}, {1, LadderKind::Annihilate}, m4);
  return OperatorMatrix(std::move(h), true, tol);
}

// Per-species sector embedding: Slater determinants of the positive-energy
// modes expanded in the site-spinor basis.
Mat sector_embedding(const Mat& u_plus, const std::vector<std::vector<int>>& ext_sets,
                     const std::vector<std::vector<int>>& mode_sets) {
  Mat e = Mat::Zero(ext_sets.size(), mode_sets.size());
  const int n = mode_sets.empty() ? 0 : static_cast<int>(mode_sets[0].size());
  for (std::size_t col = 0; col < mode_sets.size(); ++col)
    for (std::size_t row = 0; row < ext_sets.size(); ++row) {
      if (n == 0) {
        e(row, col) = 1.0;
        continue;
      }
      Mat sub(n, n);
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) sub(r, c) = u_plus(ext_sets[row][r], mode_sets[col][c]);
      e(row, col) = sub.determinant();
    }
  return e;
}

std::vector<std::vector<int>> occupied_lists(const FockSpace& space, int species, int sector) {
  std::vector<std::vector<int>> out;
  for (int i = space.sector_begin(sector); i < space.sector_begin(sector) + space.sector_dim(sector);
       ++i) {
    std::vector<int> occ;
    for (int s = 0; s < space.lattice().sites; ++s)
      for (int k = 0; k < space.config(i).occupation[species][s]; ++k) occ.push_back(s);
    out.push_back(std::move(occ));
  }
  return out;
}

std::string multiset_label(const std::vector<int>& sites_occupied) {
  std::ostringstream os;
  if (sites_occupied.empty()) return "-";
  for (std::size_t i = 0; i < sites_occupied.size(); ++i)
    os << sites_occupied[i] / 2 << (i + 1 < sites_occupied.size() ? "," : "");
  return os.str();
}

}  // namespace

BellModel build_dirac_pair(const LatticeSpec& lattice, double mass, const FieldSchedule& field,
                           int pair_cap, double hbar, double light_speed) {
  if (lattice.boundary != Boundary::Periodic)
    throw std::invalid_argument("build_dirac_pair: periodic lattice required");
  const int g = lattice.sites;
  const double a = lattice.spacing;
  BellModel m;
  m.kind = "dirac-pair";
  m.constants.hbar = hbar;
  m.constants.c = light_speed;
  m.constants.masses = {mass, mass};
  m.field = field;

  auto art = std::make_shared<DiracArtifacts>();
  // One-particle lattice Dirac operator, (site, spinor) indexing, symmetric
  // difference derivative.
  Mat h1 = Mat::Zero(2 * g, 2 * g);
  for (int x = 0; x < g; ++x) {
    h1(2 * x, 2 * x) = mass * light_speed * light_speed;       // sigma_3
    h1(2 * x + 1, 2 * x + 1) = -mass * light_speed * light_speed;
    const int xp = (x + 1) % g, xm = (x + g - 1) % g;
    const cplx hop = -I_UNIT * light_speed * hbar / (2.0 * a);  // -ic hbar sigma_1 d/dx
    h1(2 * x, 2 * xp + 1) += hop;
    h1(2 * x + 1, 2 * xp) += hop;
    h1(2 * x, 2 * xm + 1) -= hop;
    h1(2 * x + 1, 2 * xm) -= hop;
  }
  art->h_one = h1;

  // Charge conjugation C = sigma_1 composed with complex conjugation.
  Mat c_mat = Mat::Zero(2 * g, 2 * g);
  for (int x = 0; x < g; ++x) {
    c_mat(2 * x, 2 * x + 1) = 1.0;
    c_mat(2 * x + 1, 2 * x) = 1.0;
  }
  art->charge_conj = c_mat;
  const double conj_defect = (c_mat * h1.conjugate() * c_mat + h1).cwiseAbs().maxCoeff();
  if (conj_defect > 1e-12)
    throw std::runtime_error("build_dirac_pair: charge conjugation fails to reverse h0");

  Eigen::SelfAdjointEigenSolver<Mat> es(h1);
  const double scale = es.eigenvalues().cwiseAbs().maxCoeff();
  if (es.eigenvalues().cwiseAbs().minCoeff() < 1e-9 * scale)
    throw std::invalid_argument("build_dirac_pair: zero mode in the free Dirac spectrum");
  int negatives = 0;
  for (int k = 0; k < 2 * g; ++k)
    if (es.eigenvalues()[k] < 0) ++negatives;
  if (negatives != g) throw std::runtime_error("build_dirac_pair: asymmetric spectrum split");
  art->u_plus = es.eigenvectors().rightCols(g);
  art->energies = es.eigenvalues().tail(g);
  art->s_plus = art->u_plus * art->u_plus.adjoint();
  Mat p_minus = Mat::Identity(2 * g, 2 * g) - art->s_plus;
  art->s_minus = c_mat * p_minus.conjugate();  // columns of C P_-

  m.space = std::make_shared<FockSpace>(
      LatticeSpec{g, 1.0, Boundary::Periodic},
      std::vector<SpeciesSpec>{{Statistics::Fermi, std::min(pair_cap, g), 0, "el"},
                               {Statistics::Fermi, std::min(pair_cap, g), 0, "po"}},
      pair_cap);
  const FockSpace& space = *m.space;

  // Free Hamiltonian: both species carry the positive one-particle energies.
  Mat eps = Mat::Zero(g, g);
  for (int k = 0; k < g; ++k) eps(k, k) = art->energies[k];
  m.h0 = OperatorMatrix(
      SparseMat(second_quantize_h(space, 0, eps).sparse() + second_quantize_h(space, 1, eps).sparse()),
      true);

  // Interaction schedule.
  for (const auto& seg : field.segments) {
    if (static_cast<int>(seg.a.size()) != g)
      throw std::invalid_argument("build_dirac_pair: field must cover every site");
    for (const Mat& ax : seg.a)
      if (ax.rows() != 2 || ax.cols() != 2 || (ax - ax.adjoint()).cwiseAbs().maxCoeff() > 1e-12)
        throw std::invalid_argument("build_dirac_pair: field must be Hermitian 2x2 per site");
    m.hint_schedule.emplace_back(
        seg.t_until, dirac_hint_matrix(space, art->u_plus, art->s_minus, seg.a, default_tol()));
  }

  // Position POVM: per species and sector, project the extended site PVM
  // through the Slater embedding; joint cells are sector-blocked Kronecker
  // products.
  auto extended = std::make_shared<FockSpace>(
      LatticeSpec{2 * g, 1.0, Boundary::Periodic},
      std::vector<SpeciesSpec>{{Statistics::Fermi, std::min(pair_cap, 2 * g), 0, "el"},
                               {Statistics::Fermi, std::min(pair_cap, 2 * g), 0, "po"}},
      pair_cap);
  art->extended = extended;

  // Per-species per-count embeddings and position groupings.
  const int max_n = std::min(pair_cap, g);
  std::vector<Mat> embed(max_n + 1);                       // mode -> extended, per count
  std::vector<std::vector<std::vector<int>>> ext_occ(max_n + 1), mode_occ(max_n + 1);
  std::vector<std::vector<std::string>> pos_labels(max_n + 1);  // per count: distinct multisets
  std::vector<std::vector<int>> pos_of_ext(max_n + 1);          // ext row -> multiset ordinal
  {
    // Single-species scratch spaces give the canonical subset enumerations.
    FockSpace mode_sp({g, 1.0, Boundary::Periodic},
                      {{Statistics::Fermi, max_n, 0, "m"}});
    FockSpace ext_sp({2 * g, 1.0, Boundary::Periodic},
                     {{Statistics::Fermi, std::min(pair_cap, 2 * g), 0, "e"}});
    for (int n = 0; n <= max_n; ++n) {
      mode_occ[n] = occupied_lists(mode_sp, 0, n);
      ext_occ[n] = occupied_lists(ext_sp, 0, n);
      embed[n] = sector_embedding(art->u_plus, ext_occ[n], mode_occ[n]);
      std::map<std::string, int> seen;
      pos_of_ext[n].resize(ext_occ[n].size());
      for (std::size_t r = 0; r < ext_occ[n].size(); ++r) {
        const std::string key = multiset_label(ext_occ[n][r]);
        auto [it, inserted] = seen.try_emplace(key, static_cast<int>(pos_labels[n].size()));
        if (inserted) pos_labels[n].push_back(key);
        pos_of_ext[n][r] = it->second;
      }
    }
  }

  // Per-species position cells on the mode sectors.
  std::vector<std::vector<Mat>> cells_by_count(max_n + 1);
  for (int n = 0; n <= max_n; ++n) {
    cells_by_count[n].resize(pos_labels[n].size());
    for (std::size_t cidx = 0; cidx < pos_labels[n].size(); ++cidx) {
      std::vector<int> rows;
      for (std::size_t r = 0; r < pos_of_ext[n].size(); ++r)
        if (pos_of_ext[n][r] == static_cast<int>(cidx)) rows.push_back(static_cast<int>(r));
      Mat block(rows.size(), embed[n].cols());
      for (std::size_t r = 0; r < rows.size(); ++r) block.row(r) = embed[n].row(rows[r]);
      cells_by_count[n][cidx] = block.adjoint() * block;
    }
  }

  // Assemble joint cells, labels, sectors, charges.
  std::vector<SparseMat> cells;
  for (int sec = 0; sec < space.sectors(); ++sec) {
    const int nel = space.sector_counts(sec)[0];
    const int npo = space.sector_counts(sec)[1];
    const int offset = space.sector_begin(sec);
    const int del = static_cast<int>(mode_occ[nel].size());
    const int dpo = static_cast<int>(mode_occ[npo].size());
    for (std::size_t ce = 0; ce < pos_labels[nel].size(); ++ce)
      for (std::size_t cp = 0; cp < pos_labels[npo].size(); ++cp) {
        Mat cell = Mat::Zero(space.dim(), space.dim());
        // kron(el, po) matches the species-major basis layout of the sector.
        for (int i = 0; i < del; ++i)
          for (int ip = 0; ip < del; ++ip)
            for (int j = 0; j < dpo; ++j)
              for (int jp = 0; jp < dpo; ++jp)
                cell(offset + i * dpo + j, offset + ip * dpo + jp) =
                    cells_by_count[nel][ce](i, ip) * cells_by_count[npo][cp](j, jp);
        cells.push_back(cell.sparseView(1.0, 1e-300));
        m.config_labels.push_back("el:" + pos_labels[nel][ce] + "|po:" + pos_labels[npo][cp]);
        m.config_sector.push_back(sec);
        m.config_charge.push_back(npo - nel);
      }
  }
  m.povm = PovmFamily::from_cells(PovmFamily::Kind::POVM, std::move(cells), m.config_labels);

  // Extended-basis embedding and partition (for diagrams and cross-checks).
  {
    std::vector<Triplet> trips;
    std::map<std::pair<int, int>, int> ext_sector_of;  // (nel, npo) -> extended sector id
    for (int s = 0; s < extended->sectors(); ++s)
      ext_sector_of[{extended->sector_counts(s)[0], extended->sector_counts(s)[1]}] = s;
    for (int sec = 0; sec < space.sectors(); ++sec) {
      const int nel = space.sector_counts(sec)[0];
      const int npo = space.sector_counts(sec)[1];
      const int dpo = static_cast<int>(mode_occ[npo].size());
      const int ext_sec = ext_sector_of.at({nel, npo});
      const int ext_dpo = static_cast<int>(ext_occ[npo].size());
      for (int i = 0; i < static_cast<int>(ext_occ[nel].size()); ++i)
        for (int j = 0; j < ext_dpo; ++j)
          for (int ip = 0; ip < static_cast<int>(mode_occ[nel].size()); ++ip)
            for (int jp = 0; jp < dpo; ++jp) {
              const cplx v = embed[nel](i, ip) * embed[npo](j, jp);
              if (std::abs(v) < 1e-300) continue;
              trips.emplace_back(extended->sector_begin(ext_sec) + i * ext_dpo + j,
                                 space.sector_begin(sec) + ip * dpo + jp, v);
            }
    }
    SparseMat e(extended->dim(), space.dim());
    e.setFromTriplets(trips.begin(), trips.end());
    art->embedding = e;

    // Partition of the extended basis by position configurations, aligned
    // with the model's cell indices.
    std::map<std::string, int> cell_of_label;
    for (std::size_t i = 0; i < m.config_labels.size(); ++i)
      cell_of_label[m.config_labels[i]] = static_cast<int>(i);
    auto part = std::make_shared<ConfigPartition>();
    part->basis_dim = extended->dim();
    part->fibers.resize(m.config_labels.size());
    part->labels = m.config_labels;
    for (int i = 0; i < extended->dim(); ++i) {
      std::vector<int> el_sites, po_sites;
      for (int s = 0; s < 2 * g; ++s) {
        for (int k = 0; k < extended->config(i).occupation[0][s]; ++k) el_sites.push_back(s);
        for (int k = 0; k < extended->config(i).occupation[1][s]; ++k) po_sites.push_back(s);
      }
      const std::string label = "el:" + multiset_label(el_sites) + "|po:" + multiset_label(po_sites);
      part->fibers[cell_of_label.at(label)].push_back(i);
    }
    art->partition = part;
    art->config_of_ext.resize(extended->dim());
    for (int q = 0; q < part->configs(); ++q)
      for (int i : part->fibers[q]) art->config_of_ext[i] = q;
  }

  // Field-operator realization on the extended space.  The pair kernels of
  // the free part vanish identically (P_+ h0 P_- = 0), so one assembler
  // covers both H0 and the interaction.
  auto assemble_extended = [&](const Mat& a_mat) {
    const Mat& p_plus = art->s_plus;
    const Mat& cm = art->s_minus;
    Mat k_el = p_plus * a_mat * p_plus;
    Mat k_pos = -(cm * a_mat.transpose() * cm.adjoint());
    Mat k_ann = cm.conjugate() * a_mat * p_plus;
    SparseMat o = two_mode_term(*art->extended, {0, LadderKind::Create},
                                {0, LadderKind::Annihilate}, k_el);
    o += two_mode_term(*art->extended, {1, LadderKind::Create}, {1, LadderKind::Annihilate}, k_pos);
    SparseMat t2 =
        two_mode_term(*art->extended, {1, LadderKind::Annihilate}, {0, LadderKind::Annihilate}, k_ann);
    o += t2;
    o += SparseMat(t2.adjoint());
    if (hermiticity_defect(o) > 1e-11)
      throw std::runtime_error("build_dirac_pair: extended kernel not Hermitian");
    return o;
  };
  art->h0_ext = assemble_extended(h1);
  for (const auto& seg : field.segments)
    art->hint_ext.emplace_back(seg.t_until, assemble_extended(field_block_matrix(seg.a)));

  // The extended kernels intertwine the embedding: E^dag O E = H on modes.
  {
    Mat e = Mat(art->embedding);
    const double d0 = (e.adjoint() * Mat(art->h0_ext) * e - m.h0.dense()).cwiseAbs().maxCoeff();
    if (d0 > 1e-10)
      throw std::runtime_error("build_dirac_pair: extended free kernel fails to restrict to H0");
    for (std::size_t s = 0; s < field.segments.size(); ++s) {
      const double di = (e.adjoint() * Mat(art->hint_ext[s].second) * e -
                         m.hint_schedule[s].second.dense())
                            .cwiseAbs()
                            .maxCoeff();
      if (di > 1e-10)
        throw std::runtime_error(
            "build_dirac_pair: extended interaction kernel fails to restrict to Hint");
    }
  }

  m.dirac = art;
  m.recipe = BellModel::RateRecipe::Additive;
  return m;
}

KernelDiagram dirac_interaction_diagram(const BellModel& model, double t) {
  if (model.kind != "dirac-pair")
    throw std::invalid_argument("dirac_interaction_diagram: wrong model");
  const auto art = model.dirac;
  const auto ext = art->extended;
  const int g = static_cast<int>(art->energies.size());
  Mat a_mat = field_block_matrix(model.field->at(t));
  // Extended-space kernels of the four normal-ordered terms.
  Mat p_plus = art->s_plus;
  Mat cm = art->s_minus;
  auto k_el = std::make_shared<Mat>(p_plus * a_mat * p_plus);
  auto k_pos = std::make_shared<Mat>(cm * a_mat.transpose() * cm.adjoint());
  auto k_ann = std::make_shared<Mat>(cm.conjugate() * a_mat * p_plus);
  auto k_crea = std::make_shared<Mat>(p_plus * a_mat * cm.transpose());

  auto part = art->partition;
  // Destination lookup: extended basis index -> (config, offset in fiber).
  auto locate = std::make_shared<std::vector<std::pair<int, int>>>(ext->dim());
  for (int q = 0; q < part->configs(); ++q)
    for (std::size_t k = 0; k < part->fibers[q].size(); ++k)
      (*locate)[part->fibers[q][k]] = {q, static_cast<int>(k)};

  // One transition block: sum over spinor pairs of two-mode ladder products
  // applied to every fiber element (opb acts first).
  auto block_for = [ext, part, locate](int src, TwoModeOp opa, TwoModeOp opb, int site_a,
                                       int site_b, const Mat& kernel, double sign) {
    const auto& fiber = part->fibers[src];
    Mat amp;
    int dest = -1;
    for (std::size_t col = 0; col < fiber.size(); ++col) {
      const Configuration& c = ext->config(fiber[col]);
      for (int mb = 0; mb < 2; ++mb) {
        LadderResult rb = apply_ladder(*ext, c, opb.species, 2 * site_b + mb, opb.kind);
        if (!rb.ok) continue;
        for (int ma = 0; ma < 2; ++ma) {
          const cplx k = kernel(2 * site_a + ma, 2 * site_b + mb);
          if (k == cplx(0.0)) continue;
          LadderResult ra = apply_ladder(*ext, rb.config, opa.species, 2 * site_a + ma, opa.kind);
          if (!ra.ok) continue;
          const int idx = ext->index_of(ra.config);
          if (idx < 0) continue;
          const auto [q, offset] = (*locate)[idx];
          if (dest < 0) {
            dest = q;
            amp = Mat::Zero(part->fibers[q].size(), fiber.size());
          } else if (q != dest) {
            throw std::logic_error("dirac_interaction_diagram: inconsistent destination");
          }
          amp(offset, col) += sign * k * rb.amplitude * ra.amplitude;
        }
      }
    }
    return std::pair<int, Mat>{dest, amp};
  };

  std::vector<std::string> slots{"class", "s1", "s2"};
  return KernelDiagram(part, part, slots,
                       [g, block_for, k_el, k_pos, k_ann, k_crea](int src) {
    std::vector<DiagramTransition> ts;
    auto emit = [&](int cls, int s1, int s2, std::pair<int, Mat> block) {
      if (block.first < 0 || block.second.size() == 0) return;
      if (block.second.cwiseAbs().maxCoeff() == 0.0) return;
      ts.push_back({{cls, s1, s2}, 1.0, block.first, std::move(block.second)});
    };
    for (int s1 = 0; s1 < g; ++s1)
      for (int s2 = 0; s2 < g; ++s2) {
        // Single-electron move s2 -> s1.
        emit(0, s1, s2,
             block_for(src, {0, LadderKind::Create}, {0, LadderKind::Annihilate}, s1, s2, *k_el,
                       1.0));
        // Single-positron move s2 -> s1 (normal-ordered sign).
        emit(1, s1, s2,
             block_for(src, {1, LadderKind::Create}, {1, LadderKind::Annihilate}, s1, s2, *k_pos,
                       -1.0));
        // Pair annihilation: positron at s1, electron at s2 disappear.
        emit(2, s1, s2,
             block_for(src, {1, LadderKind::Annihilate}, {0, LadderKind::Annihilate}, s1, s2,
                       *k_ann, 1.0));
        // Pair creation: electron at s1, positron at s2 appear.
        emit(3, s1, s2,
             block_for(src, {0, LadderKind::Create}, {1, LadderKind::Create}, s1, s2, *k_crea,
                       1.0));
      }
    return ts;
  });
}

Vec lattice_packet_state(const BellModel& model, double center, double width, double momentum) {
  if (model.kind != "bell-lattice")
    throw std::invalid_argument("lattice_packet_state: wrong model");
  const int g = model.dim();
  const double a = model.space->lattice().spacing;
  const double length = g * a;
  Vec psi(g);
  for (int s = 0; s < g; ++s) {
    double d = std::abs(a * s - center);
    d = std::min(d, length - d);  // minimal image
    psi[s] = std::exp(cplx(-d * d / (4.0 * width * width), momentum * a * s));
  }
  return psi / psi.norm();
}

Vec crea1_packet_state(const BellModel& model, double center, double width, double momentum) {
  if (model.kind != "crea1") throw std::invalid_argument("crea1_packet_state: wrong model");
  const FockSpace& space = *model.space;
  const int g = space.lattice().sites;
  const double a = space.lattice().spacing;
  const double length = g * a;
  Vec psi = Vec::Zero(space.dim());
  for (int i = 0; i < space.dim(); ++i) {
    const Configuration& c = space.config(i);
    if (c.count(1) != 0) continue;  // boson vacuum
    cplx amp = 1.0;
    for (int s = 0; s < g; ++s)
      for (int k = 0; k < c.occupation[0][s]; ++k) {
        double d = std::abs(a * s - center);
        d = std::min(d, length - d);
        amp *= std::exp(cplx(-d * d / (4.0 * width * width), momentum * a * s));
      }
    psi[i] = amp;
  }
  const double n = psi.norm();
  if (!(n > 0.0)) throw std::runtime_error("crea1_packet_state: empty projection");
  return psi / n;
}

Vec spread_random_state(const BellModel& model, std::uint64_t seed) {
  CounterRng rng(seed);
  Vec psi(model.dim());
  for (int i = 0; i < model.dim(); ++i) {
    const double r = 0.5 + rng.u01();
    const double theta = 2.0 * M_PI * rng.u01();
    psi[i] = std::polar(r, theta);
  }
  return psi / psi.norm();
}

JumpClass classify_jump(const BellModel& model, int from, int to) {
  if (from == to) return JumpClass::Other;
  auto occupation_of = [&](int cell) -> Configuration {
    if (model.kind == "dirac-pair") {
      // Parse the label back into occupations (cells are not basis states).
      Configuration c;
      const int g = model.space->lattice().sites;
      c.occupation.assign(2, std::vector<std::uint8_t>(g, 0));
      const std::string& label = model.config_labels[cell];
      int species = -1;
      int value = -1;
      for (std::size_t i = 0; i < label.size(); ++i) {
        const char ch = label[i];
        if (ch == ':') {
          ++species;
          value = -1;
        } else if (ch >= '0' && ch <= '9') {
          value = (value < 0 ? 0 : value * 10) + (ch - '0');
        }
        if (value >= 0 && (i + 1 == label.size() || label[i + 1] == ',' || label[i + 1] == '|')) {
          ++c.occupation[species][value];
          value = -1;
        }
      }
      return c;
    }
    return model.space->config(cell);
  };
  Configuration a = occupation_of(from), b = occupation_of(to);
  int changed_species = 0;
  int move_species = -1;
  std::vector<int> gain(a.occupation.size(), 0), loss(a.occupation.size(), 0);
  for (std::size_t sp = 0; sp < a.occupation.size(); ++sp) {
    for (std::size_t s = 0; s < a.occupation[sp].size(); ++s) {
      const int d = int(b.occupation[sp][s]) - int(a.occupation[sp][s]);
      if (d > 0) gain[sp] += d;
      if (d < 0) loss[sp] -= d;
    }
    if (gain[sp] || loss[sp]) {
      ++changed_species;
      move_species = static_cast<int>(sp);
    }
  }
  if (changed_species == 1 && gain[move_species] == 1 && loss[move_species] == 1)
    return JumpClass::SingleMove;
  if (model.kind == "crea1" && changed_species == 1 && move_species == 1) {
    if (gain[1] == 1 && loss[1] == 0) return JumpClass::BosonCreate;
    if (gain[1] == 0 && loss[1] == 1) return JumpClass::BosonAnnihilate;
  }
  if (model.kind == "dirac-pair" && changed_species == 2) {
    if (gain[0] == 1 && gain[1] == 1 && !loss[0] && !loss[1]) return JumpClass::PairCreate;
    if (loss[0] == 1 && loss[1] == 1 && !gain[0] && !gain[1]) return JumpClass::PairAnnihilate;
  }
  return JumpClass::Other;
}

}  // namespace bellsim
