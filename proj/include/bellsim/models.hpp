#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bellsim/diagrams.hpp"
#include "bellsim/fock.hpp"
#include "bellsim/hilbert.hpp"
#include "bellsim/rates.hpp"
#include "bellsim/types.hpp"

namespace bellsim {

/// Piecewise-constant external-field schedule for the pair-creation model:
/// per segment, one Hermitian 2x2 spinor matrix per lattice site.
struct FieldSchedule {
  struct Segment {
    double t_until = 0.0;  // segment is active for t < t_until (last one: forever)
    std::vector<Mat> a;    // per site, 2x2 Hermitian
  };
  std::vector<Segment> segments;

  static FieldSchedule constant(std::vector<Mat> a);
  const std::vector<Mat>& at(double t) const;
  bool time_dependent() const { return segments.size() > 1; }
};

/// Internal artifacts of the Dirac pair model kept for verification: the
/// one-particle spectral split, charge conjugation, the extended site-spinor
/// realization and its embedding.
struct DiracArtifacts {
  Mat h_one;            // 2G x 2G lattice Dirac operator
  Mat u_plus;           // positive-energy eigenvectors (columns)
  RVec energies;        // positive eigenvalues, ascending
  Mat charge_conj;      // matrix part of the antiunitary C (applied after conj)
  Mat s_plus;           // P_+ kernel (projector matrix)
  Mat s_minus;          // C P_- kernel columns
  std::shared_ptr<FockSpace> extended;       // site-spinor joint Fock space
  SparseMat embedding;                       // extended <- mode basis isometry
  std::shared_ptr<ConfigPartition> partition;  // extended basis grouped by position configs
  // Field-operator realization on the extended space (the rate kernel): its
  // position-PVM kernel carries exactly the four transition classes and it
  // intertwines the embedding, O_ext E = E H.
  SparseMat h0_ext;
  std::vector<std::pair<double, SparseMat>> hint_ext;  // (t_until, kernel)
  std::vector<int> config_of_ext;                      // extended basis -> cell index
};

/// A fully assembled Bell-type model: truncated Hilbert space, H0 + Hint
/// schedule, configuration POVM, and the jump-rate recipe.
struct BellModel {
  std::string kind;
  PhysicalConstants constants;
  std::shared_ptr<FockSpace> space;  // null for plain-lattice models

  OperatorMatrix h0;
  std::vector<std::pair<double, OperatorMatrix>> hint_schedule;  // (t_until, Hint)
  PovmFamily povm;

  /// Total: minimal rates of H0 + Hint.  Additive: sum of the minimal-rate
  /// tables of the two parts (process additivity; used when their jump
  /// supports overlap, as in the pair-creation model).
  enum class RateRecipe { Total, Additive };
  RateRecipe recipe = RateRecipe::Total;

  std::vector<std::string> config_labels;
  std::vector<int> config_sector;
  std::vector<int> config_charge;  // pair model: positron minus electron count

  std::optional<SmearingProfile> phi;  // crea1 smearing (kept for the oracle)
  std::optional<FieldSchedule> field;  // dirac external field
  std::shared_ptr<DiracArtifacts> dirac;

  int dim() const { return h0.dim(); }
  int configs() const { return povm.cells(); }
  bool time_dependent() const { return hint_schedule.size() > 1; }
  const OperatorMatrix& hint(double t) const;
  OperatorMatrix hamiltonian(double t) const;
  JumpRateTable rates(const Vec& psi, double t, const Tolerances& tol = default_tol()) const;
  /// Born distribution over the configuration cells (fiber norms for the
  /// pair model, coordinate amplitudes otherwise; identical to the POVM).
  RVec born(const Vec& psi) const;

  /// Structured-text manifest (parameters, dimension, sector table, spectrum
  /// summary) plus a stable FNV-1a hash of it.
  std::string manifest() const;
  std::string manifest_hash() const;
};

/// Two-level toy (H = hbar*omega*sigma_x, coordinate PVM): the worked example.
BellModel build_two_level(double omega, double hbar = 1.0);

/// Bell's lattice model: H = -(hbar^2/2m) Delta_a + V, site PVM, all-jump.
BellModel build_bell_lattice(const LatticeSpec& lattice, double mass, const RVec& potential,
                             double hbar = 1.0);

/// Emission-absorption model on a 1D lattice: n fermions (conserved), bosons
/// truncated at M, Hint = sum_x psi^dag(x)(a^dag_phi(x) + a_phi(x)) psi(x)
/// assembled via the diagram chain and cross-checked against the direct
/// operator construction.
BellModel build_crea1(const LatticeSpec& lattice, int fermions, int boson_cap,
                      const SmearingProfile& phi, double fermion_mass, double boson_mass,
                      double hbar = 1.0);

/// Second-quantized lattice Dirac field in an external field: free process =
/// minimal jump process of the projected free Hamiltonian; Hint carries the
/// four normal-ordered field-operator terms.
BellModel build_dirac_pair(const LatticeSpec& lattice, double mass, const FieldSchedule& field,
                           int pair_cap = 2, double hbar = 1.0, double light_speed = 1.0);

/// Direct occupation-representation evaluation of the closed-form creation /
/// annihilation rates of the emission-absorption model; the independent
/// oracle for the generic pipeline.
std::vector<std::pair<int, double>> closed_form_crea1_rates(const BellModel& model, const Vec& psi,
                                                            int source);

/// The interaction kernel as a diagram (crea1: the integrated operator chain
/// restricted to the model space; dirac: the four-term extended-space
/// diagram over the position-configuration partition).
KernelDiagram crea1_interaction_diagram(const BellModel& model);
KernelDiagram dirac_interaction_diagram(const BellModel& model, double t = 0.0);

/// One addend of the pair model's additive rate recipe.
JumpRateTable dirac_part_rates(const BellModel& model, const Vec& psi, double t,
                               bool interaction);

/// State presets.
Vec lattice_packet_state(const BellModel& model, double center, double width, double momentum);
Vec crea1_packet_state(const BellModel& model, double center, double width, double momentum);
Vec spread_random_state(const BellModel& model, std::uint64_t seed);

/// Jump classification used by the support tests and trajectory audits.
enum class JumpClass {
  SingleMove,      // one particle of one species moved
  BosonCreate,
  BosonAnnihilate,
  PairCreate,
  PairAnnihilate,
  Other
};
JumpClass classify_jump(const BellModel& model, int from, int to);

}  // namespace bellsim
