#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "bellsim/fock.hpp"
#include "bellsim/hilbert.hpp"
#include "bellsim/rates.hpp"
#include "bellsim/types.hpp"

namespace bellsim {

/// Partition of a Hilbert basis into configurations; fiber q = the basis
/// indices whose configuration is q.  The occupation basis is the identity
/// partition (rank-1 fibers); multi-dimensional fibers carry internal
/// (spinor) structure.
struct ConfigPartition {
  int basis_dim = 0;
  std::vector<std::vector<int>> fibers;   // per configuration
  std::vector<std::string> labels;

  int configs() const { return static_cast<int>(fibers.size()); }
  static ConfigPartition identity(int dim, std::vector<std::string> labels = {});

  /// Fiber component of a full vector.
  Vec slice(const Vec& psi, int config) const;
  double weight(const Vec& psi, int config) const;  // squared fiber norm
};

/// One parameter value of a diagram at a fixed source: slot values, measure
/// weight, destination configuration, and the fiber-to-fiber amplitude.
struct DiagramTransition {
  std::vector<int> slots;
  double weight = 1.0;
  int dest = -1;
  Mat amplitude;  // rows: dest fiber, cols: source fiber
};

/// Operator represented as parametrized transitions with amplitudes
/// (transition map F, amplitude K, parameter set Lambda).  Expansion is lazy
/// per source configuration; full matrices are realized only on demand.
class KernelDiagram {
 public:
  using Expand = std::function<std::vector<DiagramTransition>(int source)>;

  KernelDiagram() = default;
  KernelDiagram(std::shared_ptr<const ConfigPartition> domain,
                std::shared_ptr<const ConfigPartition> codomain,
                std::vector<std::string> slot_names, Expand expand);

  const ConfigPartition& domain() const { return *domain_; }
  const ConfigPartition& codomain() const { return *codomain_; }
  std::shared_ptr<const ConfigPartition> domain_ptr() const { return domain_; }
  std::shared_ptr<const ConfigPartition> codomain_ptr() const { return codomain_; }
  const std::vector<std::string>& slot_names() const { return slot_names_; }

  std::vector<DiagramTransition> expand(int source) const { return expand_(source); }

  /// <i|O|j> assembled from all transitions (tests and cross-checks).
  Mat realize() const;

  /// Human-readable transition listing per source.
  std::string dump() const;

 private:
  std::shared_ptr<const ConfigPartition> domain_, codomain_;
  std::vector<std::string> slot_names_;
  Expand expand_;
};

/// Elementary diagrams on a Fock occupation basis.  `center` is either a
/// fixed site or the name of a parameter slot shared across a concatenation
/// chain (the paper's free r in psi^dag(r) a_phi(r) psi(r)).
struct SiteOrSlot {
  int site = -1;
  std::string slot;
  static SiteOrSlot at(int s) { return SiteOrSlot{s, {}}; }
  static SiteOrSlot var(std::string name) { return SiteOrSlot{-1, std::move(name)}; }
  bool is_slot() const { return !slot.empty(); }
};

enum class ElementaryKind { Create, Annihilate, Multiply };

/// Multiply: singleton-parameter diagonal diagram q -> q with amplitude V(q).
KernelDiagram multiply_diagram(std::shared_ptr<const FockSpace> space, const RVec& v);

/// Unsmeared single-site ladder psi(r)/psi^dag(r): the parameter is the site
/// itself (the occupied sites for annihilation), no landing slot.
KernelDiagram point_ladder_diagram(std::shared_ptr<const FockSpace> space, int species,
                                   LadderKind kind, SiteOrSlot center);

/// Create/annihilate with a smearing profile: Lambda ranges over the landing
/// (resp. occupied) sites, amplitude phi(y - center) with occupation factors
/// and fermionic sign; truncation overflows yield no transition.
KernelDiagram ladder_diagram(std::shared_ptr<const FockSpace> space, int species,
                             ElementaryKind kind, SmearingProfile phi, SiteOrSlot center);

KernelDiagram elementary_diagram(std::shared_ptr<const FockSpace> space, int species,
                                 ElementaryKind kind, const SmearingProfile* phi = nullptr,
                                 const RVec* v = nullptr, SiteOrSlot center = SiteOrSlot::at(0));

/// Concatenation (operator product d2 * d1): parameter tuples are joined,
/// slots with equal names unify (transitions combine only when the shared
/// values agree), amplitudes compose through the intermediate configuration.
KernelDiagram concat(const KernelDiagram& d1, const KernelDiagram& d2);

/// Sum: shared-parameter transitions with equal destinations add amplitudes,
/// everything else is disjointly unioned.
KernelDiagram sum_diagrams(const KernelDiagram& d1, const KernelDiagram& d2);

/// Integrate one parameter slot with per-value weights: destinations must
/// collapse consistently over the integrated slot (checked; violations name
/// the source configuration).
KernelDiagram integrate_parameter(const KernelDiagram& d, const std::string& slot,
                                  const RVec& weights);

/// Reindex a diagram built on a larger Fock space (e.g. one containing the
/// intermediate sectors of an operator chain) onto a subspace whose
/// configurations form a subset; transitions leaving the subspace are
/// dropped (hard truncation).
KernelDiagram restrict_to_space(const KernelDiagram& d, std::shared_ptr<const FockSpace> big,
                                std::shared_ptr<const FockSpace> sub);

/// Minimal jump rates read off the diagram:
/// sigma(F(q',l)|q') = [(2/hbar) Im Psi^*(F(q',l)) K(q',l) Psi(q')]^+ w(l) / |Psi(q')|^2.
/// Off-diagonal injectivity of F(q',.) is verified (diagonal transitions are
/// multiplication parts and carry no jump).
JumpRateTable rates_from_diagram(const KernelDiagram& d, const Vec& psi, double hbar = 1.0,
                                 const Tolerances& tol = default_tol());

}  // namespace bellsim
