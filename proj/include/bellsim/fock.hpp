#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "bellsim/hilbert.hpp"
#include "bellsim/types.hpp"

namespace bellsim {

enum class Boundary { Periodic, Open };
enum class Statistics { Bose, Fermi };
enum class LadderKind { Create, Annihilate };

struct LatticeSpec {
  int sites = 2;         // G
  double spacing = 1.0;  // a
  Boundary boundary = Boundary::Periodic;
};

/// One particle species on the lattice.  max_count is a hard truncation;
/// min_count > 0 pins a conserved particle number (e.g. the crea1 fermions).
struct SpeciesSpec {
  Statistics statistics = Statistics::Bose;
  int max_count = 1;
  int min_count = 0;
  std::string name;
};

/// Occupation numbers per species, site-indexed.
struct Configuration {
  std::vector<std::vector<std::uint8_t>> occupation;  // [species][site]

  int count(int species) const;
  int total() const;
  std::string label(const std::vector<SpeciesSpec>& species) const;
  bool operator==(const Configuration&) const = default;
};

/// Real array over lattice displacements (periodic indexing); the sampled
/// profile phi used to smear ladder operators.
struct SmearingProfile {
  std::vector<double> values;  // phi(d) for d = 0..G-1, d taken mod G

  double at(int displacement, int sites, Boundary boundary) const;
  static SmearingProfile delta(int sites, int at = 0);
  /// Gaussian in the wrapped lattice distance, amplitude * exp(-d^2/(2 w^2)),
  /// optionally cut to exact zero beyond `support` sites.
  static SmearingProfile gaussian(int sites, double amplitude, double width,
                                  std::optional<int> support = std::nullopt);
};

/// Enumerated truncated Fock basis over a finite 1D lattice.
///
/// Canonical ordering: sectors ascend lexicographically in the per-species
/// particle-count tuple; within a sector, configurations ascend
/// lexicographically in the concatenated occupied-position lists (species 0
/// outermost).  The enumeration is deterministic and serialized byte-stably.
class FockSpace {
 public:
  FockSpace(LatticeSpec lattice, std::vector<SpeciesSpec> species,
            std::optional<int> joint_cap = std::nullopt,
            long long basis_size_cap = 2'000'000);

  const LatticeSpec& lattice() const { return lattice_; }
  const std::vector<SpeciesSpec>& species() const { return species_; }
  int num_species() const { return static_cast<int>(species_.size()); }
  int dim() const { return static_cast<int>(basis_.size()); }
  int sectors() const { return static_cast<int>(sector_counts_.size()); }

  const Configuration& config(int index) const { return basis_[index]; }
  int index_of(const Configuration& c) const;           // -1 if absent
  int sector_of(int index) const { return sector_of_[index]; }
  const std::vector<int>& sector_counts(int sector) const { return sector_counts_[sector]; }
  int sector_dim(int sector) const { return sector_end_[sector] - sector_begin_[sector]; }
  int sector_begin(int sector) const { return sector_begin_[sector]; }
  BasisIndex basis_index(int index) const;

  std::string label(int index) const { return basis_[index].label(species_); }
  std::vector<std::string> labels() const;

  /// Structured-text description (lattice, species, dimension, sector table).
  std::string manifest() const;

 private:
  LatticeSpec lattice_;
  std::vector<SpeciesSpec> species_;
  std::vector<Configuration> basis_;
  std::vector<int> sector_of_;
  std::vector<std::vector<int>> sector_counts_;
  std::vector<int> sector_begin_, sector_end_;
  std::unordered_map<std::string, int> index_;

  static std::string key(const Configuration& c);
};

/// Single-site ladder operator with occupation-number matrix elements;
/// fermionic signs use one global Jordan-Wigner order (species-major, sites
/// ascending, fermionic species only).  Creation beyond the truncation maps
/// to zero.
OperatorMatrix ladder(const FockSpace& space, int species, int site, LadderKind kind);

/// a_phi(r) = sum_y phi(y - r) a(y) and its adjoint.
OperatorMatrix smeared_ladder(const FockSpace& space, int species, int site,
                              const SmearingProfile& phi, LadderKind kind);

/// Second quantization of a one-particle operator: sum_{s,s'} h1(s,s')
/// a^dag(s) a(s'); block diagonal over sectors, commutes with the species
/// number operator.
OperatorMatrix second_quantize_h(const FockSpace& space, int species, const Mat& h1,
                                 const Tolerances& tol = default_tol());

/// Coordinate PVM on the occupation basis (one rank-1 cell per configuration).
PovmFamily gamma_povm(const FockSpace& space);

/// N(R) = sum_{s in R} a^dag(s) a(s); built diagonally from the occupation
/// numbers (the region-counting construction); number_operator_ladder builds
/// the same matrix from ladder products for cross-checks.
OperatorMatrix number_operator(const FockSpace& space, int species, const std::vector<int>& region);
OperatorMatrix number_operator_ladder(const FockSpace& space, int species,
                                      const std::vector<int>& region);

/// Occupation helpers on raw configurations (shared with diagrams/models).
struct LadderResult {
  bool ok = false;
  Configuration config;
  double amplitude = 0.0;  // occupation factor including fermionic sign
};
LadderResult apply_ladder(const FockSpace& space, const Configuration& c, int species, int site,
                          LadderKind kind);

}  // namespace bellsim
