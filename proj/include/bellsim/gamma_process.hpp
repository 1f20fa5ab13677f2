#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "bellsim/fock.hpp"
#include "bellsim/hilbert.hpp"
#include "bellsim/rates.hpp"
#include "bellsim/types.hpp"

namespace bellsim {

/// Forward-generator action on a finite configuration set: a jump-rate table
/// plus (optionally) a deterministic velocity per configuration.  Jump parts
/// compose by rate addition, deterministic parts by velocity addition.
struct GeneratorAction {
  JumpRateTable rates;
  std::optional<RMat> velocity;  // configs x coordinates

  /// (L rho)(q); conserves total probability.
  RVec apply(const RVec& rho) const { return apply_jump_generator(rates, rho); }
};

/// Family of equivariant generators labeled by density matrices (states are
/// passed as pure densities).
struct GeneratorFamily {
  int nconf = 0;
  std::function<GeneratorAction(const Mat& w)> eval;

  GeneratorAction operator()(const Mat& w) const { return eval(w); }
  GeneratorAction from_state(const Vec& psi) const {
    return eval(psi * psi.adjoint() / psi.squaredNorm());
  }
};

/// Minimal jump process of a Hamiltonian as a density-labeled family.
GeneratorFamily minimal_jump_family(const OperatorMatrix& h, const PovmFamily& povm,
                                    double hbar = 1.0);

/// Conditional density matrix of one factor given the environment's actual
/// configuration (coordinate cells per factor).
struct ConditionalDensity {
  DensityMatrix matrix;
  std::vector<int> environment;  // per non-kept factor
};

ConditionalDensity conditional_density(const Vec& psi, const std::vector<int>& dims, int keep,
                                       const std::vector<int>& environment);
ConditionalDensity conditional_density(const Mat& w, const std::vector<int>& dims, int keep,
                                       const std::vector<int>& environment);

/// Mixed-radix helpers for product configuration spaces.
long long flatten_config(const std::vector<int>& dims, const std::vector<int>& config);
std::vector<int> unflatten_config(const std::vector<int>& dims, long long flat);

/// Direct-sum combination: on sector n the generator acts as family n
/// evaluated at the normalized projected state; sectors with negligible norm
/// carry the zero generator and are flagged.
struct SectorLayout {
  std::vector<int> begin;  // offset of each sector in the flat basis
  std::vector<int> dim;
};

GeneratorAction direct_sum_generator(const std::vector<GeneratorFamily>& families,
                                     const SectorLayout& layout, const Vec& psi,
                                     double sector_floor = 1e-14);

/// Tensor-product combination on distinguishable factors: factor i moves as
/// prescribed by its family at the conditional density matrix, the others
/// held fixed.
GeneratorAction tensor_product_generator(const std::vector<GeneratorFamily>& families,
                                         const std::vector<int>& dims, const Mat& w,
                                         double env_floor = 1e-14);

/// Second quantization of a one-particle Markov process: the n-particle
/// tensor construction on the occupation basis (permutation covariance is
/// automatic there) combined by direct sum over sectors.  The space must
/// hold a single species; particle number is conserved by the result.
GeneratorAction second_quantize_process(const GeneratorFamily& one_particle,
                                        const FockSpace& space, const Vec& psi,
                                        double sector_floor = 1e-14);

/// max_q |(L p)(q) - (2/hbar) Im <Psi|P(q) H|Psi>| with p the Born
/// distribution: the deterministic form of the equivariance condition.
double generator_equivariance_residual(const GeneratorAction& action, const Vec& psi,
                                       const OperatorMatrix& h, const PovmFamily& povm,
                                       double hbar = 1.0);
double generator_equivariance_residual(const GeneratorAction& action, const Mat& w,
                                       const OperatorMatrix& h, const PovmFamily& povm,
                                       double hbar = 1.0);

}  // namespace bellsim
