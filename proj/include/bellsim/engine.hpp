#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bellsim/models.hpp"
#include "bellsim/rng.hpp"
#include "bellsim/stats.hpp"
#include "bellsim/types.hpp"

namespace bellsim {

enum class EventKind { Init, Jump, SectorMove, Escape };

struct TrajectoryEvent {
  double time = 0.0;
  int config = -1;
  EventKind kind = EventKind::Init;
};

struct Trajectory {
  std::uint64_t seed = 0;
  std::vector<TrajectoryEvent> events;
  bool truncated = false;  // event cap hit
  bool escaped = false;    // visited a zero-probability source

  int config_at(double t) const;
  int jump_count() const;
};

struct EngineOptions {
  double horizon = 1.0;
  double dt = 1e-3;
  std::vector<double> sample_times;   // defaults to 5 evenly spaced times
  long long event_cap = 1'000'000;
  int workers = 0;                    // 0: read BELLSIM_WORKERS, else 1
  bool freeze_state = false;          // autonomous test mode: rates fixed at t = 0
  Tolerances tol;
};

struct EnsembleReport {
  int trajectories = 0;
  std::vector<double> sample_times;
  std::vector<RVec> empirical;        // per sample time, over configurations
  std::vector<RVec> born;             // reference at the same times
  std::vector<double> tv;             // total variation distances
  std::vector<double> tv_bound;       // 3-sigma multinomial bounds
  std::vector<double> max_abs_z;      // worst standardized residual per time
  SummaryStats jump_counts;
  double escaped_weight = 0.0;        // fraction excluded from the statistics
  double wall_seconds = 0.0;
  bool equivariance_pass = false;     // every time within bound

  std::string csv() const;            // time, tv, bound, max|z|
  std::string summary() const;
};

/// Precomputed unitary evolution of the state on the step grid, shared
/// read-only by all trajectories of an ensemble.
class StateSchedule {
 public:
  StateSchedule(const BellModel& model, const Vec& psi0, double horizon, double dt,
                bool freeze = false);

  int steps() const { return static_cast<int>(states_.size()) - 1; }
  double dt() const { return dt_; }
  const Vec& state(int step) const { return states_[step]; }
  double time(int step) const { return step * dt_; }

 private:
  double dt_;
  std::vector<Vec> states_;
};

/// Sample one piecewise-deterministic trajectory; rates recomputed every
/// step, waiting times by trapezoidal hazard accumulation against unit-mean
/// exponential thresholds, destinations from the crossing step's start.
Trajectory simulate_trajectory(const BellModel& model, const Vec& psi0, int q0,
                               const EngineOptions& opt, std::uint64_t seed);

enum class InitialSampling { Born, Fixed };

/// Independent trajectories seeded base_seed + index; parallel execution is
/// bit-identical to serial for the same seeds.
std::vector<Trajectory> run_trajectories(const BellModel& model, const Vec& psi0,
                                         InitialSampling sampling, int q0, int n_traj,
                                         const EngineOptions& opt, std::uint64_t base_seed);

EnsembleReport run_ensemble(const BellModel& model, const Vec& psi0, InitialSampling sampling,
                            int q0, int n_traj, const EngineOptions& opt, std::uint64_t base_seed);

/// Master-equation evolution d rho/dt = L_t rho (classical RK4, rates from
/// the exact state at the substep times).  Also returns the Born reference
/// and the running maximum pointwise residual.
struct MasterReport {
  std::vector<double> times;
  std::vector<RVec> rho;
  double max_residual = 0.0;     // vs |Psi_t|^2 when started from it
  double mass_drift = 0.0;
  bool unstable = false;         // mass drift beyond tolerance
};

MasterReport evolve_master(const RVec& rho0, const BellModel& model, const Vec& psi0,
                           double horizon, double dt, int sample_stride = 1);

/// run_ensemble against the Born reference with the 3-sigma multinomial
/// verdict (equivariance as a statistical test).
EnsembleReport equivariance_report(const BellModel& model, const Vec& psi0, int n_traj,
                                   const EngineOptions& opt, std::uint64_t base_seed);

struct SymmetryReport {
  bool applicable = false;  // H commutes with the shift
  double max_residual = 0.0;
  bool passed = false;
};

/// Translation covariance of the rates on periodic models:
/// sigma^{U psi}(q|q') = sigma^psi(shift q|shift q').
SymmetryReport translation_symmetry_check(const BellModel& model, const Vec& psi, int shift);

/// Serialization: JSON-lines trajectories, CSV reports, run manifest.
std::string trajectory_jsonl(const BellModel& model, const Trajectory& t);
std::string run_manifest(const BellModel& model, const EngineOptions& opt, std::uint64_t seed,
                         int n_traj);

int worker_count(const EngineOptions& opt);

}  // namespace bellsim
