#include "bellsim/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace bellsim {

namespace {

using nlohmann::json;

const char* kind_name(EventKind k) {
  switch (k) {
    case EventKind::Init: return "init";
    case EventKind::Jump: return "jump";
    case EventKind::SectorMove: return "sector-move";
    case EventKind::Escape: return "escape";
  }
  return "?";
}

}  // namespace

int Trajectory::config_at(double t) const {
  int q = events.empty() ? -1 : events.front().config;
  for (const auto& e : events) {
    if (e.time > t) break;
    if (e.config >= 0) q = e.config;
  }
  return q;
}

int Trajectory::jump_count() const {
  int n = 0;
  for (const auto& e : events)
    if (e.kind == EventKind::Jump || e.kind == EventKind::SectorMove) ++n;
  return n;
}

int worker_count(const EngineOptions& opt) {
  if (opt.workers > 0) return opt.workers;
  if (const char* env = std::getenv("BELLSIM_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

StateSchedule::StateSchedule(const BellModel& model, const Vec& psi0, double horizon, double dt,
                             bool freeze)
    : dt_(dt) {
  if (!(dt > 0.0) || !(horizon >= 0.0)) throw std::invalid_argument("StateSchedule: bad grid");
  const int steps = static_cast<int>(std::llround(horizon / dt));
  states_.reserve(steps + 1);
  states_.push_back(psi0);
  if (freeze) {
    for (int k = 1; k <= steps; ++k) states_.push_back(psi0);
    return;
  }
  // One cached propagator per interaction segment.
  std::vector<std::pair<double, Propagator>> props;
  for (const auto& [until, hint] : model.hint_schedule)
    props.emplace_back(until, Propagator(model.h0.add(hint), model.constants.hbar));
  auto prop_at = [&](double t) -> const Propagator& {
    for (const auto& [until, p] : props)
      if (t < until) return p;
    return props.back().second;
  };
  for (int k = 1; k <= steps; ++k)
    states_.push_back(prop_at((k - 1) * dt).apply(states_.back(), dt));
}

namespace {

struct TableSet {
  std::vector<JumpRateTable> at_step;  // rates at the step boundaries
};

TableSet build_tables(const BellModel& model, const StateSchedule& sched, bool freeze,
                      const Tolerances& tol) {
  TableSet tables;
  tables.at_step.reserve(sched.steps() + 1);
  for (int k = 0; k <= sched.steps(); ++k) {
    if (freeze && k > 0) {
      tables.at_step.push_back(tables.at_step.front());
      continue;
    }
    tables.at_step.push_back(model.rates(sched.state(k), sched.time(k), tol));
  }
  return tables;
}

int sample_destination(const JumpRateTable& table, int source, double u) {
  const auto& row = table.out[source];
  const double total = table.total[source];
  double acc = 0.0;
  for (const auto& [dest, r] : row) {
    acc += r;
    if (u * total <= acc) return dest;
  }
  return row.empty() ? source : row.back().first;
}

Trajectory simulate_with_tables(const BellModel& model, const TableSet& tables,
                                const StateSchedule& sched, int q0, const EngineOptions& opt,
                                std::uint64_t seed, const RVec* born0) {
  Trajectory traj;
  traj.seed = seed;
  CounterRng rng(seed);
  int q = q0;
  if (born0) {
    // Born-sampled initial configuration (first draw of the substream).
    const double u = rng.u01();
    double acc = 0.0;
    q = static_cast<int>(born0->size()) - 1;
    for (int i = 0; i < born0->size(); ++i) {
      acc += (*born0)[i];
      if (u <= acc) {
        q = i;
        break;
      }
    }
  }
  traj.events.push_back({0.0, q, EventKind::Init});
  bool escape_marked = false;
  double threshold = rng.exponential();
  double hazard = 0.0;
  long long events = 0;

  for (int k = 0; k < sched.steps(); ++k) {
    const JumpRateTable& t0 = tables.at_step[k];
    const JumpRateTable& t1 = tables.at_step[k + 1];
    if (t0.flagged[q] && !escape_marked) {
      traj.events.push_back({sched.time(k), q, EventKind::Escape});
      traj.escaped = true;
      escape_marked = true;
    }
    const double dt = sched.dt();
    double tau = 0.0;  // position within the step
    while (tau < dt) {
      // Total rate is taken linear in time between the boundary tables.
      const double slope = (t1.total[q] - t0.total[q]) / dt;
      const double r_here = t0.total[q] + slope * tau;
      const double span = dt - tau;
      const double gain = 0.5 * (r_here + (r_here + slope * span)) * span;
      if (hazard + gain < threshold || gain <= 0.0) {
        hazard += gain;
        break;
      }
      // Crossing inside [tau, tau+span]: hazard + r_here s + slope s^2/2 = threshold.
      const double need = threshold - hazard;
      double s;
      if (std::abs(slope) * span < 1e-12 * std::max(r_here, 1.0)) {
        s = need / r_here;
      } else {
        const double disc = r_here * r_here + 2.0 * slope * need;
        s = (std::sqrt(std::max(disc, 0.0)) - r_here) / slope;
      }
      s = std::clamp(s, 0.0, span);
      const double t_jump = sched.time(k) + tau + s;
      // Destination from the crossing step's start table.
      const int dest = sample_destination(t0, q, rng.u01());
      const EventKind kind = (model.config_sector[dest] != model.config_sector[q])
                                 ? EventKind::SectorMove
                                 : EventKind::Jump;
      q = dest;
      traj.events.push_back({t_jump, q, kind});
      if (++events >= opt.event_cap) {
        traj.truncated = true;
        return traj;
      }
      threshold = rng.exponential();
      hazard = 0.0;
      tau += s;
      if (t0.flagged[q] && !escape_marked) {
        traj.events.push_back({t_jump, q, EventKind::Escape});
        traj.escaped = true;
        escape_marked = true;
      }
    }
  }
  return traj;
}

}  // namespace

Trajectory simulate_trajectory(const BellModel& model, const Vec& psi0, int q0,
                               const EngineOptions& opt, std::uint64_t seed) {
  if (q0 < 0 || q0 >= model.configs()) throw std::invalid_argument("simulate_trajectory: bad q0");
  StateSchedule sched(model, psi0, opt.horizon, opt.dt, opt.freeze_state);
  TableSet tables = build_tables(model, sched, opt.freeze_state, opt.tol);
  return simulate_with_tables(model, tables, sched, q0, opt, seed, nullptr);
}

std::vector<Trajectory> run_trajectories(const BellModel& model, const Vec& psi0,
                                         InitialSampling sampling, int q0, int n_traj,
                                         const EngineOptions& opt, std::uint64_t base_seed) {
  if (n_traj < 1) throw std::invalid_argument("run_trajectories: need at least one trajectory");
  StateSchedule sched(model, psi0, opt.horizon, opt.dt, opt.freeze_state);
  TableSet tables = build_tables(model, sched, opt.freeze_state, opt.tol);
  RVec born0 = model.born(psi0);
  const RVec* born_ptr = sampling == InitialSampling::Born ? &born0 : nullptr;

  std::vector<Trajectory> out(n_traj);
  const int nworkers = std::min(worker_count(opt), n_traj);
  auto work = [&](int w) {
    for (int i = w; i < n_traj; i += nworkers)
      out[i] = simulate_with_tables(model, tables, sched, q0, opt, base_seed + i, born_ptr);
  };
  if (nworkers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < nworkers; ++w) pool.emplace_back(work, w);
    for (auto& th : pool) th.join();
  }
  return out;
}

namespace {

std::vector<double> default_samples(const EngineOptions& opt) {
  if (!opt.sample_times.empty()) return opt.sample_times;
  std::vector<double> ts;
  for (int i = 1; i <= 5; ++i) ts.push_back(opt.horizon * i / 5.0);
  return ts;
}

}  // namespace

EnsembleReport run_ensemble(const BellModel& model, const Vec& psi0, InitialSampling sampling,
                            int q0, int n_traj, const EngineOptions& opt,
                            std::uint64_t base_seed) {
  const auto t_start = std::chrono::steady_clock::now();
  std::vector<Trajectory> trajs = run_trajectories(model, psi0, sampling, q0, n_traj, opt, base_seed);
  StateSchedule sched(model, psi0, opt.horizon, opt.dt, opt.freeze_state);

  EnsembleReport rep;
  rep.trajectories = n_traj;
  rep.sample_times = default_samples(opt);

  int excluded = 0;
  std::vector<double> jumps;
  jumps.reserve(trajs.size());
  for (const auto& t : trajs) {
    if (t.escaped || t.truncated) ++excluded;
    jumps.push_back(t.jump_count());
  }
  rep.jump_counts = summarize(jumps);
  rep.escaped_weight = static_cast<double>(excluded) / n_traj;
  const int used = n_traj - excluded;

  rep.equivariance_pass = true;
  for (double ts : rep.sample_times) {
    const int step = std::clamp(static_cast<int>(std::llround(ts / opt.dt)), 0, sched.steps());
    RVec emp = RVec::Zero(model.configs());
    for (const auto& t : trajs) {
      if (t.escaped || t.truncated) continue;
      emp[t.config_at(sched.time(step))] += 1.0;
    }
    if (used > 0) emp /= used;
    RVec reference = model.born(sched.state(step));
    rep.empirical.push_back(emp);
    rep.born.push_back(reference);
    rep.tv.push_back(tv_distance(emp, reference));
    rep.tv_bound.push_back(multinomial_tv_bound(reference, std::max(used, 1)));
    rep.max_abs_z.push_back(
        standardized_residuals(emp, reference, std::max(used, 1)).cwiseAbs().maxCoeff());
    if (rep.tv.back() > rep.tv_bound.back()) rep.equivariance_pass = false;
  }
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return rep;
}

std::string EnsembleReport::csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "time,tv,tv_bound,max_abs_z\n";
  for (std::size_t i = 0; i < sample_times.size(); ++i)
    os << sample_times[i] << ',' << tv[i] << ',' << tv_bound[i] << ',' << max_abs_z[i] << '\n';
  return os.str();
}

std::string EnsembleReport::summary() const {
  std::ostringstream os;
  os << "trajectories " << trajectories << "\n";
  os << "escaped_or_truncated_weight " << escaped_weight << "\n";
  os << "jumps mean " << jump_counts.mean << " min " << jump_counts.min << " max "
     << jump_counts.max << "\n";
  for (std::size_t i = 0; i < sample_times.size(); ++i)
    os << "t=" << sample_times[i] << " tv=" << tv[i] << " bound=" << tv_bound[i]
       << " max|z|=" << max_abs_z[i] << "\n";
  os << "equivariance " << (equivariance_pass ? "pass" : "fail") << "\n";
  os << "wall_seconds " << wall_seconds << "\n";
  return os.str();
}

MasterReport evolve_master(const RVec& rho0, const BellModel& model, const Vec& psi0,
                           double horizon, double dt, int sample_stride) {
  if (std::abs(rho0.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("evolve_master: rho0 is not a distribution");
  // Half-step state grid gives the RK4 substep rates.
  StateSchedule sched(model, psi0, horizon, dt / 2.0);
  const int steps = sched.steps() / 2;
  MasterReport rep;
  RVec rho = rho0;
  rep.times.push_back(0.0);
  rep.rho.push_back(rho);

  JumpRateTable table_lo = model.rates(sched.state(0), 0.0);
  for (int k = 0; k < steps; ++k) {
    const double t = k * dt;
    JumpRateTable table_mid = model.rates(sched.state(2 * k + 1), t + dt / 2.0);
    JumpRateTable table_hi = model.rates(sched.state(2 * k + 2), t + dt);
    RVec k1 = apply_jump_generator(table_lo, rho);
    RVec k2 = apply_jump_generator(table_mid, rho + (dt / 2.0) * k1);
    RVec k3 = apply_jump_generator(table_mid, rho + (dt / 2.0) * k2);
    RVec k4 = apply_jump_generator(table_hi, rho + dt * k3);
    rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    table_lo = std::move(table_hi);

    rep.mass_drift = std::max(rep.mass_drift, std::abs(rho.sum() - 1.0));
    RVec reference = model.born(sched.state(2 * k + 2));
    rep.max_residual = std::max(rep.max_residual, (rho - reference).cwiseAbs().maxCoeff());
    if ((k + 1) % sample_stride == 0 || k + 1 == steps) {
      rep.times.push_back(t + dt);
      rep.rho.push_back(rho);
    }
  }
  rep.unstable = rep.mass_drift > 1e-10;
  return rep;
}

EnsembleReport equivariance_report(const BellModel& model, const Vec& psi0, int n_traj,
                                   const EngineOptions& opt, std::uint64_t base_seed) {
  return run_ensemble(model, psi0, InitialSampling::Born, 0, n_traj, opt, base_seed);
}

SymmetryReport translation_symmetry_check(const BellModel& model, const Vec& psi, int shift) {
  SymmetryReport rep;
  if (!model.space || !model.povm.coordinate_pvm()) return rep;  // inapplicable
  const FockSpace& space = *model.space;
  if (space.lattice().boundary != Boundary::Periodic) return rep;
  const int g = space.lattice().sites;

  // Configuration permutation and the induced basis map.
  std::vector<int> perm(space.dim());
  for (int i = 0; i < space.dim(); ++i) {
    Configuration c = space.config(i);
    Configuration moved = c;
    for (std::size_t sp = 0; sp < c.occupation.size(); ++sp)
      for (int s = 0; s < g; ++s)
        moved.occupation[sp][(s + shift % g + g) % g] = c.occupation[sp][s];
    const int j = space.index_of(moved);
    if (j < 0) return rep;
    perm[i] = j;
  }
  // Verify the Hamiltonian commutes with the shift.
  Mat h = model.hamiltonian(0.0).dense();
  Mat s = Mat::Zero(space.dim(), space.dim());
  for (int i = 0; i < space.dim(); ++i) s(perm[i], i) = 1.0;
  if ((s * h - h * s).cwiseAbs().maxCoeff() > 1e-12) return rep;  // non-invariant H
  rep.applicable = true;

  Vec shifted = s * psi;
  JumpRateTable base = model.rates(psi, 0.0);
  JumpRateTable moved = model.rates(shifted, 0.0);
  for (int q = 0; q < base.n; ++q) {
    for (const auto& [dest, r] : base.out[q])
      rep.max_residual = std::max(rep.max_residual, std::abs(moved.rate(perm[dest], perm[q]) - r));
    for (const auto& [dest, r] : moved.out[q])
      rep.max_residual =
          std::max(rep.max_residual, std::abs(base.rate(perm[dest], perm[q]) - r));
  }
  rep.passed = rep.max_residual <= 1e-12;
  return rep;
}

std::string trajectory_jsonl(const BellModel& model, const Trajectory& t) {
  std::ostringstream os;
  os.precision(17);
  for (const auto& e : t.events) {
    json line;
    line["t"] = e.time;
    line["kind"] = kind_name(e.kind);
    line["cell"] = e.config;
    line["config"] = model.config_labels[e.config];
    os << line.dump() << '\n';
  }
  return os.str();
}

std::string run_manifest(const BellModel& model, const EngineOptions& opt, std::uint64_t seed,
                         int n_traj) {
  json j;
  j["model_hash"] = model.manifest_hash();
  j["model"] = json::parse(model.manifest());
  j["seed"] = seed;
  j["trajectories"] = n_traj;
  j["horizon"] = opt.horizon;
  j["dt"] = opt.dt;
  j["sample_times"] = opt.sample_times;
  j["event_cap"] = opt.event_cap;
  j["freeze_state"] = opt.freeze_state;
  return j.dump(2);
}

}  // namespace bellsim
