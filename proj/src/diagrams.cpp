#include "bellsim/diagrams.hpp"

#include <algorithm>
#include <map>
#include <sstream>
#include <stdexcept>

namespace bellsim {

ConfigPartition ConfigPartition::identity(int dim, std::vector<std::string> labels) {
  ConfigPartition p;
  p.basis_dim = dim;
  p.fibers.resize(dim);
  for (int i = 0; i < dim; ++i) p.fibers[i] = {i};
  if (labels.empty()) {
    p.labels.resize(dim);
    for (int i = 0; i < dim; ++i) p.labels[i] = std::to_string(i);
  } else {
    p.labels = std::move(labels);
  }
  return p;
}

Vec ConfigPartition::slice(const Vec& psi, int config) const {
  const auto& fiber = fibers[config];
  Vec out(fiber.size());
  for (std::size_t k = 0; k < fiber.size(); ++k) out[k] = psi[fiber[k]];
  return out;
}

double ConfigPartition::weight(const Vec& psi, int config) const {
  double w = 0.0;
  for (int i : fibers[config]) w += std::norm(psi[i]);
  return w;
}

KernelDiagram::KernelDiagram(std::shared_ptr<const ConfigPartition> domain,
                             std::shared_ptr<const ConfigPartition> codomain,
                             std::vector<std::string> slot_names, Expand expand)
    : domain_(std::move(domain)), codomain_(std::move(codomain)),
      slot_names_(std::move(slot_names)), expand_(std::move(expand)) {}

Mat KernelDiagram::realize() const {
  Mat m = Mat::Zero(codomain_->basis_dim, domain_->basis_dim);
  for (int src = 0; src < domain_->configs(); ++src) {
    const auto& sfiber = domain_->fibers[src];
    for (const DiagramTransition& t : expand(src)) {
      const auto& dfiber = codomain_->fibers[t.dest];
      for (std::size_t r = 0; r < dfiber.size(); ++r)
        for (std::size_t c = 0; c < sfiber.size(); ++c)
          m(dfiber[r], sfiber[c]) += t.weight * t.amplitude(r, c);
    }
  }
  return m;
}

std::string KernelDiagram::dump() const {
  std::ostringstream os;
  for (int src = 0; src < domain_->configs(); ++src) {
    auto ts = expand(src);
    if (ts.empty()) continue;
    os << domain_->labels[src] << ":\n";
    for (const auto& t : ts) {
      os << "  -> " << codomain_->labels[t.dest] << "  [";
      for (std::size_t s = 0; s < t.slots.size(); ++s)
        os << slot_names_[s] << '=' << t.slots[s] << (s + 1 < t.slots.size() ? " " : "");
      os << "] w=" << t.weight << " K=";
      if (t.amplitude.size() == 1) {
        os << t.amplitude(0, 0);
      } else {
        os << t.amplitude.rows() << 'x' << t.amplitude.cols();
      }
      os << '\n';
    }
  }
  return os.str();
}

namespace {

std::shared_ptr<const ConfigPartition> fock_partition(const std::shared_ptr<const FockSpace>& sp) {
  auto p = std::make_shared<ConfigPartition>(ConfigPartition::identity(sp->dim(), sp->labels()));
  return p;
}

Mat scalar_amp(cplx v) {
  Mat m(1, 1);
  m(0, 0) = v;
  return m;
}

}  // namespace

KernelDiagram multiply_diagram(std::shared_ptr<const FockSpace> space, const RVec& v) {
  if (v.size() != space->dim()) throw std::invalid_argument("multiply_diagram: size mismatch");
  auto part = fock_partition(space);
  return KernelDiagram(part, part, {}, [v](int src) {
    std::vector<DiagramTransition> ts;
    if (v[src] != 0.0) ts.push_back({{}, 1.0, src, scalar_amp(v[src])});
    return ts;
  });
}

KernelDiagram point_ladder_diagram(std::shared_ptr<const FockSpace> space, int species,
                                   LadderKind kind, SiteOrSlot center) {
  if (species < 0 || species >= space->num_species())
    throw std::invalid_argument("point_ladder_diagram: bad species");
  auto part = fock_partition(space);
  const int sites = space->lattice().sites;
  auto sp = space;
  if (!center.is_slot()) {
    const int site = center.site;
    return KernelDiagram(part, part, {}, [sp, species, site, kind](int src) {
      std::vector<DiagramTransition> ts;
      LadderResult r = apply_ladder(*sp, sp->config(src), species, site, kind);
      if (!r.ok) return ts;
      const int dest = sp->index_of(r.config);
      if (dest >= 0) ts.push_back({{}, 1.0, dest, scalar_amp(r.amplitude)});
      return ts;
    });
  }
  return KernelDiagram(part, part, {center.slot}, [sp, species, sites, kind](int src) {
    std::vector<DiagramTransition> ts;
    const Configuration& c = sp->config(src);
    for (int r = 0; r < sites; ++r) {
      if (kind == LadderKind::Annihilate && c.occupation[species][r] == 0) continue;
      LadderResult lr = apply_ladder(*sp, c, species, r, kind);
      if (!lr.ok) continue;
      const int dest = sp->index_of(lr.config);
      if (dest < 0) continue;
      ts.push_back({{r}, 1.0, dest, scalar_amp(lr.amplitude)});
    }
    return ts;
  });
}

KernelDiagram ladder_diagram(std::shared_ptr<const FockSpace> space, int species,
                             ElementaryKind kind, SmearingProfile phi, SiteOrSlot center) {
  if (species < 0 || species >= space->num_species())
    throw std::invalid_argument("ladder_diagram: bad species");
  if (kind == ElementaryKind::Multiply)
    throw std::invalid_argument("ladder_diagram: multiply has its own builder");
  if (static_cast<int>(phi.values.size()) != space->lattice().sites)
    throw std::invalid_argument("ladder_diagram: profile lattice mismatch");
  auto part = fock_partition(space);
  const int sites = space->lattice().sites;
  const Boundary boundary = space->lattice().boundary;
  const LadderKind lk = kind == ElementaryKind::Create ? LadderKind::Create : LadderKind::Annihilate;
  const bool slotted = center.is_slot();
  const int fixed = center.site;
  // Landing-site slots are named uniquely per diagram instance so that
  // concatenated chains do not accidentally unify independent y's.
  static int counter = 0;
  std::vector<std::string> slots{"y" + std::to_string(counter++)};
  if (slotted) slots.push_back(center.slot);

  auto sp = space;
  return KernelDiagram(part, part, slots, [sp, species, lk, phi, sites, boundary, slotted,
                                           fixed](int src) {
    std::vector<DiagramTransition> ts;
    const Configuration& c = sp->config(src);
    for (int y = 0; y < sites; ++y) {
      if (lk == LadderKind::Annihilate && c.occupation[species][y] == 0) continue;
      LadderResult r = apply_ladder(*sp, c, species, y, lk);
      if (!r.ok) continue;
      const int dest = sp->index_of(r.config);
      if (dest < 0) continue;  // hard truncation cutoff
      if (slotted) {
        for (int rr = 0; rr < sites; ++rr) {
          const double w = phi.at(y - rr, sites, boundary);
          if (w == 0.0) continue;
          ts.push_back({{y, rr}, 1.0, dest, scalar_amp(w * r.amplitude)});
        }
      } else {
        const double w = phi.at(y - fixed, sites, boundary);
        if (w == 0.0) continue;
        ts.push_back({{y}, 1.0, dest, scalar_amp(w * r.amplitude)});
      }
    }
    return ts;
  });
}

KernelDiagram elementary_diagram(std::shared_ptr<const FockSpace> space, int species,
                                 ElementaryKind kind, const SmearingProfile* phi, const RVec* v,
                                 SiteOrSlot center) {
  if (kind == ElementaryKind::Multiply) {
    if (!v) throw std::invalid_argument("elementary_diagram: multiply needs a diagonal function");
    return multiply_diagram(std::move(space), *v);
  }
  if (!phi) throw std::invalid_argument("elementary_diagram: ladder kinds need a profile");
  return ladder_diagram(std::move(space), species, kind, *phi, center);
}

namespace {

// Slot layout of a concatenation: shared names unify.
struct SlotMerge {
  std::vector<std::string> names;
  std::vector<int> from1;            // position in merged tuple of d1's slots
  std::vector<int> from2;            // for d2's slots
  std::vector<std::pair<int, int>> shared;  // (index in d1 slots, index in d2 slots)
};

SlotMerge merge_slots(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  SlotMerge m;
  m.names = a;
  m.from1.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) m.from1[i] = static_cast<int>(i);
  m.from2.resize(b.size());
  for (std::size_t j = 0; j < b.size(); ++j) {
    auto it = std::find(m.names.begin(), m.names.end(), b[j]);
    if (it != m.names.end()) {
      m.from2[j] = static_cast<int>(it - m.names.begin());
      m.shared.emplace_back(static_cast<int>(it - m.names.begin()), static_cast<int>(j));
    } else {
      m.from2[j] = static_cast<int>(m.names.size());
      m.names.push_back(b[j]);
    }
  }
  return m;
}

}  // namespace

KernelDiagram concat(const KernelDiagram& d1, const KernelDiagram& d2) {
  if (d1.codomain_ptr()->basis_dim != d2.domain_ptr()->basis_dim ||
      d1.codomain_ptr()->configs() != d2.domain_ptr()->configs())
    throw std::invalid_argument("concat: intermediate spaces do not match");
  SlotMerge merge = merge_slots(d1.slot_names(), d2.slot_names());
  auto dom = d1.domain_ptr();
  auto cod = d2.codomain_ptr();
  const int nslots = static_cast<int>(merge.names.size());
  KernelDiagram a = d1, b = d2;
  return KernelDiagram(dom, cod, merge.names, [a, b, merge, nslots](int src) {
    std::vector<DiagramTransition> out;
    for (const DiagramTransition& t1 : a.expand(src)) {
      for (const DiagramTransition& t2 : b.expand(t1.dest)) {
        bool match = true;
        for (const auto& [i1, i2] : merge.shared)
          if (t1.slots[i1] != t2.slots[i2]) {
            match = false;
            break;
          }
        if (!match) continue;
        DiagramTransition t;
        t.slots.assign(nslots, 0);
        for (std::size_t i = 0; i < t1.slots.size(); ++i) t.slots[merge.from1[i]] = t1.slots[i];
        for (std::size_t j = 0; j < t2.slots.size(); ++j) t.slots[merge.from2[j]] = t2.slots[j];
        t.weight = t1.weight * t2.weight;
        t.dest = t2.dest;
        t.amplitude = t2.amplitude * t1.amplitude;
        out.push_back(std::move(t));
      }
    }
    return out;
  });
}

KernelDiagram sum_diagrams(const KernelDiagram& d1, const KernelDiagram& d2) {
  if (d1.domain_ptr()->basis_dim != d2.domain_ptr()->basis_dim ||
      d1.codomain_ptr()->basis_dim != d2.codomain_ptr()->basis_dim)
    throw std::invalid_argument("sum_diagrams: spaces do not match");
  const bool same_slots = d1.slot_names() == d2.slot_names();
  std::vector<std::string> names = d1.slot_names();
  if (!same_slots) {
    names.push_back("#term");  // disjoint union tag
    for (const auto& n : d2.slot_names())
      if (std::find(names.begin(), names.end(), n) == names.end()) names.push_back(n);
  }
  KernelDiagram a = d1, b = d2;
  if (same_slots) {
    return KernelDiagram(a.domain_ptr(), a.codomain_ptr(), names, [a, b](int src) {
      std::vector<DiagramTransition> out = a.expand(src);
      for (const DiagramTransition& t : b.expand(src)) {
        bool merged = false;
        for (auto& e : out)
          if (e.slots == t.slots) {
            if (e.dest != t.dest)
              throw std::runtime_error("sum_diagrams: shared parameter with differing transition");
            e.amplitude += (t.weight / e.weight) * t.amplitude;
            merged = true;
            break;
          }
        if (!merged) out.push_back(t);
      }
      return out;
    });
  }
  const int n1 = static_cast<int>(a.slot_names().size());
  const int ntotal = static_cast<int>(names.size());
  std::vector<int> map2(b.slot_names().size());
  for (std::size_t j = 0; j < b.slot_names().size(); ++j)
    map2[j] = static_cast<int>(
        std::find(names.begin(), names.end(), b.slot_names()[j]) - names.begin());
  return KernelDiagram(a.domain_ptr(), a.codomain_ptr(), names,
                       [a, b, n1, ntotal, map2](int src) {
    std::vector<DiagramTransition> out;
    for (DiagramTransition t : a.expand(src)) {
      t.slots.resize(ntotal, 0);  // term tag slot stays 0
      out.push_back(std::move(t));
    }
    for (const DiagramTransition& src_t : b.expand(src)) {
      DiagramTransition t;
      t.slots.assign(ntotal, 0);
      t.slots[n1] = 1;
      for (std::size_t j = 0; j < src_t.slots.size(); ++j) t.slots[map2[j]] = src_t.slots[j];
      t.weight = src_t.weight;
      t.dest = src_t.dest;
      t.amplitude = src_t.amplitude;
      out.push_back(std::move(t));
    }
    return out;
  });
}

KernelDiagram integrate_parameter(const KernelDiagram& d, const std::string& slot,
                                  const RVec& weights) {
  auto it = std::find(d.slot_names().begin(), d.slot_names().end(), slot);
  if (it == d.slot_names().end())
    throw std::invalid_argument("integrate_parameter: unknown slot " + slot);
  const int pos = static_cast<int>(it - d.slot_names().begin());
  std::vector<std::string> names = d.slot_names();
  names.erase(names.begin() + pos);
  KernelDiagram a = d;
  RVec w = weights;
  return KernelDiagram(a.domain_ptr(), a.codomain_ptr(), names, [a, pos, w](int src) {
    // Group by remaining slot values; destinations must collapse.
    std::map<std::vector<int>, DiagramTransition> grouped;
    for (const DiagramTransition& t : a.expand(src)) {
      const int value = t.slots[pos];
      if (value < 0 || value >= w.size())
        throw std::runtime_error("integrate_parameter: slot value outside the weight table");
      const double wv = w[value];
      std::vector<int> rest = t.slots;
      rest.erase(rest.begin() + pos);
      auto [entry, inserted] = grouped.try_emplace(rest);
      if (inserted) {
        entry->second.slots = rest;
        entry->second.weight = t.weight;
        entry->second.dest = t.dest;
        entry->second.amplitude = wv * t.amplitude;
      } else {
        if (entry->second.dest != t.dest) {
          std::ostringstream os;
          os << "integrate_parameter: transitions fail to collapse at source "
             << a.domain().labels[src];
          throw std::runtime_error(os.str());
        }
        entry->second.amplitude += wv * (t.weight / entry->second.weight) * t.amplitude;
      }
    }
    std::vector<DiagramTransition> out;
    out.reserve(grouped.size());
    for (auto& [rest, t] : grouped)
      if (t.amplitude.cwiseAbs().maxCoeff() != 0.0) out.push_back(std::move(t));
    return out;
  });
}

KernelDiagram restrict_to_space(const KernelDiagram& d, std::shared_ptr<const FockSpace> big,
                                std::shared_ptr<const FockSpace> sub) {
  if (d.domain().configs() != big->dim())
    throw std::invalid_argument("restrict_to_space: diagram not on the larger space");
  auto to_big = std::make_shared<std::vector<int>>(sub->dim());
  auto to_sub = std::make_shared<std::vector<int>>(big->dim(), -1);
  for (int i = 0; i < sub->dim(); ++i) {
    const int b = big->index_of(sub->config(i));
    if (b < 0) throw std::invalid_argument("restrict_to_space: configurations are not a subset");
    (*to_big)[i] = b;
    (*to_sub)[b] = i;
  }
  auto part = std::make_shared<ConfigPartition>(
      ConfigPartition::identity(sub->dim(), sub->labels()));
  KernelDiagram a = d;
  return KernelDiagram(part, part, a.slot_names(), [a, to_big, to_sub](int src) {
    std::vector<DiagramTransition> out;
    for (DiagramTransition t : a.expand((*to_big)[src])) {
      const int dest = (*to_sub)[t.dest];
      if (dest < 0) continue;
      t.dest = dest;
      out.push_back(std::move(t));
    }
    return out;
  });
}

JumpRateTable rates_from_diagram(const KernelDiagram& d, const Vec& psi, double hbar,
                                 const Tolerances& tol) {
  if (psi.size() != d.domain().basis_dim)
    throw std::invalid_argument("rates_from_diagram: state dimension mismatch");
  if (d.domain().configs() != d.codomain().configs())
    throw std::invalid_argument("rates_from_diagram: domain and codomain differ");
  JumpRateTable t;
  t.n = d.domain().configs();
  t.out.assign(t.n, {});
  t.flagged.assign(t.n, 0);
  t.minimal = true;
  for (int src = 0; src < t.n; ++src) {
    const double p = d.domain().weight(psi, src);
    auto transitions = d.expand(src);
    // Off-diagonal injectivity of F(q', .) in the parameter.
    std::vector<int> dests;
    for (const auto& tr : transitions)
      if (tr.dest != src) dests.push_back(tr.dest);
    std::sort(dests.begin(), dests.end());
    if (std::adjacent_find(dests.begin(), dests.end()) != dests.end()) {
      std::ostringstream os;
      os << "rates_from_diagram: transition map not injective at source "
         << d.domain().labels[src];
      throw std::invalid_argument(os.str());
    }
    if (p <= tol.probability_floor) {
      t.flagged[src] = 1;
      continue;
    }
    Vec src_fiber = d.domain().slice(psi, src);
    for (const auto& tr : transitions) {
      if (tr.dest == src) continue;  // diagonal kernel part: no motion
      Vec dest_fiber = d.codomain().slice(psi, tr.dest);
      const double im = std::imag(dest_fiber.dot(tr.amplitude * src_fiber));
      const double rate = std::max(0.0, (2.0 / hbar) * im) * tr.weight / p;
      if (rate > 0.0) t.out[src].emplace_back(tr.dest, rate);
    }
    std::sort(t.out[src].begin(), t.out[src].end());
  }
  t.recompute_totals();
  t.prune(tol.rate_prune);
  return t;
}

}  // namespace bellsim
