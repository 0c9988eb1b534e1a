// Random model families shared by the property tests and the acceptance
// suite. Both generators are deterministic in the seed.
#ifndef RCM_TESTS_GENERATORS_HPP
#define RCM_TESTS_GENERATORS_HPP

#include <algorithm>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "rcm/density.hpp"
#include "rcm/model.hpp"

namespace rcmtest {

using Rng = std::mt19937_64;

inline double uniform(Rng& g, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(g);
}

inline std::int64_t pick(Rng& g, std::int64_t lo, std::int64_t hi) {
  return std::uniform_int_distribution<std::int64_t>(lo, hi)(g);
}

inline std::vector<rcm::GroundRef> all_grounds(const rcm::Model& m, int atom) {
  std::vector<rcm::GroundRef> out;
  rcm::detail::for_each_binding(m, atom,
                                [&](const std::vector<std::int64_t>& b) { out.push_back({atom, b}); });
  return out;
}

namespace detail {

// Variable slots are global: slot k always binds domain `slot_domain[k]`, so
// any subset of slots type-checks against an atom declared over that subset.
inline const std::vector<std::string> kSlotNames = {"s", "t", "u"};

inline rcm::Term shape_term(int atom, const std::vector<int>& shape) {
  std::vector<std::string> vars;
  for (int s : shape) vars.push_back(kSlotNames[static_cast<std::size_t>(s)]);
  return rcm::Term::atom_ref(atom, std::move(vars));
}

inline bool subset(const std::vector<int>& a, const std::vector<int>& b) {
  return std::ranges::all_of(a, [&](int x) { return std::ranges::find(b, x) != b.end(); });
}

struct AtomUf {
  std::vector<int> parent;
  explicit AtomUf(int n) : parent(static_cast<std::size_t>(n)) {
    for (int i = 0; i < n; ++i) parent[static_cast<std::size_t>(i)] = i;
  }
  int find(int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  }
  void unite(int a, int b) { parent[static_cast<std::size_t>(find(a))] = find(b); }
};

}  // namespace detail

// Engine-solvable family: 2-5 atoms of arity <= 2 over a shared pool of typed
// variable slots; every two-atom factor uses nested variable sets, so each
// factor either aligns on a full side or decouples into an all-pairs product.
// Every atom-level component is anchored and carries at least one observation;
// one or two unobserved ground variables become queries. |U| <= 60.
inline rcm::Model solvable_model(std::uint64_t seed) {
  Rng g(seed);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    rcm::Model m;
    const int ndom = static_cast<int>(pick(g, 1, 3));
    for (int d = 0; d < ndom; ++d)
      m.domains.push_back({std::string(1, static_cast<char>('D' + d)), pick(g, 1, 4), {}});

    const int nslots = static_cast<int>(pick(g, 2, 3));
    std::vector<int> slot_domain(static_cast<std::size_t>(nslots));
    for (int s = 0; s < nslots; ++s)
      slot_domain[static_cast<std::size_t>(s)] = static_cast<int>(pick(g, 0, ndom - 1));

    const int natoms = static_cast<int>(pick(g, 2, 5));
    std::vector<std::vector<int>> shape(static_cast<std::size_t>(natoms));
    for (int a = 0; a < natoms; ++a) {
      rcm::AtomDecl decl;
      decl.name = std::string(1, static_cast<char>('A' + a));
      std::vector<int>& sh = shape[static_cast<std::size_t>(a)];
      const int arity = static_cast<int>(pick(g, 0, 2));
      std::vector<int> slots(static_cast<std::size_t>(nslots));
      for (int s = 0; s < nslots; ++s) slots[static_cast<std::size_t>(s)] = s;
      std::shuffle(slots.begin(), slots.end(), g);
      sh.assign(slots.begin(), slots.begin() + std::min(arity, nslots));
      std::ranges::sort(sh);
      for (int s : sh) decl.domains.push_back(slot_domain[static_cast<std::size_t>(s)]);
      decl.excluded.resize(decl.domains.size());
      if (!decl.domains.empty() && pick(g, 0, 3) == 0) {
        const std::size_t dim = static_cast<std::size_t>(pick(g, 0, static_cast<std::int64_t>(decl.domains.size()) - 1));
        const std::int64_t dsz = m.domains[static_cast<std::size_t>(decl.domains[dim])].size;
        if (dsz >= 2) decl.excluded[dim].insert(pick(g, 0, dsz - 1));
      }
      m.atoms.push_back(std::move(decl));
    }
    if (rcm::total_ground_variables(m) > 60) continue;

    // Spanning structure over comparable shapes, plus a few extra edges.
    detail::AtomUf uf(natoms);
    auto add_edge = [&](int a, int b) {
      const auto &sa = shape[static_cast<std::size_t>(a)], &sb = shape[static_cast<std::size_t>(b)];
      rcm::RnFactor f;
      f.lhs = detail::shape_term(a, sa);
      f.rhs = detail::shape_term(b, sb);
      if (!detail::subset(sb, sa)) std::swap(f.lhs, f.rhs);  // larger side first
      f.sigma2 = uniform(g, 0.3, 3.0);
      f.offset = pick(g, 0, 9) < 4 ? 0.0 : uniform(g, -2.0, 2.0);
      m.factors.push_back(std::move(f));
      uf.unite(a, b);
    };
    bool ok = true;
    for (int a = 1; a < natoms && ok; ++a) {
      std::vector<int> comparable;
      for (int b = 0; b < a; ++b)
        if (detail::subset(shape[static_cast<std::size_t>(a)], shape[static_cast<std::size_t>(b)]) ||
            detail::subset(shape[static_cast<std::size_t>(b)], shape[static_cast<std::size_t>(a)]))
          comparable.push_back(b);
      if (comparable.empty()) {
        // Flatten the shape; an empty variable list pairs with anything.
        shape[static_cast<std::size_t>(a)].clear();
        rcm::AtomDecl& decl = m.atoms[static_cast<std::size_t>(a)];
        decl.domains.clear();
        decl.excluded.clear();
        comparable.push_back(0);
      }
      add_edge(a, comparable[static_cast<std::size_t>(pick(g, 0, static_cast<std::int64_t>(comparable.size()) - 1))]);
    }
    const int extra = static_cast<int>(pick(g, 0, 2));
    for (int k = 0; k < extra; ++k) {
      const int a = static_cast<int>(pick(g, 0, natoms - 1));
      const int b = static_cast<int>(pick(g, 0, natoms - 1));
      if (a == b) continue;
      if (detail::subset(shape[static_cast<std::size_t>(a)], shape[static_cast<std::size_t>(b)]) ||
          detail::subset(shape[static_cast<std::size_t>(b)], shape[static_cast<std::size_t>(a)]))
        add_edge(a, b);
    }
    // Same-atom all-pairs product through an independent renaming.
    if (pick(g, 0, 5) == 0) {
      for (int a = 0; a < natoms; ++a) {
        if (m.atoms[static_cast<std::size_t>(a)].arity() != 1) continue;
        rcm::RnFactor f;
        f.lhs = detail::shape_term(a, shape[static_cast<std::size_t>(a)]);
        f.rhs = rcm::Term::atom_ref(a, {"w"});
        f.sigma2 = uniform(g, 0.3, 3.0);
        f.offset = pick(g, 0, 1) == 0 ? 0.0 : uniform(g, -2.0, 2.0);
        m.factors.push_back(std::move(f));
        break;
      }
    }

    // Direct anchors on a random subset of atoms.
    for (int a = 0; a < natoms; ++a) {
      if (pick(g, 0, 9) >= 4) continue;
      rcm::RnFactor f;
      f.lhs = detail::shape_term(a, shape[static_cast<std::size_t>(a)]);
      f.rhs = rcm::Term::constant(uniform(g, -1.5, 1.5));
      f.sigma2 = uniform(g, 0.3, 3.0);
      f.offset = pick(g, 0, 1) == 0 ? 0.0 : uniform(g, -2.0, 2.0);
      m.factors.push_back(std::move(f));
    }

    // One observation per atom-level component.
    std::set<rcm::GroundRef> observed;
    std::set<int> seen_roots;
    for (int a = 0; a < natoms; ++a) {
      if (!seen_roots.insert(uf.find(a)).second) continue;
      auto grounds = all_grounds(m, a);
      if (grounds.empty()) { ok = false; break; }
      rcm::GroundRef gr = grounds[static_cast<std::size_t>(pick(g, 0, static_cast<std::int64_t>(grounds.size()) - 1))];
      if (observed.insert(gr).second)
        m.observations.push_back({std::move(gr), uniform(g, -2.0, 2.0)});
    }
    if (!ok) continue;
    for (int k = static_cast<int>(pick(g, 0, 2)); k > 0; --k) {
      const int a = static_cast<int>(pick(g, 0, natoms - 1));
      auto grounds = all_grounds(m, a);
      if (grounds.empty()) continue;
      rcm::GroundRef gr = grounds[static_cast<std::size_t>(pick(g, 0, static_cast<std::int64_t>(grounds.size()) - 1))];
      if (observed.insert(gr).second)
        m.observations.push_back({std::move(gr), uniform(g, -2.0, 2.0)});
    }

    // Anchor any component the observations did not reach.
    for (int round = 0; round < 2; ++round) {
      rcm::ValidationReport rep = rcm::validate(m);
      if (rep.proper_density) break;
      std::set<std::string> fixed;
      for (const auto& c : rep.components) {
        if (c.anchored || c.atoms.empty() || !fixed.insert(c.atoms.front()).second) continue;
        const int a = m.atom_index(c.atoms.front());
        rcm::RnFactor f;
        f.lhs = detail::shape_term(a, shape[static_cast<std::size_t>(a)]);
        f.rhs = rcm::Term::constant(uniform(g, -1.5, 1.5));
        f.sigma2 = uniform(g, 0.3, 3.0);
        m.factors.push_back(std::move(f));
      }
    }
    if (!rcm::validate(m).proper_density) continue;

    std::vector<rcm::GroundRef> candidates;
    for (int a = 0; a < natoms; ++a)
      for (auto& gr : all_grounds(m, a))
        if (!observed.count(gr)) candidates.push_back(std::move(gr));
    if (candidates.empty()) continue;
    std::shuffle(candidates.begin(), candidates.end(), g);
    m.queries.assign(candidates.begin(),
                     candidates.begin() + std::min<std::size_t>(candidates.size(),
                                                                static_cast<std::size_t>(pick(g, 1, 2))));
    try {
      rcm::check_model(m);
    } catch (const std::invalid_argument&) {
      continue;
    }
    return m;
  }
  throw std::runtime_error("solvable_model: no acceptable sample after many attempts");
}

// Loose family for the density check: tiny models over arbitrary shared-slot
// factors, frequently disconnected or unanchored; |U| <= 12. No queries.
inline rcm::Model loose_model(std::uint64_t seed) {
  Rng g(seed);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    rcm::Model m;
    const int ndom = static_cast<int>(pick(g, 1, 2));
    for (int d = 0; d < ndom; ++d)
      m.domains.push_back({std::string(1, static_cast<char>('D' + d)), pick(g, 1, 3), {}});
    const int nslots = 2;
    std::vector<int> slot_domain(static_cast<std::size_t>(nslots));
    for (int s = 0; s < nslots; ++s)
      slot_domain[static_cast<std::size_t>(s)] = static_cast<int>(pick(g, 0, ndom - 1));

    const int natoms = static_cast<int>(pick(g, 1, 4));
    std::vector<std::vector<int>> shape(static_cast<std::size_t>(natoms));
    for (int a = 0; a < natoms; ++a) {
      rcm::AtomDecl decl;
      decl.name = std::string(1, static_cast<char>('A' + a));
      const int arity = static_cast<int>(pick(g, 0, 2));
      std::vector<int>& sh = shape[static_cast<std::size_t>(a)];
      for (int s = 0; s < arity; ++s) sh.push_back(static_cast<int>(pick(g, 0, nslots - 1)));
      std::ranges::sort(sh);
      sh.erase(std::unique(sh.begin(), sh.end()), sh.end());
      for (int s : sh) decl.domains.push_back(slot_domain[static_cast<std::size_t>(s)]);
      decl.excluded.resize(decl.domains.size());
      m.atoms.push_back(std::move(decl));
    }
    if (rcm::total_ground_variables(m) > 12) continue;

    const int nfac = static_cast<int>(pick(g, 0, 5));
    for (int k = 0; k < nfac; ++k) {
      rcm::RnFactor f;
      const int a = static_cast<int>(pick(g, 0, natoms - 1));
      f.lhs = detail::shape_term(a, shape[static_cast<std::size_t>(a)]);
      if (pick(g, 0, 3) == 0) {
        f.rhs = rcm::Term::constant(uniform(g, -1.0, 1.0));
      } else {
        const int b = static_cast<int>(pick(g, 0, natoms - 1));
        if (b == a && shape[static_cast<std::size_t>(a)].empty()) continue;  // no self pair on a scalar
        f.rhs = detail::shape_term(b, shape[static_cast<std::size_t>(b)]);
        if (b == a) f.rhs.vars.assign(f.rhs.vars.size(), "w");  // independent renaming
        if (f.rhs.vars.size() == 2) f.rhs.vars[1] = f.rhs.vars[0] == "w" ? "x" : f.rhs.vars[1];
        if (f.lhs == f.rhs) continue;
      }
      f.sigma2 = uniform(g, 0.3, 3.0);
      f.offset = pick(g, 0, 1) == 0 ? 0.0 : uniform(g, -1.0, 1.0);
      m.factors.push_back(std::move(f));
    }

    std::set<rcm::GroundRef> observed;
    for (int k = static_cast<int>(pick(g, 0, 2)); k > 0; --k) {
      const int a = static_cast<int>(pick(g, 0, natoms - 1));
      auto grounds = all_grounds(m, a);
      if (grounds.empty()) continue;
      rcm::GroundRef gr = grounds[static_cast<std::size_t>(pick(g, 0, static_cast<std::int64_t>(grounds.size()) - 1))];
      if (observed.insert(gr).second)
        m.observations.push_back({std::move(gr), uniform(g, -1.0, 1.0)});
    }
    bool any_live = false;
    for (int a = 0; a < natoms; ++a)
      for (auto& gr : all_grounds(m, a))
        if (!observed.count(gr)) any_live = true;
    if (!any_live) continue;
    try {
      rcm::check_model(m);
    } catch (const std::invalid_argument&) {
      continue;
    }
    return m;
  }
  throw std::runtime_error("loose_model: no acceptable sample after many attempts");
}

}  // namespace rcmtest

#endif  // RCM_TESTS_GENERATORS_HPP
