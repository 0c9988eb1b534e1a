#ifndef RCM_DENSITY_HPP
#define RCM_DENSITY_HPP

// Ground density semantics. The unnormalized joint weight of a model is the
// product over factors and over groundings of the pairwise Gaussian
// potentials; observations pin their variables. A connected component of the
// ground pairwise graph integrates to a finite value iff it is anchored: at
// least one potential in it references a fixed value (constant term or an
// observed variable). That is exactly positive definiteness of the
// component's precision matrix.

#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "rcm/model.hpp"

namespace rcm {

inline double rn_log_norm(double sigma2) {
  return -0.5 * (std::log(2.0 * std::numbers::pi) + std::log(sigma2));
}

// log potential of one ground pair: -(l - r - d)^2 / (2 s2) + log norm.
inline double rn_log_pair(double lhs, double rhs, double sigma2, double offset) {
  double z = lhs - rhs - offset;
  return -z * z / (2.0 * sigma2) + rn_log_norm(sigma2);
}

// Log of the unnormalized joint weight at one full valuation. The valuation
// must assign exactly the unobserved ground variables; observed variables
// take their observed values.
inline double ground_weight(const Model& m, const std::map<GroundRef, double>& valuation) {
  std::map<GroundRef, double> value = valuation;
  for (const auto& o : m.observations) {
    if (valuation.count(o.var))
      throw std::invalid_argument("valuation assigns an observed variable");
    value[o.var] = o.value;
  }
  for (int a = 0; a < static_cast<int>(m.atoms.size()); ++a) {
    detail::for_each_binding(m, a, [&](const std::vector<std::int64_t>& b) {
      GroundRef g{a, b};
      if (!value.count(g)) throw std::invalid_argument("valuation misses a ground variable");
    });
  }
  double total = 0.0;
  for (const auto& f : m.factors) {
    detail::for_each_grounding(m, f, [&](const std::optional<GroundRef>& lhs,
                                         const std::optional<GroundRef>& rhs) {
      double l = lhs ? value.at(*lhs) : f.lhs.value;
      double r = rhs ? value.at(*rhs) : f.rhs.value;
      total += rn_log_pair(l, r, f.sigma2, f.offset);
    });
  }
  return total;
}

namespace detail {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(std::size_t n) : parent(n) {
    for (std::size_t i = 0; i < n; ++i) parent[i] = static_cast<int>(i);
  }
  int find(int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  }
};

// Index map for unobserved ground variables, in declaration order. This is
// the canonical variable ordering shared by validate and the ground oracle.
struct GroundIndex {
  std::vector<GroundRef> variables;
  std::map<GroundRef, int> index;            // unobserved only
  std::map<GroundRef, double> observed;

  explicit GroundIndex(const Model& m) {
    for (const auto& o : m.observations) observed[o.var] = o.value;
    for (int a = 0; a < static_cast<int>(m.atoms.size()); ++a) {
      for_each_binding(m, a, [&](const std::vector<std::int64_t>& b) {
        GroundRef g{a, b};
        if (observed.count(g)) return;
        index[g] = static_cast<int>(variables.size());
        variables.push_back(g);
      });
    }
  }
};

// Union-find over unobserved ground variables plus anchor marks. A pair with
// one side fixed anchors the live side's component; a live-live pair joins
// components (identical refs are a degenerate self-pair and carry no edge).
struct GroundComponents {
  GroundIndex vars;
  UnionFind uf;
  std::vector<bool> anchored_root;  // by representative after finalize

  explicit GroundComponents(const Model& m) : vars(m), uf(vars.variables.size()) {
    std::vector<bool> anchored(vars.variables.size(), false);
    for (const auto& f : m.factors) {
      for_each_grounding(m, f, [&](const std::optional<GroundRef>& lhs,
                                   const std::optional<GroundRef>& rhs) {
        bool l_live = lhs && !vars.observed.count(*lhs);
        bool r_live = rhs && !vars.observed.count(*rhs);
        if (l_live && r_live) {
          int a = vars.index.at(*lhs), b = vars.index.at(*rhs);
          if (a != b) uf.unite(a, b);
        } else if (l_live) {
          anchored[static_cast<std::size_t>(vars.index.at(*lhs))] = true;
        } else if (r_live) {
          anchored[static_cast<std::size_t>(vars.index.at(*rhs))] = true;
        }
      });
    }
    anchored_root.assign(vars.variables.size(), false);
    for (std::size_t i = 0; i < vars.variables.size(); ++i)
      if (anchored[i]) anchored_root[static_cast<std::size_t>(uf.find(static_cast<int>(i)))] = true;
  }

  int component_of(int var) { return uf.find(var); }
  bool anchored(int var) { return anchored_root[static_cast<std::size_t>(uf.find(var))]; }
};

}  // namespace detail

struct ComponentReport {
  std::vector<std::string> atoms;   // atom names with live members in this component
  std::int64_t variables = 0;
  bool anchored = false;
  bool has_query = false;
};

struct ValidationReport {
  std::vector<ComponentReport> components;
  bool connected = false;        // single component over all live variables
  bool proper_density = false;   // every component anchored
  bool query_ok = false;         // every component containing a query variable anchored
};

// Proper-density check: per connected component of the ground pairwise
// graph, is the component anchored (=> finite normalizer, PD precision)?
inline ValidationReport validate(const Model& m) {
  check_model(m);
  detail::GroundComponents gc(m);
  ValidationReport rep;
  std::map<int, int> root_to_comp;
  std::vector<std::set<int>> comp_atoms;
  for (int i = 0; i < static_cast<int>(gc.vars.variables.size()); ++i) {
    int root = gc.component_of(i);
    auto [it, fresh] = root_to_comp.try_emplace(root, static_cast<int>(rep.components.size()));
    if (fresh) {
      rep.components.push_back({});
      comp_atoms.push_back({});
      rep.components.back().anchored = gc.anchored(i);
    }
    ComponentReport& c = rep.components[static_cast<std::size_t>(it->second)];
    c.variables += 1;
    comp_atoms[static_cast<std::size_t>(it->second)].insert(gc.vars.variables[static_cast<std::size_t>(i)].atom);
  }
  for (std::size_t c = 0; c < rep.components.size(); ++c)
    for (int a : comp_atoms[c])
      rep.components[c].atoms.push_back(m.atoms[static_cast<std::size_t>(a)].name);
  for (const auto& q : m.queries) {
    int idx = gc.vars.index.at(q);
    rep.components[static_cast<std::size_t>(root_to_comp.at(gc.component_of(idx)))].has_query = true;
  }
  rep.connected = rep.components.size() <= 1;
  rep.proper_density = true;
  for (const auto& c : rep.components) rep.proper_density = rep.proper_density && c.anchored;
  rep.query_ok = true;
  for (const auto& c : rep.components)
    if (c.has_query && !c.anchored) rep.query_ok = false;
  return rep;
}

}  // namespace rcm

#endif  // RCM_DENSITY_HPP
