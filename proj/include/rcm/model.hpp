#ifndef RCM_MODEL_HPP
#define RCM_MODEL_HPP

// Core value types for relational continuous models: logical domains, atoms
// parameterised by domains, pairwise Gaussian factors, observations, queries.
// A model is a closed description; grounding semantics live in density.hpp.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace rcm {

// A finite set of interchangeable constants. Constants are integer indices
// 0..size-1; names are optional sugar used by the text format.
struct LogicalDomain {
  std::string name;
  std::int64_t size = 0;
  std::vector<std::string> constant_names;  // empty, or exactly `size` entries

  bool operator==(const LogicalDomain&) const = default;
};

// A relational atom: one real-valued ground variable per tuple of constants.
// `excluded[i]` removes constants from dimension i for this atom only.
struct AtomDecl {
  std::string name;
  std::vector<int> domains;                       // domain index per dimension
  std::vector<std::set<std::int64_t>> excluded;   // per dimension, may be empty

  int arity() const { return static_cast<int>(domains.size()); }
  bool operator==(const AtomDecl&) const = default;
};

// One side of a factor: an atom applied to logical variables, or a constant.
// Logical variables are factor-local names; using the same name in both terms
// ties the groundings together (pair per shared substitution).
struct Term {
  enum class Kind { Atom, Constant };
  Kind kind = Kind::Constant;
  int atom = -1;                   // valid when kind == Atom
  std::vector<std::string> vars;   // one per atom dimension, names distinct
  double value = 0.0;              // valid when kind == Constant

  static Term atom_ref(int atom, std::vector<std::string> vars) {
    Term t;
    t.kind = Kind::Atom;
    t.atom = atom;
    t.vars = std::move(vars);
    return t;
  }
  static Term constant(double v) {
    Term t;
    t.kind = Kind::Constant;
    t.value = v;
    return t;
  }
  bool operator==(const Term&) const = default;
};

// Gaussian pairwise potential: each grounding of (lhs, rhs) contributes
//   exp(-(l - r - offset)^2 / (2 sigma2)) / sqrt(2 pi sigma2).
struct RnFactor {
  Term lhs;
  Term rhs;
  double sigma2 = 1.0;
  double offset = 0.0;

  bool operator==(const RnFactor&) const = default;
};

// A single ground variable: atom plus one constant per dimension.
struct GroundRef {
  int atom = -1;
  std::vector<std::int64_t> binding;

  auto operator<=>(const GroundRef&) const = default;
};

struct Observation {
  GroundRef var;
  double value = 0.0;

  bool operator==(const Observation&) const = default;
};

struct Model {
  std::vector<LogicalDomain> domains;
  std::vector<AtomDecl> atoms;
  std::vector<RnFactor> factors;
  std::vector<Observation> observations;
  std::vector<GroundRef> queries;

  bool operator==(const Model&) const = default;

  int domain_index(const std::string& name) const {
    for (std::size_t i = 0; i < domains.size(); ++i)
      if (domains[i].name == name) return static_cast<int>(i);
    return -1;
  }
  int atom_index(const std::string& name) const {
    for (std::size_t i = 0; i < atoms.size(); ++i)
      if (atoms[i].name == name) return static_cast<int>(i);
    return -1;
  }
};

// Number of ground variables of one atom, honouring per-dimension exclusions.
inline std::int64_t cardinality(const Model& m, int atom) {
  const AtomDecl& a = m.atoms.at(static_cast<std::size_t>(atom));
  std::int64_t card = 1;
  for (int i = 0; i < a.arity(); ++i) {
    std::int64_t dim = m.domains.at(static_cast<std::size_t>(a.domains[i])).size;
    if (i < static_cast<int>(a.excluded.size()))
      dim -= static_cast<std::int64_t>(a.excluded[i].size());
    card *= dim;
  }
  return card;
}

inline std::int64_t total_ground_variables(const Model& m) {
  std::int64_t n = 0;
  for (int a = 0; a < static_cast<int>(m.atoms.size()); ++a) n += cardinality(m, a);
  return n;
}

// True when `g` names an actual ground variable (in range, not excluded).
inline bool ground_exists(const Model& m, const GroundRef& g) {
  if (g.atom < 0 || g.atom >= static_cast<int>(m.atoms.size())) return false;
  const AtomDecl& a = m.atoms[static_cast<std::size_t>(g.atom)];
  if (static_cast<int>(g.binding.size()) != a.arity()) return false;
  for (int i = 0; i < a.arity(); ++i) {
    std::int64_t c = g.binding[static_cast<std::size_t>(i)];
    if (c < 0 || c >= m.domains[static_cast<std::size_t>(a.domains[i])].size) return false;
    if (i < static_cast<int>(a.excluded.size()) && a.excluded[i].count(c)) return false;
  }
  return true;
}

// Human-readable ground variable name, e.g. "Gain(s1,b0)" or "Gain(1,0)"
// when the domain has no constant names.
inline std::string ground_name(const Model& m, const GroundRef& g) {
  const AtomDecl& a = m.atoms.at(static_cast<std::size_t>(g.atom));
  std::string s = a.name;
  if (g.binding.empty()) return s;  // nullary atoms read as bare names
  s += '(';
  for (std::size_t i = 0; i < g.binding.size(); ++i) {
    if (i) s += ',';
    const LogicalDomain& d = m.domains[static_cast<std::size_t>(a.domains[i])];
    if (!d.constant_names.empty())
      s += d.constant_names[static_cast<std::size_t>(g.binding[i])];
    else
      s += std::to_string(g.binding[i]);
  }
  s += ')';
  return s;
}

namespace detail {

// Enumerates the bindings of one atom in row-major declaration order; this
// fixed order defines ground-variable indices everywhere (oracle, valuations).
template <typename Fn>
void for_each_binding(const Model& m, int atom, Fn&& fn) {
  const AtomDecl& a = m.atoms.at(static_cast<std::size_t>(atom));
  std::vector<std::vector<std::int64_t>> allowed(a.domains.size());
  for (int i = 0; i < a.arity(); ++i) {
    std::int64_t dim = m.domains[static_cast<std::size_t>(a.domains[i])].size;
    for (std::int64_t c = 0; c < dim; ++c) {
      if (i < static_cast<int>(a.excluded.size()) && a.excluded[i].count(c)) continue;
      allowed[static_cast<std::size_t>(i)].push_back(c);
    }
  }
  std::vector<std::int64_t> binding(a.domains.size());
  std::vector<std::size_t> pos(a.domains.size(), 0);
  if (a.arity() == 0) {
    fn(binding);
    return;
  }
  for (auto& v : allowed)
    if (v.empty()) return;
  for (;;) {
    for (int i = 0; i < a.arity(); ++i)
      binding[static_cast<std::size_t>(i)] = allowed[static_cast<std::size_t>(i)][pos[static_cast<std::size_t>(i)]];
    fn(binding);
    int i = a.arity() - 1;
    while (i >= 0 && ++pos[static_cast<std::size_t>(i)] == allowed[static_cast<std::size_t>(i)].size()) {
      pos[static_cast<std::size_t>(i)] = 0;
      --i;
    }
    if (i < 0) break;
  }
}

// Logical variables of one factor, each bound to a domain; the factor's
// groundings are all joint substitutions of these variables.
struct FactorVars {
  std::vector<std::string> names;
  std::vector<int> domains;

  int index(const std::string& n) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == n) return static_cast<int>(i);
    return -1;
  }
};

inline FactorVars factor_vars(const Model& m, const RnFactor& f) {
  FactorVars fv;
  auto add_term = [&](const Term& t) {
    if (t.kind != Term::Kind::Atom) return;
    const AtomDecl& a = m.atoms.at(static_cast<std::size_t>(t.atom));
    for (int i = 0; i < a.arity(); ++i) {
      const std::string& v = t.vars.at(static_cast<std::size_t>(i));
      int existing = fv.index(v);
      if (existing < 0) {
        fv.names.push_back(v);
        fv.domains.push_back(a.domains[i]);
      } else if (fv.domains[static_cast<std::size_t>(existing)] != a.domains[i]) {
        throw std::invalid_argument("logical variable '" + v + "' used with two different domains");
      }
    }
  };
  add_term(f.lhs);
  add_term(f.rhs);
  return fv;
}

// Constants a factor variable may take: its domain minus the exclusions of
// every atom dimension the variable binds. A factor only grounds tuples for
// which both terms exist.
inline std::vector<std::int64_t> factor_var_values(const Model& m, const RnFactor& f,
                                                   const FactorVars& fv, int var) {
  int dom = fv.domains.at(static_cast<std::size_t>(var));
  std::set<std::int64_t> excluded;
  auto scan_term = [&](const Term& t) {
    if (t.kind != Term::Kind::Atom) return;
    const AtomDecl& a = m.atoms.at(static_cast<std::size_t>(t.atom));
    for (int i = 0; i < a.arity(); ++i)
      if (t.vars[static_cast<std::size_t>(i)] == fv.names[static_cast<std::size_t>(var)] &&
          i < static_cast<int>(a.excluded.size()))
        excluded.insert(a.excluded[i].begin(), a.excluded[i].end());
  };
  scan_term(f.lhs);
  scan_term(f.rhs);
  std::vector<std::int64_t> vals;
  for (std::int64_t c = 0; c < m.domains[static_cast<std::size_t>(dom)].size; ++c)
    if (!excluded.count(c)) vals.push_back(c);
  return vals;
}

// Enumerates every grounding (substitution) of a factor, resolving both terms
// to ground refs. Cost is the full substitution count; callers that must stay
// lifted never use this.
template <typename Fn>
void for_each_grounding(const Model& m, const RnFactor& f, Fn&& fn) {
  FactorVars fv = factor_vars(m, f);
  std::vector<std::vector<std::int64_t>> values;
  for (int v = 0; v < static_cast<int>(fv.names.size()); ++v) {
    values.push_back(factor_var_values(m, f, fv, v));
    if (values.back().empty()) return;
  }
  std::vector<std::int64_t> sub(fv.names.size());
  auto resolve = [&](const Term& t) -> GroundRef {
    GroundRef g;
    g.atom = t.atom;
    const AtomDecl& a = m.atoms.at(static_cast<std::size_t>(t.atom));
    for (int i = 0; i < a.arity(); ++i)
      g.binding.push_back(sub[static_cast<std::size_t>(fv.index(t.vars[static_cast<std::size_t>(i)]))]);
    return g;
  };
  std::vector<std::size_t> pos(fv.names.size(), 0);
  for (;;) {
    for (std::size_t v = 0; v < fv.names.size(); ++v) sub[v] = values[v][pos[v]];
    std::optional<GroundRef> lhs, rhs;
    if (f.lhs.kind == Term::Kind::Atom) lhs = resolve(f.lhs);
    if (f.rhs.kind == Term::Kind::Atom) rhs = resolve(f.rhs);
    fn(lhs, rhs);
    if (fv.names.empty()) break;
    std::size_t i = fv.names.size();
    while (i > 0 && ++pos[i - 1] == values[i - 1].size()) {
      pos[i - 1] = 0;
      --i;
    }
    if (i == 0) break;
  }
}

}  // namespace detail

// Structural well-formedness; throws std::invalid_argument on violations.
// Checked by the parser and again by split() for programmatic models.
inline void check_model(const Model& m) {
  for (const auto& d : m.domains) {
    if (d.size <= 0) throw std::invalid_argument("domain '" + d.name + "' has no constants");
    if (!d.constant_names.empty() && static_cast<std::int64_t>(d.constant_names.size()) != d.size)
      throw std::invalid_argument("domain '" + d.name + "' names/size mismatch");
  }
  for (const auto& a : m.atoms) {
    for (int dom : a.domains)
      if (dom < 0 || dom >= static_cast<int>(m.domains.size()))
        throw std::invalid_argument("atom '" + a.name + "' references unknown domain");
    if (!a.excluded.empty() && static_cast<int>(a.excluded.size()) != a.arity())
      throw std::invalid_argument("atom '" + a.name + "' exclusion list arity mismatch");
    for (int i = 0; i < static_cast<int>(a.excluded.size()); ++i) {
      std::int64_t dim = m.domains[static_cast<std::size_t>(a.domains[i])].size;
      for (std::int64_t c : a.excluded[i])
        if (c < 0 || c >= dim)
          throw std::invalid_argument("atom '" + a.name + "' excludes out-of-range constant");
      if (static_cast<std::int64_t>(a.excluded[i].size()) >= dim)
        throw std::invalid_argument("atom '" + a.name + "' has an empty effective domain");
    }
  }
  for (const auto& f : m.factors) {
    for (const Term* t : {&f.lhs, &f.rhs}) {
      if (t->kind != Term::Kind::Atom) continue;
      if (t->atom < 0 || t->atom >= static_cast<int>(m.atoms.size()))
        throw std::invalid_argument("factor references unknown atom");
      const AtomDecl& a = m.atoms[static_cast<std::size_t>(t->atom)];
      if (static_cast<int>(t->vars.size()) != a.arity())
        throw std::invalid_argument("factor term arity mismatch for atom '" + a.name + "'");
      std::set<std::string> seen;
      for (const auto& v : t->vars)
        if (!seen.insert(v).second)
          throw std::invalid_argument("repeated logical variable in one term");
    }
    if (f.lhs.kind == Term::Kind::Constant && f.rhs.kind == Term::Kind::Constant)
      throw std::invalid_argument("factor relates two constants");
    if (f.lhs.kind == Term::Kind::Atom && f.rhs.kind == Term::Kind::Atom &&
        f.lhs.atom == f.rhs.atom && f.lhs.vars == f.rhs.vars)
      throw std::invalid_argument("factor relates a ground variable to itself");
    if (!(f.sigma2 >= 1e-12))
      throw std::invalid_argument("sigma2 must be at least 1e-12");
    detail::factor_vars(m, f);  // consistent domains for shared variables
  }
  std::set<GroundRef> observed;
  for (const auto& o : m.observations) {
    if (!ground_exists(m, o.var)) throw std::invalid_argument("observation of a non-existent ground variable");
    if (!observed.insert(o.var).second) throw std::invalid_argument("duplicate observation");
  }
  std::set<GroundRef> queried;
  for (const auto& q : m.queries) {
    if (!ground_exists(m, q)) throw std::invalid_argument("query of a non-existent ground variable");
    if (observed.count(q)) throw std::invalid_argument("query variable is observed");
    if (!queried.insert(q).second) throw std::invalid_argument("duplicate query variable");
  }
}

}  // namespace rcm

#endif  // RCM_MODEL_HPP
