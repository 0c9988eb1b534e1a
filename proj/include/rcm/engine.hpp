#ifndef RCM_ENGINE_HPP
#define RCM_ENGINE_HPP

// Lifted inference driver. The model is first shattered: every domain is cut
// into singleton pieces for its distinguished constants (anything mentioned
// by an observation, a query, or an atom exclusion) plus one remainder piece,
// and every atom becomes one box per tuple of pieces. Observed boxes fold
// into fixed values immediately. Each factor then expands, piece-assignment
// by piece-assignment, into
//   - anchor terms (one live side) and fully-crossed products (no variable
//     shared across the two sides at piece size >= 2), both absorbed straight
//     into the lifted quadratic form, and
//   - aligned parfactors: the residual product term gamma * sum t1*t2 over
//     tuples whose shared variables range over a common piece; the square,
//     linear and constant parts of those groundings are absorbed anyway.
// Elimination then runs entirely on box atoms: inversion integrates out a
// parfactor-aligned atom whose members are independent given its neighbours,
// and whole-atom / one-variable integration handle form-only atoms. Every
// operation costs time polynomial in the number of boxes, never in the
// cardinalities.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rcm/density.hpp"
#include "rcm/gaussian.hpp"
#include "rcm/ground_oracle.hpp"  // GroundCapExceeded, default_ground_cap
#include "rcm/lifted_form.hpp"
#include "rcm/model.hpp"

namespace rcm {

// No lifted elimination applies and the remaining coupling structure is not
// one this engine can reduce (e.g. an atom aligned with itself).
struct NonPairwiseModel : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EngineOptions {
  bool inversion_only = false;  // forbid whole-atom counting elimination
  bool check_closure = false;   // pairwise-decompose every intermediate form
  std::optional<std::chrono::steady_clock::time_point> deadline;
};

struct EliminationStep {
  enum class Kind { Inversion, AtomEntire, OneGround, Grounding };
  Kind kind = Kind::AtomEntire;
  std::string atom;
  std::int64_t cardinality = 0;
  std::int64_t cost = 0;  // coefficient updates performed by the step
};

inline const char* to_string(EliminationStep::Kind k) {
  switch (k) {
    case EliminationStep::Kind::Inversion: return "inversion";
    case EliminationStep::Kind::AtomEntire: return "atom-entire";
    case EliminationStep::Kind::OneGround: return "one-ground";
    case EliminationStep::Kind::Grounding: return "grounding";
  }
  return "?";
}

// The shattered model: pieces, live box atoms (restricted to the components
// the queries live in), the lifted form, and the aligned parfactors.
struct SplitModel {
  struct Piece {
    int domain = 0;
    std::int64_t size = 0;
    bool singleton = false;
    std::int64_t constant = -1;  // valid when singleton
    std::string label;
  };
  struct BoxAtom {
    std::int64_t id = 0;
    int atom = -1;                        // model atom; -1 for grounded shards
    std::vector<int> pieces;              // piece index per dimension
    std::vector<std::int64_t> dim_sizes;  // piece size per dimension
    std::int64_t cardinality = 1;
    std::string label;
    bool query = false;
  };
  // gamma * sum over tuples of t_a * t_b, the tuple set ranging over the
  // linked dimensions jointly and every unlinked dimension independently.
  struct AlignedParfactor {
    std::int64_t a = 0;
    std::int64_t b = 0;
    std::vector<std::pair<int, int>> links;  // (dim of a, dim of b)
    double gamma = 0.0;
  };

  std::vector<std::vector<Piece>> pieces;        // per domain
  std::vector<std::set<std::int64_t>> distinct;  // distinguished constants per domain
  std::vector<BoxAtom> atoms;                    // ascending id
  LiftedQuadraticForm form;
  std::vector<AlignedParfactor> pfs;
  std::vector<std::int64_t> query_ids;  // model query order
  std::int64_t next_id = 0;

  const BoxAtom& atom(std::int64_t id) const {
    auto it = std::lower_bound(atoms.begin(), atoms.end(), id,
                               [](const BoxAtom& a, std::int64_t v) { return a.id < v; });
    if (it == atoms.end() || it->id != id) throw std::out_of_range("unknown box atom id");
    return *it;
  }
  void erase_atom(std::int64_t id) {
    auto it = std::lower_bound(atoms.begin(), atoms.end(), id,
                               [](const BoxAtom& a, std::int64_t v) { return a.id < v; });
    if (it != atoms.end() && it->id == id) atoms.erase(it);
  }
};

// One lifted elimination the current state admits. The driver always applies
// the first choice; any choice in the list is valid, which is what the
// order-invariance tests exercise.
struct Choice {
  enum class Kind { Inversion, AtomEntire, OneGround, Grounding };
  Kind kind = Kind::AtomEntire;
  std::int64_t atom = 0;
};

struct LiftedResult {
  QueryMarginal marginal;
  std::vector<EliminationStep> trace;
  std::int64_t boxes = 0;
  std::int64_t parfactors = 0;
  int closure_checks = 0;     // pairwise decompositions performed
  double closure_delta = 0.0; // worst round-trip coefficient error seen
};

namespace detail {

inline void add_parfactor(std::vector<SplitModel::AlignedParfactor>& pfs, std::int64_t a,
                          std::int64_t b, std::vector<std::pair<int, int>> links, double gamma) {
  if (b < a) {
    std::swap(a, b);
    for (auto& l : links) std::swap(l.first, l.second);
  }
  std::sort(links.begin(), links.end());
  if (a == b) {
    std::vector<std::pair<int, int>> swapped = links;
    for (auto& l : swapped) std::swap(l.first, l.second);
    std::sort(swapped.begin(), swapped.end());
    if (swapped < links) links = std::move(swapped);
  }
  for (auto& pf : pfs) {
    if (pf.a == a && pf.b == b && pf.links == links) {
      pf.gamma += gamma;
      return;
    }
  }
  pfs.push_back({a, b, std::move(links), gamma});
}

}  // namespace detail

// Shatters the model. Resulting box atoms are restricted to the connected
// components (of the box-level coupling graph) that contain a query; those
// are exactly the ground components of the query variables.
inline SplitModel split(const Model& m) {
  check_model(m);
  SplitModel sm;
  sm.distinct.resize(m.domains.size());
  auto note = [&](const GroundRef& g) {
    const AtomDecl& a = m.atoms[static_cast<std::size_t>(g.atom)];
    for (std::size_t i = 0; i < g.binding.size(); ++i)
      sm.distinct[static_cast<std::size_t>(a.domains[i])].insert(g.binding[i]);
  };
  for (const auto& o : m.observations) note(o.var);
  for (const auto& q : m.queries) note(q);
  for (const auto& a : m.atoms)
    for (std::size_t i = 0; i < a.excluded.size(); ++i)
      for (std::int64_t c : a.excluded[i]) sm.distinct[static_cast<std::size_t>(a.domains[i])].insert(c);

  sm.pieces.resize(m.domains.size());
  for (std::size_t d = 0; d < m.domains.size(); ++d) {
    const LogicalDomain& dom = m.domains[d];
    for (std::int64_t c : sm.distinct[d]) {
      std::string label = dom.constant_names.empty() ? std::to_string(c)
                                                     : dom.constant_names[static_cast<std::size_t>(c)];
      sm.pieces[d].push_back({static_cast<int>(d), 1, true, c, std::move(label)});
    }
    std::int64_t rest = dom.size - static_cast<std::int64_t>(sm.distinct[d].size());
    if (rest > 0) sm.pieces[d].push_back({static_cast<int>(d), rest, false, -1, dom.name + "*"});
  }

  // Box atoms; all-singleton observed boxes fold into fixed values.
  struct Resolved {
    bool live = false;
    std::int64_t id = 0;
    double value = 0.0;
  };
  std::map<std::pair<int, std::vector<int>>, Resolved> resolve;
  std::map<GroundRef, double> observed;
  for (const auto& o : m.observations) observed[o.var] = o.value;
  std::set<GroundRef> queried(m.queries.begin(), m.queries.end());
  std::vector<SplitModel::BoxAtom> boxes;  // before component restriction

  for (int a = 0; a < static_cast<int>(m.atoms.size()); ++a) {
    const AtomDecl& ad = m.atoms[static_cast<std::size_t>(a)];
    std::vector<std::vector<int>> choice(static_cast<std::size_t>(ad.arity()));
    for (int i = 0; i < ad.arity(); ++i) {
      const auto& ps = sm.pieces[static_cast<std::size_t>(ad.domains[i])];
      for (int p = 0; p < static_cast<int>(ps.size()); ++p) {
        if (ps[static_cast<std::size_t>(p)].singleton && i < static_cast<int>(ad.excluded.size()) &&
            ad.excluded[static_cast<std::size_t>(i)].count(ps[static_cast<std::size_t>(p)].constant))
          continue;
        choice[static_cast<std::size_t>(i)].push_back(p);
      }
      if (choice[static_cast<std::size_t>(i)].empty()) break;
    }
    bool any_empty = false;
    for (const auto& c : choice) any_empty = any_empty || c.empty();
    if (ad.arity() > 0 && any_empty) continue;

    std::vector<std::size_t> pos(static_cast<std::size_t>(ad.arity()), 0);
    for (;;) {
      SplitModel::BoxAtom box;
      box.atom = a;
      box.cardinality = 1;
      bool all_singleton = true;
      GroundRef gr{a, {}};
      std::string label = ad.name + "(";
      for (int i = 0; i < ad.arity(); ++i) {
        const SplitModel::Piece& p =
            sm.pieces[static_cast<std::size_t>(ad.domains[i])]
                     [static_cast<std::size_t>(choice[static_cast<std::size_t>(i)][pos[static_cast<std::size_t>(i)]])];
        box.pieces.push_back(choice[static_cast<std::size_t>(i)][pos[static_cast<std::size_t>(i)]]);
        box.dim_sizes.push_back(p.size);
        box.cardinality *= p.size;
        all_singleton = all_singleton && p.singleton;
        if (p.singleton) gr.binding.push_back(p.constant);
        if (i) label += ',';
        label += p.label;
      }
      label += ')';
      auto key = std::make_pair(a, box.pieces);
      if (all_singleton && observed.count(gr)) {
        resolve[key] = {false, 0, observed.at(gr)};
      } else {
        box.id = sm.next_id++;
        box.label = all_singleton ? ground_name(m, gr) : label;
        box.query = all_singleton && queried.count(gr) != 0;
        resolve[key] = {true, box.id, 0.0};
        boxes.push_back(std::move(box));
      }
      int i = ad.arity() - 1;
      while (i >= 0 && ++pos[static_cast<std::size_t>(i)] == choice[static_cast<std::size_t>(i)].size()) {
        pos[static_cast<std::size_t>(i)] = 0;
        --i;
      }
      if (i < 0) break;
    }
  }

  // Expand factors into instances, one per assignment of factor variables to
  // pieces of their effective domains.
  struct Inst {
    enum class Kind { Anchor, Pairs, Aligned };
    Kind kind = Kind::Pairs;
    std::int64_t a = 0;      // live box (Anchor: the only live side)
    std::int64_t b = 0;      // second live box (Pairs/Aligned)
    bool live_lhs = true;    // Anchor: whether the live side is the lhs
    double fixed = 0.0;      // Anchor: the other side's value
    RnPotential pot;
    double count = 0.0;      // groundings covered by this instance
    std::vector<std::pair<int, int>> links;  // Aligned only
  };
  std::vector<Inst> insts;
  detail::UnionFind uf(static_cast<std::size_t>(sm.next_id));

  for (const auto& f : m.factors) {
    detail::FactorVars fv = detail::factor_vars(m, f);
    std::vector<std::vector<int>> vchoice(fv.names.size());
    for (std::size_t v = 0; v < fv.names.size(); ++v) {
      std::vector<std::int64_t> vals = detail::factor_var_values(m, f, fv, static_cast<int>(v));
      std::set<std::int64_t> allowed(vals.begin(), vals.end());
      const auto& ps = sm.pieces[static_cast<std::size_t>(fv.domains[v])];
      for (int p = 0; p < static_cast<int>(ps.size()); ++p) {
        if (ps[static_cast<std::size_t>(p)].singleton &&
            !allowed.count(ps[static_cast<std::size_t>(p)].constant))
          continue;
        vchoice[v].push_back(p);
      }
    }
    bool impossible = false;
    for (const auto& c : vchoice) impossible = impossible || c.empty();
    if (impossible) continue;

    std::vector<std::size_t> pos(fv.names.size(), 0);
    auto var_slot = [&](const std::string& name) {
      for (std::size_t v = 0; v < fv.names.size(); ++v)
        if (fv.names[v] == name) return v;
      throw std::logic_error("factor variable lookup failed");
    };
    for (;;) {
      double count = 1.0;
      for (std::size_t v = 0; v < fv.names.size(); ++v) {
        const auto& p = sm.pieces[static_cast<std::size_t>(fv.domains[v])]
                                 [static_cast<std::size_t>(vchoice[v][pos[v]])];
        count *= static_cast<double>(p.size);
      }
      auto resolve_term = [&](const Term& t) -> std::optional<Resolved> {
        if (t.kind == Term::Kind::Constant) return Resolved{false, 0, t.value};
        std::vector<int> tuple;
        for (const auto& vn : t.vars) {
          std::size_t v = var_slot(vn);
          tuple.push_back(vchoice[v][pos[v]]);
        }
        auto it = resolve.find(std::make_pair(t.atom, tuple));
        if (it == resolve.end()) return std::nullopt;  // piece excluded for this atom
        return it->second;
      };
      std::optional<Resolved> lhs = resolve_term(f.lhs);
      std::optional<Resolved> rhs = resolve_term(f.rhs);
      if (lhs && rhs) {
        RnPotential pot{f.sigma2, f.offset};
        if (lhs->live && rhs->live) {
          Inst in;
          in.b = rhs->id;
          in.a = lhs->id;
          in.pot = pot;
          in.count = count;
          if (f.lhs.kind == Term::Kind::Atom && f.rhs.kind == Term::Kind::Atom) {
            for (std::size_t i = 0; i < f.lhs.vars.size(); ++i)
              for (std::size_t j = 0; j < f.rhs.vars.size(); ++j)
                if (f.lhs.vars[i] == f.rhs.vars[j]) {
                  std::size_t v = var_slot(f.lhs.vars[i]);
                  const auto& p = sm.pieces[static_cast<std::size_t>(fv.domains[v])]
                                           [static_cast<std::size_t>(vchoice[v][pos[v]])];
                  if (p.size >= 2) in.links.emplace_back(static_cast<int>(i), static_cast<int>(j));
                }
          }
          in.kind = in.links.empty() ? Inst::Kind::Pairs : Inst::Kind::Aligned;
          insts.push_back(std::move(in));
          uf.unite(static_cast<int>(lhs->id), static_cast<int>(rhs->id));
        } else if (lhs->live || rhs->live) {
          Inst in;
          in.kind = Inst::Kind::Anchor;
          in.live_lhs = lhs->live;
          in.a = lhs->live ? lhs->id : rhs->id;
          in.fixed = lhs->live ? rhs->value : lhs->value;
          in.pot = pot;
          in.count = count;
          insts.push_back(std::move(in));
        }
        // both sides fixed: a constant factor outside every live component
      }
      std::size_t v = fv.names.size();
      while (v > 0 && ++pos[v - 1] == vchoice[v - 1].size()) {
        pos[v - 1] = 0;
        --v;
      }
      if (v == 0) break;
      if (fv.names.empty()) break;
    }
  }

  // Restrict to query components.
  std::set<int> keep_roots;
  std::map<GroundRef, std::int64_t> query_box;
  for (const auto& box : boxes)
    if (box.query) {
      GroundRef gr{box.atom, {}};
      const AtomDecl& ad = m.atoms[static_cast<std::size_t>(box.atom)];
      for (std::size_t i = 0; i < box.pieces.size(); ++i)
        gr.binding.push_back(sm.pieces[static_cast<std::size_t>(ad.domains[i])]
                                      [static_cast<std::size_t>(box.pieces[i])].constant);
      query_box[gr] = box.id;
      keep_roots.insert(uf.find(static_cast<int>(box.id)));
    }
  auto kept = [&](std::int64_t id) { return keep_roots.count(uf.find(static_cast<int>(id))) != 0; };

  for (auto& box : boxes) {
    if (!kept(box.id)) continue;
    sm.form.add_atom(box.id, box.cardinality, box.label);
    sm.atoms.push_back(std::move(box));
  }
  for (const auto& in : insts) {
    if (!kept(in.a)) continue;
    switch (in.kind) {
      case Inst::Kind::Anchor:
        sm.form.apply_rn_anchor(in.a, in.live_lhs, in.fixed, in.pot, in.count);
        break;
      case Inst::Kind::Pairs:
        sm.form.apply_rn_pairs(in.a, in.b, in.pot, in.count);
        break;
      case Inst::Kind::Aligned:
        sm.form.apply_rn_sides(in.a, in.b, in.pot, in.count);
        detail::add_parfactor(sm.pfs, in.a, in.b, in.links, 1.0 / in.pot.sigma2);
        break;
    }
  }
  for (const auto& q : m.queries) sm.query_ids.push_back(query_box.at(q));
  return sm;
}

namespace detail {

struct OrientedPf {
  std::int64_t partner = 0;
  std::vector<int> edims;               // e-side dims, ascending
  std::map<int, int> to_partner;        // e dim -> partner dim
  double gamma = 0.0;
  double fiber = 1.0;                   // members of e per partner member
};

// Checks whether atom e can be integrated out by inversion: members of e are
// conditionally independent (no within coupling) and every parfactor on e has
// a fully-linked partner, so each partner total sees e only through uniform
// per-member fields.
inline bool inversion_oriented(const SplitModel& sm, std::int64_t e,
                               std::vector<OrientedPf>* out) {
  const SplitModel::BoxAtom& box = sm.atom(e);
  if (sm.form.within(e) != 0.0) return false;
  std::vector<OrientedPf> pfs;
  for (const auto& pf : sm.pfs) {
    if (pf.a != e && pf.b != e) continue;
    if (pf.a == e && pf.b == e) return false;  // atom aligned with itself
    OrientedPf o;
    o.partner = pf.a == e ? pf.b : pf.a;
    o.gamma = pf.gamma;
    std::set<int> pdims;
    for (const auto& l : pf.links) {
      int ed = pf.a == e ? l.first : l.second;
      int pd = pf.a == e ? l.second : l.first;
      o.edims.push_back(ed);
      o.to_partner[ed] = pd;
      pdims.insert(pd);
    }
    const SplitModel::BoxAtom& p = sm.atom(o.partner);
    if (pdims.size() != pf.links.size()) return false;
    // Unlinked partner dimensions are fine only when they are singletons:
    // then each member of e still meets exactly one partner member.
    for (std::size_t d = 0; d < p.dim_sizes.size(); ++d)
      if (!pdims.count(static_cast<int>(d)) && p.dim_sizes[d] != 1) return false;
    std::sort(o.edims.begin(), o.edims.end());
    if (std::adjacent_find(o.edims.begin(), o.edims.end()) != o.edims.end()) return false;
    o.fiber = static_cast<double>(box.cardinality) / static_cast<double>(p.cardinality);
    pfs.push_back(std::move(o));
  }
  if (pfs.empty()) return false;
  if (out) *out = std::move(pfs);
  return true;
}

}  // namespace detail

// All currently valid lifted eliminations, in the order the driver prefers:
// inversion first, then whole-atom integration (replaced in inversion-only
// mode by one-variable loops over singletons and grounding of larger atoms,
// cheapest-degree first).
inline std::vector<Choice> enumerate_choices(const SplitModel& sm, bool inversion_only) {
  std::vector<Choice> out;
  std::set<std::int64_t> pf_touched;
  for (const auto& pf : sm.pfs) {
    pf_touched.insert(pf.a);
    pf_touched.insert(pf.b);
  }
  for (const auto& box : sm.atoms) {
    if (box.query || !pf_touched.count(box.id)) continue;
    if (detail::inversion_oriented(sm, box.id, nullptr))
      out.push_back({Choice::Kind::Inversion, box.id});
  }
  if (!inversion_only) {
    for (const auto& box : sm.atoms)
      if (!box.query && !pf_touched.count(box.id) && box.cardinality >= 2)
        out.push_back({Choice::Kind::AtomEntire, box.id});
    for (const auto& box : sm.atoms)
      if (!box.query && !pf_touched.count(box.id) && box.cardinality == 1)
        out.push_back({Choice::Kind::OneGround, box.id});
    return out;
  }
  std::vector<std::pair<std::size_t, std::int64_t>> singles, bigs;
  for (const auto& box : sm.atoms) {
    if (box.query || pf_touched.count(box.id)) continue;
    std::size_t deg = FormOpsAccess::degree(sm.form, box.id);
    if (box.cardinality == 1)
      singles.emplace_back(deg, box.id);
    else
      bigs.emplace_back(deg, box.id);
  }
  std::sort(singles.begin(), singles.end());
  std::sort(bigs.begin(), bigs.end());
  for (const auto& [deg, id] : singles) out.push_back({Choice::Kind::OneGround, id});
  for (const auto& [deg, id] : bigs) out.push_back({Choice::Kind::Grounding, id});
  return out;
}

namespace detail {

// Integrates out atom e by inversion. With no within coupling, e's precision
// block is a * I, and each member sees the uniform field
//   u = lin + sum_X cross[e,X] sum(X) + sum_pf gamma_pf partner_total(member).
// The Gaussian integral contributes sum over members of u^2/(2a); the uniform
// parts reduce to the whole-atom field square, partner totals enter with
// fiber multiplicities, and products of two parfactor fields reduce to form
// updates (disjoint or identity alignment) or to residual parfactors linked
// on the shared dimensions.
inline std::int64_t inversion_eliminate(SplitModel& sm, std::int64_t e) {
  std::vector<OrientedPf> sides;
  if (!inversion_oriented(sm, e, &sides))
    throw NonPairwiseModel("atom is not inversion-eligible: " + sm.atom(e).label);
  const SplitModel::BoxAtom box = sm.atom(e);
  const double a = -2.0 * sm.form.sq(e);
  if (!(a > kDivergenceEps))
    throw DivergentIntegral("non-positive member precision for " + box.label);
  const double m = static_cast<double>(box.cardinality);
  const double lin_e = sm.form.lin(e);
  const auto coup = FormOpsAccess::couplings(sm.form, e);

  sm.form.add_log_const(0.5 * m * std::log(2.0 * std::numbers::pi / a));
  FormOpsAccess::remove(sm.form, e);
  FormOpsAccess::field_square(sm.form, m / (2.0 * a), lin_e, coup);

  std::int64_t cost = static_cast<std::int64_t>((coup.size() + 1) * (coup.size() + 2) / 2);
  for (const auto& s : sides) {
    sm.form.add_lin(s.partner, s.gamma * s.fiber * lin_e / a);
    for (const auto& [x, cx] : coup)
      sm.form.add_sum_product(x, s.partner, s.gamma * s.fiber * cx / a);
    sm.form.add_sq(s.partner, s.gamma * s.gamma * s.fiber / (2.0 * a));
    cost += static_cast<std::int64_t>(coup.size()) + 2;
  }
  for (std::size_t i = 0; i < sides.size(); ++i) {
    for (std::size_t j = i + 1; j < sides.size(); ++j) {
      const OrientedPf &s1 = sides[i], &s2 = sides[j];
      std::vector<int> overlap;
      std::set_intersection(s1.edims.begin(), s1.edims.end(), s2.edims.begin(), s2.edims.end(),
                            std::back_inserter(overlap));
      double mult = 1.0;
      for (std::size_t d = 0; d < box.dim_sizes.size(); ++d) {
        bool in1 = std::binary_search(s1.edims.begin(), s1.edims.end(), static_cast<int>(d));
        bool in2 = std::binary_search(s2.edims.begin(), s2.edims.end(), static_cast<int>(d));
        if (!in1 && !in2) mult *= static_cast<double>(box.dim_sizes[d]);
      }
      const double g = s1.gamma * s2.gamma * mult / a;
      ++cost;
      if (overlap.empty()) {
        sm.form.add_sum_product(s1.partner, s2.partner, g);
        continue;
      }
      bool identity_all = s1.partner == s2.partner && s1.edims == s2.edims &&
                          overlap.size() == s1.edims.size();
      std::vector<std::pair<int, int>> links;
      for (int o : overlap) {
        int d1 = s1.to_partner.at(o), d2 = s2.to_partner.at(o);
        identity_all = identity_all && d1 == d2;
        links.emplace_back(d1, d2);
      }
      if (identity_all)
        sm.form.add_sq(s1.partner, g);
      else
        add_parfactor(sm.pfs, s1.partner, s2.partner, std::move(links), g);
    }
  }
  std::erase_if(sm.pfs, [&](const SplitModel::AlignedParfactor& pf) {
    return pf.a == e || pf.b == e;
  });
  sm.erase_atom(e);
  return cost;
}

// Replaces a form-only atom by one singleton box per member: identical square
// and linear coefficients, the within coupling becoming pairwise products.
inline std::int64_t ground_atom(SplitModel& sm, std::int64_t e) {
  const SplitModel::BoxAtom box = sm.atom(e);
  if (auto cap = default_ground_cap(); cap && box.cardinality > *cap)
    throw GroundCapExceeded(box.cardinality, *cap);
  const double sq = sm.form.sq(e), w = sm.form.within(e), lin = sm.form.lin(e);
  const auto coup = FormOpsAccess::couplings(sm.form, e);
  FormOpsAccess::remove(sm.form, e);
  sm.erase_atom(e);
  std::vector<std::int64_t> shard(static_cast<std::size_t>(box.cardinality));
  sm.form.reserve_atoms(sm.form.atom_count() + shard.size());
  for (std::size_t k = 0; k < shard.size(); ++k) {
    std::int64_t id = sm.next_id++;
    shard[k] = id;
    SplitModel::BoxAtom b;
    b.id = id;
    b.label = box.label + "#" + std::to_string(k);
    sm.atoms.push_back(b);
    sm.form.add_atom(id, 1, b.label);
    sm.form.add_sq(id, sq);
    sm.form.add_lin(id, lin);
    for (const auto& [x, cx] : coup) sm.form.add_sum_product(id, x, cx);
    if (w != 0.0)
      for (std::size_t j = 0; j < k; ++j) sm.form.add_sum_product(id, shard[j], w);
  }
  return box.cardinality * (static_cast<std::int64_t>(coup.size()) + 2) +
         (w != 0.0 ? box.cardinality * (box.cardinality - 1) / 2 : 0);
}

}  // namespace detail

// Applies one elimination; returns the trace entry.
inline EliminationStep apply_choice(SplitModel& sm, const Choice& c) {
  EliminationStep step;
  step.atom = sm.atom(c.atom).label;
  step.cardinality = sm.atom(c.atom).cardinality;
  switch (c.kind) {
    case Choice::Kind::Inversion:
      step.kind = EliminationStep::Kind::Inversion;
      step.cost = detail::inversion_eliminate(sm, c.atom);
      break;
    case Choice::Kind::AtomEntire:
    case Choice::Kind::OneGround: {
      step.kind = c.kind == Choice::Kind::AtomEntire ? EliminationStep::Kind::AtomEntire
                                                     : EliminationStep::Kind::OneGround;
      std::size_t deg = FormOpsAccess::degree(sm.form, c.atom);
      step.cost = static_cast<std::int64_t>((deg + 1) * (deg + 2) / 2 + 1);
      FormOpsAccess::whole(sm.form, c.atom);
      sm.erase_atom(c.atom);
      break;
    }
    case Choice::Kind::Grounding:
      step.kind = EliminationStep::Kind::Grounding;
      step.cost = detail::ground_atom(sm, c.atom);
      break;
  }
  return step;
}

// Runs shattering and the elimination loop to completion, returning the exact
// query marginal, the normalizer of the queried components, and the trace.
inline LiftedResult fove_continuous(const Model& m, const EngineOptions& opt = {}) {
  ValidationReport rep = validate(m);
  if (!rep.query_ok)
    throw DivergentIntegral("a query variable lies in an unanchored component");

  LiftedResult res;
  SplitModel sm = split(m);
  res.boxes = static_cast<std::int64_t>(sm.atoms.size());
  res.parfactors = static_cast<std::int64_t>(sm.pfs.size());

  auto closure = [&]() {
    if (!opt.check_closure) return;
    PairwiseDecomposition d = sm.form.to_pairwise();
    double delta = max_coefficient_delta(LiftedQuadraticForm::expand(d), sm.form, false);
    res.closure_checks += 1;
    res.closure_delta = std::max(res.closure_delta, delta);
  };
  closure();

  for (;;) {
    if (opt.deadline && std::chrono::steady_clock::now() > *opt.deadline)
      throw DeadlineExceeded("lifted elimination passed its deadline");
    std::vector<Choice> cs = enumerate_choices(sm, opt.inversion_only);
    if (cs.empty()) {
      bool pending = !sm.pfs.empty();
      for (const auto& box : sm.atoms) pending = pending || !box.query;
      if (pending)
        throw NonPairwiseModel("no lifted elimination applies to the remaining structure");
      break;
    }
    res.trace.push_back(apply_choice(sm, cs.front()));
    closure();
  }

  const std::size_t q = sm.query_ids.size();
  std::vector<double> a(q * q, 0.0), b(q);
  std::vector<std::string> names(q);
  for (std::size_t i = 0; i < q; ++i) {
    std::int64_t qi = sm.query_ids[i];
    names[i] = sm.atom(qi).label;
    a[i * q + i] = -2.0 * sm.form.sq(qi);
    b[i] = sm.form.lin(qi);
    for (std::size_t j = i + 1; j < q; ++j) {
      double c = sm.form.cross(qi, sm.query_ids[j]);
      a[i * q + j] = -c;
      a[j * q + i] = -c;
    }
  }
  res.marginal = detail::finish_gaussian(std::move(a), std::move(b), sm.form.log_const(),
                                         std::move(names));
  return res;
}

}  // namespace rcm

#endif  // RCM_ENGINE_HPP
