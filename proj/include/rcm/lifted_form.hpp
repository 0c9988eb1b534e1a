#ifndef RCM_LIFTED_FORM_HPP
#define RCM_LIFTED_FORM_HPP

// Quadratic log-weight over whole relational atoms, written in the sufficient
// statistics of exchangeable blocks. For an atom X with m ground variables:
//   sum_sq(X)   = sum_i x_i^2
//   sum_pair(X) = sum_{i<j} x_i x_j
//   sum(X)      = sum_i x_i            with  sum(X)^2 = sum_sq + 2 sum_pair.
// A form stores one coefficient per statistic:
//   log w = sum_X sq[X] sum_sq(X) + within[X] sum_pair(X) + lin[X] sum(X)
//         + sum_{X<Y} cross[X,Y] sum(X) sum(Y) + log_const.
// Every member of an atom couples identically to every other atom's total,
// so integrating out a whole atom touches coefficients only: the atom's
// precision block a I - w (J - I) has just two distinct eigenvalues,
//   a + w        (multiplicity m-1, orthogonal to the all-ones direction)
//   a - (m-1) w  (the all-ones direction),
// and the block inverse applied to a uniform field is uniform. Elimination is
// therefore O(#atoms^2) regardless of cardinalities.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rcm/density.hpp"   // rn_log_norm
#include "rcm/gaussian.hpp"  // DivergentIntegral, NonPairwiseResidue, integrate_scalar

namespace rcm {

struct RnPotential {
  double sigma2 = 1.0;
  double offset = 0.0;
};

struct FormAtomSpec {
  std::int64_t id = 0;
  std::int64_t cardinality = 1;
  std::string label;
};

// One factor of a pairwise decomposition; expanding all terms reproduces the
// originating form up to log_const.
struct PairwiseTerm {
  enum class Kind { Within, Cross, Anchor };
  Kind kind = Kind::Cross;
  std::int64_t a = 0;      // atom id
  std::int64_t b = 0;      // second atom (Cross only)
  double sigma2 = 1.0;     // pairwise variance parameter
  double offset = 0.0;     // Cross: mean shift; Anchor: the constant value
};

struct PairwiseDecomposition {
  std::vector<FormAtomSpec> atoms;
  std::vector<PairwiseTerm> terms;
};

class LiftedQuadraticForm {
 public:
  struct Atom {
    std::int64_t id = 0;
    std::int64_t cardinality = 1;
    std::string label;
    double sq = 0.0;
    double within = 0.0;  // inert when cardinality == 1 (no pairs exist)
    double lin = 0.0;
  };

  LiftedQuadraticForm() = default;

  // -- construction -------------------------------------------------------

  void add_atom(std::int64_t id, std::int64_t cardinality, std::string label = {}) {
    if (cardinality < 1) throw std::invalid_argument("atom cardinality must be >= 1");
    if (slot_.count(id)) throw std::invalid_argument("duplicate atom id in form");
    slot_[id] = static_cast<int>(atoms_.size());
    atoms_.push_back(Atom{id, cardinality, std::move(label), 0.0, 0.0, 0.0});
    for (auto& row : cross_) row.push_back(0.0);
    cross_.emplace_back(atoms_.size(), 0.0);
  }

  void reserve_atoms(std::size_t n) {
    atoms_.reserve(n);
    cross_.reserve(n);
  }

  void add_sq(std::int64_t id, double c) { at(id).sq += c; }
  void add_within(std::int64_t id, double c) { at(id).within += c; }
  void add_lin(std::int64_t id, double c) { at(id).lin += c; }
  void add_log_const(double c) { log_const_ += c; }

  // Adds c * sum(A) * sum(B); for A == B this is c * sum(A)^2, which folds
  // into the square and pair statistics.
  void add_sum_product(std::int64_t a, std::int64_t b, double c) {
    if (a == b) {
      at(a).sq += c;
      at(a).within += 2.0 * c;
      return;
    }
    int i = slot_of(a), j = slot_of(b);
    cross_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] += c;
    cross_[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] += c;
  }

  // The all-pairs Gaussian product between two atoms: every member of X
  // against every member of Y.
  static LiftedQuadraticForm from_rn(const FormAtomSpec& x, const FormAtomSpec& y,
                                     const RnPotential& pot) {
    LiftedQuadraticForm f;
    f.add_atom(x.id, x.cardinality, x.label);
    f.add_atom(y.id, y.cardinality, y.label);
    f.apply_rn_pairs(x.id, y.id, pot, static_cast<double>(x.cardinality) * static_cast<double>(y.cardinality));
    return f;
  }

  // Square, linear and constant parts of `pairs` groundings of an RN
  // potential between live atoms a and b, each member appearing pairs/|side|
  // times. The product part is NOT included: callers either track it as an
  // aligned parfactor or add it via add_sum_product.
  void apply_rn_sides(std::int64_t a, std::int64_t b, const RnPotential& pot, double pairs) {
    const double k = 1.0 / pot.sigma2;
    const double fa = pairs / static_cast<double>(at(a).cardinality);
    const double fb = pairs / static_cast<double>(at(b).cardinality);
    at(a).sq += -0.5 * k * fa;
    at(b).sq += -0.5 * k * fb;
    at(a).lin += k * pot.offset * fa;
    at(b).lin += -k * pot.offset * fb;
    log_const_ += pairs * (-pot.offset * pot.offset * 0.5 * k + rn_log_norm(pot.sigma2));
  }

  // Accumulates `pairs` all-pairs groundings of an RN potential between live
  // atoms a, b (every member of a against every member of b; a == b includes
  // the zero-contributing degenerate diagonal). Used by from_rn
  // (pairs = |a||b|) and by the engine for fully-crossed sub-factors.
  void apply_rn_pairs(std::int64_t a, std::int64_t b, const RnPotential& pot, double pairs) {
    apply_rn_sides(a, b, pot, pairs);
    add_sum_product(a, b, (pairs / (static_cast<double>(at(a).cardinality) *
                                    static_cast<double>(at(b).cardinality))) /
                              pot.sigma2);
  }

  // `count` anchored groundings of an RN between members of atom a and the
  // fixed value v, with a on the given side of the potential.
  void apply_rn_anchor(std::int64_t a, bool atom_on_lhs, double v, const RnPotential& pot,
                       double count) {
    const double k = 1.0 / pot.sigma2;
    // -(x - t)^2 / (2 s2) with t the effective target for the live side.
    const double t = atom_on_lhs ? v + pot.offset : v - pot.offset;
    const double per_member = count / static_cast<double>(at(a).cardinality);
    at(a).sq += -0.5 * k * per_member;
    at(a).lin += k * t * per_member;
    log_const_ += count * (-0.5 * k * t * t + rn_log_norm(pot.sigma2));
  }

  // -- access --------------------------------------------------------------

  bool has_atom(std::int64_t id) const { return slot_.count(id) != 0; }
  std::size_t atom_count() const { return atoms_.size(); }
  const Atom& atom(std::int64_t id) const { return atoms_[static_cast<std::size_t>(slot_of(id))]; }
  const std::vector<Atom>& atoms() const { return atoms_; }
  double sq(std::int64_t id) const { return atom(id).sq; }
  double within(std::int64_t id) const { return atom(id).within; }
  double lin(std::int64_t id) const { return atom(id).lin; }
  double log_const() const { return log_const_; }
  std::int64_t cardinality(std::int64_t id) const { return atom(id).cardinality; }

  double cross(std::int64_t a, std::int64_t b) const {
    if (a == b) return 0.0;
    return cross_[static_cast<std::size_t>(slot_of(a))][static_cast<std::size_t>(slot_of(b))];
  }

  // Live atoms coupled to `id` through a nonzero product coefficient.
  std::vector<std::int64_t> neighbors(std::int64_t id) const {
    std::vector<std::int64_t> out;
    int s = slot_of(id);
    for (std::size_t j = 0; j < atoms_.size(); ++j)
      if (static_cast<int>(j) != s && cross_[static_cast<std::size_t>(s)][j] != 0.0)
        out.push_back(atoms_[j].id);
    return out;
  }

  // -- elimination ---------------------------------------------------------

  // Integrates out every ground variable of one atom in closed form.
  LiftedQuadraticForm eliminate_atom_entirely(std::int64_t id) const {
    LiftedQuadraticForm f = *this;
    f.eliminate_atom_entirely_inplace(id);
    return f;
  }

  // Integrates out n of the m variables of an atom whose restriction is a
  // pure within-atom Gaussian product; the survivors form the same product at
  // variance scaled by m / (m - n).
  LiftedQuadraticForm eliminate_within_atom(std::int64_t id, std::int64_t n) const {
    LiftedQuadraticForm f = *this;
    f.eliminate_within_atom_inplace(id, n);
    return f;
  }

  // Splits one ground variable off an atom and integrates it symbolically.
  LiftedQuadraticForm eliminate_one_ground(std::int64_t id) const {
    LiftedQuadraticForm f = *this;
    f.eliminate_one_ground_inplace(id);
    return f;
  }

  void eliminate_atom_entirely_inplace(std::int64_t id) {
    const Atom e = atom(id);
    const double m = static_cast<double>(e.cardinality);
    const double a = -2.0 * e.sq;
    const double w = e.within;
    const double lam_perp = a + w;                 // multiplicity m-1
    const double lam_one = a - (m - 1.0) * w;      // the uniform direction
    if (e.cardinality >= 2 && !(lam_perp > kDivergenceEps))
      throw DivergentIntegral("block eigenvalue not positive for atom " + describe(e));
    if (!(lam_one > kDivergenceEps))
      throw DivergentIntegral("uniform-direction eigenvalue not positive for atom " + describe(e));
    log_const_ += 0.5 * m * std::log(2.0 * std::numbers::pi) -
                  0.5 * ((m - 1.0) * std::log(lam_perp) + std::log(lam_one));
    std::vector<std::pair<std::int64_t, double>> coup = couplings(id);
    remove_atom(id);
    apply_field_square(m / (2.0 * lam_one), e.lin, coup);
  }

  void eliminate_within_atom_inplace(std::int64_t id, std::int64_t n) {
    Atom& e = at(id);
    const double m = static_cast<double>(e.cardinality);
    if (n < 0) throw std::invalid_argument("negative elimination count");
    if (n >= e.cardinality)
      throw DivergentIntegral("a pure within-atom product has no anchor for its last variable");
    if (!couplings(id).empty() || e.lin != 0.0)
      throw std::invalid_argument("atom is not a pure within-atom product (outside couplings present)");
    if (!(e.within > kDivergenceEps))
      throw std::invalid_argument("atom is not a pure within-atom product (no pair coefficient)");
    const double s = 1.0 / e.within;  // pairwise variance
    if (std::abs(e.sq + 0.5 * (m - 1.0) * e.within) > 1e-9 * (1.0 + std::abs(e.sq)))
      throw std::invalid_argument("atom is not a pure within-atom product (square coefficient mismatch)");
    if (n == 0) return;
    const double rest = m - static_cast<double>(n);
    log_const_ += 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi * s / m) +
                  0.5 * std::log(m / rest);
    e.cardinality -= n;
    e.within = 1.0 / (s * rest / m);
    e.sq = -0.5 * (rest - 1.0) * e.within;
  }

  void eliminate_one_ground_inplace(std::int64_t id) {
    Atom& e = at(id);
    if (e.cardinality == 1) {
      eliminate_atom_entirely_inplace(id);
      return;
    }
    // The split-off variable keeps the shared square/linear coefficients and
    // couples to the remainder of its own atom through the pair coefficient.
    const double a = -2.0 * e.sq;
    if (!(a > kDivergenceEps))
      throw DivergentIntegral("split variable has non-positive precision in atom " + describe(e));
    const double lin = e.lin;
    std::vector<std::pair<std::int64_t, double>> coup = couplings(id);
    if (e.within != 0.0) coup.emplace_back(id, e.within);
    e.cardinality -= 1;
    log_const_ += 0.5 * std::log(2.0 * std::numbers::pi / a);
    apply_field_square(0.5 / a, lin, coup);
  }

  // -- pairwise decomposition ----------------------------------------------

  // Rewrites the form as a product of pairwise Gaussians (all-pairs within an
  // atom, all-pairs across two atoms, or member-vs-constant anchors). Linear
  // coefficients become anchor values where an atom has its own anchor mass,
  // otherwise mean shifts routed towards an anchored atom.
  PairwiseDecomposition to_pairwise() const {
    const std::size_t n = atoms_.size();
    double scale = std::abs(log_const_);
    for (std::size_t i = 0; i < n; ++i) {
      scale = std::max({scale, std::abs(atoms_[i].sq), std::abs(atoms_[i].within), std::abs(atoms_[i].lin)});
      for (std::size_t j = 0; j < n; ++j) scale = std::max(scale, std::abs(cross_[i][j]));
    }
    const double tol = 1e-9 * (1.0 + scale);

    PairwiseDecomposition out;
    for (const Atom& a : atoms_) out.atoms.push_back({a.id, a.cardinality, a.label});

    std::vector<double> q(n, 0.0);  // anchor mass per atom
    for (std::size_t i = 0; i < n; ++i) {
      const Atom& a = atoms_[i];
      double w = a.cardinality >= 2 ? a.within : 0.0;
      if (w < -tol) throw NonPairwiseResidue("negative within-pair coefficient on " + describe(a));
      double expected = -0.5 * (static_cast<double>(a.cardinality) - 1.0) * std::max(w, 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        double c = cross_[i][j];
        if (c < -tol) throw NonPairwiseResidue("negative cross-pair coefficient on " + describe(a));
        expected += -0.5 * std::max(c, 0.0) * static_cast<double>(atoms_[j].cardinality);
      }
      q[i] = expected - a.sq;  // -(residual square coefficient)
      if (q[i] < -tol) throw NonPairwiseResidue("positive square residue on " + describe(a));
    }

    // Route linear mass towards anchored atoms over cross edges.
    std::vector<int> dist(n, -1);
    std::vector<int> parent(n, -1);
    std::vector<std::size_t> frontier;
    for (std::size_t i = 0; i < n; ++i)
      if (q[i] > tol) {
        dist[i] = 0;
        frontier.push_back(i);
      }
    for (std::size_t head = 0; head < frontier.size(); ++head) {
      std::size_t u = frontier[head];
      for (std::size_t v = 0; v < n; ++v)
        if (dist[v] < 0 && cross_[u][v] > tol) {
          dist[v] = dist[u] + 1;
          parent[v] = static_cast<int>(u);
          frontier.push_back(v);
        }
    }

    std::vector<double> lin_rem(n);
    for (std::size_t i = 0; i < n; ++i) lin_rem[i] = atoms_[i].lin;
    std::map<std::pair<std::size_t, std::size_t>, double> pair_offset;  // (from,to) -> d
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (dist[a] != dist[b]) return dist[a] > dist[b];
      return a < b;
    });
    for (std::size_t i : order) {
      if (std::abs(lin_rem[i]) <= tol) {
        lin_rem[i] = 0.0;
        continue;
      }
      if (dist[i] < 0)
        throw NonPairwiseResidue("unanchored linear residue on " + describe(atoms_[i]));
      if (dist[i] == 0) continue;  // absorbed by this atom's anchor below
      std::size_t p = static_cast<std::size_t>(parent[i]);
      double c = cross_[i][p];
      double d = lin_rem[i] / (c * static_cast<double>(atoms_[p].cardinality));
      pair_offset[{i, p}] = d;
      lin_rem[p] += lin_rem[i] * static_cast<double>(atoms_[i].cardinality) /
                    static_cast<double>(atoms_[p].cardinality);
      lin_rem[i] = 0.0;
    }

    for (std::size_t i = 0; i < n; ++i) {
      const Atom& a = atoms_[i];
      if (a.cardinality >= 2 && a.within > tol)
        out.terms.push_back({PairwiseTerm::Kind::Within, a.id, 0, 1.0 / a.within, 0.0});
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        double c = cross_[i][j];
        if (c <= tol) continue;
        double d = 0.0;
        if (auto it = pair_offset.find({i, j}); it != pair_offset.end()) d = it->second;
        if (auto it = pair_offset.find({j, i}); it != pair_offset.end()) d = -it->second;
        out.terms.push_back({PairwiseTerm::Kind::Cross, atoms_[i].id, atoms_[j].id, 1.0 / c, d});
      }
    for (std::size_t i = 0; i < n; ++i) {
      if (q[i] <= tol) continue;
      double value = lin_rem[i] / (2.0 * q[i]);
      out.terms.push_back({PairwiseTerm::Kind::Anchor, atoms_[i].id, 0, 0.5 / q[i], value});
    }
    return out;
  }

  // Rebuilds a form from a pairwise decomposition (inverse of to_pairwise up
  // to log_const).
  static LiftedQuadraticForm expand(const PairwiseDecomposition& d) {
    LiftedQuadraticForm f;
    for (const auto& a : d.atoms) f.add_atom(a.id, a.cardinality, a.label);
    for (const auto& t : d.terms) {
      switch (t.kind) {
        case PairwiseTerm::Kind::Within: {
          const Atom& a = f.at(t.a);
          double m = static_cast<double>(a.cardinality);
          double k = 1.0 / t.sigma2;
          double pairs = 0.5 * m * (m - 1.0);
          f.at(t.a).within += k;
          f.at(t.a).sq += -0.5 * k * (m - 1.0);
          f.log_const_ += pairs * rn_log_norm(t.sigma2);
          break;
        }
        case PairwiseTerm::Kind::Cross:
          f.apply_rn_pairs(t.a, t.b, {t.sigma2, t.offset},
                           static_cast<double>(f.at(t.a).cardinality) *
                               static_cast<double>(f.at(t.b).cardinality));
          break;
        case PairwiseTerm::Kind::Anchor:
          f.apply_rn_anchor(t.a, true, t.offset, {t.sigma2, 0.0},
                            static_cast<double>(f.at(t.a).cardinality));
          break;
      }
    }
    return f;
  }

 private:
  Atom& at(std::int64_t id) { return atoms_[static_cast<std::size_t>(slot_of(id))]; }

  int slot_of(std::int64_t id) const {
    auto it = slot_.find(id);
    if (it == slot_.end()) throw std::out_of_range("unknown atom id in form: " + std::to_string(id));
    return it->second;
  }

  static std::string describe(const Atom& a) {
    return a.label.empty() ? std::to_string(a.id) : a.label;
  }

  std::vector<std::pair<std::int64_t, double>> couplings(std::int64_t id) const {
    std::vector<std::pair<std::int64_t, double>> out;
    int s = slot_of(id);
    for (std::size_t j = 0; j < atoms_.size(); ++j)
      if (static_cast<int>(j) != s && cross_[static_cast<std::size_t>(s)][j] != 0.0)
        out.emplace_back(atoms_[j].id, cross_[static_cast<std::size_t>(s)][j]);
    return out;
  }

  void remove_atom(std::int64_t id) {
    std::size_t s = static_cast<std::size_t>(slot_of(id));
    std::size_t last = atoms_.size() - 1;
    if (s != last) {
      std::swap(atoms_[s], atoms_[last]);
      std::swap(cross_[s], cross_[last]);
      for (auto& row : cross_) std::swap(row[s], row[last]);
      slot_[atoms_[s].id] = static_cast<int>(s);
    }
    slot_.erase(id);
    atoms_.pop_back();
    cross_.pop_back();
    for (auto& row : cross_) row.pop_back();
  }

  // Adds k * (lin + sum_j c_j sum(A_j))^2 expanded over the statistics.
  void apply_field_square(double k, double lin,
                          const std::vector<std::pair<std::int64_t, double>>& coup) {
    log_const_ += k * lin * lin;
    for (const auto& [bid, cb] : coup) {
      at(bid).lin += 2.0 * k * lin * cb;
      for (const auto& [cid, cc] : coup) {
        if (cid < bid) continue;
        if (cid == bid)
          add_sum_product(bid, bid, k * cb * cb);
        else
          add_sum_product(bid, cid, 2.0 * k * cb * cc);
      }
    }
  }

  std::vector<Atom> atoms_;
  std::vector<std::vector<double>> cross_;
  std::map<std::int64_t, int> slot_;
  double log_const_ = 0.0;

  friend struct FormOpsAccess;
};

// Internal hook for the elimination driver; keeps the public elimination API
// value-semantic while the engine mutates its working copy in place.
struct FormOpsAccess {
  static void whole(LiftedQuadraticForm& f, std::int64_t id) { f.eliminate_atom_entirely_inplace(id); }
  static void one_ground(LiftedQuadraticForm& f, std::int64_t id) { f.eliminate_one_ground_inplace(id); }
  static std::vector<std::pair<std::int64_t, double>> couplings(const LiftedQuadraticForm& f,
                                                                std::int64_t id) {
    return f.couplings(id);
  }
  static std::size_t degree(const LiftedQuadraticForm& f, std::int64_t id) {
    std::size_t s = static_cast<std::size_t>(f.slot_of(id)), n = 0;
    for (std::size_t j = 0; j < f.atoms_.size(); ++j)
      if (j != s && f.cross_[s][j] != 0.0) ++n;
    return n;
  }
  static void remove(LiftedQuadraticForm& f, std::int64_t id) { f.remove_atom(id); }
  static void field_square(LiftedQuadraticForm& f, double k, double lin,
                           const std::vector<std::pair<std::int64_t, double>>& coup) {
    f.apply_field_square(k, lin, coup);
  }
};

// Largest absolute coefficient difference between two forms over the same
// atoms. Pair coefficients of single-member atoms are ignored: they multiply
// an empty statistic. log_const is compared only when `with_const`.
inline double max_coefficient_delta(const LiftedQuadraticForm& a, const LiftedQuadraticForm& b,
                                    bool with_const = true) {
  double delta = 0.0;
  if (a.atom_count() != b.atom_count()) return std::numeric_limits<double>::infinity();
  for (const auto& atom : a.atoms()) {
    if (!b.has_atom(atom.id) || b.cardinality(atom.id) != atom.cardinality)
      return std::numeric_limits<double>::infinity();
    delta = std::max(delta, std::abs(atom.sq - b.sq(atom.id)));
    delta = std::max(delta, std::abs(atom.lin - b.lin(atom.id)));
    if (atom.cardinality >= 2)
      delta = std::max(delta, std::abs(atom.within - b.within(atom.id)));
    for (const auto& other : a.atoms())
      if (other.id > atom.id)
        delta = std::max(delta, std::abs(a.cross(atom.id, other.id) - b.cross(atom.id, other.id)));
  }
  if (with_const) delta = std::max(delta, std::abs(a.log_const() - b.log_const()));
  return delta;
}

}  // namespace rcm

#endif  // RCM_LIFTED_FORM_HPP
