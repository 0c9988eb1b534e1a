#ifndef RCM_GROUND_ORACLE_HPP
#define RCM_GROUND_ORACLE_HPP

// Reference inference path: fully ground the model into one precision matrix
// over the unobserved variables and integrate variables out one at a time in
// declaration order. Costs are cubic in the number of ground variables; the
// point of this path is to be an obviously-correct oracle, not to be fast.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "rcm/density.hpp"
#include "rcm/gaussian.hpp"
#include "rcm/model.hpp"

namespace rcm {

struct GroundCapExceeded : std::runtime_error {
  std::int64_t variables = 0;
  std::int64_t cap = 0;
  GroundCapExceeded(std::int64_t n, std::int64_t c)
      : std::runtime_error("ground model has " + std::to_string(n) +
                           " variables, above the cap of " + std::to_string(c)),
        variables(n),
        cap(c) {}
};

// Cap on the number of ground variables the oracle will materialize;
// RCM_GROUND_CAP overrides (0 disables the cap).
inline std::optional<std::int64_t> default_ground_cap() {
  if (const char* env = std::getenv("RCM_GROUND_CAP")) {
    char* end = nullptr;
    long long v = std::strtoll(env, &end, 10);
    if (end && *end == '\0' && v >= 0) return v == 0 ? std::optional<std::int64_t>{} : v;
  }
  return 20000;
}

// Sparse ground precision form: log w(x) = -1/2 x^T J x + h^T x + c, with the
// constant tracked per connected component so queries can be restricted to
// their own components.
struct PrecisionModel {
  std::vector<GroundRef> variables;  // live (unobserved) vars, declaration order
  std::vector<std::string> names;
  std::vector<double> diag;
  std::vector<double> h;
  std::map<std::pair<int, int>, double> off;  // (i,j) with i<j
  std::vector<int> component;                 // compact component id per variable
  std::vector<double> component_const;
  std::vector<int> query;  // indices into variables, query declaration order
};

inline PrecisionModel ground_model(const Model& m,
                                   std::optional<std::int64_t> cap = default_ground_cap()) {
  detail::GroundComponents gc(m);
  const std::size_t n = gc.vars.variables.size();
  if (cap && static_cast<std::int64_t>(n) > *cap)
    throw GroundCapExceeded(static_cast<std::int64_t>(n), *cap);

  PrecisionModel pm;
  pm.variables = gc.vars.variables;
  pm.names.reserve(n);
  for (const auto& g : pm.variables) pm.names.push_back(ground_name(m, g));
  pm.diag.assign(n, 0.0);
  pm.h.assign(n, 0.0);
  pm.component.assign(n, -1);
  std::map<int, int> root_to_comp;
  for (std::size_t i = 0; i < n; ++i) {
    int root = gc.component_of(static_cast<int>(i));
    auto [it, fresh] = root_to_comp.try_emplace(root, static_cast<int>(pm.component_const.size()));
    if (fresh) pm.component_const.push_back(0.0);
    pm.component[i] = it->second;
  }
  for (const auto& q : m.queries) pm.query.push_back(gc.vars.index.at(q));

  for (const auto& f : m.factors) {
    const double k = 1.0 / f.sigma2;
    const double d = f.offset;
    detail::for_each_grounding(m, f, [&](const std::optional<GroundRef>& lhs,
                                         const std::optional<GroundRef>& rhs) {
      auto fixed_value = [&](const std::optional<GroundRef>& g, const Term& t) {
        if (!g) return t.value;
        return gc.vars.observed.at(*g);
      };
      bool l_live = lhs && !gc.vars.observed.count(*lhs);
      bool r_live = rhs && !gc.vars.observed.count(*rhs);
      if (!l_live && !r_live) return;  // constant factor: outside all live components
      if (l_live && r_live) {
        int a = gc.vars.index.at(*lhs), b = gc.vars.index.at(*rhs);
        double& c = pm.component_const[static_cast<std::size_t>(pm.component[static_cast<std::size_t>(a)])];
        if (a == b) {  // degenerate pair of a variable with itself
          c += -0.5 * k * d * d + rn_log_norm(f.sigma2);
          return;
        }
        pm.diag[static_cast<std::size_t>(a)] += k;
        pm.diag[static_cast<std::size_t>(b)] += k;
        pm.off[{std::min(a, b), std::max(a, b)}] += -k;
        pm.h[static_cast<std::size_t>(a)] += k * d;
        pm.h[static_cast<std::size_t>(b)] += -k * d;
        c += -0.5 * k * d * d + rn_log_norm(f.sigma2);
        return;
      }
      int x = l_live ? gc.vars.index.at(*lhs) : gc.vars.index.at(*rhs);
      double v = l_live ? fixed_value(rhs, f.rhs) : fixed_value(lhs, f.lhs);
      double t = l_live ? v + d : v - d;  // effective target for the live side
      pm.diag[static_cast<std::size_t>(x)] += k;
      pm.h[static_cast<std::size_t>(x)] += k * t;
      pm.component_const[static_cast<std::size_t>(pm.component[static_cast<std::size_t>(x)])] +=
          -0.5 * k * t * t + rn_log_norm(f.sigma2);
    });
  }
  return pm;
}

// Integrates out every non-query variable of the query components in
// declaration order, then finishes the residual query block. Components not
// containing a query variable are ignored entirely (their weight may even
// diverge without affecting the query marginal).
inline QueryMarginal oracle_marginal(
    const PrecisionModel& pm,
    std::optional<std::chrono::steady_clock::time_point> deadline = {}) {
  std::set<int> query_comps;
  std::set<int> query_vars(pm.query.begin(), pm.query.end());
  for (int qi : pm.query) query_comps.insert(pm.component[static_cast<std::size_t>(qi)]);

  std::vector<int> keep;  // non-queries in declaration order, then queries
  for (std::size_t i = 0; i < pm.variables.size(); ++i)
    if (query_comps.count(pm.component[i]) && !query_vars.count(static_cast<int>(i)))
      keep.push_back(static_cast<int>(i));
  const std::size_t elim = keep.size();
  for (int qi : pm.query) keep.push_back(qi);
  const std::size_t n = keep.size();
  const std::size_t q = pm.query.size();

  std::vector<int> local(pm.variables.size(), -1);
  for (std::size_t i = 0; i < n; ++i) local[static_cast<std::size_t>(keep[i])] = static_cast<int>(i);

  // Dense upper triangle of the restricted precision matrix.
  std::vector<double> a(n * n, 0.0);
  std::vector<double> b(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    a[i * n + i] = pm.diag[static_cast<std::size_t>(keep[i])];
    b[i] = pm.h[static_cast<std::size_t>(keep[i])];
  }
  for (const auto& [ij, v] : pm.off) {
    int li = local[static_cast<std::size_t>(ij.first)], lj = local[static_cast<std::size_t>(ij.second)];
    if (li < 0 || lj < 0) continue;
    a[static_cast<std::size_t>(std::min(li, lj)) * n + static_cast<std::size_t>(std::max(li, lj))] += v;
  }
  double c = 0.0;
  for (int comp : query_comps) c += pm.component_const[static_cast<std::size_t>(comp)];

  for (std::size_t t = 0; t < elim; ++t) {
    if (deadline && std::chrono::steady_clock::now() > *deadline)
      throw DeadlineExceeded("ground elimination passed its deadline");
    const double* rowt = &a[t * n];
    const double att = rowt[t];
    if (!(att > kDivergenceEps))
      throw DivergentIntegral("non-positive pivot while eliminating " +
                              pm.names[static_cast<std::size_t>(keep[t])]);
    const double bt = b[t];
    c += 0.5 * std::log(2.0 * std::numbers::pi / att) + bt * bt / (2.0 * att);
    for (std::size_t i = t + 1; i < n; ++i) {
      const double ait = rowt[i];
      if (ait == 0.0) continue;
      const double f = ait / att;
      b[i] -= f * bt;
      double* rowi = &a[i * n];
      for (std::size_t j = i; j < n; ++j) rowi[j] -= f * rowt[j];
    }
  }

  std::vector<double> aq(q * q, 0.0);
  std::vector<double> bq(q, 0.0);
  std::vector<std::string> names(q);
  for (std::size_t i = 0; i < q; ++i) {
    bq[i] = b[elim + i];
    names[i] = pm.names[static_cast<std::size_t>(keep[elim + i])];
    for (std::size_t j = 0; j < q; ++j) {
      std::size_t r = std::min(elim + i, elim + j), s = std::max(elim + i, elim + j);
      aq[i * q + j] = a[r * n + s];
    }
  }
  return detail::finish_gaussian(std::move(aq), std::move(bq), c, std::move(names));
}

}  // namespace rcm

#endif  // RCM_GROUND_ORACLE_HPP
