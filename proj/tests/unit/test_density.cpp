#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <numbers>
#include <random>

#include "../support/generators.hpp"
#include "rcm/density.hpp"
#include "rcm/ground_oracle.hpp"

namespace {

// Positive definiteness of the full live precision matrix, all components.
bool ground_precision_pd(const rcm::Model& m) {
  rcm::PrecisionModel pm = rcm::ground_model(m);
  const std::size_t n = pm.variables.size();
  std::vector<double> a(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) a[i * n + i] = pm.diag[i];
  for (const auto& [ij, v] : pm.off) {
    a[static_cast<std::size_t>(ij.first) * n + static_cast<std::size_t>(ij.second)] += v;
    a[static_cast<std::size_t>(ij.second) * n + static_cast<std::size_t>(ij.first)] += v;
  }
  return rcm::detail::cholesky(a, n);
}

// Renames the constants of one domain by `perm` everywhere they can appear.
rcm::Model permute_domain(const rcm::Model& m, int dom, const std::vector<std::int64_t>& perm) {
  rcm::Model out = m;
  for (auto& a : out.atoms)
    for (std::size_t i = 0; i < a.excluded.size(); ++i) {
      if (a.domains[i] != dom) continue;
      std::set<std::int64_t> mapped;
      for (std::int64_t c : a.excluded[i]) mapped.insert(perm[static_cast<std::size_t>(c)]);
      a.excluded[i] = std::move(mapped);
    }
  auto map_ref = [&](rcm::GroundRef& g) {
    const rcm::AtomDecl& a = out.atoms[static_cast<std::size_t>(g.atom)];
    for (std::size_t i = 0; i < g.binding.size(); ++i)
      if (a.domains[i] == dom) g.binding[i] = perm[static_cast<std::size_t>(g.binding[i])];
  };
  for (auto& o : out.observations) map_ref(o.var);
  for (auto& q : out.queries) map_ref(q);
  return out;
}

}  // namespace

TEST_CASE("one pair at zero difference weighs exactly the normalizer") {
  CHECK(rcm::rn_log_pair(0.0, 0.0, 1.0, 0.0) ==
        Catch::Approx(-0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-15));
  CHECK(rcm::rn_log_pair(1.0, 0.25, 2.0, 0.75) ==
        Catch::Approx(rcm::rn_log_norm(2.0)).epsilon(1e-15));
}

TEST_CASE("ground weight sums every factor grounding") {
  rcm::Model m;
  m.domains.push_back({"D", 2, {}});
  m.atoms.push_back({"A", {0}, {}});
  m.factors.push_back({rcm::Term::atom_ref(0, {"s"}), rcm::Term::constant(0.5), 2.0, 0.25});
  m.observations.push_back({{0, {1}}, 0.8});

  std::map<rcm::GroundRef, double> v{{{0, {0}}, -0.4}};
  double want = rcm::rn_log_pair(-0.4, 0.5, 2.0, 0.25) + rcm::rn_log_pair(0.8, 0.5, 2.0, 0.25);
  CHECK(rcm::ground_weight(m, v) == Catch::Approx(want).epsilon(1e-15));

  CHECK_THROWS_AS(rcm::ground_weight(m, {}), std::invalid_argument);
  std::map<rcm::GroundRef, double> bad{{{0, {0}}, 0.0}, {{0, {1}}, 0.0}};
  CHECK_THROWS_AS(rcm::ground_weight(m, bad), std::invalid_argument);
}

TEST_CASE("ground weight is invariant under domain permutations") {
  std::mt19937_64 g(20240817);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    rcm::Model m = rcmtest::solvable_model(seed);
    const int dom = static_cast<int>(seed % m.domains.size());
    std::vector<std::int64_t> perm(static_cast<std::size_t>(m.domains[static_cast<std::size_t>(dom)].size));
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<std::int64_t>(i);
    std::shuffle(perm.begin(), perm.end(), g);
    rcm::Model pm = permute_domain(m, dom, perm);

    std::map<rcm::GroundRef, double> v, pv;
    for (int a = 0; a < static_cast<int>(m.atoms.size()); ++a) {
      for (auto& gr : rcmtest::all_grounds(m, a)) {
        bool observed = false;
        for (const auto& o : m.observations) observed = observed || o.var == gr;
        if (observed) continue;
        double x = std::uniform_real_distribution<double>(-2.0, 2.0)(g);
        rcm::GroundRef mapped = gr;
        const rcm::AtomDecl& decl = m.atoms[static_cast<std::size_t>(a)];
        for (std::size_t i = 0; i < mapped.binding.size(); ++i)
          if (decl.domains[i] == dom) mapped.binding[i] = perm[static_cast<std::size_t>(mapped.binding[i])];
        v[gr] = x;
        pv[mapped] = x;
      }
    }
    double w = rcm::ground_weight(m, v);
    double pw = rcm::ground_weight(pm, pv);
    CHECK(w == Catch::Approx(pw).epsilon(1e-12));
  }
}

TEST_CASE("component report covers anchoring, connectivity and queries") {
  rcm::Model m;
  m.domains.push_back({"D", 2, {}});
  m.atoms.push_back({"A", {0}, {}});
  m.atoms.push_back({"B", {0}, {}});
  m.factors.push_back({rcm::Term::atom_ref(0, {"s"}), rcm::Term::atom_ref(1, {"s"}), 1.0, 0.0});

  rcm::ValidationReport rep = rcm::validate(m);
  REQUIRE(rep.components.size() == 2);  // one component per constant of D
  CHECK_FALSE(rep.connected);
  CHECK_FALSE(rep.proper_density);
  CHECK(rep.query_ok);  // vacuously: no queries

  m.observations.push_back({{0, {0}}, 1.0});
  rep = rcm::validate(m);
  REQUIRE(rep.components.size() == 2);
  CHECK((rep.components[0].anchored != rep.components[1].anchored));
  CHECK_FALSE(rep.proper_density);

  m.queries.push_back({1, {0}});  // lives in the observation-anchored component
  rep = rcm::validate(m);
  CHECK(rep.query_ok);

  m.queries[0] = {1, {1}};  // lives in the unanchored component
  rep = rcm::validate(m);
  CHECK_FALSE(rep.query_ok);

  m.factors.push_back({rcm::Term::atom_ref(1, {"s"}), rcm::Term::constant(0.0), 1.0, 0.0});
  rep = rcm::validate(m);
  CHECK(rep.proper_density);
  CHECK(rep.query_ok);
}

TEST_CASE("a proper-density verdict coincides with a positive definite ground precision") {
  int proper = 0;
  for (std::uint64_t seed = 1; seed <= 80; ++seed) {
    rcm::Model m = rcmtest::loose_model(seed);
    bool verdict = rcm::validate(m).proper_density;
    CHECK(verdict == ground_precision_pd(m));
    proper += verdict ? 1 : 0;
  }
  CHECK(proper > 5);        // the family must exercise both verdicts
  CHECK(proper < 75);
}
