#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "rcm/gaussian.hpp"

namespace {

// Simpson quadrature of exp(-a x^2 + 2 b x + c) over a generous window.
double quadrature_log_integral(double a, double b, double c) {
  const double center = b / a;
  const double radius = 12.0 / std::sqrt(a);
  const int steps = 40000;  // even
  const double h = 2.0 * radius / steps;
  double sum = 0.0;
  for (int i = 0; i <= steps; ++i) {
    double x = center - radius + h * static_cast<double>(i);
    double w = (i == 0 || i == steps) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    sum += w * std::exp(-a * x * x + 2.0 * b * x + c);
  }
  return std::log(sum * h / 3.0);
}

}  // namespace

TEST_CASE("the scalar integral matches quadrature") {
  for (auto [a, b, c] : {std::tuple{1.0, 0.0, 0.0}, std::tuple{0.5, 1.3, -0.2},
                         std::tuple{3.0, -2.0, 1.5}, std::tuple{10.0, 4.0, 0.0}}) {
    CHECK(rcm::integrate_scalar(a, b, c) ==
          Catch::Approx(quadrature_log_integral(a, b, c)).epsilon(1e-9));
  }
}

TEST_CASE("non-positive quadratic coefficients diverge") {
  CHECK_THROWS_AS(rcm::integrate_scalar(0.0, 1.0, 0.0), rcm::DivergentIntegral);
  CHECK_THROWS_AS(rcm::integrate_scalar(-2.0, 0.0, 0.0), rcm::DivergentIntegral);
  CHECK_THROWS_AS(rcm::integrate_scalar(1e-13, 0.0, 0.0), rcm::DivergentIntegral);
}

TEST_CASE("the dense finisher reproduces the one-variable closed form") {
  // -1/2 * 2 x^2 + 1 x + 0.25: mean 0.5, variance 0.5.
  rcm::QueryMarginal qm = rcm::detail::finish_gaussian({2.0}, {1.0}, 0.25, {"x"});
  CHECK(qm.mean[0] == Catch::Approx(0.5).epsilon(1e-15));
  CHECK(qm.cov[0][0] == Catch::Approx(0.5).epsilon(1e-15));
  // log integral = c + 1/2 log(2 pi / A) + b^2 / (2 A)
  double want = 0.25 + 0.5 * std::log(2.0 * std::numbers::pi / 2.0) + 0.25;
  CHECK(qm.log_normalizer == Catch::Approx(want).epsilon(1e-14));
}

TEST_CASE("the dense finisher inverts a two-by-two precision") {
  // A = [[2, -1], [-1, 3]], b = [1, 0]; inverse = [[3, 1], [1, 2]] / 5.
  rcm::QueryMarginal qm =
      rcm::detail::finish_gaussian({2.0, -1.0, -1.0, 3.0}, {1.0, 0.0}, 0.0, {"x", "y"});
  CHECK(qm.cov[0][0] == Catch::Approx(0.6).epsilon(1e-14));
  CHECK(qm.cov[0][1] == Catch::Approx(0.2).epsilon(1e-14));
  CHECK(qm.cov[1][0] == Catch::Approx(0.2).epsilon(1e-14));
  CHECK(qm.cov[1][1] == Catch::Approx(0.4).epsilon(1e-14));
  CHECK(qm.mean[0] == Catch::Approx(0.6).epsilon(1e-14));
  CHECK(qm.mean[1] == Catch::Approx(0.2).epsilon(1e-14));
  double want = std::log(2.0 * std::numbers::pi) - 0.5 * std::log(5.0) + 0.5 * 0.6;
  CHECK(qm.log_normalizer == Catch::Approx(want).epsilon(1e-14));
}

TEST_CASE("an empty query block reduces to the constant") {
  rcm::QueryMarginal qm = rcm::detail::finish_gaussian({}, {}, -1.75, {});
  CHECK(qm.names.empty());
  CHECK(qm.log_normalizer == -1.75);
}

TEST_CASE("an indefinite precision matrix is rejected") {
  CHECK_THROWS_AS(rcm::detail::finish_gaussian({1.0, 2.0, 2.0, 1.0}, {0.0, 0.0}, 0.0, {"x", "y"}),
                  rcm::DivergentIntegral);
  CHECK_THROWS_AS(rcm::detail::finish_gaussian({0.0}, {0.0}, 0.0, {"x"}), rcm::DivergentIntegral);
}

TEST_CASE("the Cholesky solver matches a hand-solved system") {
  // A = [[4, 2], [2, 3]] = L L^T with L = [[2, 0], [1, sqrt(2)]].
  std::vector<double> a{4.0, 2.0, 2.0, 3.0};
  REQUIRE(rcm::detail::cholesky(a, 2));
  CHECK(a[0] == Catch::Approx(2.0));
  CHECK(a[2] == Catch::Approx(1.0));
  CHECK(a[3] == Catch::Approx(std::sqrt(2.0)));
  // Solve A x = [10, 8]: x = [7/4, 3/2].
  auto x = rcm::detail::cholesky_solve(a, 2, {10.0, 8.0});
  CHECK(x[0] == Catch::Approx(1.75).epsilon(1e-14));
  CHECK(x[1] == Catch::Approx(1.5).epsilon(1e-14));
}
