#ifndef RCM_GAUSSIAN_HPP
#define RCM_GAUSSIAN_HPP

// Shared primitives for Gaussian integrals: error types, the scalar integral,
// and the dense finisher that turns a residual quadratic log-weight
//   log w(x) = -1/2 x^T A x + b^T x + c
// over the query variables into a mean / covariance / log-normalizer triple.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace rcm {

// An integral over a direction with non-positive precision: the weight
// function does not normalize.
struct DivergentIntegral : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A form (or elimination residue) left the product-of-pairwise-Gaussians
// class.
struct NonPairwiseResidue : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A cooperative deadline passed mid-computation.
struct DeadlineExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Smallest acceptable pivot / eigenvalue. Anything at or below is treated as
// a divergent (non-normalizable) direction.
inline constexpr double kDivergenceEps = 1e-12;

// Closed form of log integral exp(-a x^2 + 2 b x + c) dx.
inline double integrate_scalar(double a, double b, double c) {
  if (!(a > kDivergenceEps))
    throw DivergentIntegral("scalar integral diverges: quadratic coefficient " +
                            std::to_string(a));
  return 0.5 * std::log(std::numbers::pi / a) + b * b / a + c;
}

// Exact marginal of the query variables: density N(mean, cov) together with
// the log of the total weight integral over the queried components.
struct QueryMarginal {
  std::vector<std::string> names;
  std::vector<double> mean;
  std::vector<std::vector<double>> cov;  // row-major, names order
  double log_normalizer = 0.0;
};

namespace detail {

// In-place lower Cholesky of a flat row-major symmetric matrix; returns false
// when a pivot falls below the divergence threshold.
inline bool cholesky(std::vector<double>& a, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      if (i == j) {
        if (!(s > kDivergenceEps)) return false;
        a[i * n + i] = std::sqrt(s);
      } else {
        a[i * n + j] = s / a[j * n + j];
      }
    }
  }
  return true;
}

// Solves L L^T x = rhs with L the lower factor stored in `chol`.
inline std::vector<double> cholesky_solve(const std::vector<double>& chol, std::size_t n,
                                          std::vector<double> rhs) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) rhs[i] -= chol[i * n + k] * rhs[k];
    rhs[i] /= chol[i * n + i];
  }
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t k = i + 1; k < n; ++k) rhs[i] -= chol[k * n + i] * rhs[k];
    rhs[i] /= chol[i * n + i];
  }
  return rhs;
}

// Finishes -1/2 x^T A x + b^T x + c over the named variables.
inline QueryMarginal finish_gaussian(std::vector<double> a, std::vector<double> b, double c,
                                     std::vector<std::string> names) {
  const std::size_t n = names.size();
  QueryMarginal out;
  out.names = std::move(names);
  if (n == 0) {
    out.log_normalizer = c;
    return out;
  }
  std::vector<double> chol = a;
  if (!cholesky(chol, n))
    throw DivergentIntegral("query precision matrix is not positive definite");
  double log_det = 0.0;
  for (std::size_t i = 0; i < n; ++i) log_det += 2.0 * std::log(chol[i * n + i]);
  out.mean = cholesky_solve(chol, n, b);
  out.cov.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> e(n, 0.0);
    e[j] = 1.0;
    std::vector<double> col = cholesky_solve(chol, n, std::move(e));
    for (std::size_t i = 0; i < n; ++i) out.cov[i][j] = col[i];
  }
  double quad = 0.0;
  for (std::size_t i = 0; i < n; ++i) quad += b[i] * out.mean[i];
  out.log_normalizer = c + 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi) -
                       0.5 * log_det + 0.5 * quad;
  return out;
}

}  // namespace detail
}  // namespace rcm

#endif  // RCM_GAUSSIAN_HPP
