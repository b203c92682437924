#pragma once

// Independent reference computations shared by the unit and acceptance tests.
// Nothing here calls into the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

namespace oracle {

inline constexpr double kPi = std::numbers::pi;

// Composite 20-point Gauss-Legendre; panels keep rate * width <= 6 so e^{-rate x} is resolved.
template <class F>
double panel_gauss(F&& f, double a, double b, double rate) {
  if (!(b > a)) return 0.0;
  const int panels = std::max(1, static_cast<int>(std::ceil(rate * (b - a) / 6.0)));
  const double h = (b - a) / panels;
  double s = 0.0;
  for (int p = 0; p < panels; ++p) {
    s += boost::math::quadrature::gauss<double, 20>::integrate(f, a + p * h, a + (p + 1) * h);
  }
  return s;
}

// B~_k^l(t) straight from the iterated-integral definition:
// F_l(t) = e^{-(Z + gt l) t}, F_j(t) = gt j int_0^t e^{-(Z + gt j)(t - u)} F_{j+1}(u) du, B~ = F_k(t).
inline double nested_B(std::size_t j, std::size_t ell, double gt, double Z, double t) {
  const double rj = Z + gt * static_cast<double>(j);
  if (j == ell) return std::exp(-rj * t);
  auto f = [&](double u) { return std::exp(-rj * (t - u)) * nested_B(j + 1, ell, gt, Z, u); };
  return gt * static_cast<double>(j) * panel_gauss(f, 0.0, t, rj);
}

// A~_k^l(t): G_{l+1} = 1, G_j(t) = gt j int_0^t e^{-(Z + gt j)(t - u)} G_{j+1}(u) du, A~ = G_k(t).
// The innermost level is integrated by hand when there is more than one level.
inline double nested_A_level(std::size_t j, std::size_t ell, std::size_t k, double gt, double Z, double t) {
  const double rj = Z + gt * static_cast<double>(j);
  const double pref = gt * static_cast<double>(j);
  if (j == ell && ell > k) return pref * (-std::expm1(-rj * t)) / rj;
  auto f = [&](double u) {
    const double inner = j == ell ? 1.0 : nested_A_level(j + 1, ell, k, gt, Z, u);
    return std::exp(-rj * (t - u)) * inner;
  };
  return pref * panel_gauss(f, 0.0, t, rj);
}

inline double nested_A(std::size_t k, std::size_t ell, double gt, double Z, double t) {
  return nested_A_level(k, ell, k, gt, Z, t);
}

// prod_{i=k}^{l} i / (i + alpha), multiplied out directly.
inline double sup_product(std::size_t k, std::size_t ell, double alpha) {
  double p = 1.0;
  for (std::size_t i = k; i <= ell; ++i) p *= static_cast<double>(i) / (static_cast<double>(i) + alpha);
  return p;
}

inline double binomial(std::size_t n, std::size_t r) {
  return std::exp(std::lgamma(n + 1.0) - std::lgamma(r + 1.0) - std::lgamma(n - r + 1.0));
}

// B~ via the convolution-of-exponentials identity, coded independently of the library.
inline double B_formula(std::size_t k, std::size_t ell, double gt, double Z, double t) {
  const double g = 1.0 - std::exp(-gt * t);
  return std::exp(-(Z + gt * k) * t) * binomial(ell - 1, k - 1) * std::pow(g, static_cast<double>(ell - k));
}

// Scalar Gaussian KL: KL(N(0, lam) | N(0, s)).
inline double kl_scalar(double lam, double s) { return 0.5 * (lam / s - 1.0 - std::log(lam / s)); }

// Stationary (v, c) of the exchangeable linear system solved by Cramer's rule.
struct VC {
  double v, c;
};
inline VC stationary_vc(double a, double b, double sigma, std::size_t n) {
  const double nm1 = static_cast<double>(n) - 1.0;
  // -2(a+b) v + 2b c = -sigma^2 ; (2b/(n-1)) v + (-2(a+b) + 2b(n-2)/(n-1)) c = 0
  const double a11 = -2.0 * (a + b), a12 = 2.0 * b;
  const double a21 = 2.0 * b / nm1, a22 = -2.0 * (a + b) + 2.0 * b * (static_cast<double>(n) - 2.0) / nm1;
  const double r1 = -sigma * sigma, r2 = 0.0;
  const double det = a11 * a22 - a12 * a21;
  return {(r1 * a22 - a12 * r2) / det, (a11 * r2 - r1 * a21) / det};
}

// Stationary k-marginal KL against N(0, s) from the eigenstructure of the exchangeable covariance.
inline double exchangeable_kl(double v, double c, double s, std::size_t k) {
  double h = kl_scalar(v + (static_cast<double>(k) - 1.0) * c, s);
  if (k > 1) h += (static_cast<double>(k) - 1.0) * kl_scalar(v - c, s);
  return h;
}

// Ordinary least squares slope of y on x.
inline double ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace oracle
