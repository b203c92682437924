#include "poc/theory_bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/tools/minima.hpp>
#include <boost/numeric/odeint.hpp>
#include <fmt/format.h>

#include "poc/errors.hpp"

namespace poc {

namespace {

constexpr double kInfinity = std::numeric_limits<double>::infinity();

void require_positive(double x, const char* name) {
  if (!(x > 0.0) || !std::isfinite(x)) throw ParameterError(fmt::format("{} must be positive and finite, got {}", name, x));
}

void require_nonnegative(double x, const char* name) {
  if (!(x >= 0.0) || !std::isfinite(x)) throw ParameterError(fmt::format("{} must be >= 0 and finite, got {}", name, x));
}

void require_indices(std::size_t k, std::size_t ell) {
  if (k < 1) throw DomainError("k must be >= 1");
  if (ell < k) throw DomainError(fmt::format("need l >= k, got k = {}, l = {}", k, ell));
}

// log binom(a + b, b) for nonnegative integers.
double log_binomial(std::size_t top, std::size_t bottom) {
  const std::size_t small = std::min(bottom, top - bottom);
  if (small <= 64) {
    double s = 0.0;
    for (std::size_t j = 1; j <= small; ++j) {
      s += std::log(static_cast<double>(top - small + j) / static_cast<double>(j));
    }
    return s;
  }
  return std::lgamma(static_cast<double>(top) + 1.0) - std::lgamma(static_cast<double>(bottom) + 1.0) -
         std::lgamma(static_cast<double>(top - bottom) + 1.0);
}

// log prod_{i=k}^{l} i / (i + a).
double log_sup_product(std::size_t k, std::size_t ell, double alpha) {
  double s = 0.0;
  for (std::size_t i = k; i <= ell; ++i) s -= std::log1p(alpha / static_cast<double>(i));
  return s;
}

// log(1 + (1 + a)^a / |x|), overflow safe.
double log_lemma_factor(double alpha, double gap) {
  const double L = alpha * std::log1p(alpha) - std::log(std::fabs(gap));
  return L > 700.0 ? L : std::log1p(std::exp(L));
}

double sum_case_rhs(std::size_t k, std::size_t n, double p, double alpha) {
  const double kk = static_cast<double>(k), nn = static_cast<double>(n);
  if (p - alpha > -1.0) return std::pow(kk, alpha) / std::pow(nn, alpha + 1.0 - p);
  return std::pow(kk, p + 1.0) / (nn * nn);
}

}  // namespace

double TheoryConstants::r_c() const { return std::pow(sigma, 4) / (4.0 * gamma * eta) - 1.0; }

std::optional<double> TheoryConstants::p_c() const {
  if (!bsq_sup) return std::nullopt;
  return std::pow(sigma, 4) / (8.0 * eta * *bsq_sup);
}

void validate_constants(const TheoryConstants& tc) {
  require_positive(tc.sigma, "sigma");
  require_positive(tc.gamma, "gamma");
  require_positive(tc.eta, "eta");
  require_positive(tc.delta, "delta");
  require_nonnegative(tc.M, "M");
  require_nonnegative(tc.C0, "C0");
  if (tc.bsq_sup) require_positive(*tc.bsq_sup, "sup |b|^2");
}

bool HierarchyProfile::nondecreasing(double tol) const {
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] < values[i - 1] - tol * std::max(1.0, std::fabs(values[i - 1]))) return false;
  }
  return true;
}

RateConstants rate_constants(double sigma, double gamma, double eta, std::optional<double> bsq_sup) {
  TheoryConstants tc{.sigma = sigma, .gamma = gamma, .eta = eta, .bsq_sup = bsq_sup};
  validate_constants(tc);
  return {tc.r_c(), tc.p_c()};
}

ExplicitConstants explicit_C1_C2(double M, double sigma, double gamma, double eta, double C0) {
  require_nonnegative(M, "M");
  require_nonnegative(C0, "C0");
  require_positive(sigma, "sigma");
  require_positive(gamma, "gamma");
  require_positive(eta, "eta");
  const double s4 = std::pow(sigma, 4);
  if (!(s4 > 12.0 * gamma * eta)) {
    throw RegimeError(fmt::format("explicit constants untracked: sigma^4 = {} <= 12 gamma eta = {}", s4, 12.0 * gamma * eta));
  }
  const double slack = 1.0 - 12.0 * gamma * eta / s4;
  ExplicitConstants out;
  out.C1 = 10000.0 * M * s4 * gamma * gamma * eta / (slack * slack);
  out.C2 = 1250.0 * (C0 + std::sqrt(gamma * M * C0) * eta / s4 / slack) * (s4 * s4) / (gamma * gamma * eta * eta);
  return out;
}

double tilde_B_closed(std::size_t k, std::size_t ell, double gamma_tilde, double Z, double t) {
  require_indices(k, ell);
  require_positive(gamma_tilde, "gamma_tilde");
  require_nonnegative(Z, "Z");
  if (!(t >= 0.0)) throw DomainError("t must be >= 0");
  const double decay = -(Z + gamma_tilde * static_cast<double>(k)) * t;
  if (ell == k) return std::exp(decay);
  if (t == 0.0) return 0.0;
  const double log_frac = std::log(-std::expm1(-gamma_tilde * t));
  return std::exp(decay + log_binomial(ell - 1, k - 1) + static_cast<double>(ell - k) * log_frac);
}

TildeASup tilde_A_sup(std::size_t k, std::size_t ell, double alpha) {
  require_indices(k, ell);
  require_positive(alpha, "alpha");
  const double kk = static_cast<double>(k), ll = static_cast<double>(ell);
  TildeASup out;
  const double log_value = log_sup_product(k, ell, alpha);
  const double log_shifted = alpha * std::log((kk + alpha) / (ll + 1.0 + alpha));
  const double log_scaled = alpha * (std::log1p(alpha) + std::log(kk / (ll + 1.0)));
  out.value = std::exp(log_value);
  out.bound_shifted = std::exp(log_shifted);
  out.bound_scaled = std::exp(log_scaled);
  constexpr double slack = 1e-12;
  if (log_value > log_shifted + slack || log_shifted > log_scaled + slack) {
    throw InternalConsistencyError(
        fmt::format("sup A~ bound chain broken at k = {}, l = {}, alpha = {}", k, ell, alpha));
  }
  return out;
}

double tilde_A_time(std::size_t k, std::size_t ell, double gamma_tilde, double Z, double t, double tol) {
  require_indices(k, ell);
  require_positive(gamma_tilde, "gamma_tilde");
  require_nonnegative(Z, "Z");
  require_positive(tol, "tol");
  if (!(t >= 0.0)) throw DomainError("t must be >= 0");
  if (t == 0.0) return 0.0;
  // Substituting u = 1 - e^{-gt s} turns gt l B~ ds into l binom(l-1, k-1) (1-u)^{a+k-1} u^{l-k} du.
  const double a = Z / gamma_tilde;
  const double upper = -std::expm1(-gamma_tilde * t);
  const double log_c = std::log(static_cast<double>(ell)) + log_binomial(ell - 1, k - 1);
  const double pw = a + static_cast<double>(k) - 1.0;
  const double pu = static_cast<double>(ell - k);
  auto f = [&](double u) {
    if (u <= 0.0) return pu == 0.0 ? std::exp(log_c) : 0.0;
    if (u >= 1.0) return pw == 0.0 ? std::exp(log_c) : 0.0;
    return std::exp(log_c + pw * std::log1p(-u) + pu * std::log(u));
  };
  double err = 0.0;
  double value = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, upper, 20, tol, &err);
  if (err <= tol * std::max(std::fabs(value), 1e-300)) return value;
  boost::math::quadrature::tanh_sinh<double> ts;
  double l1 = 0.0;
  value = ts.integrate(f, 0.0, upper, tol, &err, &l1);
  if (err <= tol * std::max(std::fabs(value), 1e-300)) return value;
  throw PrecisionError(fmt::format("A~ quadrature reached error {} above tolerance {} (k = {}, l = {})", err, tol, k, ell));
}

double tilde_A_closed(std::size_t k, std::size_t ell, double gamma_tilde, double Z, double t) {
  require_indices(k, ell);
  require_positive(gamma_tilde, "gamma_tilde");
  require_nonnegative(Z, "Z");
  if (!(t >= 0.0)) throw DomainError("t must be >= 0");
  if (t == 0.0) return 0.0;
  const double a = Z / gamma_tilde;
  const double upper = -std::expm1(-gamma_tilde * t);
  const double sup = std::exp(log_sup_product(k, ell, a));
  return sup * boost::math::ibeta(static_cast<double>(ell - k + 1), static_cast<double>(k) + a, upper);
}

SumBoundsReport lemma_sum_bounds(std::size_t k, std::size_t n, double p, double gamma_tilde, double Z, double T) {
  if (k < 1 || k >= n) throw DomainError(fmt::format("need 1 <= k < n, got k = {}, n = {}", k, n));
  require_nonnegative(p, "p");
  require_positive(gamma_tilde, "gamma_tilde");
  require_positive(Z, "Z");
  if (!(T >= 0.0)) throw DomainError("T must be >= 0");
  const double kk = static_cast<double>(k), nn = static_cast<double>(n);
  const double alpha = Z / gamma_tilde;

  SumBoundsReport rep;
  for (std::size_t ell = k; ell < n; ++ell) {
    rep.lhsB += std::pow(static_cast<double>(ell), p) * tilde_B_closed(k, ell, gamma_tilde, Z, T);
  }
  rep.rhsB = 2.0 * std::exp(p * std::log(kk) + p * std::log1p(p) + (gamma_tilde * p - Z) * T);
  constexpr double slack = 1e-12;
  rep.violation = rep.lhsB > rep.rhsB * (1.0 + slack);

  const double gap = p - alpha + 1.0;
  if (std::fabs(gap) < 1e-12) {
    rep.note = "p = alpha - 1 excluded; A-case skipped";
    return rep;
  }
  double sum = 0.0;
  double log_sup = 0.0;
  for (std::size_t ell = k; ell < n; ++ell) {
    log_sup -= std::log1p(alpha / static_cast<double>(ell));
    sum += std::exp(p * std::log(static_cast<double>(ell)) + log_sup);
  }
  rep.lhsA = std::exp(std::log(sum / (nn * nn)) - log_lemma_factor(alpha, gap));
  rep.a_case_upper = p - alpha > -1.0;
  rep.rhsA = sum_case_rhs(k, n, p, alpha);
  rep.violation = rep.violation || *rep.lhsA > *rep.rhsA * (1.0 + slack);
  return rep;
}

GammaRatioCheck gamma_bound_check(std::size_t z, double p) {
  if (z < 1) throw DomainError("z must be >= 1");
  require_nonnegative(p, "p");
  const double zz = static_cast<double>(z);
  GammaRatioCheck c;
  c.lhs = (p - 1.0) * std::log(zz) + std::lgamma(zz + 1.0);
  c.rhs = std::log(2.0) + std::lgamma(zz + p);
  c.holds = c.lhs <= c.rhs + 1e-12 * std::max(1.0, std::fabs(c.rhs));
  return c;
}

GammaChainCheck gamma_chain_check(std::size_t k, double p) {
  if (k < 1) throw DomainError("k must be >= 1");
  if (!(p >= 1.0)) throw DomainError(fmt::format("the gamma ratio step needs p >= 1, got {}", p));
  const double kk = static_cast<double>(k);
  const double tol = 1e-12;
  const double log_ratio = std::lgamma(kk + p) - std::lgamma(kk);
  const double log_mid = std::log(kk) + (p - 1.0) * std::log(kk + p);
  const double log_pow = p * std::log(kk + p);
  const double log_fac = p * (std::log(kk) + std::log1p(p));
  GammaChainCheck c;
  c.ratio_ok = log_ratio <= log_mid + tol * std::max(1.0, std::fabs(log_mid));
  c.power_ok = log_mid <= log_pow + tol * std::max(1.0, std::fabs(log_pow));
  c.factor_ok = log_pow <= log_fac + tol * std::max(1.0, std::fabs(log_fac));
  return c;
}

HierarchyProfile hierarchy_ode_solve(double c1, double c2, double c3, std::size_t n, const HierarchyProfile& H0,
                                     const std::function<double(double)>& boundary, double T) {
  require_nonnegative(c1, "c1");
  require_nonnegative(c2, "c2");
  require_nonnegative(c3, "c3");
  if (n < 2) throw ParameterError("hierarchy needs n >= 2");
  if (H0.values.size() != n) throw InvalidInput(fmt::format("H0 has {} values, expected {}", H0.values.size(), n));
  for (double v : H0.values) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidInput("H0 values must be finite and >= 0");
  }
  if (!(T >= 0.0)) throw DomainError("T must be >= 0");
  if (!boundary) throw InvalidInput("boundary trajectory is required");

  using State = std::vector<double>;
  const double nn2 = static_cast<double>(n) * static_cast<double>(n);
  State x(H0.values.begin(), H0.values.end() - 1);
  auto rhs = [&](const State& y, State& dy, double t) {
    const std::size_t m = y.size();
    for (std::size_t i = 0; i < m; ++i) {
      const double kk = static_cast<double>(i + 1);
      const double next = i + 1 < m ? y[i + 1] : boundary(t);
      dy[i] = -c1 * y[i] + c2 * kk * kk * kk / nn2 + c3 * kk * (next - y[i]);
    }
  };

  namespace odeint = boost::numeric::odeint;
  auto stepper = odeint::make_controlled<odeint::runge_kutta_dopri5<State>>(1e-12, 1e-10);
  double t = 0.0;
  const double fastest = c1 + c3 * static_cast<double>(n);
  double dt = std::min(T, fastest > 0.0 ? 0.1 / fastest : T);
  constexpr std::size_t kMaxAttempts = 5'000'000;
  std::size_t attempts = 0;
  while (t < T) {
    if (++attempts > kMaxAttempts) throw StepSizeError(fmt::format("hierarchy ODE exceeded {} step attempts", kMaxAttempts));
    dt = std::min(dt, T - t);
    if (dt < 1e-14 * std::max(1.0, T)) throw StepSizeError(fmt::format("hierarchy ODE step collapsed at t = {}", t));
    if (stepper.try_step(rhs, x, t, dt) == odeint::fail) continue;
    if (T - t < 1e-15 * std::max(1.0, T)) t = T;
  }

  HierarchyProfile out;
  out.n = n;
  out.t = T;
  out.values.assign(x.begin(), x.end());
  out.values.push_back(boundary(T));
  double scale = 0.0;
  for (double v : out.values) scale = std::max(scale, std::fabs(v));
  for (double& v : out.values) {
    if (!std::isfinite(v)) throw NumericalError("hierarchy ODE produced a non-finite value");
    if (v < 0.0) {
      if (v < -1e-9 * std::max(scale, 1e-300)) throw NumericalError(fmt::format("hierarchy ODE went negative: {}", v));
      v = 0.0;
    }
  }
  return out;
}

namespace {

struct SumTerms {
  double sum_b = 0.0;       // sum l^{p1} B~
  double sum_a_n2 = 0.0;    // (1/n^2) sum l^q A~
  double a_last = 0.0;      // A~_k^{n-1}
  bool exact = true;
};

SumTerms assemble_sums(std::size_t k, std::size_t n, double p1, double q, double gt, double Z, double T) {
  SumTerms s;
  const double nn = static_cast<double>(n), kk = static_cast<double>(k);
  const double alpha = Z / gt;
  if (n <= kExactSumLimit) {
    for (std::size_t ell = k; ell < n; ++ell) {
      const double l = static_cast<double>(ell);
      s.sum_b += std::pow(l, p1) * tilde_B_closed(k, ell, gt, Z, T);
      s.sum_a_n2 += std::pow(l, q) * tilde_A_closed(k, ell, gt, Z, T);
    }
    s.sum_a_n2 /= nn * nn;
    s.a_last = tilde_A_closed(k, n - 1, gt, Z, T);
    return s;
  }
  s.exact = false;
  s.sum_b = 2.0 * std::exp(p1 * std::log(kk) + p1 * std::log1p(p1) + (gt * p1 - Z) * T);
  const double gap = q - alpha + 1.0;
  if (std::fabs(gap) < 1e-12) {
    throw ParameterError("analytic sum bound needs alpha != q + 1; adjust delta");
  }
  s.sum_a_n2 = std::exp(log_lemma_factor(alpha, gap)) * sum_case_rhs(k, n, q, alpha);
  s.a_last = std::pow((kk + alpha) / (nn + alpha), alpha);
  return s;
}

}  // namespace

Lemma33Bounds lemma33_bounds(const TheoryConstants& tc, double p1, double p2, std::size_t k, std::size_t n, double T,
                             std::optional<Lemma33Part2> part2, HnForm form) {
  validate_constants(tc);
  if (!(p1 > 0.0 && p1 <= 2.0) || !(p2 > 0.0 && p2 <= 2.0)) {
    throw ParameterError(fmt::format("p1, p2 must lie in (0, 2], got {}, {}", p1, p2));
  }
  if (part2) {
    if (!(part2->p >= 0.0 && part2->p <= 2.0)) throw ParameterError(fmt::format("p must lie in [0, 2], got {}", part2->p));
    require_nonnegative(part2->C1, "C1");
  }
  if (n < 2 || k < 1 || k > n) throw DomainError(fmt::format("need 1 <= k <= n, n >= 2; got k = {}, n = {}", k, n));
  if (!(T >= 0.0)) throw DomainError("T must be >= 0");

  const double nn = static_cast<double>(n);
  const double Z = tc.Z(), gt = tc.gamma_tilde();
  const double s4 = std::pow(tc.sigma, 4);
  const double pp = part2 ? part2->p : 0.0;
  const double C2 = part2 ? 2.0 * tc.M + std::sqrt(tc.gamma * tc.M * part2->C1) : tc.M;
  const double q = 2.0 - pp / 2.0;

  auto hn = [&](double t) {
    return tc.C0 * std::pow(nn, p1 - p2) * std::exp(-Z * t) + 4.0 * std::pow(nn, 1.0 - pp / 2.0) * C2 * tc.eta / s4;
  };

  Lemma33Bounds out;
  out.boundHn = hn(T);
  if (k == n) {
    out.boundHk = out.boundHn;
    out.label = "exact";
    return out;
  }
  const SumTerms s = assemble_sums(k, n, p1, q, gt, Z, T);
  const double hn_term = form == HnForm::SupOverHorizon ? hn(0.0) : hn(T);
  out.boundHk = tc.C0 / std::pow(nn, p2) * s.sum_b + C2 / (tc.delta * tc.gamma) * s.sum_a_n2 + s.a_last * hn_term;
  out.exact = s.exact;
  out.label = s.exact ? "exact" : "bounded, not exact";
  return out;
}

Lemma33Bounds reverse_assembled_bound(const TheoryConstants& tc, double p, std::size_t k, std::size_t n, double T) {
  validate_constants(tc);
  require_positive(p, "p");
  if (n < 2 || k < 1 || k > n) throw DomainError(fmt::format("need 1 <= k <= n, n >= 2; got k = {}, n = {}", k, n));
  if (!(T >= 0.0)) throw DomainError("T must be >= 0");
  const double nn = static_cast<double>(n);
  const double Z = tc.Z(), gt = tc.gamma_tilde();
  const double hn_sup = tc.C0 + 4.0 * tc.gamma * tc.eta / std::pow(tc.sigma, 4);
  Lemma33Bounds out;
  out.boundHn = tc.C0 * std::exp(-Z * T) + 4.0 * tc.gamma * tc.eta / std::pow(tc.sigma, 4);
  if (k == n) {
    out.boundHk = out.boundHn;
    out.label = "exact";
    return out;
  }
  const SumTerms s = assemble_sums(k, n, p, 1.0, gt, Z, T);
  out.boundHk = tc.C0 / std::pow(nn, p) * s.sum_b + s.sum_a_n2 / tc.delta + s.a_last * hn_sup;
  out.exact = s.exact;
  out.label = s.exact ? "exact" : "bounded, not exact";
  return out;
}

IterationSchedule iteration_schedule(double r, double r_c, double eps) {
  if (!(r > 0.0) || !(r < std::min(2.0, r_c))) {
    throw ParameterError(fmt::format("need 0 < r < min(2, r_c), got r = {}, r_c = {}", r, r_c));
  }
  if (r <= 1.0) require_positive(eps, "eps");
  IterationSchedule sched;
  sched.limit_exponent = std::min(2.0, 2.0 * r);
  constexpr int kMaxSteps = 200;
  for (int m = 1; m <= kMaxSteps; ++m) {
    const double q = 2.0 * (1.0 - std::ldexp(1.0, -m));
    const double rq = r * q;
    if (std::fabs(rq - 2.0) <= 1e-12) {
      throw ParameterError(fmt::format("r q_m = 2 at m = {}; perturb r", m));
    }
    sched.steps.push_back({m, q, rq, std::min(2.0, rq)});
    if (r > 1.0 && rq > 2.0) {
      sched.m_star = m;
      return sched;
    }
    if (r <= 1.0 && rq >= 2.0 * r - eps) return sched;
  }
  throw NumericalError("iteration schedule did not terminate");
}

TheoremBound theorem_bound(BoundCase which, std::size_t k, std::size_t n, double T, const TheoryConstants& tc,
                           std::pair<double, double> eps) {
  validate_constants(tc);
  if (k < 1 || k > n) throw DomainError(fmt::format("need 1 <= k <= n, got k = {}, n = {}", k, n));
  if (!(T >= 0.0)) throw DomainError("T must be >= 0");
  const double ratio = static_cast<double>(k) / static_cast<double>(n);
  const double rc = tc.r_c();
  TheoremBound b;
  b.flag = "constant untracked";
  switch (which) {
    case BoundCase::MainOptimal: {
      if (!(rc > 1.0)) throw RegimeError(fmt::format("optimal-rate case needs r_c > 1, got {}", rc));
      b.k_exponent = 2.0;
      b.n_exponent = 2.0;
      const double s4 = std::pow(tc.sigma, 4);
      if (s4 > 12.0 * tc.gamma * tc.eta) {
        const auto C = explicit_C1_C2(tc.M, tc.sigma, tc.gamma, tc.eta, tc.C0);
        b.value = (C.C1 + C.C2 * std::exp(-tc.sigma * tc.sigma * T / (24.0 * tc.eta))) * ratio * ratio;
        b.certified = true;
        b.flag = "certified";
      } else {
        b.value = ratio * ratio;
      }
      return b;
    }
    case BoundCase::MainIntermediate: {
      if (!(rc > 0.0 && rc <= 1.0)) throw RegimeError(fmt::format("intermediate case needs 0 < r_c <= 1, got {}", rc));
      const auto [e1, e2] = eps;
      if (!(0.0 < e1 && e1 < e2 && e2 < rc)) {
        throw ParameterError(fmt::format("need 0 < eps1 < eps2 < r_c, got {}, {}", e1, e2));
      }
      b.k_exponent = 1.0 + rc - e1;
      b.n_exponent = 2.0 * rc - e2;
      b.value = std::pow(static_cast<double>(k), b.k_exponent) / std::pow(static_cast<double>(n), b.n_exponent);
      return b;
    }
    case BoundCase::Reverse: {
      const auto pc = tc.p_c();
      if (!pc) throw RegimeError("reverse case needs sup |b|^2");
      if (*pc > 2.0) {
        b.k_exponent = b.n_exponent = 2.0;
      } else {
        const double e = eps.first;
        if (!(e > 0.0 && e < *pc)) throw ParameterError(fmt::format("need 0 < eps < p_c = {}, got {}", *pc, e));
        b.k_exponent = b.n_exponent = *pc - e;
      }
      b.value = std::pow(ratio, b.k_exponent);
      return b;
    }
  }
  throw InvalidInput("unknown bound case");
}

double default_delta(double r_c) {
  if (!(r_c > 0.0)) throw RegimeError(fmt::format("no admissible delta for r_c = {}", r_c));
  const double alpha = r_c > 2.0 ? (3.0 + 1.0 + r_c) / 2.0 : 1.0 + r_c / 2.0;
  return (1.0 + r_c) / alpha - 1.0;
}

DeltaChoice optimize_delta(const TheoryConstants& tc, double p1, double p2, std::size_t k, std::size_t n, double T) {
  validate_constants(tc);
  const double rc = tc.r_c();
  if (!(rc > 0.0)) throw RegimeError(fmt::format("delta search needs r_c > 0, got {}", rc));
  auto objective = [&](double delta) {
    TheoryConstants trial = tc;
    trial.delta = delta;
    try {
      return lemma33_bounds(trial, p1, p2, k, n, T).boundHk;
    } catch (const ParameterError&) {
      return kInfinity;
    }
  };
  const auto [arg, val] = boost::math::tools::brent_find_minima(objective, rc * 1e-6, rc * (1.0 - 1e-6), 40);
  return {arg, val};
}

GronwallReport gronwall_envelope(std::span<const double> times, std::span<const double> H, std::span<const double> g,
                                 double c, double abs_tol) {
  if (!(c > 0.0)) throw DomainError(fmt::format("Gronwall rate must be positive, got {}", c));
  const std::size_t m = times.size();
  if (m < 2 || H.size() != m || g.size() != m) throw InvalidInput("times, H and g must share a length >= 2");
  for (std::size_t i = 0; i < m; ++i) {
    if (!std::isfinite(times[i]) || !std::isfinite(H[i]) || !std::isfinite(g[i])) throw InvalidInput("non-finite sample");
    if (g[i] < 0.0) throw InvalidInput(fmt::format("g must be >= 0, got {} at index {}", g[i], i));
    if (i > 0 && !(times[i] > times[i - 1])) throw InvalidInput("times must be strictly increasing");
  }

  // Exponential integrator, exact for piecewise-linear g.
  auto advance = [c](double env, double h, double g0, double g1) {
    const double E = std::exp(-c * h);
    const double phi1 = -std::expm1(-c * h) / c;
    const double w1 = (h - phi1) / (c * h);
    return E * env + g0 * (phi1 - w1) + g1 * w1;
  };

  GronwallReport rep;
  rep.envelope.resize(m);
  rep.envelope[0] = H[0];
  for (std::size_t i = 1; i < m; ++i) {
    rep.envelope[i] = advance(rep.envelope[i - 1], times[i] - times[i - 1], g[i - 1], g[i]);
  }

  // Richardson estimate of the quadrature error from the every-other-sample grid.
  std::vector<double> est(m, 0.0);
  if (m >= 3) {
    double coarse = H[0];
    for (std::size_t i = 2; i < m; i += 2) {
      coarse = advance(coarse, times[i] - times[i - 2], g[i - 2], g[i]);
      est[i] = std::fabs(rep.envelope[i] - coarse) / 3.0;
    }
    for (std::size_t i = 1; i < m; i += 2) {
      est[i] = std::max(est[i - 1], i + 1 < m ? est[i + 1] : est[i - 1]);
    }
  }
  rep.tolerance.resize(m);
  rep.max_excess = -kInfinity;
  for (std::size_t i = 0; i < m; ++i) {
    rep.tolerance[i] = abs_tol + 4.0 * est[i] + 1e-12 * std::fabs(rep.envelope[i]);
    const double excess = H[i] - rep.envelope[i];
    rep.max_excess = std::max(rep.max_excess, excess);
    if (excess > rep.tolerance[i]) rep.violations.push_back(i);
  }
  return rep;
}

}  // namespace poc
