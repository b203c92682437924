#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace poc {

// Inputs of the entropy bounds; derived quantities are computed on demand.
struct TheoryConstants {
  double sigma = 1.0;
  double gamma = 1.0;
  double eta = 1.0;
  double M = 0.0;
  double C0 = 0.0;
  double delta = 1.0;
  std::optional<double> bsq_sup;

  double Z() const { return sigma * sigma / (4.0 * eta); }
  double gamma_tilde() const { return gamma * (1.0 + delta) / (sigma * sigma); }
  double alpha() const { return Z() / gamma_tilde(); }
  double r_c() const;
  std::optional<double> p_c() const;
};

// Throws ParameterError on nonpositive sigma, gamma, eta, delta or negative M, C0.
void validate_constants(const TheoryConstants& tc);

struct HierarchyProfile {
  std::vector<double> values;  // H^1 .. H^n
  std::size_t n = 0;
  double t = 0.0;

  double at(std::size_t k) const { return values.at(k - 1); }
  bool nondecreasing(double tol = 1e-12) const;
};

struct RateConstants {
  double r_c = 0.0;
  std::optional<double> p_c;
};
RateConstants rate_constants(double sigma, double gamma, double eta, std::optional<double> bsq_sup = {});

struct ExplicitConstants {
  double C1 = 0.0;
  double C2 = 0.0;
};
// Requires sigma^4 > 12 gamma eta, else RegimeError.
ExplicitConstants explicit_C1_C2(double M, double sigma, double gamma, double eta, double C0);

// B~_k^l(t) in closed form: e^{-(Z + gt k) t} binom(l-1, k-1) (1 - e^{-gt t})^{l-k}.
double tilde_B_closed(std::size_t k, std::size_t ell, double gamma_tilde, double Z, double t);

struct TildeASup {
  double value = 0.0;
  double bound_shifted = 0.0;  // ((k + a) / (l + 1 + a))^a
  double bound_scaled = 0.0;   // (1 + a)^a (k / (l + 1))^a
};
TildeASup tilde_A_sup(std::size_t k, std::size_t ell, double alpha);

// A~_k^l(t) by adaptive quadrature of its derivative gt l B~_k^l; PrecisionError if tol is not met.
double tilde_A_time(std::size_t k, std::size_t ell, double gamma_tilde, double Z, double t, double tol = 1e-10);

// Same quantity through the regularized incomplete beta function.
double tilde_A_closed(std::size_t k, std::size_t ell, double gamma_tilde, double Z, double t);

struct SumBoundsReport {
  double lhsB = 0.0;
  double rhsB = 0.0;
  std::optional<double> lhsA;
  std::optional<double> rhsA;
  bool a_case_upper = false;  // p - alpha > -1
  std::string note;
  bool violation = false;
};
SumBoundsReport lemma_sum_bounds(std::size_t k, std::size_t n, double p, double gamma_tilde, double Z, double T);

struct GammaRatioCheck {
  double lhs = 0.0;  // log scale
  double rhs = 0.0;
  bool holds = true;
};
// (z)^{p-1} z! <= 2 Gamma(z + p) for integer z >= 1, p >= 0.
GammaRatioCheck gamma_bound_check(std::size_t z, double p);

struct GammaChainCheck {
  bool ratio_ok = true;   // Gamma(k + p) / (k - 1)! <= k (k + p)^{p-1}, p >= 1
  bool power_ok = true;   // k (k + p)^{p-1} <= (k + p)^p
  bool factor_ok = true;  // (k + p)^p <= k^p (1 + p)^p
  bool holds() const { return ratio_ok && power_ok && factor_ok; }
};
GammaChainCheck gamma_chain_check(std::size_t k, double p);

// Integrates dH^k/dt = -c1 H^k + c2 k^3 / n^2 + c3 k (H^{k+1} - H^k), k < n, with H^n = boundary(t).
HierarchyProfile hierarchy_ode_solve(double c1, double c2, double c3, std::size_t n, const HierarchyProfile& H0,
                                     const std::function<double(double)>& boundary, double T);

// How the H^n term enters the H^k bound.
enum class HnForm {
  SupOverHorizon,  // A~ (T) sup_{s <= T} of the H^n bound
  AtHorizon,       // A~ (T) times the H^n bound at T, as printed
};

struct Lemma33Part2 {
  double C1 = 0.0;
  double p = 2.0;
};

struct Lemma33Bounds {
  double boundHn = 0.0;
  double boundHk = 0.0;
  bool exact = true;  // false: analytic sum bounds were used
  std::string label;  // "exact" or "bounded, not exact"
};
Lemma33Bounds lemma33_bounds(const TheoryConstants& tc, double p1, double p2, std::size_t k, std::size_t n, double T,
                             std::optional<Lemma33Part2> part2 = {}, HnForm form = HnForm::SupOverHorizon);

// Largest n evaluated with exact sums.
inline constexpr std::size_t kExactSumLimit = 512;

struct ScheduleStep {
  int m = 0;
  double q = 0.0;
  double rq = 0.0;
  double exponent = 0.0;  // min(2, r q_m)
};
struct IterationSchedule {
  std::vector<ScheduleStep> steps;
  std::optional<int> m_star;  // r > 1
  double limit_exponent = 0.0;
};
// eps is the stopping tolerance used when r <= 1.
IterationSchedule iteration_schedule(double r, double r_c, double eps = 1e-2);

enum class BoundCase { MainOptimal, MainIntermediate, Reverse };

struct TheoremBound {
  double value = 0.0;
  bool certified = false;
  std::string flag;  // "certified" or "constant untracked"
  double k_exponent = 0.0;
  double n_exponent = 0.0;
};
TheoremBound theorem_bound(BoundCase which, std::size_t k, std::size_t n, double T, const TheoryConstants& tc,
                           std::pair<double, double> eps = {0.0, 0.0});

// Assembled bound for H(mu^k | P^k) with gamma = 2 sup|b|^2 and initial exponent p.
Lemma33Bounds reverse_assembled_bound(const TheoryConstants& tc, double p, std::size_t k, std::size_t n, double T);

// The proof's default split: alpha halfway into (3, 1 + r_c) when r_c > 2, else alpha = 1 + r_c / 2.
double default_delta(double r_c);

struct DeltaChoice {
  double delta = 0.0;
  double bound = 0.0;
};
// Minimizes lemma33 boundHk over delta in (0, r_c).
DeltaChoice optimize_delta(const TheoryConstants& tc, double p1, double p2, std::size_t k, std::size_t n, double T);

struct GronwallReport {
  std::vector<double> envelope;
  std::vector<double> tolerance;
  std::vector<std::size_t> violations;
  double max_excess = 0.0;
};
// Envelope e^{-ct} H_0 + int_0^t e^{-c(t-u)} g_u du on the sample grid.
GronwallReport gronwall_envelope(std::span<const double> times, std::span<const double> H, std::span<const double> g,
                                 double c, double abs_tol = 1e-12);

}  // namespace poc
