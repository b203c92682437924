#include "poc/models.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <boost/math/tools/roots.hpp>
#include <fmt/format.h>

#include "poc/errors.hpp"

namespace poc {

namespace {

constexpr double kPi = std::numbers::pi;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

// a / b with a/0 = inf and a/inf = 0, for a > 0.
double ratio(double a, double b) {
  if (b == 0.0) return kInf;
  if (std::isinf(b)) return 0.0;
  return a / b;
}

// Product with 0 * inf = 0: a Dirac start removes the term whatever the other factor.
double times(double a, double b) { return a == 0.0 || b == 0.0 ? 0.0 : a * b; }

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw ParameterError(fmt::format("{} must be positive and finite, got {}", name, v));
  }
}

void require_dim(int dim) {
  if (dim < 1 || dim > 3) throw ParameterError(fmt::format("dimension must be 1..3, got {}", dim));
}

}  // namespace

void validate_model(const ModelSpec& model) {
  std::visit(Overloaded{
                 [](const LinearGaussian& m) {
                   if (!(m.a > 0.0)) throw UnsupportedModel(fmt::format("linear model needs a > 0, got {}", m.a));
                   if (!(m.b >= 0.0) || !std::isfinite(m.b)) {
                     throw ParameterError(fmt::format("linear model needs b >= 0, got {}", m.b));
                   }
                   require_positive(m.sigma, "sigma");
                 },
                 [](const ConvexPotential& m) {
                   require_dim(m.dim);
                   if (!(m.alpha > 0.0)) throw UnsupportedModel(fmt::format("convexity alpha must be > 0, got {}", m.alpha));
                   if (std::isinf(m.lipschitz) && std::isinf(m.sup_norm)) {
                     throw AssumptionViolation("convex model needs a finite Lipschitz constant or sup norm for grad W");
                   }
                   if (!m.grad_u || !m.grad_w) throw ParameterError("convex model needs grad_u and grad_w");
                   require_positive(m.sigma, "sigma");
                 },
                 [](const TorusKernel& m) {
                   require_dim(m.dim);
                   if (!m.kernel) throw ParameterError("torus model needs a kernel");
                   require_positive(m.sigma, "sigma");
                   if (!(m.div_sup >= 0.0) || !(m.diam >= 0.0)) throw ParameterError("div_sup and diam must be >= 0");
                 },
                 [](const Kuramoto& m) {
                   require_positive(m.coupling, "Kuramoto coupling");
                   if (!(m.lambda >= 1.0)) throw ParameterError(fmt::format("lambda must be >= 1, got {}", m.lambda));
                 },
             },
             model);
}

DomainGeometry model_geometry(const ModelSpec& model) {
  return std::visit(Overloaded{
                        [](const LinearGaussian&) -> DomainGeometry { return Euclidean{1}; },
                        [](const ConvexPotential& m) -> DomainGeometry { return Euclidean{m.dim}; },
                        [](const TorusKernel& m) -> DomainGeometry { return Torus{m.dim}; },
                        [](const Kuramoto&) -> DomainGeometry { return Torus{1}; },
                    },
                    model);
}

int model_dim(const ModelSpec& model) {
  return std::visit([](const auto& g) { return g.dim; }, model_geometry(model));
}

bool is_torus(const ModelSpec& model) { return std::holds_alternative<Torus>(model_geometry(model)); }

double model_sigma(const ModelSpec& model) {
  return std::visit(Overloaded{
                        [](const LinearGaussian& m) { return m.sigma; },
                        [](const ConvexPotential& m) { return m.sigma; },
                        [](const TorusKernel& m) { return m.sigma; },
                        [](const Kuramoto&) { return 1.0 / (2.0 * kPi); },
                    },
                    model);
}

std::string model_id(const ModelSpec& model) {
  return std::visit(Overloaded{
                        [](const LinearGaussian&) { return std::string("linear"); },
                        [](const ConvexPotential& m) { return m.label; },
                        [](const TorusKernel& m) { return m.label; },
                        [](const Kuramoto&) { return std::string("kuramoto"); },
                    },
                    model);
}

double kuramoto_kernel(double coupling, KuramotoOrientation orientation, double x) {
  const double s = orientation == KuramotoOrientation::AsWritten ? 1.0 : -1.0;
  return s * coupling * std::sin(2.0 * kPi * x) / (2.0 * kPi);
}

TorusKernel kuramoto_as_torus_kernel(const Kuramoto& model) {
  TorusKernel k;
  k.dim = 1;
  const double coupling = model.coupling;
  const auto orientation = model.orientation;
  k.kernel = [coupling, orientation](std::span<const double> x, std::span<double> out) {
    out[0] = kuramoto_kernel(coupling, orientation, x[0]);
  };
  k.sigma = 1.0 / (2.0 * kPi);
  k.div_sup = coupling;
  k.diam = coupling / kPi;
  k.label = "kuramoto";
  return k;
}

KernelScan scan_torus_kernel(int dim, const VectorField& kernel) {
  require_dim(dim);
  if (!kernel) throw ParameterError("kernel is empty");
  // Divergence by central differences on a fine grid, diameter by pairwise scan on a coarse one.
  const int div_pts = dim == 1 ? 4096 : (dim == 2 ? 256 : 32);
  const int diam_pts = dim == 1 ? 4096 : (dim == 2 ? 32 : 16);
  KernelScan scan;

  auto for_grid = [dim](int pts, auto&& fn) {
    std::vector<double> x(static_cast<std::size_t>(dim));
    long total = 1;
    for (int c = 0; c < dim; ++c) total *= pts;
    for (long idx = 0; idx < total; ++idx) {
      long r = idx;
      for (int c = 0; c < dim; ++c) {
        x[static_cast<std::size_t>(c)] = static_cast<double>(r % pts) / pts;
        r /= pts;
      }
      fn(std::span<const double>(x));
    }
  };

  const double h = 1.0 / div_pts;
  std::vector<double> xp(static_cast<std::size_t>(dim)), fp(static_cast<std::size_t>(dim)),
      fm(static_cast<std::size_t>(dim));
  for_grid(div_pts, [&](std::span<const double> x) {
    double div = 0.0;
    for (int c = 0; c < dim; ++c) {
      std::copy(x.begin(), x.end(), xp.begin());
      xp[static_cast<std::size_t>(c)] = x[static_cast<std::size_t>(c)] + h;
      kernel(xp, fp);
      xp[static_cast<std::size_t>(c)] = x[static_cast<std::size_t>(c)] - h;
      kernel(xp, fm);
      div += (fp[static_cast<std::size_t>(c)] - fm[static_cast<std::size_t>(c)]) / (2.0 * h);
    }
    scan.div_sup = std::max(scan.div_sup, std::abs(div));
  });

  std::vector<double> values;
  std::vector<double> out(static_cast<std::size_t>(dim));
  for_grid(diam_pts, [&](std::span<const double> x) {
    kernel(x, out);
    values.insert(values.end(), out.begin(), out.end());
  });
  const std::size_t count = values.size() / static_cast<std::size_t>(dim);
  if (dim == 1) {
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    scan.diam = *hi - *lo;
  } else {
    double best = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t j = i + 1; j < count; ++j) {
        double d2 = 0.0;
        for (int c = 0; c < dim; ++c) {
          const double diff = values[i * static_cast<std::size_t>(dim) + static_cast<std::size_t>(c)] -
                              values[j * static_cast<std::size_t>(dim) + static_cast<std::size_t>(c)];
          d2 += diff * diff;
        }
        best = std::max(best, d2);
      }
    }
    scan.diam = std::sqrt(best);
  }
  return scan;
}

TorusKernel make_torus_kernel(int dim, VectorField kernel, double sigma, std::string label) {
  const KernelScan scan = scan_torus_kernel(dim, kernel);
  TorusKernel k;
  k.dim = dim;
  k.kernel = std::move(kernel);
  k.sigma = sigma;
  k.div_sup = scan.div_sup;
  k.diam = scan.diam;
  k.label = std::move(label);
  return k;
}

Regime classify_regime(double r_c) {
  if (!(r_c > 0.0)) return Regime::NotApplicable;
  if (r_c <= 1.0) return Regime::Slow;
  if (r_c <= 2.0) return Regime::Intermediate;
  return Regime::Optimal;
}

std::string regime_name(Regime regime) {
  switch (regime) {
    case Regime::NotApplicable:
      return "not_applicable";
    case Regime::Slow:
      return "slow";
    case Regime::Intermediate:
      return "intermediate";
    case Regime::Optimal:
      return "optimal";
  }
  return "unknown";
}

RegimeReport convex_constants(double alpha, double lipschitz, double sup_norm, double eta0, double sigma) {
  if (!(alpha > 0.0)) throw UnsupportedModel(fmt::format("convexity alpha must be > 0, got {}", alpha));
  if (std::isinf(lipschitz) && std::isinf(sup_norm)) {
    throw AssumptionViolation("need a finite Lipschitz constant L or sup norm R");
  }
  if (!(lipschitz >= 0.0) || !(sup_norm >= 0.0)) throw ParameterError("L and R must be >= 0");
  if (!(eta0 >= 0.0) || !std::isfinite(eta0)) throw ParameterError("eta0 must be finite and >= 0");
  require_positive(sigma, "sigma");

  RegimeReport rep;
  const double s2 = sigma * sigma;
  rep.eta = std::max(eta0 / 4.0, s2 / (4.0 * alpha));
  const double g_lip = std::isinf(lipschitz) ? kInf : 4.0 * rep.eta * lipschitz * lipschitz;
  const double g_sup = std::isinf(sup_norm) ? kInf : 2.0 * sup_norm * sup_norm;
  rep.gamma = std::min(g_lip, g_sup);
  const double rc = ratio(s2 * s2, 4.0 * rep.gamma * rep.eta) - 1.0;
  rep.r_c = rc;
  if (std::isfinite(sup_norm)) rep.p_c = ratio(s2 * s2, 8.0 * rep.eta * sup_norm * sup_norm);
  rep.regime = classify_regime(rc);
  rep.condition_flags["alpha_exceeds_lipschitz"] = alpha > lipschitz;
  rep.condition_flags["explicit_constants"] = s2 * s2 > 12.0 * rep.gamma * rep.eta;
  return rep;
}

double convex_rc_expanded(double alpha, double lipschitz, double sup_norm, double eta0, double sigma) {
  const double s2 = sigma * sigma;
  const double lip_branch = std::min(ratio(s2 * s2, times(eta0 * eta0, lipschitz * lipschitz)),
                                     ratio(alpha * alpha, lipschitz * lipschitz));
  const double sup_branch = std::min(ratio(s2 * s2, times(2.0 * eta0, sup_norm * sup_norm)),
                                     ratio(s2 * alpha, 2.0 * sup_norm * sup_norm));
  return std::max(lip_branch, sup_branch) - 1.0;
}

TorusReport torus_constants(double lambda, double div_sup, double diam, double sigma) {
  if (!(lambda >= 1.0) || !std::isfinite(lambda)) throw ParameterError(fmt::format("lambda must be >= 1, got {}", lambda));
  if (!(diam > 0.0)) throw ParameterError(fmt::format("diam K must be > 0, got {}", diam));
  if (!(div_sup >= 0.0)) throw ParameterError(fmt::format("sup |div K| must be >= 0, got {}", div_sup));
  require_positive(sigma, "sigma");

  TorusReport out;
  const double s2 = sigma * sigma;
  const double root = std::sqrt(2.0 * std::log(lambda));
  out.smallness_threshold = s2 * kPi * kPi / (1.0 + 2.0 * root);
  const bool small = div_sup < out.smallness_threshold;
  out.report.condition_flags["smallness"] = small;
  out.report.gamma = diam * diam / 2.0;
  if (!small) {
    out.report.regime = Regime::NotApplicable;
    return out;
  }
  out.r0 = div_sup * root / (s2 * kPi * kPi - div_sup);
  out.report.eta = lambda * lambda / (1.0 - 2.0 * out.r0);
  const double rc = s2 * s2 * (1.0 - 2.0 * out.r0) / (2.0 * lambda * lambda * diam * diam) - 1.0;
  out.report.r_c = rc;
  out.report.regime = classify_regime(rc);
  out.report.condition_flags["explicit_constants"] = s2 * s2 > 12.0 * out.report.gamma * out.report.eta;
  out.density_lower = 1.0 / (lambda * std::exp(out.r0));
  out.density_upper = lambda / (1.0 - out.r0 * std::exp(out.r0));
  return out;
}

double kuramoto_rc(double coupling, double lambda) {
  const double root = std::sqrt(2.0 * std::log(lambda));
  const double num = 1.0 - 4.0 * coupling * (1.0 + 2.0 * root);
  const double den = 32.0 * kPi * kPi * lambda * lambda * coupling * coupling * (1.0 - 4.0 * coupling);
  return num / den - 1.0;
}

double kuramoto_admissible_bound(double lambda) {
  return 1.0 / (4.0 + 8.0 * std::sqrt(2.0 * std::log(lambda)));
}

double kuramoto_critical_coupling(double target, double lambda) {
  if (!(lambda >= 1.0)) throw ParameterError("lambda must be >= 1");
  if (!(target > -1.0)) throw DomainError("target r_c must exceed -1");
  // r_c decreases from +inf (K -> 0) to -1 (K -> admissible bound).
  const double hi = kuramoto_admissible_bound(lambda);
  auto f = [&](double k) { return kuramoto_rc(k, lambda) - target; };
  auto tol = [](double a, double b) { return std::abs(b - a) <= 1e-15; };
  const auto [lo_k, hi_k] = boost::math::tools::bisect(f, 1e-300, hi * (1.0 - 1e-16), tol);
  return 0.5 * (lo_k + hi_k);
}

KuramotoReport kuramoto_constants(double coupling, double lambda) {
  require_positive(coupling, "Kuramoto coupling");
  if (!(lambda >= 1.0)) throw ParameterError(fmt::format("lambda must be >= 1, got {}", lambda));
  KuramotoReport rep;
  rep.sigma = 1.0 / (2.0 * kPi);
  rep.admissible_bound = kuramoto_admissible_bound(lambda);
  rep.admissible = coupling < rep.admissible_bound;
  rep.torus = torus_constants(lambda, coupling, coupling / kPi, rep.sigma);
  rep.torus.report.condition_flags["admissible"] = rep.admissible;
  if (!rep.admissible) {
    rep.torus.report.r_c.reset();
    rep.torus.report.regime = Regime::NotApplicable;
  }
  rep.critical_coupling_0 = kuramoto_critical_coupling(0.0, lambda);
  rep.critical_coupling_1 = kuramoto_critical_coupling(1.0, lambda);
  return rep;
}

void interaction_term(const ModelSpec& model, std::span<const double> x, std::span<const double> y,
                      std::span<double> out) {
  std::visit(Overloaded{
                 [&](const LinearGaussian& m) { out[0] = m.b * (y[0] - x[0]); },
                 [&](const ConvexPotential& m) {
                   std::vector<double> diff(static_cast<std::size_t>(m.dim));
                   for (std::size_t c = 0; c < diff.size(); ++c) diff[c] = x[c] - y[c];
                   m.grad_w(diff, out);
                   for (double& v : out) v = -v;
                 },
                 [&](const TorusKernel& m) {
                   std::vector<double> diff(static_cast<std::size_t>(m.dim));
                   for (std::size_t c = 0; c < diff.size(); ++c) diff[c] = x[c] - y[c];
                   m.kernel(diff, out);
                 },
                 [&](const Kuramoto& m) { out[0] = kuramoto_kernel(m.coupling, m.orientation, x[0] - y[0]); },
             },
             model);
}

std::optional<double> interaction_sup_sq(const ModelSpec& model) {
  return std::visit(Overloaded{
                        [](const LinearGaussian& m) -> std::optional<double> {
                          if (m.b == 0.0) return 0.0;
                          return std::nullopt;
                        },
                        [](const ConvexPotential& m) -> std::optional<double> {
                          if (std::isfinite(m.sup_norm)) return m.sup_norm * m.sup_norm;
                          return std::nullopt;
                        },
                        [](const TorusKernel& m) -> std::optional<double> {
                          // sup |K| bounded on the compact torus; scan on the diameter grid.
                          const int pts = m.dim == 1 ? 4096 : (m.dim == 2 ? 64 : 16);
                          std::vector<double> x(static_cast<std::size_t>(m.dim)), out(static_cast<std::size_t>(m.dim));
                          long total = 1;
                          for (int c = 0; c < m.dim; ++c) total *= pts;
                          double best = 0.0;
                          for (long idx = 0; idx < total; ++idx) {
                            long r = idx;
                            for (int c = 0; c < m.dim; ++c) {
                              x[static_cast<std::size_t>(c)] = static_cast<double>(r % pts) / pts;
                              r /= pts;
                            }
                            m.kernel(x, out);
                            double s = 0.0;
                            for (double v : out) s += v * v;
                            best = std::max(best, s);
                          }
                          return best;
                        },
                        [](const Kuramoto& m) -> std::optional<double> {
                          const double r = m.coupling / (2.0 * kPi);
                          return r * r;
                        },
                    },
                    model);
}

std::optional<double> interaction_bound_proxy(const ModelSpec& model) {
  const auto sq = interaction_sup_sq(model);
  if (!sq) return std::nullopt;
  return 4.0 * *sq;
}

}  // namespace poc
