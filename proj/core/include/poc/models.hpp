#pragma once

#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>

namespace poc {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Euclidean {
  int dim = 1;
};

// Flat torus with period 1 per axis.
struct Torus {
  int dim = 1;
};

using DomainGeometry = std::variant<Euclidean, Torus>;

// out = F(x); both spans have the model dimension.
using VectorField = std::function<void(std::span<const double> x, std::span<double> out)>;

// b0(x) = -a x, b(x, y) = b (y - x), one dimension.
struct LinearGaussian {
  double a = 1.0;
  double b = 0.0;
  double sigma = 1.0;
};

// b0 = -grad U, b(x, y) = -grad W(x - y).
struct ConvexPotential {
  int dim = 1;
  VectorField grad_u;
  VectorField grad_w;
  double alpha = 1.0;
  double lipschitz = kInf;
  double sup_norm = kInf;
  double sigma = 1.0;
  std::string label = "convex";
};

// b0 = 0, b(x, y) = K(x - y) on the torus.
struct TorusKernel {
  int dim = 1;
  VectorField kernel;
  double sigma = 1.0;
  double div_sup = 0.0;
  double diam = 0.0;
  std::string label = "torus";
};

// The printed orientation sin(x_i - x_j) is repulsive; Synchronizing flips it.
enum class KuramotoOrientation { AsWritten, Synchronizing };

// Original coupling K on [0, 2pi), simulated after rescaling to the unit torus.
struct Kuramoto {
  double coupling = 1.0;
  double lambda = 1.0;
  KuramotoOrientation orientation = KuramotoOrientation::AsWritten;
};

using ModelSpec = std::variant<LinearGaussian, ConvexPotential, TorusKernel, Kuramoto>;

void validate_model(const ModelSpec& model);
DomainGeometry model_geometry(const ModelSpec& model);
int model_dim(const ModelSpec& model);
double model_sigma(const ModelSpec& model);
std::string model_id(const ModelSpec& model);
bool is_torus(const ModelSpec& model);

// Rescaled Kuramoto kernel value s * K sin(2 pi x) / (2 pi), s = +1 as printed.
double kuramoto_kernel(double coupling, KuramotoOrientation orientation, double x);
TorusKernel kuramoto_as_torus_kernel(const Kuramoto& model);

// Grid-scan estimates of sup |div K| and diam K for a user kernel (approximate).
struct KernelScan {
  double div_sup = 0.0;
  double diam = 0.0;
};
KernelScan scan_torus_kernel(int dim, const VectorField& kernel);
TorusKernel make_torus_kernel(int dim, VectorField kernel, double sigma, std::string label = "torus");

enum class Regime { NotApplicable, Slow, Intermediate, Optimal };
Regime classify_regime(double r_c);
std::string regime_name(Regime regime);

struct RegimeReport {
  double eta = std::numeric_limits<double>::quiet_NaN();
  double gamma = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> r_c;
  std::optional<double> p_c;
  Regime regime = Regime::NotApplicable;
  std::map<std::string, bool> condition_flags;
};

RegimeReport convex_constants(double alpha, double lipschitz, double sup_norm, double eta0, double sigma);

// Expanded max/min form of r_c for convex models, used as a cross-check.
double convex_rc_expanded(double alpha, double lipschitz, double sup_norm, double eta0, double sigma);

struct TorusReport {
  RegimeReport report;
  double r0 = std::numeric_limits<double>::quiet_NaN();
  double smallness_threshold = 0.0;
  std::optional<double> density_lower;
  std::optional<double> density_upper;
};

TorusReport torus_constants(double lambda, double div_sup, double diam, double sigma);

struct KuramotoReport {
  TorusReport torus;
  double sigma = 0.0;
  double admissible_bound = 0.0;
  bool admissible = false;
  double critical_coupling_0 = 0.0;
  double critical_coupling_1 = 0.0;
};

// Closed-form r_c(K, lambda) for the rescaled Kuramoto model.
double kuramoto_rc(double coupling, double lambda);
double kuramoto_admissible_bound(double lambda);
// Coupling with r_c(K, lambda) = target, by bisection to 1e-12.
double kuramoto_critical_coupling(double target, double lambda);
KuramotoReport kuramoto_constants(double coupling, double lambda);

// Interaction b(x, y) for one pair of points of the model dimension.
void interaction_term(const ModelSpec& model, std::span<const double> x, std::span<const double> y,
                      std::span<double> out);

// Conservative M proxy: 4 sup|b|^2 for bounded interactions, empty otherwise.
std::optional<double> interaction_bound_proxy(const ModelSpec& model);

// sup |b|^2 when the interaction is bounded.
std::optional<double> interaction_sup_sq(const ModelSpec& model);

}  // namespace poc
