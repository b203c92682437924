#include "poc/entropy_estim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <fmt/format.h>

#include "poc/gaussian_oracle.hpp"

namespace poc {

namespace {

constexpr double kInfinity = std::numeric_limits<double>::infinity();

// Reference cell masses from the trapezoid rule on the grid, normalized to 1.
std::vector<double> reference_cells(const DensityGrid& ref, std::size_t bins) {
  const std::size_t ng = ref.size();
  if (bins == 0 || ng == 0 || ng % bins != 0) {
    throw ParameterError(fmt::format("bins ({}) must divide the grid size ({})", bins, ng));
  }
  const std::size_t per = ng / bins;
  std::vector<double> q(bins, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < ng; ++i) {
    const double m = 0.5 * (ref.values[i] + ref.values[(i + 1) % ng]) / static_cast<double>(ng);
    q[i / per] += m;
    total += m;
  }
  if (!(total > 0.0)) throw DomainError("reference density has zero mass");
  for (double& v : q) v /= total;
  return q;
}

std::size_t bin_of(double x, std::size_t bins) {
  const double w = wrap_unit(x);
  return std::min(bins - 1, static_cast<std::size_t>(w * static_cast<double>(bins)));
}

// Smoothed plug-in KL over cells with counts and reference masses.
EntropyReport histogram_kl(const std::vector<double>& counts, const std::vector<double>& q, double samples,
                           std::size_t cells) {
  EntropyReport rep;
  for (std::size_t b = 0; b < cells; ++b) {
    if (q[b] <= 0.0 && counts[b] > 0.0) {
      rep.infinite = true;
      rep.H = kInfinity;
      rep.std_error = kInfinity;
      return rep;
    }
  }
  std::size_t support = 0;
  for (std::size_t b = 0; b < cells; ++b) support += q[b] > 0.0 ? 1 : 0;
  const double pseudo = 0.5;  // 1 / (2 samples) in probability units
  const double denom = samples + pseudo * static_cast<double>(support);
  double h = 0.0, second = 0.0;
  for (std::size_t b = 0; b < cells; ++b) {
    if (q[b] <= 0.0) continue;
    const double p = (counts[b] + pseudo) / denom;
    const double l = std::log(p / q[b]);
    h += p * l;
    second += p * l * l;
  }
  const double df = static_cast<double>(support) - 1.0;
  const double var = std::max(0.0, second - h * h) / samples + df / (2.0 * samples * samples);
  rep.H = std::max(0.0, h - df / (2.0 * samples));
  rep.std_error = std::sqrt(var);
  return rep;
}

struct ReplicaSums {
  double a = 0.0;  // sum of centered positions
  double b = 0.0;  // sum of squared centered positions
};

struct MomentsFromSums {
  double mean, v, c;
};

// Moments from per-replica sums, with replica `skip` left out (skip = R keeps all).
MomentsFromSums moments(const std::vector<ReplicaSums>& sums, double sum_a, double sum_b, double sum_aa,
                        std::size_t n, std::size_t skip) {
  const std::size_t R = sums.size();
  double A = sum_a, B = sum_b, AA = sum_aa;
  double r = static_cast<double>(R);
  if (skip < R) {
    A -= sums[skip].a;
    B -= sums[skip].b;
    AA -= sums[skip].a * sums[skip].a;
    r -= 1.0;
  }
  const double nn = static_cast<double>(n);
  const double m = A / (r * nn);
  const double dev2 = B - 2.0 * m * A + r * nn * m * m;
  const double sq = AA - 2.0 * nn * m * A + r * nn * nn * m * m;
  return {m, dev2 / (r * nn), (sq - dev2) / (r * nn * (nn - 1.0))};
}

}  // namespace

std::string method_label(const EntropyReport& report) {
  switch (report.method) {
    case EstimatorMethod::Exact:
      return "exact";
    case EstimatorMethod::GaussianMoment:
      return "gaussian_moment";
    case EstimatorMethod::Histogram1D:
      return fmt::format("histogram1d({})", report.bins);
    case EstimatorMethod::Histogram2D:
      return fmt::format("histogram2d({})", report.bins);
  }
  return "unknown";
}

ExchangeableMoments fit_exchangeable_moments(const ParticleEnsemble& e) {
  if (e.dim != 1) throw ParameterError("moment fit needs one-dimensional particles");
  if (e.replicas < 1 || e.n < 2) throw ParameterError("moment fit needs R >= 1 and n >= 2");
  double shift = 0.0;
  for (double x : e.positions) shift += x;
  shift /= static_cast<double>(e.positions.size());
  std::vector<ReplicaSums> sums(e.replicas);
  double A = 0.0, B = 0.0, AA = 0.0;
  for (std::size_t r = 0; r < e.replicas; ++r) {
    for (double x : e.replica(r)) {
      sums[r].a += x - shift;
      sums[r].b += (x - shift) * (x - shift);
    }
    A += sums[r].a;
    B += sums[r].b;
    AA += sums[r].a * sums[r].a;
  }
  const auto m = moments(sums, A, B, AA, e.n, e.replicas);
  return {m.mean + shift, m.v, m.c};
}

EntropyReport gaussian_moment_entropy(const ParticleEnsemble& e, std::size_t k, const GaussianReference& ref) {
  if (e.dim != 1) throw ParameterError("Gaussian moment estimator needs one-dimensional particles");
  if (e.replicas < 100) throw ParameterError(fmt::format("Gaussian moment estimator needs R >= 100, got {}", e.replicas));
  if (k < 1 || k > e.n) throw ParameterError(fmt::format("k must be in 1..{}, got {}", e.n, k));
  if (!(ref.s > 0.0)) throw ParameterError("reference variance must be positive");

  double shift = 0.0;
  for (double x : e.positions) shift += x;
  shift /= static_cast<double>(e.positions.size());
  std::vector<ReplicaSums> sums(e.replicas);
  double A = 0.0, B = 0.0, AA = 0.0;
  for (std::size_t r = 0; r < e.replicas; ++r) {
    for (double x : e.replica(r)) {
      sums[r].a += x - shift;
      sums[r].b += (x - shift) * (x - shift);
    }
    A += sums[r].a;
    B += sums[r].b;
    AA += sums[r].a * sums[r].a;
  }

  auto entropy_of = [&](const MomentsFromSums& m) {
    const double v = m.v, c = m.c;
    if (!(v - c > 0.0) && k > 1) {
      throw EstimationFailure(fmt::format("fitted marginal not PSD: v = {}, c = {}", v, c), v, c);
    }
    if (!(v + static_cast<double>(k - 1) * c > 0.0)) {
      throw EstimationFailure(fmt::format("fitted marginal not PSD: v = {}, c = {}", v, c), v, c);
    }
    return marginal_relative_entropy(v, c, ref.s, k, m.mean + shift - ref.mean);
  };

  EntropyReport rep;
  rep.k = k;
  rep.n = e.n;
  rep.t = e.time;
  rep.method = EstimatorMethod::GaussianMoment;
  rep.H = entropy_of(moments(sums, A, B, AA, e.n, e.replicas));

  const std::size_t R = e.replicas;
  std::vector<double> loo(R);
  double mean_loo = 0.0;
  for (std::size_t r = 0; r < R; ++r) {
    loo[r] = entropy_of(moments(sums, A, B, AA, e.n, r));
    mean_loo += loo[r];
  }
  mean_loo /= static_cast<double>(R);
  double ss = 0.0;
  for (double h : loo) ss += (h - mean_loo) * (h - mean_loo);
  rep.std_error = std::sqrt(static_cast<double>(R - 1) / static_cast<double>(R) * ss);
  return rep;
}

EntropyReport histogram_entropy_1d(std::span<const double> samples, const DensityGrid& reference, std::size_t bins) {
  const auto q = reference_cells(reference, bins);
  if (samples.size() < 50 * bins) {
    throw ParameterError(fmt::format("need at least {} samples for {} bins, got {}", 50 * bins, bins, samples.size()));
  }
  std::vector<double> counts(bins, 0.0);
  for (double x : samples) {
    if (!std::isfinite(x)) throw InvalidInput("non-finite sample");
    counts[bin_of(x, bins)] += 1.0;
  }
  EntropyReport rep = histogram_kl(counts, q, static_cast<double>(samples.size()), bins);
  rep.method = EstimatorMethod::Histogram1D;
  rep.bins = bins;
  return rep;
}

EntropyReport histogram_entropy_2d(std::span<const double> xs, std::span<const double> ys,
                                   const DensityGrid& reference, std::size_t bins) {
  if (xs.size() != ys.size()) throw InvalidInput("x and y samples differ in length");
  const auto q1 = reference_cells(reference, bins);
  const std::size_t cells = bins * bins;
  if (xs.size() < 10 * cells) {
    throw ParameterError(fmt::format("need at least {} sample pairs for {}x{} cells", 10 * cells, bins, bins));
  }
  std::vector<double> q(cells), counts(cells, 0.0);
  for (std::size_t a = 0; a < bins; ++a) {
    for (std::size_t b = 0; b < bins; ++b) q[a * bins + b] = q1[a] * q1[b];
  }
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) throw InvalidInput("non-finite sample");
    counts[bin_of(xs[i], bins) * bins + bin_of(ys[i], bins)] += 1.0;
  }
  EntropyReport rep = histogram_kl(counts, q, static_cast<double>(xs.size()), cells);
  rep.k = 2;
  rep.method = EstimatorMethod::Histogram2D;
  rep.bins = bins;
  return rep;
}

namespace {

// Composite Simpson nodes for the Gaussian reference on mean +- 12 sd.
struct GaussQuad {
  std::vector<double> nodes, weights;
};

GaussQuad gaussian_quadrature(const GaussianReference& ref) {
  constexpr int kIntervals = 600;
  const double sd = std::sqrt(ref.s);
  const double lo = ref.mean - 12.0 * sd, hi = ref.mean + 12.0 * sd;
  const double h = (hi - lo) / kIntervals;
  GaussQuad g;
  for (int i = 0; i <= kIntervals; ++i) {
    const double x = lo + i * h;
    const double w = (i == 0 || i == kIntervals) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    const double z = (x - ref.mean) / sd;
    g.nodes.push_back(x);
    g.weights.push_back(w * h / 3.0 * std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi)));
  }
  return g;
}

}  // namespace

MEstimate estimate_M(const ModelSpec& model, std::span<const ParticleEnsemble> snapshots,
                     std::span<const MeanFieldReference> references) {
  validate_model(model);
  if (snapshots.size() < 2) throw ParameterError("estimate_M needs at least 2 snapshots");
  if (references.size() != snapshots.size()) throw ParameterError("one reference per snapshot is required");
  const int d = model_dim(model);
  if (d != 1) throw UnsupportedModel("estimate_M supports one-dimensional models");

  MEstimate est;
  std::vector<double> x1(1), x2(1), y(1), out(1);
  for (std::size_t s = 0; s < snapshots.size(); ++s) {
    const auto& e = snapshots[s];
    if (e.n < 2 || e.replicas < 2) throw ParameterError("snapshots need n >= 2 and R >= 2");
    const auto& ref = references[s];
    std::vector<double> nodes, weights;
    if (const auto* g = std::get_if<GaussianReference>(&ref)) {
      if (is_torus(model)) throw ParameterError("torus models need a grid reference");
      auto q = gaussian_quadrature(*g);
      nodes = std::move(q.nodes);
      weights = std::move(q.weights);
    } else {
      const auto& grid = std::get<DensityGrid>(ref);
      if (!is_torus(model)) throw ParameterError("grid references apply to torus models only");
      for (std::size_t i = 0; i < grid.size(); ++i) {
        nodes.push_back(grid.x(i));
        weights.push_back(grid.values[i] / static_cast<double>(grid.size()));
      }
    }
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t r = 0; r < e.replicas; ++r) {
      x1[0] = e.at(r, 0);
      x2[0] = e.at(r, 1);
      double avg = 0.0;
      for (std::size_t j = 0; j < nodes.size(); ++j) {
        y[0] = nodes[j];
        interaction_term(model, x1, y, out);
        avg += weights[j] * out[0];
      }
      interaction_term(model, x1, x2, out);
      const double f = (out[0] - avg) * (out[0] - avg);
      sum += f;
      sum2 += f * f;
    }
    const double R = static_cast<double>(e.replicas);
    const double mean = sum / R;
    const double var = std::max(0.0, sum2 / R - mean * mean) * R / (R - 1.0);
    est.per_snapshot.push_back(mean);
    est.per_snapshot_stderr.push_back(std::sqrt(var / R));
    if (mean > est.value || s == 0) {
      est.value = mean;
      est.argmax = s;
    }
  }
  return est;
}

double w2_bound_from_entropy(double H, double eta, std::size_t /*k*/) {
  if (!(H >= 0.0)) throw DomainError(fmt::format("entropy must be >= 0, got {}", H));
  if (!(eta > 0.0)) throw ParameterError("eta must be positive");
  return std::sqrt(4.0 * eta * H);
}

double tv_bound_from_entropy(double H) {
  if (!(H >= 0.0)) throw DomainError(fmt::format("entropy must be >= 0, got {}", H));
  return std::min(1.0, std::sqrt(H / 2.0));
}

}  // namespace poc
