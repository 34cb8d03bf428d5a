#pragma once

// Generative model of plan deviation under disclosure-avoidance noise.
//
// Each of k districts gets deviation |X + E| with X ~ Uniform[-(tau - delta),
// tau - delta] (the apparent deviation a mapmaker controls) and
// E ~ Normal(mu, sigma^2) (the noise). A plan's deviation is the maximum
// over its districts. This is a mental model for how offsets act on the
// exceedance rate, not an inference tool: observed noise is not Gaussian.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "redist/error.hpp"
#include "redist/rng.hpp"

namespace redist::noise {

struct NoiseModelParams {
  int k = 1;
  double tau = 0.05;
  double delta = 0.0;
  double mu = 0.0;
  double sigma = 0.0006;

  void validate() const {
    if (k < 1) throw Error(ErrorKind::InvalidArgument, "k must be at least 1");
    if (!(tau >= 0)) throw Error(ErrorKind::InvalidArgument, "tau must be nonnegative");
    if (!(delta >= 0 && delta <= tau)) throw Error(ErrorKind::InvalidArgument, "delta must lie in [0, tau]");
    if (!(sigma >= 0)) throw Error(ErrorKind::InvalidArgument, "sigma must be nonnegative");
  }

  double half_width() const noexcept { return tau - delta; }
};

/// P(Z > z) for a standard normal, accurate deep into the tail.
inline double upper_tail(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

inline double sample_district_dev(const NoiseModelParams& p, Rng& rng) {
  const double a = p.half_width();
  return std::abs(rng.uniform(-a, a) + rng.normal(p.mu, p.sigma));
}

inline double sample_plan_dev(const NoiseModelParams& p, Rng& rng) {
  p.validate();
  double worst = 0.0;
  for (int i = 0; i < p.k; ++i) worst = std::max(worst, sample_district_dev(p, rng));
  return worst;
}

struct McEstimate {
  double rate = 0.0;
  double standard_error = 0.0;
  std::uint64_t exceed = 0;
  std::uint64_t samples = 0;
};

/// Fraction of sampled plan deviations strictly above tau.
inline McEstimate exceed_rate_mc(const NoiseModelParams& p, std::uint64_t n_samples, Rng& rng) {
  p.validate();
  if (n_samples == 0) throw Error(ErrorKind::InvalidArgument, "n_samples must be positive");
  McEstimate est;
  est.samples = n_samples;
  for (std::uint64_t i = 0; i < n_samples; ++i) est.exceed += sample_plan_dev(p, rng) > p.tau ? 1 : 0;
  est.rate = static_cast<double>(est.exceed) / static_cast<double>(n_samples);
  est.standard_error = std::sqrt(est.rate * (1.0 - est.rate) / static_cast<double>(n_samples));
  return est;
}

/// P(|X + E| > tau) for a single district.
inline double district_exceed_probability(const NoiseModelParams& p) {
  p.validate();
  const double a = p.half_width();
  const double tau = p.tau, mu = p.mu, sigma = p.sigma;

  if (sigma == 0.0) {
    // |x + mu| > tau over x uniform on [-a, a]
    if (a == 0.0) return std::abs(mu) > tau ? 1.0 : 0.0;
    const double above = std::clamp(a - (tau - mu), 0.0, 2 * a);
    const double below = std::clamp((-tau - mu) + a, 0.0, 2 * a);
    return std::min(1.0, (above + below) / (2 * a));
  }
  if (a == 0.0) return upper_tail((tau - mu) / sigma) + upper_tail((tau + mu) / sigma);

  // Integrand is the conditional exceedance probability given X = x.
  auto conditional = [&](double x) {
    return upper_tail((tau - x - mu) / sigma) + upper_tail((tau + x + mu) / sigma);
  };
  // Break the interval where the integrand changes on the scale of sigma.
  std::vector<double> cuts{-a, a};
  for (double centre : {tau - mu, -tau - mu})
    for (double s : {-40.0, -16.0, -8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 40.0}) {
      const double x = centre + s * sigma;
      if (x > -a && x < a) cuts.push_back(x);
    }
  std::sort(cuts.begin(), cuts.end());
  double integral = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    if (cuts[i + 1] <= cuts[i]) continue;
    // pieces are already on the sigma scale, so shallow refinement is enough
    integral += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(conditional, cuts[i], cuts[i + 1], 4,
                                                                               1e-13);
  }
  return std::clamp(integral / (2 * a), 0.0, 1.0);
}

/// 1 - (1 - p1)^k, the probability that at least one district exceeds tau.
inline double exceed_rate_quadrature(const NoiseModelParams& p) {
  const double p1 = district_exceed_probability(p);
  if (p1 >= 1.0) return 1.0;
  return -std::expm1(static_cast<double>(p.k) * std::log1p(-p1));
}

struct NoiseFit {
  double mu = 0.0;
  double sigma = 0.0;
  std::size_t n = 0;
};

/// Sample mean and standard deviation (n - 1 denominator) of observed errors.
inline NoiseFit fit_noise(std::span<const double> errors) {
  if (errors.size() < 2) throw Error(ErrorKind::InvalidArgument, "need at least two observations");
  NoiseFit f;
  f.n = errors.size();
  for (double e : errors) f.mu += e;
  f.mu /= static_cast<double>(f.n);
  double ss = 0.0;
  for (double e : errors) ss += (e - f.mu) * (e - f.mu);
  f.sigma = std::sqrt(ss / static_cast<double>(f.n - 1));
  return f;
}

struct CurvePoint {
  double delta = 0.0;
  double tau = 0.0;
  double rate = 0.0;
};

/// Quadrature exceedance rate at each offset, for plotting against sweeps.
inline std::vector<CurvePoint> model_curve(const NoiseModelParams& base, std::span<const double> deltas) {
  std::vector<CurvePoint> out;
  for (double d : deltas) {
    NoiseModelParams p = base;
    p.delta = d;
    out.push_back({d, p.tau, exceed_rate_quadrature(p)});
  }
  return out;
}

}  // namespace redist::noise
