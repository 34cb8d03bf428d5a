#pragma once

// Convergence and association statistics.
//
// split_rhat and ess follow the Gelman et al. / Stan definitions: chains are
// halved for R-hat, autocorrelations are combined across chains through the
// pooled variance estimate, and the autocorrelation sum is truncated with
// Geyer's initial monotone sequence rule.

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <fftw3.h>

#include "redist/error.hpp"
#include "redist/metrics.hpp"
#include "redist/record.hpp"

namespace redist::diagnostics {

/// m chains of n draws of one scalar functional.
class ChainMatrix {
 public:
  ChainMatrix() = default;
  explicit ChainMatrix(std::vector<std::vector<double>> chains) : chains_(std::move(chains)) {
    if (chains_.empty()) throw Error(ErrorKind::InvalidArgument, "no chains");
    for (const auto& c : chains_)
      if (c.size() != chains_.front().size()) throw Error(ErrorKind::InvalidArgument, "chains differ in length");
  }

  std::size_t num_chains() const noexcept { return chains_.size(); }
  std::size_t num_draws() const noexcept { return chains_.empty() ? 0 : chains_.front().size(); }
  std::span<const double> chain(std::size_t i) const { return chains_[i]; }
  const std::vector<std::vector<double>>& chains() const noexcept { return chains_; }

  /// Each chain cut into two halves; an odd trailing draw is dropped.
  ChainMatrix split() const {
    const std::size_t half = num_draws() / 2;
    std::vector<std::vector<double>> out;
    for (const auto& c : chains_) {
      out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
      out.emplace_back(c.begin() + static_cast<std::ptrdiff_t>(half), c.begin() + static_cast<std::ptrdiff_t>(2 * half));
    }
    return ChainMatrix(std::move(out));
  }

 private:
  std::vector<std::vector<double>> chains_;
};

namespace detail {

inline double mean(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double sample_variance(std::span<const double> x) {
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

inline void require_length(const ChainMatrix& chains, std::size_t min_draws) {
  if (chains.num_chains() == 0 || chains.num_draws() < min_draws)
    throw Error(ErrorKind::ChainTooShort, "need at least " + std::to_string(min_draws) + " draws per chain");
}

/// Biased autocovariance (divides by n) at lags 0..n-1, via FFT.
inline std::vector<double> autocovariance(std::span<const double> x) {
  const std::size_t n = x.size();
  std::size_t size = 1;
  while (size < 2 * n) size <<= 1;
  const double m = mean(x);

  std::vector<double> in(size, 0.0);
  for (std::size_t i = 0; i < n; ++i) in[i] = x[i] - m;
  std::vector<std::complex<double>> freq(size / 2 + 1);
  std::vector<double> back(size);

  static std::mutex planner;  // FFTW planning is not thread-safe
  fftw_plan forward, inverse;
  {
    std::lock_guard lock(planner);
    forward = fftw_plan_dft_r2c_1d(static_cast<int>(size), in.data(), reinterpret_cast<fftw_complex*>(freq.data()),
                                   FFTW_ESTIMATE);
    inverse = fftw_plan_dft_c2r_1d(static_cast<int>(size), reinterpret_cast<fftw_complex*>(freq.data()), back.data(),
                                   FFTW_ESTIMATE);
  }
  fftw_execute(forward);
  for (auto& f : freq) f = std::norm(f);
  fftw_execute(inverse);
  {
    std::lock_guard lock(planner);
    fftw_destroy_plan(forward);
    fftw_destroy_plan(inverse);
  }
  std::vector<double> acov(n);
  for (std::size_t t = 0; t < n; ++t) acov[t] = back[t] / static_cast<double>(size) / static_cast<double>(n);
  return acov;
}

inline double normal_quantile(double p) { return boost::math::quantile(boost::math::normal(), p); }

/// Average ranks (1-based), ties sharing the mean of their positions.
inline std::vector<double> mid_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace detail

/// Split R-hat. Returns nullopt when the within-chain variance is zero.
inline std::optional<double> split_rhat(const ChainMatrix& chains) {
  detail::require_length(chains, 4);
  const ChainMatrix halves = chains.split();
  const double n = static_cast<double>(halves.num_draws());
  const std::size_t m = halves.num_chains();

  std::vector<double> means(m), vars(m);
  for (std::size_t j = 0; j < m; ++j) {
    means[j] = detail::mean(halves.chain(j));
    vars[j] = detail::sample_variance(halves.chain(j));
  }
  const double within = detail::mean(vars);
  if (!(within > 0)) return std::nullopt;
  const double between = n * detail::sample_variance(means);
  return std::sqrt(((n - 1) / n * within + between / n) / within);
}

/// Effective sample size m*n / (1 + 2 sum rho_t). The rank-normalized
/// variant replaces draws by normal scores of their pooled ranks and works
/// on split chains. Returns nullopt for chains without variation.
inline std::optional<double> ess(const ChainMatrix& input, bool rank_normalized = false) {
  detail::require_length(input, 4);
  ChainMatrix chains = input;
  if (rank_normalized) {
    const ChainMatrix halves = input.split();
    std::vector<double> pooled;
    for (const auto& c : halves.chains()) pooled.insert(pooled.end(), c.begin(), c.end());
    const std::vector<double> ranks = detail::mid_ranks(pooled);
    const double total = static_cast<double>(pooled.size());
    std::vector<std::vector<double>> z(halves.num_chains());
    std::size_t i = 0;
    for (auto& c : z) {
      c.resize(halves.num_draws());
      for (double& v : c) v = detail::normal_quantile((ranks[i++] - 0.375) / (total + 0.25));
    }
    chains = ChainMatrix(std::move(z));
  }

  const std::size_t m = chains.num_chains();
  const std::size_t n = chains.num_draws();
  std::vector<std::vector<double>> acov(m);
  std::vector<double> means(m), vars(m);
  for (std::size_t j = 0; j < m; ++j) {
    acov[j] = detail::autocovariance(chains.chain(j));
    means[j] = detail::mean(chains.chain(j));
    vars[j] = acov[j][0] * static_cast<double>(n) / static_cast<double>(n - 1);
  }
  const double within = detail::mean(vars);
  double var_plus = within * static_cast<double>(n - 1) / static_cast<double>(n);
  if (m > 1) var_plus += detail::sample_variance(means);
  if (!(within > 0) || !(var_plus > 0)) return std::nullopt;

  auto rho = [&](std::size_t t) {
    double mean_acov = 0.0;
    for (std::size_t j = 0; j < m; ++j) mean_acov += acov[j][t];
    mean_acov /= static_cast<double>(m);
    return 1.0 - (within - mean_acov) / var_plus;
  };

  std::vector<double> rho_hat(n + 1, 0.0);
  rho_hat[0] = 1.0;
  double rho_even = 1.0;
  double rho_odd = rho(1);
  rho_hat[1] = rho_odd;
  std::size_t t = 1;
  while (t < n - 4 && rho_even + rho_odd > 0) {
    rho_even = rho(t + 1);
    rho_odd = rho(t + 2);
    if (rho_even + rho_odd >= 0) {
      rho_hat[t + 1] = rho_even;
      rho_hat[t + 2] = rho_odd;
    }
    t += 2;
  }
  const std::size_t max_t = t;
  if (rho_hat[max_t] > 0) rho_hat[max_t + 1] = rho_hat[max_t];
  // initial monotone sequence
  for (std::size_t s = 1; s + 3 <= max_t; s += 2) {
    if (rho_hat[s + 1] + rho_hat[s + 2] > rho_hat[s - 1] + rho_hat[s]) {
      rho_hat[s + 1] = (rho_hat[s - 1] + rho_hat[s]) / 2.0;
      rho_hat[s + 2] = rho_hat[s + 1];
    }
  }
  double sum = 0.0;
  for (std::size_t s = 0; s < max_t; ++s) sum += rho_hat[s];
  const double tau_hat = -1.0 + 2.0 * sum + rho_hat[max_t + 1];
  const double total = static_cast<double>(m * n);
  return std::min(total / tau_hat, total * std::log10(total));
}

inline constexpr double kRhatThreshold = 1.01;
inline constexpr double kEssThreshold = 400.0;

/// Converged iff R-hat <= 1.01 and ESS >= 400; undefined statistics fail.
inline bool converged(std::optional<double> rhat, std::optional<double> ess_value) {
  return rhat && ess_value && *rhat <= kRhatThreshold && *ess_value >= kEssThreshold;
}

struct Correlation {
  double r = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t n = 0;
};

inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw Error(ErrorKind::InvalidArgument, "need paired samples, n >= 2");
  const double mx = detail::mean(x), my = detail::mean(y);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0) || !(syy > 0)) throw Error(ErrorKind::InvalidArgument, "correlation undefined for constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace detail {

inline Correlation fisher_interval(double r, std::size_t n, double level, double variance_factor) {
  if (n < 4) throw Error(ErrorKind::InvalidArgument, "confidence interval needs n >= 4");
  if (!(level > 0 && level < 1)) throw Error(ErrorKind::InvalidArgument, "level must lie in (0, 1)");
  Correlation c{r, r, r, n};
  if (std::abs(r) >= 1.0) return c;
  const double z = std::atanh(r);
  const double half = normal_quantile(0.5 + level / 2.0) * std::sqrt(variance_factor / static_cast<double>(n - 3));
  c.lo = std::clamp(std::tanh(z - half), -1.0, 1.0);
  c.hi = std::clamp(std::tanh(z + half), -1.0, 1.0);
  return c;
}

}  // namespace detail

/// Pearson r with a Fisher z interval.
inline Correlation pearson_ci(std::span<const double> x, std::span<const double> y, double level = 0.95) {
  return detail::fisher_interval(pearson(x, y), x.size(), level, 1.0);
}

/// Spearman rho (Pearson on mid-ranks) with the Fisher interval widened by
/// the 1.06 variance factor of Fieller, Hartley and Pearson.
inline Correlation spearman_ci(std::span<const double> x, std::span<const double> y, double level = 0.95) {
  if (x.size() != y.size()) throw Error(ErrorKind::InvalidArgument, "need paired samples");
  const auto rx = detail::mid_ranks(x), ry = detail::mid_ranks(y);
  return detail::fisher_interval(pearson(rx, ry), x.size(), level, 1.06);
}

/// 1[reference plan deviation > threshold].
inline double balance_indicator(const EnsembleRecord& r, double threshold) {
  return metrics::plan_deviation(r.reference(), metrics::ideal_population(r.reference())) > threshold ? 1.0 : 0.0;
}

/// Published minus reference majority count.
inline double mmd_discrepancy_value(const EnsembleRecord& r, int group) {
  return metrics::mmd_discrepancy(r.published(), r.reference(), group).net;
}

}  // namespace redist::diagnostics
