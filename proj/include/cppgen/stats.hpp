#pragma once

// Goodness-of-fit statistics used by the validation suites.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "cppgen/error.hpp"

namespace cppgen::stats {

// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
inline double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw DomainError("KS test needs two nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

// One-sample statistic sup |F_n - cdf|.
inline double ks_one_sample(std::vector<double> sample, const std::function<double(double)>& cdf) {
  if (sample.empty()) throw DomainError("KS test needs a nonempty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double c = cdf(sample[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - c, c - static_cast<double>(i) / n});
  }
  return d;
}

// Asymptotic Kolmogorov survival function P(K > lambda).
inline double kolmogorov_survival(double lambda) {
  if (lambda <= 0.0) return 1.0;
  double sum = 0.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += (j % 2 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

inline double ks_two_sample_pvalue(double d, std::size_t na, std::size_t nb) {
  const double ne = static_cast<double>(na) * static_cast<double>(nb) / static_cast<double>(na + nb);
  const double sq = std::sqrt(ne);
  return kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d);
}

struct ChiSquare {
  double statistic;
  std::size_t dof;
  double p_value;
};

// Pearson goodness of fit of observed counts against expected probabilities
// (summing to one). Adjacent bins are merged left to right until each
// expected count is at least `min_expected`.
inline ChiSquare chi_square_gof(std::span<const double> observed, std::span<const double> probs,
                                double min_expected = 5.0) {
  if (observed.size() != probs.size() || observed.empty())
    throw DomainError("chi-square needs matching nonempty bins");
  double total = 0.0;
  for (double o : observed) total += o;
  std::vector<double> obs, exp;
  double o_acc = 0.0, e_acc = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    o_acc += observed[i];
    e_acc += probs[i] * total;
    if (e_acc >= min_expected) {
      obs.push_back(o_acc);
      exp.push_back(e_acc);
      o_acc = e_acc = 0.0;
    }
  }
  if (e_acc > 0.0 || o_acc > 0.0) {
    if (exp.empty()) {
      obs.push_back(o_acc);
      exp.push_back(e_acc);
    } else {
      obs.back() += o_acc;
      exp.back() += e_acc;
    }
  }
  if (exp.size() < 2) throw DomainError("chi-square needs at least two populated bins");
  double stat = 0.0;
  for (std::size_t i = 0; i < exp.size(); ++i) stat += (obs[i] - exp[i]) * (obs[i] - exp[i]) / exp[i];
  const std::size_t dof = exp.size() - 1;
  const double p = boost::math::gamma_q(0.5 * static_cast<double>(dof), 0.5 * stat);
  return {stat, dof, p};
}

// Observed tip counts binned as n = 1..max_bin-1 plus a pooled n >= max_bin
// bin, tested against the shifted geometric law P(N = n) = (1-a) a^{n-1}.
inline ChiSquare shifted_geometric_gof(std::span<const std::size_t> counts, double a,
                                       std::size_t max_bin = 20) {
  std::vector<double> observed(max_bin, 0.0), probs(max_bin, 0.0);
  for (std::size_t n : counts) {
    if (n < 1) throw DomainError("tip counts must be >= 1");
    observed[std::min(n, max_bin) - 1] += 1.0;
  }
  for (std::size_t n = 1; n < max_bin; ++n)
    probs[n - 1] = (1.0 - a) * std::pow(a, static_cast<double>(n - 1));
  probs[max_bin - 1] = std::pow(a, static_cast<double>(max_bin - 1));
  return chi_square_gof(observed, probs);
}

}  // namespace cppgen::stats
