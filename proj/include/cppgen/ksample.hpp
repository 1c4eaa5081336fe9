#pragma once

// Genealogy of a uniform k-sample: the mixing law of the sampling
// probability, the de Finetti sampler, and likelihoods for the full,
// Bernoulli and k-sampling schemes.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "cppgen/error.hpp"
#include "cppgen/kernel.hpp"
#include "cppgen/quadrature.hpp"
#include "cppgen/random.hpp"
#include "cppgen/tree.hpp"

namespace cppgen {

#if defined(__SIZEOF_FLOAT128__)
__extension__ using extended_float = __float128;
#else
using extended_float = long double;
#endif

// Parameters of the mixing law mu_k of the sampling probability.
struct MixtureParams {
  std::size_t k;
  double a;

  MixtureParams(std::size_t k_, double a_) : k(k_), a(a_) {
    if (k < 1) throw DomainError("k must be >= 1");
    if (!(a >= 0.0 && a < 1.0)) throw DomainError("a must lie in [0, 1)");
  }

  // c(y) = 1 - 1/F_y(T) = ay / (1 - a(1 - y)).
  double c(double y) const { return a * y / (1.0 - a * (1.0 - y)); }
};

// mu_k(y) = k (1-a) y^{k-1} / (1 - a(1-y))^{k+1} on (0, 1).
inline double mixing_density(const MixtureParams& p, double y) {
  if (!(y > 0.0 && y < 1.0)) throw DomainError("mixing density is defined on (0, 1)");
  const double kk = static_cast<double>(p.k);
  return kk * (1.0 - p.a) * std::pow(y, kk - 1.0) / std::pow(1.0 - p.a * (1.0 - y), kk + 1.0);
}

// Closed-form CDF of mu_k: (y / (1 - a(1-y)))^k.
inline double mixing_cdf(const MixtureParams& p, double y) {
  if (!(y >= 0.0 && y <= 1.0)) throw DomainError("mixing CDF is defined on [0, 1]");
  return std::pow(y / (1.0 - p.a * (1.0 - y)), static_cast<double>(p.k));
}

inline double mixing_quantile(const MixtureParams& p, double u) {
  if (!(u >= 0.0 && u <= 1.0)) throw DomainError("quantile level must lie in [0, 1]");
  const double v = std::pow(u, 1.0 / static_cast<double>(p.k));
  return v * (1.0 - p.a) / (1.0 - p.a * v);
}

inline double sample_mixing(const MixtureParams& p, RandomStream& rng) {
  return mixing_quantile(p, rng.uniform());
}

struct DeFinettiDraw {
  double y;
  OrientedUltrametricTree tree;
};

// Draws Y from mu_k, then k-1 iid depths with density f_Y / c(Y) on (0, T).
inline DeFinettiDraw definetti_sample(const InverseTail& F, std::size_t k, RandomStream& rng) {
  const MixtureParams params(k, F.a());
  const double y = sample_mixing(params, rng);
  const InverseTail Fy = F.thinned(y);
  const double c = Fy.a();
  std::vector<double> depths;
  depths.reserve(k - 1);
  for (std::size_t i = 0; i + 1 < k; ++i) depths.push_back(Fy.time_at_cdf(rng.uniform() * c));
  return {y, OrientedUltrametricTree(F.horizon(), std::move(depths))};
}

// A likelihood carried in log space.
struct Likelihood {
  double log_value;
  std::size_t quad_nodes = 0;  // Gauss-Legendre nodes used (k-sample only)

  double value() const { return std::exp(log_value); }
};

namespace ksample_detail {

inline void check_height(const OrientedUltrametricTree& tree, const InverseTail& F) {
  if (std::abs(tree.height() - F.horizon()) > 1e-9 * F.horizon())
    throw DomainError("tree height " + std::to_string(tree.height()) +
                      " does not match the model horizon " + std::to_string(F.horizon()));
}

inline extended_float ipow(extended_float base, std::size_t e) {
  extended_float out = 1;
  while (e) {
    if (e & 1) out *= base;
    base *= base;
    e >>= 1;
  }
  return out;
}

inline double binomial(std::size_t n, std::size_t k) {
  double out = 1.0;
  for (std::size_t i = 1; i <= k; ++i)
    out = out * static_cast<double>(n - k + i) / static_cast<double>(i);
  return out;
}

inline void check_distinct(std::span<const double> p, double p0, bool include_p0) {
  constexpr double tol = 1e-8;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (include_p0 && std::abs(p[i] - p0) < tol)
      throw TieError("P(H < x_i) coincides with P(H < T); perturb x_i away from T "
                     "(e.g. by 1e-6 T) or use the enumeration form");
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(p[i] - p[j]) < tol)
        throw TieError("P(H < x_i) values tie within 1e-8; perturb the depths "
                       "(e.g. by 1e-6 T) or use the enumeration form");
  }
}

// Calls visit(parts) for every composition of `total` into `parts.size()`
// nonnegative integers.
inline void for_each_composition(std::size_t total, std::vector<std::size_t>& parts,
                                 const std::function<void(std::span<const std::size_t>)>& visit) {
  const std::size_t n = parts.size();
  if (n == 0) {
    if (total == 0) visit(parts);
    return;
  }
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t idx, std::size_t left) {
    if (idx + 1 == n) {
      parts[idx] = left;
      visit(parts);
      return;
    }
    for (std::size_t v = 0; v <= left; ++v) {
      parts[idx] = v;
      rec(idx + 1, left - v);
    }
  };
  rec(0, total);
}

inline void guard_enumeration(std::size_t k, std::size_t m) {
  if (m > 12 || k > 8)
    throw SizeGuardExceeded("enumeration limited to m <= 12 and k <= 8");
}

}  // namespace ksample_detail

// C(tau)/F(T) prod f(x_i); with conditional_on_n the N=n conditional version.
inline Likelihood full_likelihood(const OrientedUltrametricTree& tree, const InverseTail& F,
                                  bool oriented, bool conditional_on_n = false) {
  ksample_detail::check_height(tree, F);
  double log_l = log_orientation_factor(tree, oriented) - std::log1p(F.excess(F.horizon()));
  for (double x : tree.depths()) log_l += F.log_density(x);
  if (conditional_on_n)
    log_l -= static_cast<double>(tree.depths().size()) * std::log(F.a());
  return {log_l};
}

inline Likelihood bernoulli_likelihood(const OrientedUltrametricTree& tree, const InverseTail& F,
                                       double y, bool oriented, bool conditional_on_n = false) {
  return full_likelihood(tree, F.thinned(y), oriented, conditional_on_n);
}

// Likelihood of a k-sample tree,
//   C(tau) k(1-a)/a^{k-1} int_0^1 (1-a(1-y))^{-2} prod f_y(x_i) dy,
// integrated over v with y = v(1-a)/(1-av), where the integrand becomes
// C(tau) k/a^{k-1} prod f_y(x_i). Nodes are doubled from `quad_nodes` until
// two successive rules agree to 1e-6 relative.
inline Likelihood ksample_likelihood(const OrientedUltrametricTree& tree, const InverseTail& F,
                                     std::size_t k, bool oriented, std::size_t quad_nodes = 64) {
  ksample_detail::check_height(tree, F);
  if (tree.tip_count() != k)
    throw DomainError("tree has " + std::to_string(tree.tip_count()) + " tips but k = " +
                      std::to_string(k));
  if (k < 1) throw DomainError("k must be >= 1");
  const double log_c = log_orientation_factor(tree, oriented);
  if (k == 1) return {log_c, 0};
  const double a = F.a();
  if (!(a > 0.0)) return {-std::numeric_limits<double>::infinity(), 0};

  const auto depths = tree.depths();
  std::vector<double> excess(depths.size()), log_slope(depths.size());
  double log_slope_sum = 0.0;
  for (std::size_t i = 0; i < depths.size(); ++i) {
    excess[i] = F.excess(depths[i]);
    log_slope[i] = std::log(F.derivative(depths[i]));
    log_slope_sum += log_slope[i];
  }
  const double km1 = static_cast<double>(k - 1);
  const double log_prefactor = log_c + std::log(static_cast<double>(k)) - km1 * std::log(a);

  auto integrate = [&](std::size_t n) {
    const auto& rule = gauss_legendre(n);
    std::vector<double> terms(n);
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      const double v = rule.nodes[j];
      const double y = v * (1.0 - a) / (1.0 - a * v);
      double g = km1 * std::log(y) + log_slope_sum;
      for (double e : excess) g -= 2.0 * std::log1p(y * e);
      terms[j] = std::log(rule.weights[j]) + g;
      peak = std::max(peak, terms[j]);
    }
    double sum = 0.0;
    for (double t : terms) sum += std::exp(t - peak);
    return peak + std::log(sum);
  };

  std::size_t n = std::max<std::size_t>(quad_nodes, 2);
  double previous = integrate(n);
  for (; n <= 8192; n *= 2) {
    const double current = integrate(2 * n);
    if (std::abs(std::expm1(current - previous)) <= 1e-6)
      return {log_prefactor + current, 2 * n};
    previous = current;
  }
  throw QuadratureFailure("k-sample likelihood quadrature did not stabilise at 16384 nodes");
}

// P(N = k+m, H'_1 < x_1, ..., H'_{k-1} < x_{k-1}) from the closed summed
// form, in terms of p_0 = P(H < T) and p_i = P(H < x_i). Accumulates in
// extended precision; the p_i must be pairwise distinct and distinct from
// p_0 (ties within 1e-8 raise TieError).
inline double joint_df_from_probabilities(std::size_t k, std::size_t m, double p0,
                                          std::span<const double> p) {
  if (k < 1) throw DomainError("k must be >= 1");
  if (p.size() + 1 != k) throw DomainError("joint_df needs k - 1 depths");
  if (k == 1) return (1.0 - p0) * std::pow(p0, static_cast<double>(m));
  ksample_detail::check_distinct(p, p0, true);
  using ksample_detail::ipow;
  const extended_float q0 = p0;
  extended_float product = 1;
  for (double pi : p) product *= pi;
  extended_float sum = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const extended_float qi = p[i];
    extended_float denom = 1;
    for (std::size_t j = 0; j < p.size(); ++j)
      if (j != i) denom *= qi - extended_float(p[j]);
    const extended_float mm = static_cast<extended_float>(m);
    const extended_float numer = ipow(qi, m + 2) - (mm + 2) * qi * ipow(q0, m + 1) +
                                 (mm + 1) * ipow(q0, m + 2);
    const extended_float gap = qi - q0;
    sum += ipow(qi, k - 2) / denom * numer / (gap * gap);
  }
  const extended_float out = (1 - q0) / extended_float(ksample_detail::binomial(m + k, k)) * product * sum;
  return static_cast<double>(out);
}

inline double joint_df(std::size_t k, std::size_t m, std::span<const double> x, const InverseTail& F) {
  std::vector<double> p;
  p.reserve(x.size());
  for (double xi : x) {
    if (!(xi > 0.0 && xi < F.horizon())) throw DomainError("depth thresholds must lie in (0, T)");
    p.push_back(F.cdf(xi));
  }
  return joint_df_from_probabilities(k, m, F.a(), p);
}

// The same probability by explicit enumeration of gap compositions.
inline double joint_df_bruteforce_from_probabilities(std::size_t k, std::size_t m, double p0,
                                                     std::span<const double> p) {
  if (k < 1) throw DomainError("k must be >= 1");
  if (p.size() + 1 != k) throw DomainError("joint_df needs k - 1 depths");
  ksample_detail::guard_enumeration(k, m);
  long double total = 0;
  std::vector<std::size_t> parts(k - 1);
  for (std::size_t outer = 0; outer <= m; ++outer) {
    long double inner = 0;
    ksample_detail::for_each_composition(m - outer, parts, [&](std::span<const std::size_t> c) {
      long double prod = 1;
      for (std::size_t i = 0; i < c.size(); ++i)
        prod *= std::pow(static_cast<long double>(p[i]), static_cast<long double>(c[i] + 1));
      inner += prod;
    });
    total += static_cast<long double>(outer + 1) *
             std::pow(static_cast<long double>(p0), static_cast<long double>(outer)) * inner;
  }
  return static_cast<double>((1.0L - p0) / ksample_detail::binomial(m + k, k) * total);
}

inline double joint_df_bruteforce(std::size_t k, std::size_t m, std::span<const double> x,
                                  const InverseTail& F) {
  std::vector<double> p;
  for (double xi : x) {
    if (!(xi > 0.0 && xi < F.horizon())) throw DomainError("depth thresholds must lie in (0, T)");
    p.push_back(F.cdf(xi));
  }
  return joint_df_bruteforce_from_probabilities(k, m, F.a(), p);
}

// Likelihood of a k-sample tree jointly with N = k + m, summing over the
// placements of the m unsampled tips (small m only).
inline Likelihood likelihood_with_missing(const OrientedUltrametricTree& tree, const InverseTail& F,
                                          std::size_t k, std::size_t m, bool oriented) {
  if (tree.tip_count() != k)
    throw DomainError("tree has " + std::to_string(tree.tip_count()) + " tips but k = " +
                      std::to_string(k));
  ksample_detail::guard_enumeration(k, m);
  const Likelihood base = full_likelihood(tree, F, oriented);
  std::vector<double> p;
  for (double x : tree.depths()) p.push_back(F.cdf(x));
  p.push_back(F.a());
  long double sum = 0;
  std::vector<std::size_t> parts(k);
  ksample_detail::for_each_composition(m, parts, [&](std::span<const std::size_t> c) {
    long double prod = 1;
    for (std::size_t i = 0; i < c.size(); ++i)
      prod *= static_cast<long double>(c[i] + 1) *
              std::pow(static_cast<long double>(p[i]), static_cast<long double>(c[i]));
    sum += prod;
  });
  const double log_sum = static_cast<double>(std::log(sum));
  return {base.log_value - std::log(ksample_detail::binomial(m + k, k)) + log_sum};
}

// Both sides of
//   sum over compositions of m into n parts of prod p_i^{m_i}
//     = sum_i p_i^{m+n-1} / prod_{j != i} (p_i - p_j),
// the left by enumeration, the right in extended precision.
inline std::pair<double, double> power_sum_identity(std::span<const double> p, std::size_t m) {
  const std::size_t n = p.size();
  if (n < 1) throw DomainError("power sum identity needs at least one p");
  ksample_detail::guard_enumeration(n, m);
  ksample_detail::check_distinct(p, 0.0, false);
  long double lhs = 0;
  std::vector<std::size_t> parts(n);
  ksample_detail::for_each_composition(m, parts, [&](std::span<const std::size_t> c) {
    long double prod = 1;
    for (std::size_t i = 0; i < n; ++i)
      prod *= std::pow(static_cast<long double>(p[i]), static_cast<long double>(c[i]));
    lhs += prod;
  });
  extended_float rhs = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const extended_float qi = p[i];
    extended_float denom = 1;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) denom *= qi - extended_float(p[j]);
    rhs += ksample_detail::ipow(qi, m + n - 1) / denom;
  }
  return {static_cast<double>(lhs), static_cast<double>(rhs)};
}

}  // namespace cppgen
