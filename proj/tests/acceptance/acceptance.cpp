// One PASS/FAIL line per acceptance criterion; exits non-zero if any fails.

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "cppgen/cppgen.hpp"

using namespace cppgen;

namespace {

struct Outcome {
  bool passed;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double relative(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// Birth-death F written out by hand.
double bd_F(double lambda, double mu, double t) {
  const double r = lambda - mu;
  if (r == 0.0) return 1.0 + lambda * t;
  return 1.0 + lambda * std::expm1(r * t) / r;
}

// Sum over compositions of `total` into `parts` nonnegative parts of prod w_i^{c_i}.
long double composition_sum(const std::vector<long double>& w, std::size_t first, std::size_t total) {
  if (first + 1 == w.size()) return std::pow(w[first], static_cast<long double>(total));
  long double sum = 0, power = 1;
  for (std::size_t c = 0; c <= total; ++c, power *= w[first]) sum += power * composition_sum(w, first + 1, total - c);
  return sum;
}

// P(N = k+m, all sampled depths below thresholds) by enumeration of gaps.
double joint_df_oracle(std::size_t k, std::size_t m, double p0, const std::vector<double>& p) {
  double binom = 1.0;
  for (std::size_t i = 1; i <= k; ++i) binom = binom * static_cast<double>(m + i) / static_cast<double>(i);
  long double total = 0;
  long double prod_p = 1;
  for (double x : p) prod_p *= x;
  for (std::size_t last = 0; last <= m; ++last) {
    long double inner = 1;
    if (!p.empty()) inner = composition_sum(std::vector<long double>(p.begin(), p.end()), 0, m - last) * prod_p;
    else if (m - last != 0) inner = 0;
    total += static_cast<long double>(last + 1) * std::pow(static_cast<long double>(p0), static_cast<long double>(last)) * inner;
  }
  return static_cast<double>((1.0L - p0) * total / binom);
}

// Pearson chi-square of N against (1-a) a^{n-1}, bins 1..19 and >= 20.
double geometric_pvalue(const std::vector<std::size_t>& tips, double a) {
  std::vector<double> observed(20, 0.0), expected(20, 0.0);
  for (std::size_t n : tips) observed[std::min<std::size_t>(n, 20) - 1] += 1.0;
  const double total = static_cast<double>(tips.size());
  for (int n = 1; n < 20; ++n) expected[n - 1] = total * (1 - a) * std::pow(a, n - 1);
  expected[19] = total * std::pow(a, 19);
  double stat = 0.0;
  int bins = 0;
  double o = 0.0, e = 0.0;
  // Pool trailing bins until every expected count is at least 5.
  for (int i = 0; i < 20; ++i) {
    o += observed[i];
    e += expected[i];
    if (e >= 5.0 || i == 19) {
      stat += (o - e) * (o - e) / e;
      ++bins;
      o = e = 0.0;
    }
  }
  return boost::math::gamma_q(0.5 * (bins - 1), 0.5 * stat);
}

double ks(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

template <class Draw>
std::vector<double> depths_until(std::size_t count, RandomStream master, Draw&& draw) {
  std::vector<double> out;
  for (std::uint64_t i = 0; out.size() < count; ++i) {
    auto r = master.split(i);
    const auto t = draw(r);
    out.insert(out.end(), t.depths().begin(), t.depths().end());
  }
  out.resize(count);
  return out;
}

Outcome criterion1() {
  const auto model = RateModel::constant(1.0, 0.5, 2.0);
  const auto start = std::chrono::steady_clock::now();
  const InverseTail F = solve_F(model, 1e-3);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  double worst = 0.0;
  for (int i = 0; i <= 2000; ++i) {
    const double t = i * 1e-3;
    worst = std::max(worst, relative(F.value(t), bd_F(1.0, 0.5, t)));
  }
  return {worst < 1e-6 && secs < 5.0, fmt("max relative error %.2e over 2001 grid points, %.2fs", worst, secs)};
}

Outcome criterion2() {
  RandomStream rng(20261014);
  const auto start = std::chrono::steady_clock::now();
  double worst_brute = 0.0, worst_oracle = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t k = 1 + rng.below(5), m = rng.below(7);
    std::vector<double> all;
    while (all.size() < k) {
      const double x = 0.02 + 0.96 * rng.uniform();
      bool apart = true;
      for (double y : all) apart = apart && std::abs(x - y) > 1e-3;
      if (apart) all.push_back(x);
    }
    const double p0 = *std::max_element(all.begin(), all.end());
    std::vector<double> p;
    for (double x : all)
      if (x != p0) p.push_back(x);
    const double v = joint_df_from_probabilities(k, m, p0, p);
    worst_brute = std::max(worst_brute, relative(v, joint_df_bruteforce_from_probabilities(k, m, p0, p)));
    worst_oracle = std::max(worst_oracle, relative(v, joint_df_oracle(k, m, p0, p)));
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {worst_brute < 1e-10 && worst_oracle < 1e-10 && secs < 30.0,
          fmt("1000 cases, max relative difference %.2e (enumeration) %.2e (independent), %.2fs", worst_brute,
              worst_oracle, secs)};
}

Outcome criterion3() {
  RandomStream rng(20261015);
  double worst = 0.0, worst_oracle = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t n = 1 + rng.below(8), m = rng.below(13);
    std::vector<double> p;
    while (p.size() < n) {
      const double x = 0.01 + 0.98 * rng.uniform();
      bool apart = true;
      for (double y : p) apart = apart && std::abs(x - y) > 1e-2;
      if (apart) p.push_back(x);
    }
    const auto [lhs, rhs] = power_sum_identity(p, m);
    worst = std::max(worst, relative(rhs, lhs));
    const double oracle = static_cast<double>(composition_sum(std::vector<long double>(p.begin(), p.end()), 0, m));
    worst_oracle = std::max(worst_oracle, relative(rhs, oracle));
  }
  return {worst < 1e-10 && worst_oracle < 1e-10,
          fmt("1000 cases, max relative difference %.2e (library sides) %.2e (independent enumeration)", worst,
              worst_oracle)};
}

Outcome criterion4() {
  double worst_norm = 0.0, worst_slope = 0.0;
  for (std::size_t k = 1; k <= 6; ++k)
    for (double a : {0.0, 0.3, 0.9, 0.99}) {
      const MixtureParams p(k, a);
      auto density = [&](double y) {
        return static_cast<double>(k) * (1 - a) * std::pow(y, k - 1.0) / std::pow(1 - a * (1 - y), k + 1.0);
      };
      const double total = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
          [&](double y) { return mixing_density(p, y); }, 0.0, 1.0, 15, 1e-15);
      worst_norm = std::max(worst_norm, std::abs(total - 1.0));
      for (int i = 1; i <= 100; ++i) {
        const double y = (i - 0.5) / 100.0;
        worst_norm = std::max(worst_norm, relative(mixing_density(p, y), density(y)));
        const double h = 1e-3 * std::min({y, 1 - y, 1 - a * (1 - y)});
        const double slope = (8 * (mixing_cdf(p, y + h) - mixing_cdf(p, y - h)) -
                              (mixing_cdf(p, y + 2 * h) - mixing_cdf(p, y - 2 * h))) / (12 * h);
        worst_slope = std::max(worst_slope, std::abs(slope - density(y)) / std::max(1.0, density(y)));
      }
    }
  return {worst_norm < 1e-10 && worst_slope < 1e-8,
          fmt("normalisation error %.2e, CDF slope error %.2e (24 (k,a) pairs, 100 points)", worst_norm, worst_slope)};
}

Outcome criterion5() {
  const std::vector<std::pair<std::string, RateModel>> models{
      {"constant", RateModel::constant(1.0, 0.5, 2.0)},
      {"time-varying",
       RateModel::time_varying(PiecewiseConstant({0.0, 1.0}, {1.5, 0.8}), PiecewiseConstant({0.0, 1.0}, {0.3, 0.6}), 2.0)},
      {"age-dependent", RateModel::age_dependent(PiecewiseConstant(1.0), AgeTimeTable({0.0}, {0.0, 0.5}, {{0.1, 1.2}}), 2.0)}};
  const auto start = std::chrono::steady_clock::now();
  bool ok = true;
  std::string detail;
  std::uint64_t seed = 5000;
  for (const auto& [name, model] : models) {
    const InverseTail F = solve_F(model, 1e-3);
    const auto forward = depths_until(10000, RandomStream(seed++), [&](RandomStream& r) { return simulate_forward(model, r); });
    const auto cpp = depths_until(10000, RandomStream(seed++), [&](RandomStream& r) { return simulate_cpp(F, r); });
    const double d = ks(forward, cpp);
    ok = ok && d < 0.02;
    detail += fmt("%s KS %.4f; ", name.c_str(), d);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {ok && secs < 120.0, detail + fmt("%.1fs", secs)};
}

Outcome criterion6() {
  const double y = 0.3;
  const InverseTail F = InverseTail::closed_form(1.0, 0.5, 2.0);
  const InverseTail Fy = F.thinned(y);
  std::vector<std::size_t> tips;
  const auto thinned = depths_until(10000, RandomStream(6000), [&](RandomStream& r) {
    for (;;)
      if (auto t = bernoulli_thin(simulate_cpp(F, r), y, r)) {
        tips.push_back(t->tip_count());
        return *t;
      }
  });
  const auto direct = depths_until(10000, RandomStream(6001), [&](RandomStream& r) { return simulate_cpp(Fy, r); });
  const double d = ks(thinned, direct);
  const double a_y = 1.0 - 1.0 / (1.0 - y + y * bd_F(1.0, 0.5, 2.0));
  const double pv = geometric_pvalue(tips, a_y);
  return {d < 0.02 && pv > 0.001, fmt("KS %.4f, N chi-square p = %.3f over %zu thinned trees", d, pv, tips.size())};
}

Outcome criterion7() {
  const auto start = std::chrono::steady_clock::now();
  bool ok = true;
  std::string detail;
  std::uint64_t seed = 7000;
  for (double mu : {0.0, 0.5, 0.9}) {
    const InverseTail F = InverseTail::closed_form(1.0, mu, 2.0);
    RandomStream mix(seed++), naive(seed++);
    std::vector<double> a, b;
    for (int rep = 0; rep < 10000; ++rep) {
      const auto draw = definetti_sample(F, 5, mix);
      a.insert(a.end(), draw.tree.depths().begin(), draw.tree.depths().end());
      for (;;) {
        const auto tree = simulate_cpp(F, naive);
        if (tree.tip_count() < 5) continue;
        const auto s = uniform_k_sample(tree, 5, naive);
        b.insert(b.end(), s.depths().begin(), s.depths().end());
        break;
      }
    }
    const double d = ks(a, b);
    ok = ok && d < 0.02;
    detail += fmt("mu=%.1f KS %.4f; ", mu, d);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {ok && secs < 300.0, detail + fmt("%.1fs", secs)};
}

Outcome criterion8() {
  const InverseTail F = InverseTail::closed_form(1.0, 0.5, 2.0);
  using rule = boost::math::quadrature::gauss<double, 20>;
  double total = 0.0;
  const int pieces = 4;
  const double w = 2.0 / pieces;
  for (int i = 0; i < pieces; ++i)
    for (int j = 0; j < pieces; ++j)
      total += rule::integrate(
          [&](double x) {
            return rule::integrate(
                [&](double z) { return ksample_likelihood(OrientedUltrametricTree(2.0, {x, z}), F, 3, true).value(); },
                j * w, (j + 1) * w);
          },
          i * w, (i + 1) * w);
  return {std::abs(total - 1.0) < 1e-4, fmt("integral over (0,2)^2 = %.8f", total)};
}

Outcome criterion9() {
  const InverseTail F = InverseTail::closed_form(1.0, 0.5, 2.0);
  RandomStream master(9000);
  std::vector<std::size_t> tips;
  for (std::uint64_t i = 0; i < 100000; ++i) {
    auto r = master.split(i);
    tips.push_back(simulate_cpp(F, r).tip_count());
  }
  const double a = 1.0 - 1.0 / bd_F(1.0, 0.5, 2.0);
  const double pv = geometric_pvalue(tips, a);
  return {pv > 0.001, fmt("chi-square p = %.3f over 10^5 replicates", pv)};
}

// Standard errors from the inverse observed information, by finite differences.
std::pair<double, double> standard_errors(const std::vector<OrientedUltrametricTree>& trees,
                                          const SamplingScheme& scheme, double l, double m) {
  auto f = [&](double a, double b) { return neg_log_likelihood(trees, BirthDeathParams{a, b}, scheme, 2.0); };
  const double hl = 1e-3 * l, hm = 1e-3 * m;
  const double f0 = f(l, m);
  const double fll = (f(l + hl, m) - 2 * f0 + f(l - hl, m)) / (hl * hl);
  const double fmm = (f(l, m + hm) - 2 * f0 + f(l, m - hm)) / (hm * hm);
  const double flm = (f(l + hl, m + hm) - f(l + hl, m - hm) - f(l - hl, m + hm) + f(l - hl, m - hm)) / (4 * hl * hm);
  const double det = fll * fmm - flm * flm;
  return {std::sqrt(fmm / det), std::sqrt(fll / det)};
}

Outcome criterion10() {
  RandomStream master(20261014);
  std::vector<OrientedUltrametricTree> full;
  const InverseTail F = InverseTail::closed_form(1.0, 0.5, 2.0);
  auto s1 = master.split(1);
  for (std::uint64_t i = 0; i < 500; ++i) {
    auto r = s1.split(i);
    full.push_back(simulate_cpp(F, r));
  }
  const auto ff = fit_mle(full, FullSampling{}, FitBounds{});
  const auto [fl_se, fm_se] = standard_errors(full, FullSampling{}, ff.lambda, ff.mu);

  std::vector<OrientedUltrametricTree> ks5;
  const InverseTail F2 = InverseTail::closed_form(1.0, 0.3, 2.0);
  auto s2 = master.split(2);
  for (std::uint64_t i = 0; ks5.size() < 300; ++i) {
    auto r = s2.split(i);
    const auto t = simulate_cpp(F2, r);
    if (t.tip_count() >= 5) ks5.push_back(uniform_k_sample(t, 5, r));
  }
  const SamplingScheme k5 = UniformKSampling{5};
  const auto fk = fit_mle(ks5, k5, FitBounds{});
  const auto [kl_se, km_se] = standard_errors(ks5, k5, fk.lambda, fk.mu);

  const bool full_ok = relative(ff.lambda, 1.0) < 0.10 && relative(ff.mu, 0.5) < 0.10;
  const bool k_ok = relative(fk.lambda, 1.0) < 0.15 && relative(fk.mu, 0.3) < 0.15;
  return {full_ok && k_ok,
          fmt("seed 20261014; full: lambda %.4f (se %.3f) mu %.4f (se %.3f) %s; k=5: lambda %.4f (se %.3f) mu %.4f "
              "(se %.3f) %s",
              ff.lambda, fl_se, ff.mu, fm_se, full_ok ? "within 10%" : "outside 10%", fk.lambda, kl_se, fk.mu, km_se,
              k_ok ? "within 15%" : "outside 15%")};
}

}  // namespace

int main() {
  const std::vector<std::function<Outcome()>> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                       criterion6, criterion7, criterion8, criterion9, criterion10};
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.passed;
    std::printf("%s criterion %zu: %s\n", o.passed ? "PASS" : "FAIL", i + 1, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
