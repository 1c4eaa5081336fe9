#pragma once

// Self-checks behind `cppgen validate`: arithmetic oracles (quick tier) and
// Monte Carlo distributional comparisons (full tier).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "cppgen/kernel.hpp"
#include "cppgen/ksample.hpp"
#include "cppgen/random.hpp"
#include "cppgen/rates.hpp"
#include "cppgen/simulate.hpp"
#include "cppgen/stats.hpp"

namespace cppgen::validate {

struct Check {
  std::string name;
  bool passed;
  std::string detail;
  double seconds = 0.0;
};

namespace validate_detail {

inline std::string format(const char* fmt, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, fmt, a, b);
  return buf;
}

inline double relative(double x, double ref) { return std::abs(x - ref) / std::max(std::abs(ref), 1e-300); }

inline std::vector<double> distinct_probabilities(RandomStream& rng, std::size_t n, double exclude) {
  std::vector<double> p;
  while (p.size() < n) {
    const double c = 0.02 + 0.96 * rng.uniform();
    bool ok = std::abs(c - exclude) > 0.02;
    for (double q : p) ok = ok && std::abs(c - q) > 0.02;
    if (ok) p.push_back(c);
  }
  return p;
}

template <class Fn>
Check timed(std::string name, Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  Check c = fn();
  c.name = std::move(name);
  c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return c;
}

inline std::vector<double> pooled(const std::vector<OrientedUltrametricTree>& trees) {
  std::vector<double> out;
  for (const auto& t : trees) out.insert(out.end(), t.depths().begin(), t.depths().end());
  return out;
}

}  // namespace validate_detail

inline Check check_solver_closed_form() {
  using namespace validate_detail;
  return timed("solve_F matches the constant-rate closed form", [] {
    const auto model = RateModel::time_varying(PiecewiseConstant({0.0, 1.0}, {1.0, 1.0}),
                                               PiecewiseConstant({0.0, 1.0}, {0.5, 0.5}), 2.0);
    const InverseTail F = solve_F(model, 1e-3);
    double worst = 0.0;
    for (std::size_t i = 0; i <= 2000; ++i) {
      const double t = std::min(2.0, 1e-3 * static_cast<double>(i));
      worst = std::max(worst, relative(F.value(t), closed_form_F(1.0, 0.5, t)));
    }
    return Check{"", worst < 1e-6, format("max relative error %.3g", worst)};
  });
}

inline Check check_joint_df_sweep(std::uint64_t seed) {
  using namespace validate_detail;
  return timed("joint_df agrees with enumeration", [seed] {
    RandomStream rng(seed);
    double worst = 0.0;
    for (int c = 0; c < 1000; ++c) {
      const std::size_t k = 1 + rng.below(5), m = rng.below(7);
      const double p0 = 0.05 + 0.9 * rng.uniform();
      const auto p = distinct_probabilities(rng, k - 1, p0);
      worst = std::max(worst, relative(joint_df_from_probabilities(k, m, p0, p),
                                       joint_df_bruteforce_from_probabilities(k, m, p0, p)));
    }
    return Check{"", worst < 1e-10, format("1000 cases, max relative difference %.3g", worst)};
  });
}

inline Check check_power_sum_sweep(std::uint64_t seed) {
  using namespace validate_detail;
  return timed("power-sum identity", [seed] {
    RandomStream rng(seed);
    double worst = 0.0;
    for (int c = 0; c < 1000; ++c) {
      const std::size_t n = 1 + rng.below(8), m = rng.below(13);
      const auto p = distinct_probabilities(rng, n, -1.0);
      const auto [lhs, rhs] = power_sum_identity(p, m);
      worst = std::max(worst, relative(rhs, lhs));
    }
    return Check{"", worst < 1e-10, format("1000 cases, max relative difference %.3g", worst)};
  });
}

inline Check check_mixing_density() {
  using namespace validate_detail;
  return timed("mixing density normalisation and CDF", [] {
    double worst_norm = 0.0, worst_deriv = 0.0;
    for (std::size_t k = 1; k <= 6; ++k) {
      for (double a : {0.0, 0.3, 0.9, 0.99}) {
        const MixtureParams p(k, a);
        const double total = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
            [&](double y) { return y <= 0.0 || y >= 1.0 ? 0.0 : mixing_density(p, y); }, 0.0, 1.0, 15, 1e-14);
        worst_norm = std::max(worst_norm, std::abs(total - 1.0));
        for (int i = 1; i <= 100; ++i) {
          const double y = i / 101.0;
          const double h = 1e-3 * std::min({y, 1.0 - y, 1.0 - a * (1.0 - y)});
          const double slope = (8.0 * (mixing_cdf(p, y + h) - mixing_cdf(p, y - h)) -
                                (mixing_cdf(p, y + 2 * h) - mixing_cdf(p, y - 2 * h))) /
                               (12.0 * h);
          worst_deriv = std::max(worst_deriv, relative(slope, mixing_density(p, y)));
        }
      }
    }
    return Check{"", worst_norm < 1e-10 && worst_deriv < 1e-8,
                 format("normalisation error %.3g, CDF slope error %.3g", worst_norm, worst_deriv)};
  });
}

inline Check check_ksample_normalization() {
  using namespace validate_detail;
  return timed("k = 2 sample likelihood integrates to one", [] {
    const InverseTail F = InverseTail::closed_form(1.0, 0.5, 2.0);
    const double total = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        [&](double x) {
          if (x <= 0.0 || x >= 2.0) return 0.0;
          return ksample_likelihood(OrientedUltrametricTree(2.0, {x}), F, 2, true).value();
        },
        0.0, 2.0, 15, 1e-10);
    return Check{"", std::abs(total - 1.0) < 1e-6, format("integral %.10f", total)};
  });
}

inline Check check_forward_vs_cpp(std::uint64_t seed) {
  using namespace validate_detail;
  return timed("forward simulation agrees with the CPP", [seed] {
    const auto model = RateModel::constant(1.0, 0.5, 2.0);
    const InverseTail F = inverse_tail_for(model);
    RandomStream rng(seed);
    std::vector<double> forward, cpp;
    for (std::uint64_t i = 0; forward.size() < 10000; ++i) {
      auto r = rng.split(2 * i);
      const auto t = simulate_forward(model, r);
      forward.insert(forward.end(), t.depths().begin(), t.depths().end());
    }
    for (std::uint64_t i = 0; cpp.size() < 10000; ++i) {
      auto r = rng.split(2 * i + 1);
      const auto t = simulate_cpp(F, r);
      cpp.insert(cpp.end(), t.depths().begin(), t.depths().end());
    }
    forward.resize(10000);
    cpp.resize(10000);
    const double d = stats::ks_two_sample(forward, cpp);
    return Check{"", d < 0.02, format("KS statistic %.4f", d)};
  });
}

inline Check check_bernoulli_thinning(std::uint64_t seed) {
  using namespace validate_detail;
  return timed("Bernoulli thinning yields a CPP with F_y", [seed] {
    const InverseTail F = InverseTail::closed_form(1.0, 0.5, 2.0);
    const InverseTail Fy = F.thinned(0.3);
    RandomStream rng(seed);
    std::vector<double> thinned, direct;
    std::vector<std::size_t> tips;
    std::uint64_t i = 0;
    while (thinned.size() < 10000) {
      auto r = rng.split(2 * i++);
      const auto t = bernoulli_thin(simulate_cpp(F, r), 0.3, r);
      if (!t) continue;
      thinned.insert(thinned.end(), t->depths().begin(), t->depths().end());
      tips.push_back(t->tip_count());
    }
    for (i = 0; direct.size() < 10000; ++i) {
      auto r = rng.split(2 * i + 1);
      const auto t = simulate_cpp(Fy, r);
      direct.insert(direct.end(), t.depths().begin(), t.depths().end());
    }
    thinned.resize(10000);
    direct.resize(10000);
    const double d = stats::ks_two_sample(thinned, direct);
    const auto chi = stats::shifted_geometric_gof(tips, Fy.a());
    return Check{"", d < 0.02 && chi.p_value > 0.001,
                 format("KS statistic %.4f, N chi-square p %.3g", d, chi.p_value)};
  });
}

inline Check check_definetti(std::uint64_t seed, double mu) {
  using namespace validate_detail;
  return timed("de Finetti sampler matches uniform 5-sampling (mu = " + format("%g", mu) + ")", [seed, mu] {
    const InverseTail F = InverseTail::closed_form(1.0, mu, 2.0);
    RandomStream rng(seed);
    std::vector<double> mixture, naive;
    for (std::uint64_t i = 0; i < 10000; ++i) {
      auto r = rng.split(2 * i);
      const auto draw = definetti_sample(F, 5, r);
      mixture.insert(mixture.end(), draw.tree.depths().begin(), draw.tree.depths().end());
    }
    std::uint64_t j = 0;
    for (std::size_t accepted = 0; accepted < 10000; ++j) {
      auto r = rng.split(2 * j + 1);
      const auto t = simulate_cpp(F, r);
      if (t.tip_count() < 5) continue;
      const auto s = uniform_k_sample(t, 5, r);
      naive.insert(naive.end(), s.depths().begin(), s.depths().end());
      ++accepted;
    }
    const double d = stats::ks_two_sample(mixture, naive);
    return Check{"", d < 0.02, format("KS statistic %.4f", d)};
  });
}

inline Check check_geometric_n(std::uint64_t seed) {
  using namespace validate_detail;
  return timed("CPP tip count is shifted geometric", [seed] {
    const InverseTail F = InverseTail::closed_form(1.0, 0.5, 2.0);
    RandomStream rng(seed);
    std::vector<std::size_t> tips;
    for (std::uint64_t i = 0; i < 100000; ++i) {
      auto r = rng.split(i);
      tips.push_back(simulate_cpp(F, r).tip_count());
    }
    const auto chi = stats::shifted_geometric_gof(tips, F.a());
    return Check{"", chi.p_value > 0.001, format("chi-square %.2f, p %.3g", chi.statistic, chi.p_value)};
  });
}

inline std::vector<std::function<Check()>> quick_suite(std::uint64_t seed) {
  return {check_solver_closed_form, [seed] { return check_joint_df_sweep(seed); },
          [seed] { return check_power_sum_sweep(seed + 1); }, check_mixing_density,
          check_ksample_normalization};
}

inline std::vector<std::function<Check()>> full_suite(std::uint64_t seed) {
  auto suite = quick_suite(seed);
  suite.push_back([seed] { return check_forward_vs_cpp(seed + 2); });
  suite.push_back([seed] { return check_bernoulli_thinning(seed + 3); });
  for (double mu : {0.0, 0.5, 0.9}) suite.push_back([seed, mu] { return check_definetti(seed + 4, mu); });
  suite.push_back([seed] { return check_geometric_n(seed + 5); });
  return suite;
}

// Runs the checks, printing a TAP report; returns the number of failures.
inline std::size_t run_tap(const std::vector<std::function<Check()>>& suite, std::ostream& out) {
  out << "TAP version 13\n1.." << suite.size() << "\n";
  std::size_t failures = 0;
  for (std::size_t i = 0; i < suite.size(); ++i) {
    const Check c = suite[i]();
    if (!c.passed) ++failures;
    char buf[64];
    std::snprintf(buf, sizeof buf, " (%.2fs)", c.seconds);
    out << (c.passed ? "ok " : "not ok ") << i + 1 << " - " << c.name << " # " << c.detail << buf << "\n";
    out.flush();
  }
  return failures;
}

}  // namespace cppgen::validate
