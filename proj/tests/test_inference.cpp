#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "cppgen/cppgen.hpp"

using namespace cppgen;

namespace {

std::vector<OrientedUltrametricTree> simulate(double lambda, double mu, double T, const SamplingScheme& scheme,
                                              std::size_t count, std::uint64_t seed) {
  const auto F = InverseTail::closed_form(lambda, mu, T);
  RandomStream master(seed);
  std::vector<OrientedUltrametricTree> out;
  for (std::uint64_t i = 0; out.size() < count; ++i) {
    auto r = master.split(i);
    const auto tree = simulate_cpp(F, r);
    std::visit(
        [&](const auto& s) {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, FullSampling>) {
            out.push_back(tree);
          } else if constexpr (std::is_same_v<S, BernoulliSampling>) {
            if (auto t = bernoulli_thin(tree, s.y, r)) out.push_back(*t);
          } else {
            if (tree.tip_count() >= s.k) out.push_back(uniform_k_sample(tree, s.k, r));
          }
        },
        scheme);
  }
  return out;
}

// Objective on (lambda, mu[, y]) at fixed scheme shape.
double nll_at(const std::vector<OrientedUltrametricTree>& trees, const SamplingScheme& scheme,
              const std::vector<double>& theta) {
  SamplingScheme s = scheme;
  if (theta.size() == 3) s = BernoulliSampling{theta[2]};
  return neg_log_likelihood(trees, BirthDeathParams{theta[0], theta[1]}, s, trees.front().height());
}

// Every point theta * (1 + 0.01 e), e in {-1, 0, 1}^d \ {0}.
void expect_local_minimum(const std::vector<OrientedUltrametricTree>& trees, const SamplingScheme& scheme,
                          const std::vector<double>& theta, std::size_t expected_points) {
  const double best = nll_at(trees, scheme, theta);
  const std::size_t d = theta.size();
  std::size_t total = 1, checked = 0;
  for (std::size_t i = 0; i < d; ++i) total *= 3;
  for (std::size_t code = 0; code < total; ++code) {
    std::vector<double> p = theta;
    std::size_t c = code;
    bool centre = true;
    for (std::size_t i = 0; i < d; ++i, c /= 3) {
      const int e = static_cast<int>(c % 3) - 1;
      centre = centre && e == 0;
      p[i] *= 1.0 + 0.01 * e;
    }
    if (centre) continue;
    if (d == 3 && p[2] > 1.0) continue;
    ++checked;
    EXPECT_GE(nll_at(trees, scheme, p), best - 1e-9);
  }
  EXPECT_EQ(checked, expected_points);
}

// Inverse of a finite-difference Hessian of the objective in (lambda, mu).
std::array<double, 2> standard_errors(const std::vector<OrientedUltrametricTree>& trees, double lambda, double mu) {
  const double T = trees.front().height();
  auto f = [&](double l, double m) { return neg_log_likelihood(trees, BirthDeathParams{l, m}, FullSampling{}, T); };
  const double hl = 1e-3 * lambda, hm = 1e-3 * std::max(mu, 0.05);
  const double f0 = f(lambda, mu);
  const double fll = (f(lambda + hl, mu) - 2 * f0 + f(lambda - hl, mu)) / (hl * hl);
  const double fmm = (f(lambda, mu + hm) - 2 * f0 + f(lambda, mu - hm)) / (hm * hm);
  const double flm = (f(lambda + hl, mu + hm) - f(lambda + hl, mu - hm) - f(lambda - hl, mu + hm) +
                      f(lambda - hl, mu - hm)) / (4 * hl * hm);
  const double det = fll * fmm - flm * flm;
  return {std::sqrt(fmm / det), std::sqrt(fll / det)};
}

}  // namespace

TEST(NegLogLikelihood, Examples) {
  const auto F = InverseTail::closed_form(1.0, 0.5, 2.0);
  const std::vector<OrientedUltrametricTree> single{OrientedUltrametricTree(2.0, {})};
  EXPECT_NEAR(neg_log_likelihood(single, F, FullSampling{}), std::log(F.value(2.0)), 1e-14);
  const std::vector<OrientedUltrametricTree> yule_tree{OrientedUltrametricTree(1.0, {0.5})};
  EXPECT_NEAR(neg_log_likelihood(yule_tree, BirthDeathParams{1.0, 0.0}, FullSampling{}, 1.0), 1.5, 1e-12);
}

TEST(NegLogLikelihood, AdditiveAndPermutationInvariant) {
  const SamplingScheme k3 = make_uniform_k(3);
  const auto trees = simulate(1.0, 0.5, 2.0, k3, 40, 3);
  const auto F = InverseTail::closed_form(1.2, 0.3, 2.0);
  const std::vector<OrientedUltrametricTree> pair{trees[0], trees[1]};
  EXPECT_EQ(neg_log_likelihood(pair, F, k3),
            neg_log_likelihood(std::span(trees).first(1), F, k3) + neg_log_likelihood(std::span(trees).subspan(1, 1), F, k3));
  auto shuffled = trees;
  std::reverse(shuffled.begin(), shuffled.end());
  std::rotate(shuffled.begin(), shuffled.begin() + 7, shuffled.end());
  const double a = neg_log_likelihood(trees, F, k3), b = neg_log_likelihood(shuffled, F, k3);
  EXPECT_NEAR(a, b, 1e-12 * std::abs(a));
}

TEST(NegLogLikelihood, DispatchesBySchemeAndOrientation) {
  const auto F = InverseTail::closed_form(1.0, 0.5, 2.0);
  const OrientedUltrametricTree tree(2.0, {0.4, 1.5, 0.9});
  const std::vector<OrientedUltrametricTree> one{tree};
  EXPECT_NEAR(neg_log_likelihood(one, F, FullSampling{}), -full_likelihood(tree, F, true).log_value, 1e-14);
  EXPECT_NEAR(neg_log_likelihood(one, F, make_bernoulli(0.4)), -bernoulli_likelihood(tree, F, 0.4, true).log_value,
              1e-14);
  EXPECT_NEAR(neg_log_likelihood(one, F, make_uniform_k(4)), -ksample_likelihood(tree, F, 4, true).log_value, 1e-14);
  LikelihoodOptions unoriented;
  unoriented.oriented = false;
  EXPECT_NEAR(neg_log_likelihood(one, F, FullSampling{}, unoriented), -full_likelihood(tree, F, false).log_value,
              1e-14);
  EXPECT_THROW(neg_log_likelihood(one, F, make_uniform_k(3)), DomainError);
}

TEST(NegLogLikelihood, SolvedModelMatchesClosedForm) {
  const auto trees = simulate(1.0, 0.5, 2.0, FullSampling{}, 50, 8);
  const auto tv = RateModel::time_varying(PiecewiseConstant({0.0, 1.0}, {1.0, 1.0}),
                                          PiecewiseConstant({0.0, 0.5}, {0.5, 0.5}), 2.0);
  InverseTailCache cache(1e-3);
  const double solved = neg_log_likelihood(trees, tv, FullSampling{}, cache);
  const double closed = neg_log_likelihood(trees, BirthDeathParams{1.0, 0.5}, FullSampling{}, 2.0);
  EXPECT_NEAR(solved, closed, 1e-6 * std::abs(closed));
}

TEST(InverseTailCache, ReusesSolvedTables) {
  InverseTailCache cache(1e-3);
  const auto m1 = RateModel::time_varying(PiecewiseConstant({0.0, 1.0}, {1.5, 0.8}), PiecewiseConstant(0.3), 2.0);
  const auto m1_again = RateModel::time_varying(PiecewiseConstant({0.0, 1.0}, {1.5, 0.8}), PiecewiseConstant(0.3), 2.0);
  const auto m2 = RateModel::time_varying(PiecewiseConstant({0.0, 1.0}, {1.5, 0.9}), PiecewiseConstant(0.3), 2.0);
  const InverseTail& f1 = cache.get(m1);
  EXPECT_EQ(&cache.get(m1_again), &f1);
  EXPECT_EQ(cache.size(), 1u);
  cache.get(m2);
  EXPECT_EQ(cache.size(), 2u);
  EXPECT_EQ(f1.value(1.3), inverse_tail_for(m1).value(1.3));
}

TEST(NelderMead, BoxedRosenbrock) {
  auto rosen = [](const std::vector<double>& x) {
    return 100 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1 - x[0], 2);
  };
  FitOptions opt;
  const auto free = inference_detail::nelder_mead(rosen, {-1.2, 1.0}, {-5, -5}, {5, 5}, opt);
  EXPECT_TRUE(free.converged);
  EXPECT_NEAR(free.point[0], 1.0, 1e-5);
  EXPECT_NEAR(free.point[1], 1.0, 1e-5);
  const auto boxed = inference_detail::nelder_mead(rosen, {-1.2, 1.0}, {-5, -5}, {0.5, 5}, opt);
  EXPECT_TRUE(boxed.converged);
  EXPECT_NEAR(boxed.point[0], 0.5, 1e-7);
  EXPECT_NEAR(boxed.point[1], 0.25, 1e-5);
}

TEST(FitMle, RejectsBadInput) {
  const std::vector<OrientedUltrametricTree> none;
  EXPECT_THROW(fit_mle(none, FullSampling{}, FitBounds{}), DomainError);
  const std::vector<OrientedUltrametricTree> mixed{OrientedUltrametricTree(2.0, {1.0}),
                                                   OrientedUltrametricTree(1.0, {0.5})};
  EXPECT_THROW(fit_mle(mixed, FullSampling{}, FitBounds{}), DomainError);
  FitBounds with_y;
  with_y.y_range = std::pair{0.1, 0.9};
  const std::vector<OrientedUltrametricTree> one{OrientedUltrametricTree(2.0, {1.0})};
  EXPECT_THROW(fit_mle(one, FullSampling{}, with_y), DomainError);
}

TEST(FitMle, FullSamplingIsLocallyOptimalAndBeatsTruth) {
  const auto trees = simulate(1.0, 0.5, 2.0, FullSampling{}, 300, 11);
  const auto fit = fit_mle(trees, FullSampling{}, FitBounds{});
  ASSERT_TRUE(fit.converged);
  EXPECT_FALSE(fit.lambda_at_bound);
  EXPECT_FALSE(fit.mu_at_bound);
  EXPECT_FALSE(fit.y.has_value());
  EXPECT_NEAR(fit.log_likelihood, -nll_at(trees, FullSampling{}, {fit.lambda, fit.mu}), 1e-12 * std::abs(fit.log_likelihood));
  EXPECT_GE(fit.log_likelihood, -nll_at(trees, FullSampling{}, {1.0, 0.5}));
  expect_local_minimum(trees, FullSampling{}, {fit.lambda, fit.mu}, 8);
}

TEST(FitMle, YuleTruthHitsMuBound) {
  // Under a Yule truth the constrained MLE sits at mu = 0 for about half of
  // all datasets: exactly those whose one-sided score at mu = 0 points out.
  int on_bound = 0;
  for (std::uint64_t seed = 12; seed < 22; ++seed) {
    const auto trees = simulate(1.0, 0.0, 2.0, FullSampling{}, 300, seed);
    const auto fit = fit_mle(trees, FullSampling{}, FitBounds{});
    ASSERT_TRUE(fit.converged);
    FitBounds yule_only;
    yule_only.mu_max = 0.0;
    const auto yule = fit_mle(trees, FullSampling{}, yule_only);
    EXPECT_EQ(yule.mu, 0.0);
    const double score = (nll_at(trees, FullSampling{}, {yule.lambda, 1e-6}) + yule.log_likelihood) / 1e-6;
    if (score > 0.0) {
      ++on_bound;
      EXPECT_EQ(fit.mu, 0.0) << seed;
      EXPECT_TRUE(fit.mu_at_bound) << seed;
      EXPECT_NEAR(fit.lambda, yule.lambda, 1e-6) << seed;
    } else {
      EXPECT_GT(fit.mu, 0.0) << seed;
      EXPECT_FALSE(fit.mu_at_bound) << seed;
      EXPECT_GT(fit.log_likelihood, yule.log_likelihood) << seed;
    }
    EXPECT_FALSE(fit.lambda_at_bound) << seed;
  }
  EXPECT_GE(on_bound, 1);
}

TEST(FitMle, SingleTipDataPutsLambdaOnBound) {
  const std::vector<OrientedUltrametricTree> trees(20, OrientedUltrametricTree(2.0, {}));
  const auto fit = fit_mle(trees, FullSampling{}, FitBounds{});
  EXPECT_TRUE(fit.lambda_at_bound);
  EXPECT_LT(fit.lambda, 1e-6);
  EXPECT_NEAR(fit.log_likelihood, 0.0, 1e-6);
}

TEST(FitMle, ParametricBootstrapReproducesEstimate) {
  const auto data = simulate(1.0, 0.5, 2.0, FullSampling{}, 300, 13);
  const auto first = fit_mle(data, FullSampling{}, FitBounds{});
  ASSERT_TRUE(first.converged);
  const auto se = standard_errors(data, first.lambda, first.mu);
  const auto replay = simulate(first.lambda, first.mu, 2.0, FullSampling{}, 300, 14);
  const auto second = fit_mle(replay, FullSampling{}, FitBounds{});
  ASSERT_TRUE(second.converged);
  // Two independent estimates: the difference has twice the variance.
  EXPECT_LT(std::abs(second.lambda - first.lambda), 3.0 * std::sqrt(2.0) * se[0]);
  EXPECT_LT(std::abs(second.mu - first.mu), 3.0 * std::sqrt(2.0) * se[1]);
}

TEST(FitMle, BernoulliWithFreeY) {
  const SamplingScheme scheme = make_bernoulli(0.5);
  const auto trees = simulate(1.5, 0.5, 2.0, scheme, 300, 15);
  FitBounds bounds;
  bounds.y_range = std::pair{0.05, 1.0};
  const auto fit = fit_mle(trees, scheme, bounds);
  ASSERT_TRUE(fit.converged);
  ASSERT_TRUE(fit.y.has_value());
  EXPECT_GE(*fit.y, 0.05);
  EXPECT_LE(*fit.y, 1.0);
  EXPECT_GE(fit.log_likelihood, -nll_at(trees, scheme, {1.5, 0.5, 0.5}) - 1e-9);
  if (!fit.y_at_bound) expect_local_minimum(trees, scheme, {fit.lambda, fit.mu, *fit.y}, 26);

  // Fixed y is reported back.
  const auto fixed = fit_mle(trees, scheme, FitBounds{});
  ASSERT_TRUE(fixed.y.has_value());
  EXPECT_EQ(*fixed.y, 0.5);
  EXPECT_GE(fit.log_likelihood, fixed.log_likelihood - 1e-9);
}

TEST(FitMle, KSampleFitBeatsTruth) {
  const SamplingScheme scheme = make_uniform_k(4);
  const auto trees = simulate(1.0, 0.3, 2.0, scheme, 100, 16);
  const auto fit = fit_mle(trees, scheme, FitBounds{});
  ASSERT_TRUE(fit.converged);
  EXPECT_GE(fit.log_likelihood, -nll_at(trees, scheme, {1.0, 0.3}));
  expect_local_minimum(trees, scheme, {fit.lambda, fit.mu}, 8);
}
