#pragma once

// Maximum-likelihood estimation of birth/death rates (and optionally the
// Bernoulli sampling probability) from a collection of observed trees.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include "cppgen/error.hpp"
#include "cppgen/kernel.hpp"
#include "cppgen/ksample.hpp"
#include "cppgen/rates.hpp"
#include "cppgen/tree.hpp"

namespace cppgen {

struct LikelihoodOptions {
  bool oriented = true;
  std::size_t quad_nodes = 64;
};

// Sum over trees of -log L under the scheme, for a fixed inverse tail.
inline double neg_log_likelihood(std::span<const OrientedUltrametricTree> trees,
                                 const InverseTail& F, const SamplingScheme& scheme,
                                 const LikelihoodOptions& options = {}) {
  double total = 0.0;
  for (const auto& tree : trees) {
    const Likelihood l = std::visit(
        [&](const auto& s) -> Likelihood {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, FullSampling>)
            return full_likelihood(tree, F, options.oriented);
          else if constexpr (std::is_same_v<S, BernoulliSampling>)
            return bernoulli_likelihood(tree, F, s.y, options.oriented);
          else
            return ksample_likelihood(tree, F, s.k, options.oriented, options.quad_nodes);
        },
        scheme);
    total -= l.log_value;
  }
  return total;
}

struct BirthDeathParams {
  double lambda;
  double mu;
};

inline double neg_log_likelihood(std::span<const OrientedUltrametricTree> trees,
                                 BirthDeathParams params, const SamplingScheme& scheme, double T,
                                 const LikelihoodOptions& options = {}) {
  return neg_log_likelihood(trees, InverseTail::closed_form(params.lambda, params.mu, T), scheme,
                            options);
}

// Solved inverse tails keyed by the model parameters at 12 significant
// digits. Not thread-safe; one cache per optimizer loop.
class InverseTailCache {
 public:
  explicit InverseTailCache(double step = 1e-3) : step_(step) {}

  const InverseTail& get(const RateModel& model) {
    const std::string key = key_for(model);
    auto it = cache_.find(key);
    if (it == cache_.end()) it = cache_.emplace(key, inverse_tail_for(model, step_)).first;
    return it->second;
  }

  std::size_t size() const noexcept { return cache_.size(); }

 private:
  static void append(std::string& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g,", v);
    out += buf;
  }
  static void append(std::string& out, const PiecewiseConstant& p) {
    for (double b : p.breaks()) append(out, b);
    out += '|';
    for (double v : p.values()) append(out, v);
    out += ';';
  }
  std::string key_for(const RateModel& model) const {
    std::string key = to_string(model.kind());
    key += ':';
    append(key, model.horizon());
    append(key, model.birth());
    if (const auto* p = std::get_if<PiecewiseConstant>(&model.death())) {
      append(key, *p);
    } else {
      const auto& t = std::get<AgeTimeTable>(model.death());
      for (double b : t.time_breaks()) append(key, b);
      key += '|';
      for (double b : t.age_breaks()) append(key, b);
      key += '|';
      for (const auto& row : t.values())
        for (double v : row) append(key, v);
    }
    return key;
  }

  double step_;
  std::map<std::string, InverseTail> cache_;
};

inline double neg_log_likelihood(std::span<const OrientedUltrametricTree> trees,
                                 const RateModel& model, const SamplingScheme& scheme,
                                 InverseTailCache& cache, const LikelihoodOptions& options = {}) {
  return neg_log_likelihood(trees, cache.get(model), scheme, options);
}

struct FitBounds {
  double lambda_max = 10.0;
  double mu_max = 10.0;
  // Set to estimate y under a Bernoulli scheme; the scheme's y is the start.
  std::optional<std::pair<double, double>> y_range;
};

struct FitInit {
  double lambda = 1.0;
  double mu = 0.5;
};

struct FitOptions {
  LikelihoodOptions likelihood;
  std::size_t max_iterations = 20000;
  double simplex_tolerance = 1e-8;
  double value_tolerance = 1e-10;
};

struct FitResult {
  double lambda = 0.0;
  double mu = 0.0;
  std::optional<double> y;
  double log_likelihood = -std::numeric_limits<double>::infinity();
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
  bool converged = false;
  bool lambda_at_bound = false;
  bool mu_at_bound = false;
  bool y_at_bound = false;
};

namespace inference_detail {

inline constexpr double kRateFloor = 1e-12;

struct Minimum {
  std::vector<double> point;
  double value;
  std::size_t iterations;
  std::size_t evaluations;
  bool converged;
};

// Nelder-Mead on a box: trial points are projected onto [lower, upper].
template <class Objective>
Minimum nelder_mead(Objective&& f, std::vector<double> start, const std::vector<double>& lower,
                    const std::vector<double>& upper, const FitOptions& opt) {
  const std::size_t d = start.size();
  auto project = [&](std::vector<double> x) {
    for (std::size_t i = 0; i < d; ++i) x[i] = std::clamp(x[i], lower[i], upper[i]);
    return x;
  };
  std::size_t evaluations = 0;
  auto eval = [&](const std::vector<double>& x) {
    ++evaluations;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  std::vector<std::vector<double>> simplex{project(start)};
  for (std::size_t i = 0; i < d; ++i) {
    auto x = simplex.front();
    x[i] += (x[i] + 0.25 <= upper[i]) ? 0.25 : -0.25;
    simplex.push_back(project(x));
  }
  std::vector<double> values;
  for (const auto& x : simplex) values.push_back(eval(x));

  std::vector<std::size_t> order(d + 1);
  std::size_t iter = 0;
  bool converged = false;
  for (; iter < opt.max_iterations; ++iter) {
    for (std::size_t i = 0; i <= d; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
    const auto& best = simplex[order.front()];
    double diameter = 0.0, scale = 1.0;
    for (std::size_t i = 0; i < d; ++i) scale = std::max(scale, std::abs(best[i]));
    for (const auto& x : simplex)
      for (std::size_t i = 0; i < d; ++i) diameter = std::max(diameter, std::abs(x[i] - best[i]));
    const double spread = values[order.back()] - values[order.front()];
    if (diameter / scale < opt.simplex_tolerance && spread < opt.value_tolerance) {
      converged = true;
      break;
    }

    const std::size_t worst = order.back();
    std::vector<double> centroid(d, 0.0);
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t i = 0; i < d; ++i) centroid[i] += simplex[order[k]][i] / static_cast<double>(d);
    auto along = [&](double coef) {
      std::vector<double> x(d);
      for (std::size_t i = 0; i < d; ++i) x[i] = centroid[i] + coef * (simplex[worst][i] - centroid[i]);
      return project(x);
    };

    const auto reflected = along(-1.0);
    const double fr = eval(reflected);
    if (fr < values[order.front()]) {
      const auto expanded = along(-2.0);
      const double fe = eval(expanded);
      if (fe < fr) {
        simplex[worst] = expanded;
        values[worst] = fe;
      } else {
        simplex[worst] = reflected;
        values[worst] = fr;
      }
      continue;
    }
    if (fr < values[order[d - 1]]) {
      simplex[worst] = reflected;
      values[worst] = fr;
      continue;
    }
    const bool outside = fr < values[worst];
    const auto contracted = along(outside ? -0.5 : 0.5);
    const double fc = eval(contracted);
    if (fc < std::min(fr, values[worst]) || (!outside && fc <= values[worst])) {
      simplex[worst] = contracted;
      values[worst] = fc;
      continue;
    }
    // Shrink towards the best vertex.
    const auto anchor = simplex[order.front()];
    for (std::size_t k = 1; k <= d; ++k) {
      auto& x = simplex[order[k]];
      for (std::size_t i = 0; i < d; ++i) x[i] = anchor[i] + 0.5 * (x[i] - anchor[i]);
      x = project(x);
      values[order[k]] = eval(x);
    }
  }
  const auto best_it = std::min_element(values.begin(), values.end());
  const auto best = static_cast<std::size_t>(best_it - values.begin());
  return {simplex[best], *best_it, iter, evaluations, converged};
}

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace inference_detail

// Derivative-free bounded fit of constant rates (and optionally y). Rates
// are optimised on a log scale, y on a logit scale mapped to its range.
// Three starts (init scaled by 1/2, 1, 2); the best converged one is kept.
inline FitResult fit_mle(std::span<const OrientedUltrametricTree> trees, const SamplingScheme& scheme,
                         const FitBounds& bounds, const FitInit& init = {},
                         const FitOptions& options = {}) {
  using namespace inference_detail;
  if (trees.empty()) throw DomainError("fit_mle needs at least one tree");
  if (!(bounds.lambda_max > 0.0) || !(bounds.mu_max >= 0.0))
    throw DomainError("rate bounds must satisfy 0 < lambda_max, 0 <= mu_max");
  const double T = trees.front().height();
  for (const auto& t : trees)
    if (std::abs(t.height() - T) > 1e-9 * T)
      throw DomainError("all trees must share the same height");

  const bool free_y = bounds.y_range.has_value();
  const auto* bern = std::get_if<BernoulliSampling>(&scheme);
  if (free_y && !bern) throw DomainError("a y range is only meaningful for a Bernoulli scheme");
  double y_lo = 0.0, y_hi = 1.0;
  if (free_y) {
    std::tie(y_lo, y_hi) = *bounds.y_range;
    if (!(y_lo >= 0.0 && y_lo < y_hi && y_hi <= 1.0)) throw DomainError("y range must satisfy 0 <= lo < hi <= 1");
  }

  const double log_floor = std::log(kRateFloor);
  std::vector<double> lower{log_floor, log_floor};
  std::vector<double> upper{std::log(bounds.lambda_max), std::log(std::max(bounds.mu_max, kRateFloor))};
  if (free_y) {
    lower.push_back(-40.0);
    upper.push_back(40.0);
  }

  auto unpack = [&](const std::vector<double>& x) {
    BirthDeathParams p{std::exp(x[0]), std::exp(x[1])};
    if (bounds.mu_max <= kRateFloor) p.mu = 0.0;
    double y = bern ? bern->y : 1.0;
    if (free_y) y = y_lo + (y_hi - y_lo) * logistic(x[2]);
    return std::pair{p, y};
  };
  auto objective = [&](const std::vector<double>& x) {
    const auto [p, y] = unpack(x);
    if (bern && !(y > 0.0)) return std::numeric_limits<double>::infinity();
    SamplingScheme s = scheme;
    if (bern) s = BernoulliSampling{y};
    try {
      return neg_log_likelihood(trees, p, s, T, options.likelihood);
    } catch (const DomainError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  std::optional<Minimum> best;
  std::size_t total_iter = 0, total_eval = 0;
  for (double factor : std::array{1.0, 0.5, 2.0}) {
    std::vector<double> start{std::log(std::clamp(init.lambda * factor, kRateFloor, bounds.lambda_max)),
                              std::log(std::clamp(init.mu * factor, kRateFloor, std::max(bounds.mu_max, kRateFloor)))};
    if (free_y) {
      const double y0 = std::clamp((bern->y - y_lo) / (y_hi - y_lo), 1e-6, 1.0 - 1e-6);
      start.push_back(logit(y0));
    }
    Minimum m = nelder_mead(objective, start, lower, upper, options);
    total_iter += m.iterations;
    total_eval += m.evaluations;
    if (!m.converged || !std::isfinite(m.value)) continue;
    if (!best || m.value < best->value) best = std::move(m);
  }
  if (!best) throw ConvergenceFailure("no start of the MLE search converged");

  const auto [p, y] = unpack(best->point);
  FitResult out;
  out.lambda = p.lambda;
  out.mu = p.mu < 1e-9 ? 0.0 : p.mu;
  out.log_likelihood = -best->value;
  out.iterations = total_iter;
  out.evaluations = total_eval;
  out.converged = true;
  out.lambda_at_bound = p.lambda < 1e-9 || p.lambda > bounds.lambda_max * (1.0 - 1e-6);
  out.mu_at_bound = p.mu < 1e-9 || (bounds.mu_max > 0.0 && p.mu > bounds.mu_max * (1.0 - 1e-6));
  if (free_y) {
    out.y = y;
    const double rel = (y - y_lo) / (y_hi - y_lo);
    out.y_at_bound = rel < 1e-6 || rel > 1.0 - 1e-6;
  } else if (bern) {
    out.y = bern->y;
  }
  return out;
}

}  // namespace cppgen
