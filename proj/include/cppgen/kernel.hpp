#pragma once

// Inverse tail distribution F of the coalescent point process spanned by the
// survivors of a splitting tree: closed forms for constant rates and a
// Volterra integro-differential solver for the general case.

#include <algorithm>
#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "cppgen/error.hpp"
#include "cppgen/rates.hpp"

namespace cppgen {

// Density at time s of the death time of a particle born at time t.
inline double death_density_g(const RateModel& model, double t, double s) {
  if (s < t) throw DomainError("death time precedes birth time");
  if (t < 0.0 || s > model.horizon() * (1 + 1e-12))
    throw DomainError("birth/death times must lie in [0, T]");
  return model.mu(s, s - t) * std::exp(-model.hazard(t, t, s));
}

namespace kernel_detail {

// F(t) - 1 for constant rates, accurate near r = 0 and near t = 0.
inline double closed_form_excess(double lambda, double mu, double t) {
  const double r = lambda - mu;
  const double scale = std::max({lambda, mu, 1.0});
  if (std::abs(r) < 1e-12 * scale) return lambda * t;
  const double rt = r * t;
  if (std::abs(rt) < 1e-8) return lambda * t * (1.0 + rt / 2.0 + rt * rt / 6.0);
  return lambda / r * std::expm1(rt);
}

inline double closed_form_derivative(double lambda, double mu, double t) {
  return lambda * std::exp((lambda - mu) * t);
}

}  // namespace kernel_detail

// F(t) = 1 + (lambda/r)(e^{rt} - 1), or 1 + lambda t when r = 0.
inline double closed_form_F(double lambda, double mu, double t) {
  return 1.0 + kernel_detail::closed_form_excess(lambda, mu, t);
}

// The function F on [0, T] with F(t) = 1/P(H > t), possibly thinned by a
// Bernoulli sampling probability y (F_y = 1 - y + yF). Values are immutable
// and cheap to copy; grid data is shared.
class InverseTail {
 public:
  struct ClosedForm {
    double lambda;
    double mu;
  };
  // Hermite data on a uniform grid: excess[i] = F(i h) - 1, and per interval
  // the slopes at its left and right ends (after shape-preserving limiting).
  struct Grid {
    double step;
    std::vector<double> excess;
    std::vector<double> slope_left;
    std::vector<double> slope_right;
  };

  static InverseTail closed_form(double lambda, double mu, double horizon) {
    if (!(lambda >= 0.0) || !(mu >= 0.0)) throw InvalidModel("rates must be >= 0");
    if (!(horizon > 0.0)) throw InvalidModel("horizon must be > 0");
    return InverseTail(ClosedForm{lambda, mu}, horizon, 1.0);
  }

  static InverseTail from_grid(double horizon, Grid grid) {
    if (grid.excess.size() < 2 || grid.slope_left.size() + 1 != grid.excess.size() ||
        grid.slope_right.size() + 1 != grid.excess.size())
      throw InvalidModel("inconsistent inverse-tail grid");
    if (grid.excess.front() != 0.0) throw InvalidModel("grid must start at F(0) = 1");
    return InverseTail(std::make_shared<const Grid>(std::move(grid)), horizon, 1.0);
  }

  double horizon() const noexcept { return horizon_; }
  double sampling_probability() const noexcept { return y_; }
  bool is_closed_form() const noexcept { return std::holds_alternative<ClosedForm>(repr_); }
  const ClosedForm* closed_form_params() const noexcept { return std::get_if<ClosedForm>(&repr_); }
  const Grid* grid() const noexcept {
    const auto* p = std::get_if<std::shared_ptr<const Grid>>(&repr_);
    return p ? p->get() : nullptr;
  }

  // F_y(t) - 1.
  double excess(double t) const { return y_ * base_excess(check(t)); }
  double value(double t) const { return 1.0 + excess(t); }
  double derivative(double t) const { return y_ * base_derivative(check(t)); }
  // Node depth density f = F'/F^2.
  double density(double t) const {
    const double v = value(t);
    return derivative(t) / (v * v);
  }
  double log_density(double t) const {
    const double d = derivative(t);
    return std::log(d) - 2.0 * std::log1p(excess(t));
  }
  // P(H < t) = 1 - 1/F(t).
  double cdf(double t) const {
    const double e = excess(t);
    return e / (1.0 + e);
  }
  double tail(double t) const { return 1.0 / value(t); }
  // a = P(H < T).
  double a() const { return cdf(horizon_); }

  // F_y = 1 - y + yF. Thinning composes multiplicatively.
  InverseTail thinned(double y) const {
    if (!(y > 0.0 && y <= 1.0)) throw DomainError("sampling probability must lie in (0, 1]");
    InverseTail out = *this;
    out.y_ = y_ * y;
    return out;
  }

  // Smallest t in [0, T] with F(t) >= target, by bisection to `tolerance` in t.
  // Requires 1 <= target <= F(T).
  double time_at_value(double target, double tolerance = 1e-12) const {
    const double excess_target = target - 1.0;
    double lo = 0.0;
    double hi = horizon_;
    if (excess_target <= 0.0) return 0.0;
    while (hi - lo > tolerance) {
      const double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      if (excess(mid) < excess_target)
        lo = mid;
      else
        hi = mid;
    }
    return 0.5 * (lo + hi);
  }

  // Same, for the level set {P(H < t) = p}, with p in [0, a].
  double time_at_cdf(double p, double tolerance = 1e-12) const {
    // 1 - 1/F = p  <=>  F - 1 = p / (1 - p)
    return time_at_value(1.0 + p / (1.0 - p), tolerance);
  }

 private:
  using Repr = std::variant<ClosedForm, std::shared_ptr<const Grid>>;

  InverseTail(Repr repr, double horizon, double y)
      : repr_(std::move(repr)), horizon_(horizon), y_(y) {}

  double check(double t) const {
    const double slack = 1e-12 * horizon_;
    if (!(t >= -slack && t <= horizon_ + slack))
      throw DomainError("t = " + std::to_string(t) + " outside [0, T]");
    return std::clamp(t, 0.0, horizon_);
  }

  struct Locate {
    const Grid& g;
    std::size_t i;
    double s;
  };
  Locate locate(const Grid& g, double t) const {
    const std::size_t n = g.slope_left.size();
    const double pos = t / g.step;
    auto i = static_cast<std::size_t>(std::max(0.0, std::floor(pos)));
    if (i >= n) i = n - 1;
    return {g, i, pos - static_cast<double>(i)};
  }

  double base_excess(double t) const {
    if (const auto* c = std::get_if<ClosedForm>(&repr_))
      return kernel_detail::closed_form_excess(c->lambda, c->mu, t);
    const auto& g = *std::get<std::shared_ptr<const Grid>>(repr_);
    const auto [grid, i, s] = locate(g, t);
    const double s2 = s * s, s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * grid.excess[i] + (s3 - 2 * s2 + s) * grid.step * grid.slope_left[i] +
           (-2 * s3 + 3 * s2) * grid.excess[i + 1] + (s3 - s2) * grid.step * grid.slope_right[i];
  }

  double base_derivative(double t) const {
    if (const auto* c = std::get_if<ClosedForm>(&repr_))
      return kernel_detail::closed_form_derivative(c->lambda, c->mu, t);
    const auto& g = *std::get<std::shared_ptr<const Grid>>(repr_);
    const auto [grid, i, s] = locate(g, t);
    const double s2 = s * s;
    return (6 * s2 - 6 * s) * (grid.excess[i] - grid.excess[i + 1]) / grid.step +
           (3 * s2 - 4 * s + 1) * grid.slope_left[i] + (3 * s2 - 2 * s) * grid.slope_right[i];
  }

  Repr repr_;
  double horizon_;
  double y_;
};

inline double node_depth_density_f(const InverseTail& F, double t) { return F.density(t); }

inline double survival_a(const InverseTail& F) { return F.a(); }

namespace kernel_detail {

struct VolterraGrid {
  std::vector<double> excess;
  std::vector<double> slope_left;
  std::vector<double> slope_right;
};

// One pass of the predictor-corrector (Heun) scheme over n cells: explicit
// Euler predictor, one trapezoidal corrector, and a trapezoidal product rule
// for the memory term. Rates enter through their exact averages over each
// cell, so breakpoints on the grid cost no accuracy.
inline VolterraGrid volterra_pass(const RateModel& model, std::size_t n) {
  const double T = model.horizon();
  const double h = T / static_cast<double>(n);
  auto grid_time = [&](std::size_t i) { return i == n ? T : static_cast<double>(i) * h; };

  // Death hazard accumulated by a particle born at T - t_i by the time
  // T - t_j (j <= i). Age-independent rates factor through a cumulative sum.
  std::vector<double> cumulative;
  if (model.age_independent()) {
    cumulative.resize(n + 1);
    for (std::size_t j = 0; j <= n; ++j) cumulative[j] = model.hazard(0.0, 0.0, T - grid_time(j));
  }
  auto hazard_between = [&](std::size_t i, std::size_t j) {
    if (!cumulative.empty()) return cumulative[j] - cumulative[i];
    const double birth = T - grid_time(i);
    return model.hazard(birth, birth, T - grid_time(j));
  };

  std::vector<double> excess(n + 1, 0.0);
  std::vector<double> slope_left(n), slope_right(n);
  double memory_adjusted = 1.0;  // F(t_i) - I(t_i); I(0) = 0
  std::vector<double> hazard_at(n + 1);

  for (std::size_t i = 0; i < n; ++i) {
    const double t_lo = grid_time(i), t_hi = grid_time(i + 1);
    const double birth_rate = model.birth_integral(T - t_hi, T - t_lo) / h;
    const double rate_lo = birth_rate * memory_adjusted;

    // Memory integral at t_{i+1}, split as partial + weight * F(t_{i+1}).
    double partial = 0.0;
    double weight = 0.0;
    for (std::size_t j = 0; j <= i + 1; ++j) hazard_at[j] = hazard_between(i + 1, j);
    for (std::size_t j = 0; j <= i; ++j) {
      const double cell_mu = (hazard_at[j] - hazard_at[j + 1]) / h;
      if (cell_mu == 0.0) continue;
      const double half = 0.5 * h * cell_mu;
      partial += half * (1.0 + excess[j]) * std::exp(-hazard_at[j]);
      if (j + 1 <= i)
        partial += half * (1.0 + excess[j + 1]) * std::exp(-hazard_at[j + 1]);
      else
        weight = half;  // hazard_at[i+1] == 0
    }

    const double predicted = excess[i] + h * rate_lo;
    const double f_pred = 1.0 + predicted;
    const double rate_pred = birth_rate * (f_pred - partial - weight * f_pred);
    double corrected = excess[i] + 0.5 * h * (rate_lo + rate_pred);

    if (std::abs(corrected - predicted) > 1e-3 * (1.0 + corrected))
      throw StepTooLarge("corrector changed F(" + std::to_string(t_hi) +
                         ") by more than 1e-3 relative; reduce the step");
    if (corrected < excess[i]) {
      if (excess[i] - corrected > 1e-9 * (1.0 + excess[i]))
        throw SolverFailure("F decreased at t = " + std::to_string(t_hi));
      corrected = excess[i];
    }
    excess[i + 1] = corrected;
    const double f_next = 1.0 + corrected;
    const double next_adjusted = f_next - partial - weight * f_next;

    slope_left[i] = birth_rate * memory_adjusted;
    slope_right[i] = birth_rate * next_adjusted;
    memory_adjusted = next_adjusted;
  }
  return {std::move(excess), std::move(slope_left), std::move(slope_right)};
}

}  // namespace kernel_detail

// Solves F'(t) = lambda(T-t) (F(t) - int_0^t F(s) g(T-t, T-s) ds), F(0) = 1,
// on the grid t_i = i h. The second-order scheme is run at h and h/2 and the
// two are combined by Richardson extrapolation; values between nodes use
// monotone cubic Hermite interpolation.
inline InverseTail solve_F(const RateModel& model, double step) {
  const double T = model.horizon();
  if (!(step > 0.0)) throw DomainError("solver step must be > 0");
  const double cells = std::round(T / step);
  if (cells < 1.0 || std::abs(cells * step - T) > 1e-9 * T)
    throw DomainError("solver step must divide T");
  const auto n = static_cast<std::size_t>(cells);
  const double h = T / cells;

  const auto coarse = kernel_detail::volterra_pass(model, n);
  const auto fine = kernel_detail::volterra_pass(model, 2 * n);
  auto extrapolate = [](double f, double c) { return (4.0 * f - c) / 3.0; };
  std::vector<double> excess(n + 1, 0.0), slope_left(n), slope_right(n);
  for (std::size_t i = 1; i <= n; ++i) {
    excess[i] = extrapolate(fine.excess[2 * i], coarse.excess[i]);
    if (excess[i] < excess[i - 1]) {
      if (excess[i - 1] - excess[i] > 1e-9 * (1.0 + excess[i - 1]))
        throw SolverFailure("F decreased at t = " + std::to_string(static_cast<double>(i) * h));
      excess[i] = excess[i - 1];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    slope_left[i] = extrapolate(fine.slope_left[2 * i], coarse.slope_left[i]);
    slope_right[i] = extrapolate(fine.slope_right[2 * i + 1], coarse.slope_right[i]);
  }

  // Fritsch-Carlson limiting keeps every cubic piece nondecreasing.
  for (std::size_t i = 0; i < n; ++i) {
    const double secant = (excess[i + 1] - excess[i]) / h;
    double& d0 = slope_left[i];
    double& d1 = slope_right[i];
    if (secant <= 0.0) {
      d0 = d1 = 0.0;
      continue;
    }
    d0 = std::max(d0, 0.0);
    d1 = std::max(d1, 0.0);
    const double alpha = d0 / secant, beta = d1 / secant;
    const double norm2 = alpha * alpha + beta * beta;
    if (norm2 > 9.0) {
      const double tau = 3.0 / std::sqrt(norm2);
      d0 = tau * alpha * secant;
      d1 = tau * beta * secant;
    }
  }

  return InverseTail::from_grid(T, {h, std::move(excess), std::move(slope_left), std::move(slope_right)});
}

// Closed form for constant rates, the Volterra solver otherwise.
inline InverseTail inverse_tail_for(const RateModel& model, double step = 1e-3) {
  if (model.is_constant())
    return InverseTail::closed_form(model.constant_lambda(), model.constant_mu(), model.horizon());
  return solve_F(model, step);
}

}  // namespace cppgen
