#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "cppgen/error.hpp"

namespace cppgen {

// A right-continuous step function on [0, inf): values[i] holds on
// [breaks[i], breaks[i+1]), and the last value extends to infinity.
// breaks[0] is always 0.
class PiecewiseConstant {
 public:
  PiecewiseConstant() : breaks_{0.0}, values_{0.0} {}
  explicit PiecewiseConstant(double constant) : breaks_{0.0}, values_{constant} {
    check();
  }
  PiecewiseConstant(std::vector<double> breaks, std::vector<double> values)
      : breaks_(std::move(breaks)), values_(std::move(values)) {
    check();
  }

  const std::vector<double>& breaks() const noexcept { return breaks_; }
  const std::vector<double>& values() const noexcept { return values_; }
  bool is_constant() const noexcept { return values_.size() == 1; }

  std::size_t piece(double t) const noexcept {
    auto it = std::upper_bound(breaks_.begin(), breaks_.end(), t);
    return it == breaks_.begin() ? 0
                                 : static_cast<std::size_t>(it - breaks_.begin()) - 1;
  }

  double operator()(double t) const noexcept { return values_[piece(t)]; }

  double max() const noexcept { return *std::max_element(values_.begin(), values_.end()); }

  // Exact integral over [lo, hi], lo <= hi.
  double integral(double lo, double hi) const noexcept {
    if (hi <= lo) return 0.0;
    double acc = 0.0;
    std::size_t i = piece(lo);
    double cur = lo;
    while (cur < hi) {
      const double next =
          i + 1 < breaks_.size() ? std::min(hi, breaks_[i + 1]) : hi;
      acc += values_[i] * (next - cur);
      cur = next;
      ++i;
    }
    return acc;
  }

 private:
  void check() const {
    if (breaks_.empty() || breaks_.size() != values_.size())
      throw InvalidModel("piecewise table needs one value per breakpoint");
    if (breaks_.front() != 0.0)
      throw InvalidModel("piecewise table must start at breakpoint 0");
    for (std::size_t i = 1; i < breaks_.size(); ++i)
      if (!(breaks_[i] > breaks_[i - 1]))
        throw InvalidModel("breakpoints must be strictly increasing");
    for (double v : values_)
      if (!(v >= 0.0) || !std::isfinite(v))
        throw InvalidModel("rate values must be finite and >= 0");
  }

  std::vector<double> breaks_;
  std::vector<double> values_;
};

// Death rate as a function of (time, age), constant on the cells of a
// rectangular grid. values[i][j] holds for time piece i and age piece j.
class AgeTimeTable {
 public:
  AgeTimeTable(std::vector<double> time_breaks, std::vector<double> age_breaks,
               std::vector<std::vector<double>> values)
      : time_breaks_(std::move(time_breaks)),
        age_breaks_(std::move(age_breaks)),
        values_(std::move(values)) {
    auto check_breaks = [](const std::vector<double>& b, const char* what) {
      if (b.empty() || b.front() != 0.0)
        throw InvalidModel(std::string(what) + " breakpoints must start at 0");
      for (std::size_t i = 1; i < b.size(); ++i)
        if (!(b[i] > b[i - 1]))
          throw InvalidModel(std::string(what) + " breakpoints must be strictly increasing");
    };
    check_breaks(time_breaks_, "time");
    check_breaks(age_breaks_, "age");
    if (values_.size() != time_breaks_.size())
      throw InvalidModel("age/time table needs one row per time breakpoint");
    for (const auto& row : values_) {
      if (row.size() != age_breaks_.size())
        throw InvalidModel("age/time table needs one column per age breakpoint");
      for (double v : row)
        if (!(v >= 0.0) || !std::isfinite(v))
          throw InvalidModel("rate values must be finite and >= 0");
    }
  }

  const std::vector<double>& time_breaks() const noexcept { return time_breaks_; }
  const std::vector<double>& age_breaks() const noexcept { return age_breaks_; }
  const std::vector<std::vector<double>>& values() const noexcept { return values_; }

  double operator()(double t, double age) const noexcept {
    return values_[index(time_breaks_, t)][index(age_breaks_, age)];
  }

  double max() const noexcept {
    double m = 0.0;
    for (const auto& row : values_)
      for (double v : row) m = std::max(m, v);
    return m;
  }

  // Exact integral of u -> rate(u, u - birth) over [lo, hi].
  double diagonal_integral(double birth, double lo, double hi) const noexcept {
    if (hi <= lo) return 0.0;
    std::size_t ti = index(time_breaks_, lo);
    std::size_t ai = index(age_breaks_, lo - birth);
    constexpr double inf = std::numeric_limits<double>::infinity();
    double cur = lo;
    double acc = 0.0;
    while (cur < hi) {
      const double next_t = ti + 1 < time_breaks_.size() ? time_breaks_[ti + 1] : inf;
      const double next_a = ai + 1 < age_breaks_.size() ? birth + age_breaks_[ai + 1] : inf;
      const double next = std::min({hi, next_t, next_a});
      acc += values_[ti][ai] * (next - cur);
      if (next >= next_t) ++ti;
      if (next >= next_a) ++ai;
      cur = next;
    }
    return acc;
  }

 private:
  static std::size_t index(const std::vector<double>& b, double x) noexcept {
    auto it = std::upper_bound(b.begin(), b.end(), x);
    return it == b.begin() ? 0 : static_cast<std::size_t>(it - b.begin()) - 1;
  }

  std::vector<double> time_breaks_;
  std::vector<double> age_breaks_;
  std::vector<std::vector<double>> values_;
};

enum class RateKind { constant, time_varying, age_dependent };

inline const char* to_string(RateKind k) {
  switch (k) {
    case RateKind::constant: return "constant";
    case RateKind::time_varying: return "time_varying";
    case RateKind::age_dependent: return "age_dependent";
  }
  return "?";
}

// Birth rate lambda(t), death rate mu(t, age) and the horizon T.
class RateModel {
 public:
  using DeathRate = std::variant<PiecewiseConstant, AgeTimeTable>;

  static RateModel constant(double lambda, double mu, double horizon) {
    return RateModel(RateKind::constant, PiecewiseConstant(lambda), PiecewiseConstant(mu),
                     horizon);
  }
  static RateModel time_varying(PiecewiseConstant lambda, PiecewiseConstant mu,
                                double horizon) {
    return RateModel(RateKind::time_varying, std::move(lambda), std::move(mu), horizon);
  }
  static RateModel age_dependent(PiecewiseConstant lambda, AgeTimeTable mu, double horizon) {
    return RateModel(RateKind::age_dependent, std::move(lambda), std::move(mu), horizon);
  }

  RateKind kind() const noexcept { return kind_; }
  double horizon() const noexcept { return horizon_; }
  const PiecewiseConstant& birth() const noexcept { return birth_; }
  const DeathRate& death() const noexcept { return death_; }

  bool age_independent() const noexcept {
    return std::holds_alternative<PiecewiseConstant>(death_);
  }
  bool is_constant() const noexcept {
    return birth_.is_constant() && age_independent() &&
           std::get<PiecewiseConstant>(death_).is_constant();
  }

  double lambda(double t) const noexcept { return birth_(t); }

  double mu(double t, double age) const noexcept {
    if (const auto* p = std::get_if<PiecewiseConstant>(&death_)) return (*p)(t);
    return std::get<AgeTimeTable>(death_)(t, age);
  }

  // Constant-rate accessors; throw for non-constant models.
  double constant_lambda() const { return require_constant().birth_.values().front(); }
  double constant_mu() const {
    return std::get<PiecewiseConstant>(require_constant().death_).values().front();
  }
  double net_growth() const { return constant_lambda() - constant_mu(); }

  double max_lambda() const noexcept { return birth_.max(); }
  double max_mu() const noexcept {
    return std::visit([](const auto& d) { return d.max(); }, death_);
  }

  double birth_integral(double lo, double hi) const noexcept { return birth_.integral(lo, hi); }

  // Cumulative death hazard of a particle born at `birth`, over [lo, hi]:
  // integral of mu(u, u - birth) du.
  double hazard(double birth, double lo, double hi) const noexcept {
    if (const auto* p = std::get_if<PiecewiseConstant>(&death_)) return p->integral(lo, hi);
    return std::get<AgeTimeTable>(death_).diagonal_integral(birth, lo, hi);
  }

 private:
  RateModel(RateKind kind, PiecewiseConstant birth, DeathRate death, double horizon)
      : kind_(kind), birth_(std::move(birth)), death_(std::move(death)), horizon_(horizon) {
    if (!(horizon_ > 0.0) || !std::isfinite(horizon_))
      throw InvalidModel("horizon T must be finite and > 0");
    auto below_horizon = [&](const std::vector<double>& b, const char* what) {
      if (b.back() >= horizon_)
        throw InvalidModel(std::string(what) + " breakpoints must lie in [0, T)");
    };
    below_horizon(birth_.breaks(), "birth");
    if (const auto* p = std::get_if<PiecewiseConstant>(&death_))
      below_horizon(p->breaks(), "death");
    else
      below_horizon(std::get<AgeTimeTable>(death_).time_breaks(), "death time");
  }

  const RateModel& require_constant() const {
    if (!is_constant()) throw InvalidModel("model does not have constant rates");
    return *this;
  }

  RateKind kind_;
  PiecewiseConstant birth_;
  DeathRate death_;
  double horizon_;
};

}  // namespace cppgen
