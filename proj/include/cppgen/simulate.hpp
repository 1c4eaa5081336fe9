#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "cppgen/error.hpp"
#include "cppgen/kernel.hpp"
#include "cppgen/random.hpp"
#include "cppgen/rates.hpp"
#include "cppgen/tree.hpp"

namespace cppgen {

inline constexpr double kInfiniteDepth = std::numeric_limits<double>::infinity();

// Draws H with P(H > t) = 1/F(t). Returns kInfiniteDepth when H > T.
inline double sample_H(const InverseTail& F, RandomStream& rng) {
  const double target = 1.0 / rng.uniform();
  if (target > F.value(F.horizon())) return kInfiniteDepth;
  return F.time_at_value(target);
}

// iid depths stopped at the first one that is >= T.
inline OrientedUltrametricTree simulate_cpp(const InverseTail& F, RandomStream& rng) {
  if (!(F.a() < 1.0)) throw DomainError("P(H < T) must be < 1 to simulate a CPP");
  std::vector<double> depths;
  while (true) {
    const double h = sample_H(F, rng);
    if (!(h < F.horizon())) break;
    if (h > 0.0) depths.push_back(h);
  }
  return OrientedUltrametricTree(F.horizon(), std::move(depths));
}

inline constexpr std::size_t kPopulationCap = 1'000'000;

struct ForwardResult {
  OrientedUltrametricTree tree;
  std::size_t attempts;  // runs until one had survivors at T
};

namespace simulate_detail {

struct Particle {
  double birth;
  bool alive = true;
  std::vector<std::size_t> daughters;  // in increasing birth time
};

// Runs the splitting tree once; returns the oriented reduced tree or nothing
// when no particle survives to T.
inline std::optional<OrientedUltrametricTree> run_splitting_tree(const RateModel& model,
                                                                 RandomStream& rng) {
  const double T = model.horizon();
  const double birth_bound = model.max_lambda();
  const double death_bound = model.max_mu();
  const double bound = birth_bound + death_bound;

  std::vector<Particle> particles{Particle{0.0, true, {}}};
  std::vector<std::size_t> alive{0};
  if (bound > 0.0) {
    double t = 0.0;
    while (!alive.empty()) {
      t += rng.exponential(bound * static_cast<double>(alive.size()));
      if (t >= T) break;
      const std::size_t slot = rng.below(alive.size());
      const std::size_t id = alive[slot];
      const double mark = rng.uniform() * bound;
      const double birth_rate = model.lambda(t);
      if (mark < birth_rate) {
        if (alive.size() >= kPopulationCap)
          throw PopulationCapExceeded("more than 1e6 particles alive; model is too supercritical");
        particles.push_back(Particle{t, true, {}});
        const std::size_t child = particles.size() - 1;
        particles[id].daughters.push_back(child);
        alive.push_back(child);
      } else if (mark < birth_rate + model.mu(t, t - particles[id].birth)) {
        particles[id].alive = false;
        alive[slot] = alive.back();
        alive.pop_back();
      }
    }
  }
  if (alive.empty()) return std::nullopt;

  // Plane orientation: daughters sprout to the right of their mother, the
  // most recent daughter closest to her. A depth is emitted between two
  // consecutive survivors at the birth time where their lineages split.
  std::vector<double> depths;
  depths.reserve(alive.size() - 1);
  std::size_t tips = 0;
  double pending = 0.0;
  struct Frame {
    std::size_t id;
    std::size_t next;  // daughters still to visit, counted from the back
    bool has_tip;
  };
  std::vector<Frame> stack;
  auto enter = [&](std::size_t id) {
    const Particle& p = particles[id];
    bool has = false;
    if (p.alive) {
      if (tips > 0) depths.push_back(pending);
      ++tips;
      has = true;
    }
    stack.push_back({id, p.daughters.size(), has});
  };
  enter(0);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next == 0) {
      const bool has = f.has_tip;
      stack.pop_back();
      if (!stack.empty()) stack.back().has_tip = stack.back().has_tip || has;
      continue;
    }
    const std::size_t d = particles[f.id].daughters[--f.next];
    if (f.has_tip) pending = T - particles[d].birth;
    enter(d);
  }
  return OrientedUltrametricTree(T, std::move(depths));
}

}  // namespace simulate_detail

// Forward simulation of the splitting tree by thinning against the rate
// bounds, conditioned on at least one survivor at T by rejection.
inline ForwardResult simulate_forward_detailed(const RateModel& model, RandomStream& rng) {
  for (std::size_t attempt = 1;; ++attempt) {
    if (auto tree = simulate_detail::run_splitting_tree(model, rng))
      return {std::move(*tree), attempt};
  }
}

inline OrientedUltrametricTree simulate_forward(const RateModel& model, RandomStream& rng) {
  return simulate_forward_detailed(model, rng).tree;
}

// F_y = 1 - y + yF.
inline InverseTail thinned_inverse_tail(const InverseTail& F, double y) { return F.thinned(y); }

// Keeps each tip with probability y; nothing when no tip is kept.
inline std::optional<OrientedUltrametricTree> bernoulli_thin(const OrientedUltrametricTree& tree,
                                                             double y, RandomStream& rng) {
  if (!(y > 0.0 && y <= 1.0)) throw DomainError("sampling probability must lie in (0, 1]");
  if (y == 1.0) return tree;
  const auto h = tree.depths();
  std::vector<double> kept;
  bool any = false;
  double running = 0.0;
  for (std::size_t tip = 0; tip < tree.tip_count(); ++tip) {
    if (tip > 0) running = std::max(running, h[tip - 1]);
    if (!rng.bernoulli(y)) continue;
    if (any) kept.push_back(running);
    any = true;
    running = 0.0;
  }
  if (!any) return std::nullopt;
  return OrientedUltrametricTree(tree.height(), std::move(kept));
}

// Uniform k-subset of the tips, order preserved.
inline OrientedUltrametricTree uniform_k_sample(const OrientedUltrametricTree& tree, std::size_t k,
                                                RandomStream& rng) {
  const std::size_t n = tree.tip_count();
  if (k < 1) throw DomainError("k must be >= 1");
  if (n < k)
    throw InsufficientTips("tree has " + std::to_string(n) + " tips, cannot sample " +
                           std::to_string(k));
  // Selection sampling (Knuth's algorithm S) yields the subset already sorted.
  std::vector<std::size_t> chosen;
  chosen.reserve(k);
  for (std::size_t i = 0; i < n && chosen.size() < k; ++i) {
    if (rng.below(n - i) < k - chosen.size()) chosen.push_back(i);
  }
  return tree.restrict_to(chosen);
}

}  // namespace cppgen
