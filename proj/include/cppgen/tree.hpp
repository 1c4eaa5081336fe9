#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "cppgen/error.hpp"

namespace cppgen {

// An oriented ultrametric tree stored as its height and the node depths
// H_1..H_{N-1} between consecutive tips (left to right). Topology is never
// stored: tips i < j coalesce at max(H_{i+1}, ..., H_j).
class OrientedUltrametricTree {
 public:
  explicit OrientedUltrametricTree(double height, std::vector<double> depths = {})
      : height_(height), depths_(std::move(depths)) {
    if (!(height_ > 0.0) || !std::isfinite(height_))
      throw DomainError("tree height must be finite and > 0");
    for (double d : depths_)
      if (!(d > 0.0 && d < height_))
        throw DomainError("node depth " + std::to_string(d) + " outside (0, height)");
  }

  double height() const noexcept { return height_; }
  std::span<const double> depths() const noexcept { return depths_; }
  std::size_t tip_count() const noexcept { return depths_.size() + 1; }

  // Coalescence time (depth of the MRCA) of tips i and j.
  double coalescence_time(std::size_t i, std::size_t j) const {
    if (i >= tip_count() || j >= tip_count()) throw DomainError("tip index out of range");
    if (i == j) return 0.0;
    if (i > j) std::swap(i, j);
    return *std::max_element(depths_.begin() + static_cast<std::ptrdiff_t>(i),
                             depths_.begin() + static_cast<std::ptrdiff_t>(j));
  }

  // Tree spanned by the given tips (strictly increasing indices).
  OrientedUltrametricTree restrict_to(std::span<const std::size_t> tips) const {
    std::vector<double> out;
    if (tips.empty()) throw DomainError("cannot restrict a tree to zero tips");
    out.reserve(tips.size() - 1);
    for (std::size_t k = 1; k < tips.size(); ++k) {
      if (tips[k] <= tips[k - 1] || tips[k] >= tip_count())
        throw DomainError("tip subset must be strictly increasing and in range");
      out.push_back(coalescence_time(tips[k - 1], tips[k]));
    }
    return OrientedUltrametricTree(height_, std::move(out));
  }

  friend bool operator==(const OrientedUltrametricTree&,
                         const OrientedUltrametricTree&) = default;

 private:
  double height_;
  std::vector<double> depths_;
};

// Number of cherries: internal nodes whose two children are both tips.
// Ties between equal depths are broken as in the running-max rule (the
// leftmost maximum is the ancestor).
inline std::size_t count_cherries(const OrientedUltrametricTree& tree) {
  const auto h = tree.depths();
  const std::size_t n = h.size();
  std::size_t cherries = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool left_tip = i == 0 || h[i - 1] >= h[i];
    const bool right_tip = i + 1 == n || h[i + 1] > h[i];
    if (left_tip && right_tip) ++cherries;
  }
  return cherries;
}

// log C(tau): 0 for oriented trees, (n - 1 - cherries) log 2 otherwise.
inline double log_orientation_factor(const OrientedUltrametricTree& tree, bool oriented) {
  if (oriented || tree.tip_count() < 2) return 0.0;
  const double exponent = static_cast<double>(tree.tip_count()) - 1.0 -
                          static_cast<double>(count_cherries(tree));
  return exponent * std::log(2.0);
}

struct FullSampling {
  friend bool operator==(const FullSampling&, const FullSampling&) = default;
};
struct BernoulliSampling {
  double y;
  friend bool operator==(const BernoulliSampling&, const BernoulliSampling&) = default;
};
struct UniformKSampling {
  std::size_t k;
  friend bool operator==(const UniformKSampling&, const UniformKSampling&) = default;
};

using SamplingScheme = std::variant<FullSampling, BernoulliSampling, UniformKSampling>;

inline SamplingScheme make_bernoulli(double y) {
  if (!(y > 0.0 && y <= 1.0)) throw DomainError("sampling probability must lie in (0, 1]");
  return BernoulliSampling{y};
}

inline SamplingScheme make_uniform_k(std::size_t k) {
  if (k < 1) throw DomainError("sample size k must be >= 1");
  return UniformKSampling{k};
}

// Grammar: "full" | "bernoulli:<y>" | "k:<int>".
inline SamplingScheme parse_scheme(std::string_view text) {
  if (text == "full") return FullSampling{};
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) throw ParseError("unknown sampling scheme '" + std::string(text) + "'", 0);
  const auto tag = text.substr(0, colon);
  const std::string arg(text.substr(colon + 1));
  if (arg.empty()) throw ParseError("missing argument after ':'", colon + 1);
  std::size_t used = 0;
  if (tag == "bernoulli") {
    double y = 0.0;
    try {
      y = std::stod(arg, &used);
    } catch (const std::exception&) {
      throw ParseError("expected a number for y", colon + 1);
    }
    if (used != arg.size()) throw ParseError("trailing characters in y", colon + 1 + used);
    if (!(y > 0.0 && y <= 1.0)) throw ParseError("y must lie in (0, 1]", colon + 1);
    return BernoulliSampling{y};
  }
  if (tag == "k") {
    for (std::size_t i = 0; i < arg.size(); ++i)
      if (arg[i] < '0' || arg[i] > '9') throw ParseError("expected a positive integer for k", colon + 1 + i);
    unsigned long long k = 0;
    try {
      k = std::stoull(arg);
    } catch (const std::exception&) {
      throw ParseError("k out of range", colon + 1);
    }
    if (k < 1) throw ParseError("k must be >= 1", colon + 1);
    return UniformKSampling{static_cast<std::size_t>(k)};
  }
  throw ParseError("unknown sampling scheme '" + std::string(tag) + "'", 0);
}

inline std::string to_string(const SamplingScheme& scheme) {
  struct Visitor {
    std::string operator()(const FullSampling&) const { return "full"; }
    std::string operator()(const BernoulliSampling& b) const {
      char buf[64];
      std::snprintf(buf, sizeof buf, "bernoulli:%.12g", b.y);
      return buf;
    }
    std::string operator()(const UniformKSampling& u) const { return "k:" + std::to_string(u.k); }
  };
  return std::visit(Visitor{}, scheme);
}

}  // namespace cppgen
