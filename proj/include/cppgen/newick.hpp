#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cppgen/error.hpp"
#include "cppgen/tree.hpp"

namespace cppgen {

namespace newick_detail {

inline std::string format_length(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

struct ParsedNode {
  std::ptrdiff_t parent = -1;
  std::vector<std::size_t> children;
  double length = 0.0;
  bool has_length = false;
};

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  std::vector<ParsedNode> parse() {
    std::vector<ParsedNode> nodes;
    std::vector<std::size_t> open;
    auto add_node = [&]() -> std::size_t {
      if (open.empty() && !nodes.empty()) throw ParseError("more than one root", pos_);
      nodes.emplace_back();
      const std::size_t id = nodes.size() - 1;
      if (!open.empty()) {
        nodes[id].parent = static_cast<std::ptrdiff_t>(open.back());
        nodes[open.back()].children.push_back(id);
      }
      return id;
    };

    bool expect_subtree = true;
    while (true) {
      skip_blank();
      if (expect_subtree) {
        if (peek() == '(') {
          ++pos_;
          open.push_back(add_node());
          continue;
        }
        const std::size_t tip = add_node();
        read_label();
        read_length(nodes[tip]);
        expect_subtree = false;
        continue;
      }
      const char c = peek();
      if (c == ',') {
        if (open.empty()) throw ParseError("',' outside of parentheses", pos_);
        ++pos_;
        expect_subtree = true;
      } else if (c == ')') {
        if (open.empty()) throw ParseError("unbalanced ')'", pos_);
        ++pos_;
        const std::size_t done = open.back();
        open.pop_back();
        read_label();
        read_length(nodes[done]);
      } else if (c == ';') {
        if (!open.empty()) throw ParseError("unbalanced '(' before ';'", pos_);
        ++pos_;
        skip_blank();
        if (pos_ != text_.size()) throw ParseError("trailing characters after ';'", pos_);
        return nodes;
      } else if (c == '\0') {
        throw ParseError("unexpected end of input (missing ';')", pos_);
      } else {
        throw ParseError(std::string("unexpected character '") + c + "'", pos_);
      }
    }
  }

 private:
  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  void skip_blank() {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        ++pos_;
      } else if (c == '[') {
        const auto close = text_.find(']', pos_);
        if (close == std::string_view::npos) throw ParseError("unterminated comment", pos_);
        pos_ = close + 1;
      } else {
        break;
      }
    }
  }

  void read_label() {
    skip_blank();
    if (peek() == '\'') {
      ++pos_;
      while (true) {
        if (pos_ >= text_.size()) throw ParseError("unterminated quoted label", pos_);
        if (text_[pos_] == '\'') {
          if (pos_ + 1 < text_.size() && text_[pos_ + 1] == '\'') {
            pos_ += 2;
            continue;
          }
          ++pos_;
          break;
        }
        ++pos_;
      }
      return;
    }
    static constexpr std::string_view stop = "():,;[ \t\r\n'";
    while (pos_ < text_.size() && stop.find(text_[pos_]) == std::string_view::npos) ++pos_;
  }

  void read_length(ParsedNode& node) {
    skip_blank();
    if (peek() != ':') return;
    ++pos_;
    skip_blank();
    const std::size_t start = pos_;
    static constexpr std::string_view number_chars = "0123456789+-.eE";
    while (pos_ < text_.size() && number_chars.find(text_[pos_]) != std::string_view::npos)
      ++pos_;
    if (start == pos_) throw ParseError("expected a branch length after ':'", start);
    const std::string token(text_.substr(start, pos_ - start));
    std::size_t used = 0;
    double value = 0.0;
    try {
      value = std::stod(token, &used);
    } catch (const std::exception&) {
      throw ParseError("malformed branch length '" + token + "'", start);
    }
    if (used != token.size()) throw ParseError("malformed branch length '" + token + "'", start);
    if (!(value >= 0.0)) throw ParseError("negative branch length", start);
    node.length = value;
    node.has_length = true;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace newick_detail

// Newick text for the tree. Tips are labelled 0..N-1 left to right; with
// `stem` a root edge of length height - max(depths) is written so that the
// height survives a round trip.
inline std::string tree_to_newick(const OrientedUltrametricTree& tree, bool stem = true) {
  using newick_detail::format_length;
  const auto h = tree.depths();
  const std::size_t internal = h.size();
  const std::size_t tips = tree.tip_count();
  if (internal == 0) {
    return stem ? "0:" + format_length(tree.height()) + ";" : std::string("0;");
  }

  // Max-Cartesian tree over the depths; ties keep the leftmost maximum as
  // ancestor. Child encoding: value < tips is a tip, otherwise tips + i is
  // internal node i.
  std::vector<std::size_t> left(internal), right(internal);
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < internal; ++i) {
    left[i] = i;
    right[i] = i + 1;
    std::ptrdiff_t last = -1;
    while (!stack.empty() && h[stack.back()] < h[i]) {
      last = static_cast<std::ptrdiff_t>(stack.back());
      stack.pop_back();
    }
    if (last >= 0) left[i] = tips + static_cast<std::size_t>(last);
    if (!stack.empty()) right[stack.back()] = tips + i;
    stack.push_back(i);
  }
  const std::size_t root = stack.front();

  // Explicit work stack so that caterpillars with many tips do not recurse.
  struct Work {
    std::size_t node;  // tips + i for internal, tip index otherwise
    double parent_height;
    std::string literal;
  };
  std::string out;
  std::vector<Work> todo;
  todo.push_back({tips + root, tree.height(), {}});
  bool is_root = true;
  while (!todo.empty()) {
    Work w = std::move(todo.back());
    todo.pop_back();
    if (!w.literal.empty()) {
      out += w.literal;
      continue;
    }
    if (w.node < tips) {
      out += std::to_string(w.node) + ":" + format_length(w.parent_height);
      continue;
    }
    const std::size_t i = w.node - tips;
    const double node_height = h[i];
    std::string suffix = ")";
    if (!is_root || stem) suffix += ":" + format_length(w.parent_height - node_height);
    is_root = false;
    todo.push_back({0, 0.0, std::move(suffix)});
    todo.push_back({right[i], node_height, {}});
    todo.push_back({0, 0.0, ","});
    todo.push_back({left[i], node_height, {}});
    todo.push_back({0, 0.0, "("});
  }
  return out + ";";
}

// Parses a rooted binary ultrametric Newick tree. Depths are returned in
// the left-to-right tip order of the input; labels are ignored. The height
// is the root edge plus the tip distance; a tree written without a root
// edge needs `known_height`, which otherwise must agree with the stem.
inline OrientedUltrametricTree newick_to_tree(std::string_view text,
                                              std::optional<double> known_height = std::nullopt) {
  auto nodes = newick_detail::Parser(text).parse();
  if (nodes.empty()) throw ParseError("empty tree", 0);

  // Nodes are created in preorder, so a single forward pass fills distances.
  std::vector<double> dist(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    if (n.parent >= 0 && !n.has_length)
      throw ParseError("missing branch length on node " + std::to_string(i), 0);
    if (!n.children.empty() && n.children.size() != 2)
      throw NonBinaryError("node with " + std::to_string(n.children.size()) +
                           " children; only binary trees are supported");
    dist[i] = (n.parent >= 0 ? dist[static_cast<std::size_t>(n.parent)] : 0.0) + n.length;
  }
  double height = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].children.empty()) height = std::max(height, dist[i]);
  if (!(height > 0.0) && !known_height) throw DomainError("tree height must be > 0");
  double deviation = 0.0;
  for (std::size_t i = 0; i < nodes.size() && height > 0.0; ++i)
    if (nodes[i].children.empty())
      deviation = std::max(deviation, std::abs(dist[i] - height) / height);
  if (deviation > 1e-9) throw NonUltrametricError(deviation);
  if (known_height) {
    const double root_edge = nodes[0].has_length ? nodes[0].length : 0.0;
    if (!nodes[0].has_length || root_edge == 0.0) {
      if (!(*known_height > height - root_edge))
        throw DomainError("known height must exceed the deepest node");
      for (auto& d : dist) d += *known_height - height;
    } else if (std::abs(*known_height - height) > 1e-9 * *known_height) {
      throw DomainError("tree height " + std::to_string(height) + " does not match " +
                        std::to_string(*known_height));
    }
    height = *known_height;
  } else if (!nodes[0].has_length || nodes[0].length == 0.0) {
    if (!nodes[0].children.empty())
      throw DomainError("tree has no root edge; its height must be supplied");
  }

  // In-order traversal interleaves tips and internal nodes; each internal
  // node is the MRCA of its in-order neighbours.
  std::vector<double> depths;
  depths.reserve(nodes.size() / 2);
  struct Frame {
    std::size_t node;
    bool left_done;
  };
  std::vector<Frame> stack{{0, false}};
  while (!stack.empty()) {
    Frame& f = stack.back();
    const auto& n = nodes[f.node];
    if (n.children.empty()) {
      stack.pop_back();
      continue;
    }
    if (!f.left_done) {
      f.left_done = true;
      stack.push_back({n.children[0], false});
      continue;
    }
    depths.push_back(height - dist[f.node]);
    const std::size_t right = n.children[1];
    stack.pop_back();
    stack.push_back({right, false});
  }
  return OrientedUltrametricTree(height, std::move(depths));
}

}  // namespace cppgen
