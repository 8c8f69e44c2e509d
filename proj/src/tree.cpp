#include "dyadcart/tree.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "dyadcart/error.hpp"

namespace dyadcart {

std::string to_string(NodeId node) {
  return std::to_string(node.level) + ":" + std::to_string(node.index);
}

NodeId parse_node(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw validation_error("malformed node '" + std::string(text) + "', expected l:k");
  }
  int level = 0;
  std::uint32_t index = 0;
  const auto lhs = text.substr(0, colon);
  const auto rhs = text.substr(colon + 1);
  auto r1 = std::from_chars(lhs.data(), lhs.data() + lhs.size(), level);
  auto r2 = std::from_chars(rhs.data(), rhs.data() + rhs.size(), index);
  if (r1.ec != std::errc{} || r1.ptr != lhs.data() + lhs.size() || r2.ec != std::errc{} ||
      r2.ptr != rhs.data() + rhs.size()) {
    throw validation_error("malformed node '" + std::string(text) + "', expected l:k");
  }
  if (level < -1 || (level == -1 && index != 0) ||
      (level >= 0 && (level > 30 || index >= (std::uint32_t{1} << level)))) {
    throw validation_error("node '" + std::string(text) + "' has an index out of range");
  }
  return NodeId{level, index};
}

// ---------------------------------------------------------------- NodeSet

std::size_t NodeSet::count() const {
  std::size_t c = 0;
  for (auto w : words_) c += static_cast<std::size_t>(std::popcount(w));
  return c;
}

std::size_t NodeSet::count_range(std::size_t lo, std::size_t hi) const {
  std::size_t c = 0;
  while (lo < hi && (lo & 63) != 0) {
    c += test(lo);
    ++lo;
  }
  while (lo + 64 <= hi) {
    c += static_cast<std::size_t>(std::popcount(words_[lo >> 6]));
    lo += 64;
  }
  while (lo < hi) {
    c += test(lo);
    ++lo;
  }
  return c;
}

std::size_t NodeSet::nth_unset_in_range(std::size_t lo, std::size_t hi, std::size_t r) const {
  for (std::size_t pos = lo; pos < hi;) {
    if ((pos & 63) == 0 && pos + 64 <= hi) {
      const std::uint64_t unset = ~words_[pos >> 6];
      const auto c = static_cast<std::size_t>(std::popcount(unset));
      if (r >= c) {
        r -= c;
        pos += 64;
        continue;
      }
      std::uint64_t bits = unset;
      for (std::size_t i = 0; i < r; ++i) bits &= bits - 1;
      return pos + static_cast<std::size_t>(std::countr_zero(bits));
    }
    if (!test(pos)) {
      if (r == 0) return pos;
      --r;
    }
    ++pos;
  }
  throw validation_error("nth_unset_in_range: rank out of range");
}

std::size_t NodeSet::hamming(const NodeSet& other) const {
  std::size_t d = 0;
  for (std::size_t w = 0; w < words_.size(); ++w) {
    d += static_cast<std::size_t>(std::popcount(words_[w] ^ other.words_[w]));
  }
  return d;
}

bool NodeSet::subset_of(const NodeSet& other) const {
  for (std::size_t w = 0; w < words_.size(); ++w) {
    if ((words_[w] & ~other.words_[w]) != 0) return false;
  }
  return true;
}

std::vector<std::size_t> Twig::positions() const {
  std::vector<std::size_t> out;
  const std::size_t top_pos = position(top);
  for (std::size_t p = position(bottom);; p = parent_position(p)) {
    out.push_back(p);
    if (p == top_pos || p == 0) break;
  }
  return out;
}

// ---------------------------------------------------------------- tree_ops

namespace tree_ops {

namespace {
inline std::size_t internal_children(const NodeSet& s, int cap, std::size_t pos,
                                     std::size_t& only_child) {
  if (pos == 0) {
    only_child = 1;
    return internal(s, cap, 1) ? 1 : 0;
  }
  const std::size_t left = 2 * pos;
  const bool l = internal(s, cap, left);
  const bool r = internal(s, cap, left + 1);
  only_child = l ? left : left + 1;
  return static_cast<std::size_t>(l) + static_cast<std::size_t>(r);
}
}  // namespace

void growable(const NodeSet& s, int cap, std::vector<std::size_t>& out) {
  out.clear();
  const std::size_t limit = std::size_t{1} << cap;
  s.for_each([&](std::size_t pos) {
    if (pos == 0) {
      if (limit > 1 && !s.test(1)) out.push_back(1);
      return;
    }
    const std::size_t left = 2 * pos;
    if (left >= limit) return;
    if (!s.test(left)) out.push_back(left);
    if (!s.test(left + 1)) out.push_back(left + 1);
  });
  std::sort(out.begin(), out.end());
}

std::size_t growable_count(const NodeSet& s, int cap) {
  const std::size_t limit = std::size_t{1} << cap;
  std::size_t c = 0;
  s.for_each([&](std::size_t pos) {
    if (pos == 0) {
      c += (limit > 1 && !s.test(1)) ? 1 : 0;
      return;
    }
    const std::size_t left = 2 * pos;
    if (left >= limit) return;
    c += !s.test(left);
    c += !s.test(left + 1);
  });
  return c;
}

void preterminals(const NodeSet& s, int cap, std::vector<std::size_t>& out) {
  out.clear();
  s.for_each([&](std::size_t pos) {
    if (pos == 0) return;
    std::size_t only = 0;
    if (internal_children(s, cap, pos, only) == 0) out.push_back(pos);
  });
}

std::size_t preterminal_count(const NodeSet& s, int cap) {
  std::size_t c = 0;
  s.for_each([&](std::size_t pos) {
    if (pos == 0) return;
    std::size_t only = 0;
    c += internal_children(s, cap, pos, only) == 0;
  });
  return c;
}

bool is_twig_prunable(const NodeSet& s, int cap, std::size_t pos) {
  if (pos == 0 || !internal(s, cap, pos)) return false;
  for (;;) {
    std::size_t only = 0;
    const std::size_t k = internal_children(s, cap, pos, only);
    if (k == 0) return true;
    if (k == 2) return false;
    pos = only;
  }
}

void twig_prunable(const NodeSet& s, int cap, std::vector<std::size_t>& out) {
  out.clear();
  s.for_each([&](std::size_t pos) {
    if (is_twig_prunable(s, cap, pos)) out.push_back(pos);
  });
}

std::size_t twig_prunable_count(const NodeSet& s, int cap) {
  std::size_t c = 0;
  s.for_each([&](std::size_t pos) { c += is_twig_prunable(s, cap, pos); });
  return c;
}

std::size_t twig_top(const NodeSet& s, std::size_t target) {
  std::size_t top = target;
  while (top > 1 && !s.test(parent_position(top))) top = parent_position(top);
  return top;
}

std::size_t chain_bottom(const NodeSet& s, int cap, std::size_t top) {
  std::size_t pos = top;
  for (;;) {
    std::size_t only = 0;
    if (internal_children(s, cap, pos, only) == 0) return pos;
    pos = only;
  }
}

void set_path(NodeSet& s, std::size_t top, std::size_t bottom) {
  for (std::size_t p = bottom;; p = parent_position(p)) {
    s.set(p);
    if (p == top || p == 0) break;
  }
}

void clear_path(NodeSet& s, std::size_t top, std::size_t bottom) {
  for (std::size_t p = bottom;; p = parent_position(p)) {
    s.reset(p);
    if (p == top || p == 0) break;
  }
}

}  // namespace tree_ops

// ---------------------------------------------------------------- DyadicTree

namespace {
void check_cap(int depth_cap) {
  if (depth_cap < 0 || depth_cap > 20) {
    throw validation_error("depth cap " + std::to_string(depth_cap) + " outside [0, 20]");
  }
}

std::vector<NodeId> to_nodes(const std::vector<std::size_t>& positions) {
  std::vector<NodeId> out;
  out.reserve(positions.size());
  for (auto p : positions) out.push_back(node_at(p));
  return out;
}
}  // namespace

DyadicTree::DyadicTree(int depth_cap) : depth_cap_(depth_cap) {
  check_cap(depth_cap);
  nodes_ = NodeSet(capacity());
  nodes_.set(0);
}

DyadicTree DyadicTree::full(int depth_cap) {
  DyadicTree t(depth_cap);
  for (std::size_t p = 0; p < t.capacity(); ++p) t.nodes_.set(p);
  return t;
}

DyadicTree DyadicTree::from_nodes(int depth_cap, std::span<const NodeId> internal) {
  DyadicTree t(depth_cap);
  for (const auto& node : internal) {
    if (node.level >= depth_cap) {
      throw validation_error("node " + to_string(node) + " is at or below the depth cap " +
                             std::to_string(depth_cap));
    }
    t.nodes_.set(position(node));
  }
  t.validate();
  return t;
}

DyadicTree DyadicTree::from_set_unchecked(int depth_cap, NodeSet nodes) {
  return DyadicTree(depth_cap, std::move(nodes));
}

DyadicTree DyadicTree::decode(int depth_cap, std::string_view text) {
  std::vector<NodeId> nodes;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && text[i] == ' ') ++i;
    std::size_t j = i;
    while (j < text.size() && text[j] != ' ') ++j;
    if (j > i) nodes.push_back(parse_node(text.substr(i, j - i)));
    i = j;
  }
  return from_nodes(depth_cap, nodes);
}

bool DyadicTree::internal(NodeId node) const {
  if (node.level >= depth_cap_) return false;
  return nodes_.test(position(node));
}

std::vector<NodeId> DyadicTree::internal_nodes() const {
  std::vector<NodeId> out;
  nodes_.for_each([&](std::size_t p) { out.push_back(node_at(p)); });
  return out;
}

std::vector<NodeId> DyadicTree::external_nodes() const {
  std::vector<NodeId> out;
  nodes_.for_each([&](std::size_t p) {
    if (p == 0) {
      if (!internal_at(1)) out.push_back(NodeId{0, 0});
      return;
    }
    for (std::size_t c = 2 * p; c <= 2 * p + 1; ++c) {
      if (!internal_at(c)) out.push_back(node_at(c));
    }
  });
  std::sort(out.begin(), out.end(),
            [](NodeId a, NodeId b) { return position(a) < position(b); });
  return out;
}

std::vector<NodeId> DyadicTree::preterminals() const {
  std::vector<std::size_t> pos;
  tree_ops::preterminals(nodes_, depth_cap_, pos);
  return to_nodes(pos);
}

std::vector<NodeId> DyadicTree::twig_prunable() const {
  std::vector<std::size_t> pos;
  tree_ops::twig_prunable(nodes_, depth_cap_, pos);
  return to_nodes(pos);
}

std::vector<NodeId> children(NodeId node, int depth_cap) {
  if (node.level >= depth_cap) {
    throw validation_error("node " + to_string(node) + " has no children under depth cap " +
                           std::to_string(depth_cap));
  }
  if (node.level < 0) return {NodeId{0, 0}};
  return {NodeId{node.level + 1, 2 * node.index}, NodeId{node.level + 1, 2 * node.index + 1}};
}

DyadicTree DyadicTree::grow(NodeId node) const {
  if (node.level < 0 || node.level >= depth_cap_) {
    throw validation_error("cannot grow " + to_string(node) + ": level outside [0, " +
                           std::to_string(depth_cap_) + ")");
  }
  const std::size_t p = position(node);
  if (nodes_.test(p) || !nodes_.test(parent_position(p))) {
    throw validation_error("cannot grow " + to_string(node) + ": not an external node");
  }
  DyadicTree out = *this;
  out.nodes_.set(p);
  return out;
}

DyadicTree DyadicTree::prune(NodeId node) const {
  if (node.level < 0) throw validation_error("the constant node (-1,0) cannot be pruned");
  const std::size_t p = position(node);
  if (node.level >= depth_cap_ || !nodes_.test(p) || internal_at(2 * p) ||
      internal_at(2 * p + 1)) {
    throw validation_error("cannot prune " + to_string(node) + ": not a pre-terminal node");
  }
  DyadicTree out = *this;
  out.nodes_.reset(p);
  return out;
}

std::pair<DyadicTree, Twig> DyadicTree::grow_twig(NodeId target) const {
  if (target.level < 0 || target.level >= depth_cap_) {
    throw validation_error("cannot grow a twig to " + to_string(target) + ": level outside [0, " +
                           std::to_string(depth_cap_) + ")");
  }
  const std::size_t bottom = position(target);
  if (nodes_.test(bottom)) {
    throw validation_error("cannot grow a twig to " + to_string(target) +
                           ": already internal");
  }
  const std::size_t top = tree_ops::twig_top(nodes_, bottom);
  DyadicTree out = *this;
  tree_ops::set_path(out.nodes_, top, bottom);
  return {std::move(out), Twig{node_at(top), target}};
}

std::pair<DyadicTree, Twig> DyadicTree::prune_twig(NodeId node) const {
  const std::size_t top = position(node);
  if (node.level < 0 || node.level >= depth_cap_ ||
      !tree_ops::is_twig_prunable(nodes_, depth_cap_, top)) {
    throw validation_error("cannot prune the twig at " + to_string(node) +
                           ": not twig-prunable");
  }
  const std::size_t bottom = tree_ops::chain_bottom(nodes_, depth_cap_, top);
  DyadicTree out = *this;
  tree_ops::clear_path(out.nodes_, top, bottom);
  return {std::move(out), Twig{node, node_at(bottom)}};
}

std::vector<NodeId> DyadicTree::ancestors(NodeId node) const {
  if (!internal(node)) {
    throw validation_error("ancestors: " + to_string(node) + " is not internal");
  }
  std::vector<NodeId> out;
  for (std::size_t p = position(node);; p = parent_position(p)) {
    out.push_back(node_at(p));
    if (p == 0) break;
  }
  return out;
}

std::vector<NodeId> DyadicTree::descendants(NodeId node) const {
  if (!internal(node)) {
    throw validation_error("descendants: " + to_string(node) + " is not internal");
  }
  std::vector<NodeId> out;
  std::vector<std::size_t> stack{position(node)};
  while (!stack.empty()) {
    const std::size_t p = stack.back();
    stack.pop_back();
    out.push_back(node_at(p));
    if (p == 0) {
      if (internal_at(1)) stack.push_back(1);
      continue;
    }
    for (std::size_t c = 2 * p; c <= 2 * p + 1; ++c) {
      if (internal_at(c)) stack.push_back(c);
    }
  }
  std::sort(out.begin(), out.end(),
            [](NodeId a, NodeId b) { return position(a) < position(b); });
  return out;
}

std::size_t DyadicTree::hamming(const DyadicTree& other) const {
  if (other.depth_cap_ != depth_cap_) {
    throw validation_error("hamming: trees have different depth caps");
  }
  return nodes_.hamming(other.nodes_);
}

std::string DyadicTree::encode() const {
  std::string out;
  nodes_.for_each([&](std::size_t p) {
    if (!out.empty()) out.push_back(' ');
    out += to_string(node_at(p));
  });
  return out;
}

void DyadicTree::validate() const {
  if (nodes_.size() != capacity()) throw validation_error("tree storage size mismatch");
  if (!nodes_.test(0)) throw validation_error("the constant node (-1,0) must be internal");
  for (std::size_t p = 2; p < capacity(); ++p) {
    if (nodes_.test(p) && !nodes_.test(parent_position(p))) {
      throw validation_error("node " + to_string(node_at(p)) +
                             " is internal but its parent is not");
    }
  }
}

bool DyadicTree::valid() const {
  try {
    validate();
    return true;
  } catch (const Error&) {
    return false;
  }
}

std::uint32_t DyadicTree::mask() const {
  if (depth_cap_ > 5) throw validation_error("mask(): depth cap above 5");
  return static_cast<std::uint32_t>(nodes_.low_word());
}

DyadicTree DyadicTree::from_mask(int depth_cap, std::uint32_t mask) {
  if (depth_cap > 5) throw validation_error("from_mask(): depth cap above 5");
  DyadicTree t(depth_cap);
  for (std::size_t p = 0; p < t.capacity(); ++p) {
    if ((mask >> p) & 1U) t.nodes_.set(p);
  }
  return t;
}

std::uint64_t tree_count(int depth_cap) {
  std::uint64_t t = 1;
  for (int l = 1; l <= depth_cap; ++l) t = 1 + t * t;
  return t;
}

namespace {
// Subtree masks rooted at position `pos` with `levels` levels available.
void subtree_masks(std::size_t pos, int levels, std::vector<std::uint32_t>& out) {
  out.clear();
  out.push_back(0);
  if (levels == 0) return;
  std::vector<std::uint32_t> left, right;
  subtree_masks(2 * pos, levels - 1, left);
  subtree_masks(2 * pos + 1, levels - 1, right);
  const std::uint32_t self = std::uint32_t{1} << pos;
  for (auto a : left) {
    for (auto b : right) out.push_back(self | a | b);
  }
}
}  // namespace

std::vector<DyadicTree> enumerate_trees(int depth_cap) {
  if (depth_cap < 0 || depth_cap > 5) {
    throw validation_error("enumerate_trees: depth cap " + std::to_string(depth_cap) +
                           " exceeds the enumeration limit of 5");
  }
  std::vector<std::uint32_t> masks;
  subtree_masks(1, depth_cap, masks);
  for (auto& m : masks) m |= 1U;
  std::sort(masks.begin(), masks.end(), [](std::uint32_t a, std::uint32_t b) {
    const int ca = std::popcount(a), cb = std::popcount(b);
    return ca != cb ? ca < cb : a < b;
  });
  std::vector<DyadicTree> out;
  out.reserve(masks.size());
  for (auto m : masks) out.push_back(DyadicTree::from_mask(depth_cap, m));
  return out;
}

}  // namespace dyadcart
