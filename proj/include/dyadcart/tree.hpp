#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dyadcart {

/// A dyadic node (level, index). Level -1 is the constant term (-1,0); for
/// level l >= 0 the index runs over [0, 2^l).
struct NodeId {
  int level = -1;
  std::uint32_t index = 0;

  friend bool operator==(const NodeId&, const NodeId&) = default;
};

/// Breadth-first key 2^l + k, with the constant at 0. This is the column
/// order of the Haar design and the "deepest rightmost" ordering.
constexpr std::size_t position(NodeId node) {
  return node.level < 0 ? 0 : (std::size_t{1} << node.level) + node.index;
}

constexpr NodeId node_at(std::size_t pos) {
  if (pos == 0) return NodeId{-1, 0};
  const int level = static_cast<int>(std::bit_width(pos)) - 1;
  return NodeId{level, static_cast<std::uint32_t>(pos - (std::size_t{1} << level))};
}

constexpr int level_of(std::size_t pos) {
  return pos == 0 ? -1 : static_cast<int>(std::bit_width(pos)) - 1;
}

/// Parent position; the parent of (0,0) is the constant node.
constexpr std::size_t parent_position(std::size_t pos) { return pos <= 1 ? 0 : pos / 2; }

std::string to_string(NodeId node);
/// Parses "l:k".
NodeId parse_node(std::string_view text);

/// Fixed-size bit set over node positions.
class NodeSet {
 public:
  NodeSet() = default;
  explicit NodeSet(std::size_t positions)
      : words_((positions + 63) / 64, 0), size_(positions) {}

  std::size_t size() const { return size_; }
  bool test(std::size_t pos) const { return (words_[pos >> 6] >> (pos & 63)) & 1U; }
  void set(std::size_t pos) { words_[pos >> 6] |= std::uint64_t{1} << (pos & 63); }
  void reset(std::size_t pos) { words_[pos >> 6] &= ~(std::uint64_t{1} << (pos & 63)); }
  void flip(std::size_t pos) { words_[pos >> 6] ^= std::uint64_t{1} << (pos & 63); }

  std::size_t count() const;
  /// Number of set positions in [lo, hi).
  std::size_t count_range(std::size_t lo, std::size_t hi) const;
  /// Position of the r-th (0-based) unset position in [lo, hi).
  std::size_t nth_unset_in_range(std::size_t lo, std::size_t hi, std::size_t r) const;
  std::size_t hamming(const NodeSet& other) const;
  /// True when every position set here is also set in `other`.
  bool subset_of(const NodeSet& other) const;

  /// Visits set positions in increasing order.
  template <class F>
  void for_each(F&& f) const {
    for (std::size_t w = 0; w < words_.size(); ++w) {
      std::uint64_t bits = words_[w];
      while (bits != 0) {
        const int b = std::countr_zero(bits);
        f(w * 64 + static_cast<std::size_t>(b));
        bits &= bits - 1;
      }
    }
  }

  std::span<const std::uint64_t> words() const { return words_; }
  std::uint64_t low_word() const { return words_.empty() ? 0 : words_[0]; }

  friend bool operator==(const NodeSet&, const NodeSet&) = default;

 private:
  std::vector<std::uint64_t> words_;
  std::size_t size_ = 0;
};

/// The node chain on the ancestral path from `top` down to `bottom`.
struct Twig {
  NodeId top;
  NodeId bottom;

  std::size_t length() const { return static_cast<std::size_t>(bottom.level - top.level + 1); }
  /// Node positions from bottom up to top.
  std::vector<std::size_t> positions() const;
};

/// An ancestry-closed set of internal nodes with internal levels < depth cap
/// L. The constant node (-1,0) is always internal and its single child is
/// (0,0), so the null tree is internal {(-1,0)} with external {(0,0)} and
/// |T_ext| = |T_int| for every tree.
///
/// Storage is a bit indicator over the 2^L positions 0 .. 2^L - 1.
class DyadicTree {
 public:
  /// The null tree of depth cap L.
  explicit DyadicTree(int depth_cap);

  static DyadicTree full(int depth_cap);
  /// Builds from internal nodes (the constant node may be omitted); throws
  /// when the set is not ancestry closed or exceeds the cap.
  static DyadicTree from_nodes(int depth_cap, std::span<const NodeId> internal);
  /// Wraps a node set without validation (hot paths and enumeration).
  static DyadicTree from_set_unchecked(int depth_cap, NodeSet nodes);
  /// Parses the canonical encoding produced by encode().
  static DyadicTree decode(int depth_cap, std::string_view text);

  int depth_cap() const { return depth_cap_; }
  std::size_t capacity() const { return std::size_t{1} << depth_cap_; }
  const NodeSet& nodes() const { return nodes_; }
  NodeSet& mutable_nodes() { return nodes_; }

  bool internal(NodeId node) const;
  bool internal_at(std::size_t pos) const { return pos < capacity() && nodes_.test(pos); }
  std::size_t internal_count() const { return nodes_.count(); }
  std::size_t external_count() const { return internal_count(); }
  bool is_null() const { return internal_count() == 1; }
  bool is_full() const { return internal_count() == capacity(); }

  std::vector<NodeId> internal_nodes() const;
  std::vector<NodeId> external_nodes() const;
  /// Internal nodes (excluding the constant) whose children are both external.
  std::vector<NodeId> preterminals() const;
  /// Internal nodes of level >= 0 whose internal descendants form a chain.
  std::vector<NodeId> twig_prunable() const;

  /// Tree edits; each returns a new tree and throws on a violated precondition.
  DyadicTree grow(NodeId node) const;
  DyadicTree prune(NodeId node) const;
  std::pair<DyadicTree, Twig> grow_twig(NodeId target) const;
  std::pair<DyadicTree, Twig> prune_twig(NodeId node) const;

  /// Internal ancestors of `node` inside the tree, including `node`.
  std::vector<NodeId> ancestors(NodeId node) const;
  /// Internal descendants of `node`, including `node`.
  std::vector<NodeId> descendants(NodeId node) const;

  /// Hamming distance of the 2^L-bit indicator encodings over levels 0..L-1.
  std::size_t hamming(const DyadicTree& other) const;

  /// Canonical text form: space-separated "l:k" internal nodes in position order.
  std::string encode() const;
  /// Throws with a description when an invariant fails.
  void validate() const;
  bool valid() const;

  /// Position bits as an integer; depth cap must be at most 5.
  std::uint32_t mask() const;
  static DyadicTree from_mask(int depth_cap, std::uint32_t mask);

  friend bool operator==(const DyadicTree&, const DyadicTree&) = default;

 private:
  DyadicTree(int depth_cap, NodeSet nodes) : depth_cap_(depth_cap), nodes_(std::move(nodes)) {}

  int depth_cap_;
  NodeSet nodes_;
};

/// Children of `node` under depth cap L: (0,0) for the constant node, else
/// (l+1,2k) and (l+1,2k+1). Throws when node.level >= L.
std::vector<NodeId> children(NodeId node, int depth_cap);

/// All trees of depth cap L <= 5 ordered by (size, mask).
std::vector<DyadicTree> enumerate_trees(int depth_cap);
/// t(L) = 1 + t(L-1)^2 with t(0) = 1.
std::uint64_t tree_count(int depth_cap);

namespace tree_ops {

// In-place edits over raw node sets, shared by the samplers and the oracle.
// All take the depth cap L and assume the preconditions hold.

inline bool internal(const NodeSet& s, int cap, std::size_t pos) {
  return pos < (std::size_t{1} << cap) && s.test(pos);
}

/// Growable external nodes (external with level < L), ascending positions.
void growable(const NodeSet& s, int cap, std::vector<std::size_t>& out);
std::size_t growable_count(const NodeSet& s, int cap);
/// Pre-terminal positions >= 1.
void preterminals(const NodeSet& s, int cap, std::vector<std::size_t>& out);
std::size_t preterminal_count(const NodeSet& s, int cap);
/// Twig-prunable positions.
void twig_prunable(const NodeSet& s, int cap, std::vector<std::size_t>& out);
std::size_t twig_prunable_count(const NodeSet& s, int cap);
bool is_twig_prunable(const NodeSet& s, int cap, std::size_t pos);

/// Top of the twig that grow_twig(target) adds: the external ancestor-or-self.
std::size_t twig_top(const NodeSet& s, std::size_t target);
/// Bottom of the chain hanging below a twig-prunable node.
std::size_t chain_bottom(const NodeSet& s, int cap, std::size_t top);

/// Sets (or clears) every position on the path bottom -> top.
void set_path(NodeSet& s, std::size_t top, std::size_t bottom);
void clear_path(NodeSet& s, std::size_t top, std::size_t bottom);

}  // namespace tree_ops

}  // namespace dyadcart
