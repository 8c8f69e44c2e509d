#include "doctest.h"

#include <algorithm>
#include <set>

#include "dyadcart/rng.hpp"
#include "dyadcart/tree.hpp"

using namespace dyadcart;

namespace {

std::set<std::size_t> positions_of(const std::vector<NodeId>& nodes) {
  std::set<std::size_t> out;
  for (const auto& n : nodes) out.insert(position(n));
  return out;
}

DyadicTree random_tree(int cap, Rng& rng, int grows) {
  DyadicTree t(cap);
  for (int g = 0; g < grows; ++g) {
    std::vector<NodeId> ext;
    for (const auto& e : t.external_nodes()) {
      if (e.level < cap) ext.push_back(e);
    }
    if (ext.empty()) break;
    t = t.grow(ext[rng.index(ext.size())]);
  }
  return t;
}

}  // namespace

TEST_CASE("tree: children") {
  CHECK(children({-1, 0}, 3) == std::vector<NodeId>{{0, 0}});
  CHECK(children({0, 0}, 3) == std::vector<NodeId>{{1, 0}, {1, 1}});
  CHECK(children({2, 3}, 4) == std::vector<NodeId>{{3, 6}, {3, 7}});
  CHECK_THROWS(children({3, 0}, 3));
}

TEST_CASE("tree: positions") {
  for (std::size_t p = 0; p < 64; ++p) CHECK(position(node_at(p)) == p);
  CHECK(parse_node("2:3") == NodeId{2, 3});
  CHECK(to_string(NodeId{2, 3}) == "2:3");
}

TEST_CASE("tree: null and full trees") {
  const DyadicTree null(3);
  CHECK(null.internal_count() == 1);
  CHECK(positions_of(null.external_nodes()) == std::set<std::size_t>{1});
  const auto full = DyadicTree::full(2);
  CHECK(full.internal_count() == 4);
  CHECK(full.external_count() == 4);
  CHECK(full.preterminals() == std::vector<NodeId>{{1, 0}, {1, 1}});
}

TEST_CASE("tree: ancestors and descendants") {
  const auto full = DyadicTree::full(2);
  CHECK(positions_of(full.ancestors({1, 1})) == std::set<std::size_t>{0, 1, 3});
  CHECK(positions_of(DyadicTree(2).ancestors({-1, 0})) == std::set<std::size_t>{0});
  CHECK(positions_of(full.descendants({0, 0})) == std::set<std::size_t>{1, 2, 3});

  Rng rng(11);
  for (int rep = 0; rep < 100; ++rep) {
    const auto t = random_tree(4, rng, 1 + static_cast<int>(rng.index(12)));
    for (const auto& node : t.internal_nodes()) {
      std::set<std::size_t> walk;
      for (std::size_t p = position(node);; p = parent_position(p)) {
        walk.insert(p);
        if (p == 0) break;
      }
      CHECK(positions_of(t.ancestors(node)) == walk);
    }
  }
}

TEST_CASE("tree: grow and prune") {
  const DyadicTree null(3);
  const auto g = null.grow({0, 0});
  CHECK(positions_of(g.internal_nodes()) == std::set<std::size_t>{0, 1});
  CHECK(positions_of(g.external_nodes()) == std::set<std::size_t>{2, 3});
  CHECK(g.hamming(null) == 1);
  CHECK(g.prune({0, 0}) == null);
  CHECK_THROWS(null.prune({-1, 0}));
  CHECK_THROWS(null.grow({1, 0}));

  const auto pruned = DyadicTree::full(2).prune({1, 0});
  const std::vector<NodeId> expected{{0, 0}, {1, 1}};
  CHECK(pruned == DyadicTree::from_nodes(2, expected));

  Rng rng(3);
  for (int rep = 0; rep < 200; ++rep) {
    const auto t = random_tree(4, rng, static_cast<int>(rng.index(10)));
    for (const auto& e : t.external_nodes()) {
      if (e.level >= 4) continue;
      const auto grown = t.grow(e);
      CHECK(grown.external_count() == t.external_count() + 1);
      CHECK(grown.prune(e) == t);
    }
  }
}

TEST_CASE("tree: twig grow") {
  const DyadicTree null(3);
  const auto [t, twig] = null.grow_twig({2, 3});
  CHECK(positions_of(t.internal_nodes()) == std::set<std::size_t>{0, 1, 3, 7});
  CHECK(twig.length() == 3);
  CHECK(t.valid());
  const auto [t1, twig1] = null.grow_twig({0, 0});
  CHECK(t1 == null.grow({0, 0}));
  CHECK(twig1.length() == 1);
}

TEST_CASE("tree: twig prunable nodes") {
  const auto one = DyadicTree(3).grow({0, 0});
  CHECK(one.twig_prunable() == std::vector<NodeId>{{0, 0}});
  CHECK(DyadicTree::full(2).twig_prunable() == std::vector<NodeId>{{1, 0}, {1, 1}});

  Rng rng(5);
  for (int rep = 0; rep < 300; ++rep) {
    const auto t = random_tree(4, rng, 1 + static_cast<int>(rng.index(14)));
    const auto tp = t.twig_prunable();
    // brute force: descendants of x form a single chain
    std::vector<NodeId> brute;
    for (const auto& x : t.internal_nodes()) {
      if (x.level < 0) continue;
      bool chain = true;
      for (const auto& d : t.descendants(x)) {
        if (d.level < 4 - 1 && t.internal({d.level + 1, 2 * d.index}) &&
            t.internal({d.level + 1, 2 * d.index + 1})) {
          chain = false;
        }
      }
      if (chain) brute.push_back(x);
    }
    CHECK(tp == brute);
    CHECK(tp.size() >= t.preterminals().size());
    CHECK(tp.size() <= t.internal_count() - 1);
  }
}

TEST_CASE("tree: twig grow then prune is the identity") {
  Rng rng(8);
  int done = 0;
  while (done < 1000) {
    const auto t = random_tree(5, rng, static_cast<int>(rng.index(10)));
    const std::size_t pos = 1 + rng.index(31);
    if (t.internal_at(pos)) continue;
    const auto [grown, twig] = t.grow_twig(node_at(pos));
    REQUIRE(grown.valid());
    const auto [back, twig2] = grown.prune_twig(twig.top);
    CHECK(back == t);
    CHECK(twig2.top == twig.top);
    CHECK(twig2.bottom == twig.bottom);
    ++done;
  }
}

TEST_CASE("tree: single chain prune_twig equals prune") {
  const auto t = DyadicTree(3).grow({0, 0}).grow({1, 1});
  CHECK(t.prune_twig({1, 1}).first == t.prune({1, 1}));
}

TEST_CASE("tree: hamming") {
  Rng rng(2);
  for (int rep = 0; rep < 100; ++rep) {
    const auto a = random_tree(4, rng, static_cast<int>(rng.index(12)));
    const auto b = random_tree(4, rng, static_cast<int>(rng.index(12)));
    CHECK(a.hamming(a) == 0);
    std::size_t diff = 0;
    for (std::size_t p = 0; p < 16; ++p) diff += a.internal_at(p) != b.internal_at(p);
    CHECK(a.hamming(b) == diff);
    CHECK(b.hamming(a) == diff);
  }
}

TEST_CASE("tree: enumeration") {
  CHECK(tree_count(0) == 1);
  CHECK(tree_count(1) == 2);
  CHECK(tree_count(2) == 5);
  CHECK(tree_count(3) == 26);
  CHECK(tree_count(4) == 677);
  for (int cap = 1; cap <= 4; ++cap) {
    const auto all = enumerate_trees(cap);
    CHECK(all.size() == tree_count(cap));
    std::set<std::uint32_t> masks;
    for (const auto& t : all) {
      CHECK(t.valid());
      masks.insert(t.mask());
    }
    CHECK(masks.size() == all.size());
  }
}

TEST_CASE("tree: encode and validate") {
  const auto t = DyadicTree(3).grow_twig({2, 1}).first;
  CHECK(DyadicTree::decode(3, t.encode()) == t);
  const std::vector<NodeId> orphan{{1, 0}};
  CHECK_THROWS(DyadicTree::from_nodes(3, orphan));
  const std::vector<NodeId> deep{{0, 0}, {1, 0}, {2, 0}, {3, 0}};
  CHECK_THROWS(DyadicTree::from_nodes(3, deep));
}
