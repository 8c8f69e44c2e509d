#include "doctest.h"

#include <Eigen/Dense>
#include <numbers>

#include "dyadcart/kernels.hpp"
#include "support.hpp"

using namespace dyadcart;
using testsupport::engine_for;
using testsupport::model;

namespace {

// log N(y; 0, I + n X (X'X)^-1 X') from the explicit projection matrix.
double dense_log_marginal(const std::vector<double>& y, const std::vector<std::size_t>& cols) {
  const auto n = static_cast<Eigen::Index>(y.size());
  Eigen::MatrixXd X(n, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    const NodeId node = node_at(cols[j]);
    for (Eigen::Index i = 0; i < n; ++i) {
      X(i, static_cast<Eigen::Index>(j)) =
          testsupport::psi(node.level, node.index, static_cast<std::size_t>(i), y.size());
    }
  }
  const Eigen::MatrixXd H = X * (X.transpose() * X).inverse() * X.transpose();
  const Eigen::MatrixXd C =
      Eigen::MatrixXd::Identity(n, n) + static_cast<double>(n) * H;
  const Eigen::LLT<Eigen::MatrixXd> llt(C);
  const Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
  const double quad = yv.dot(llt.solve(yv));
  double logdet = 0.0;
  const Eigen::MatrixXd Lm = llt.matrixL();
  for (Eigen::Index i = 0; i < n; ++i) logdet += 2.0 * std::log(Lm(i, i));
  return -0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi) - 0.5 * logdet - 0.5 * quad;
}

std::vector<std::size_t> internal_positions(const DyadicTree& t) {
  std::vector<std::size_t> out;
  t.nodes().for_each([&](std::size_t p) { out.push_back(p); });
  return out;
}

}  // namespace

TEST_CASE("posterior: log marginal equals the dense Gaussian evaluation") {
  const auto y = generate_dataset(testsupport::full_signal(2, 1.0, 21), RegularDesign::from_n(16));
  const auto engine = engine_for(y, model(3));
  for (const auto& t : enumerate_trees(3)) {
    CHECK(std::abs(engine.log_marginal(t) - dense_log_marginal(y, internal_positions(t))) < 1e-9);
  }
}

TEST_CASE("posterior: log marginal on zero data") {
  const std::vector<double> y(16, 0.0);
  const auto engine = engine_for(y, model(3));
  const std::vector<NodeId> nodes{{0, 0}, {1, 0}, {1, 1}};
  const auto t = DyadicTree::from_nodes(3, nodes);
  const double expect = -8.0 * std::log(2.0 * std::numbers::pi) - 2.0 * std::log(17.0);
  CHECK(engine.log_marginal(t) == doctest::Approx(expect).epsilon(1e-14));
  const auto g = DyadicTree(3).grow({0, 0});
  CHECK(engine.log_marginal(g) - engine.log_marginal(DyadicTree(3)) ==
        doctest::Approx(-0.5 * std::log(17.0)));
}

TEST_CASE("posterior: prior examples") {
  const std::vector<double> y(64, 0.0);
  ModelConfig cfg = model(3, 0.0, 0.2);
  const auto engine = engine_for(y, cfg);
  const double p = engine.split_probability(0);
  CHECK(p == doctest::Approx(0.2));
  CHECK(engine.log_prior(DyadicTree(3)) == doctest::Approx(std::log(1 - p)));
  double full = 0.0;
  for (int l = 0; l < 3; ++l) full += std::ldexp(1.0, l) * std::log(engine.split_probability(l));
  CHECK(engine.log_prior(DyadicTree::full(3)) == doctest::Approx(full));

  // ratio across a grow of (1,0) from the tree {(0,0)}
  const auto t = DyadicTree(3).grow({0, 0});
  const auto g = t.grow({1, 0});
  const double expect = std::log(p) - std::log(1 - p) + 2.0 * std::log(1 - p);
  CHECK(engine.log_prior(g) - engine.log_prior(t) == doctest::Approx(expect));
  CHECK(engine.log_ratio_grow(t, {1, 0}) ==
        doctest::Approx(expect - engine.dimension_penalty()));
}

TEST_CASE("posterior: split probability schedule") {
  const std::vector<double> y(256, 0.0);
  const auto e1 = engine_for(y, model(4, 3.0, 1.0));
  CHECK(e1.split_probability(0) == doctest::Approx(std::pow(256.0, -3.0)));
  const auto e2 = engine_for(y, model(4, 1.0, 32.0));
  CHECK(e2.split_probability(2) == doctest::Approx(0.125));
  CHECK(engine_for(y, model(4, 0.0, 3.0)).split_probability(0) == kMaxSplitProbability);
}

TEST_CASE("posterior: incremental ratios match full recomputation") {
  const auto y = generate_dataset(testsupport::full_signal(3, 2.0, 4), RegularDesign::from_n(512));
  const auto engine = engine_for(y, model(8, 1.0, 32.0));
  Rng rng(77);
  DyadicTree t(8);
  for (int rep = 0; rep < 10000; ++rep) {
    const double before = engine.log_post(t);
    const int move = static_cast<int>(rng.index(4));
    if (move == 0 || t.is_null()) {
      std::vector<NodeId> ext;
      for (const auto& e : t.external_nodes()) {
        if (e.level < 8) ext.push_back(e);
      }
      const auto node = ext[rng.index(ext.size())];
      const double r = engine.log_ratio_grow(t, node);
      t = t.grow(node);
      CHECK(std::abs(engine.log_post(t) - before - r) < 1e-9);
    } else if (move == 1) {
      const std::size_t pos = 1 + rng.index(255);
      if (t.internal_at(pos)) continue;
      const auto [g, twig] = t.grow_twig(node_at(pos));
      const double r = engine.log_ratio_twig(t, twig);
      double sum = 0.0;
      DyadicTree step = t;
      const auto path = twig.positions();
      for (auto it = path.rbegin(); it != path.rend(); ++it) {
        sum += engine.log_ratio_grow(step, node_at(*it));
        step = step.grow(node_at(*it));
      }
      CHECK(std::abs(r - sum) < 1e-9);
      t = g;
      CHECK(std::abs(engine.log_post(t) - before - r) < 1e-9);
    } else if (move == 2) {
      const auto pre = t.preterminals();
      const auto node = pre[rng.index(pre.size())];
      const auto p = t.prune(node);
      const double r = -engine.log_ratio_grow(p, node);
      t = p;
      CHECK(std::abs(engine.log_post(t) - before - r) < 1e-9);
    } else {
      const auto tp = t.twig_prunable();
      const auto [p, twig] = t.prune_twig(tp[rng.index(tp.size())]);
      const double r = -engine.log_ratio_twig(p, twig);
      t = p;
      CHECK(std::abs(engine.log_post(t) - before - r) < 1e-9);
    }
    CHECK(std::abs(engine.log_post_set(t.nodes()) - engine.log_post(t)) < 1e-9);
  }
}

TEST_CASE("posterior: spike-and-slab ratios") {
  const auto y = generate_dataset(testsupport::full_signal(2, 1.0, 6), RegularDesign::from_n(16));
  ModelConfig cfg = model(3);
  cfg.slab_prior = SlabPrior::geometric6;
  const auto engine = engine_for(y, cfg);
  NodeSet s(8);
  s.set(0);
  Rng rng(1);
  for (int rep = 0; rep < 500; ++rep) {
    const std::size_t pos = 1 + rng.index(7);
    const double before = engine.ss_log_post(s);
    const double r = engine.ss_log_ratio(s, pos);
    s.flip(pos);
    CHECK(std::abs(engine.ss_log_post(s) - before - r) < 1e-9);
    // same as a dense recompute of the subset likelihood
    std::vector<std::size_t> cols;
    s.for_each([&](std::size_t p) { cols.push_back(p); });
    CHECK(std::abs(engine.log_marginal_set(s) - dense_log_marginal(y, cols)) < 1e-9);
  }
  NodeSet t = s;
  t.flip(3);
  t.flip(3);
  CHECK(t == s);
  CHECK(engine.ss_log_ratio(s, 3) == -engine.ss_log_ratio([&] {
    NodeSet u = s;
    u.flip(3);
    return u;
  }(), 3));
}

TEST_CASE("posterior: slab schedules") {
  const std::size_t n = 512;
  const double base = 0.01 * std::pow(static_cast<double>(n), 0.25);
  const auto g6 = slab_schedule(SlabPrior::geometric6, n, 4, 0.1);
  CHECK(g6[0] == doctest::Approx(base));
  CHECK(g6[2] == doctest::Approx(base / 36.0));
  const auto half = slab_schedule(SlabPrior::geometric6_half, n, 4, 0.1);
  CHECK(half[2] == doctest::Approx(base / 6.0));
  CHECK(slab_schedule(SlabPrior::constant001, n, 4, 0.1)[3] == doctest::Approx(0.01));
  CHECK(slab_schedule(SlabPrior::same_as_tree, n, 4, 0.1)[1] == doctest::Approx(0.1));
}
