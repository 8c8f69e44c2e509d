#include "doctest.h"

#include <sstream>

#include "dyadcart/oracle.hpp"
#include "support.hpp"

using namespace dyadcart;
using testsupport::engine_for;
using testsupport::model;

namespace {

constexpr KernelKind kAll[] = {KernelKind::grow_prune, KernelKind::twiggy,
                               KernelKind::informed_grow_prune, KernelKind::informed_twiggy,
                               KernelKind::spike_slab};

PosteriorEngine case1_engine(int cap, std::size_t n, std::uint64_t seed = 1) {
  const auto y =
      generate_dataset(testsupport::full_signal(std::min(cap, 4), 2.0, seed), RegularDesign::from_n(n));
  return engine_for(y, model(cap, 1.0, 32.0));
}

NodeSet set_of(int cap, std::initializer_list<std::size_t> pos) {
  NodeSet s(std::size_t{1} << cap);
  s.set(0);
  for (auto p : pos) s.set(p);
  return s;
}

// Kernel whose reverse probabilities are off by a factor.
class SkewedReverse final : public Kernel {
 public:
  explicit SkewedReverse(const PosteriorEngine& e)
      : Kernel(e), inner_(make_kernel(KernelKind::grow_prune, e)) {}
  KernelKind kind() const override { return KernelKind::grow_prune; }
  Proposal sample(const NodeSet& s, Rng& rng) override { return inner_->sample(s, rng); }
  void moves(const NodeSet& s, std::vector<Proposal>& out) override { inner_->moves(s, out); }
  double log_proposal(const NodeSet& s, const Edit& e) override {
    return inner_->log_proposal(s, e);
  }
  double log_reverse(const NodeSet& after, const Edit& e) override {
    return inner_->log_reverse(after, e) + (e.type == EditType::grow ? std::log(3.0) : 0.0);
  }

 private:
  std::unique_ptr<Kernel> inner_;
};

std::vector<std::vector<double>> two_state(double p, double q) {
  return {{1 - p, p}, {q, 1 - q}};
}

}  // namespace

TEST_CASE("oracle: state spaces") {
  CHECK(StateSpace::trees(4).size() == 677);
  CHECK(StateSpace::subsets(3).size() == 128);
  const auto sp = StateSpace::trees(3);
  for (std::size_t i = 0; i < sp.size(); ++i) CHECK(sp.index(sp[i]) == i);
  CHECK_FALSE(sp.find(set_of(3, {2})).has_value());
}

TEST_CASE("oracle: two-state hand chain at depth one") {
  const auto engine = case1_engine(1, 16);
  const auto tm = build_transition_matrix(engine, {KernelKind::grow_prune, false});
  REQUIRE(tm.size() == 2);
  const std::size_t a = tm.space.index(set_of(1, {})), b = tm.space.index(set_of(1, {1}));
  // both moves are forced, so P(a -> b) = min(1, pi_b / pi_a)
  const double r = engine.grow_term(1);
  CHECK(tm.at(a, b) == doctest::Approx(std::min(1.0, std::exp(r))));
  CHECK(tm.at(b, a) == doctest::Approx(std::min(1.0, std::exp(-r))));
  CHECK(tm.max_row_sum_error() < 1e-15);
  CHECK(tm.pi[b] / tm.pi[a] == doctest::Approx(std::exp(r)));

  NodeSet star = set_of(1, {1});
  const auto ens = build_ensemble(tm, star, PathKind::classic);
  CHECK(ens.max_length == 1);
  const double q = tm.pi[a] * tm.at(a, b);
  CHECK(ens.congestion == doctest::Approx(2.0 * tm.pi[a] * tm.pi[b] / q));
  CHECK(brute_force_congestion(tm, ens) == doctest::Approx(ens.congestion));
}

TEST_CASE("oracle: closed-form two-state chain") {
  const double p = 0.3, q = 0.1;
  const auto tm = matrix_from_dense(two_state(p, q), {q / (p + q), p / (p + q)});
  CHECK(check_detailed_balance(tm).absolute < 1e-15);
  const auto sr = spectral_gap(tm);
  CHECK(sr.gap == doctest::Approx(p + q));
  const auto lazy = matrix_from_dense(
      {{1 - p / 2, p / 2}, {q / 2, 1 - q / 2}}, {q / (p + q), p / (p + q)});
  CHECK(spectral_gap(lazy).gap == doctest::Approx((p + q) / 2));

  const auto d = tv_curve(tm, 30, Execution::serial);
  for (std::size_t t = 0; t <= 30; ++t) {
    CHECK(std::abs(d[t] - std::max(p, q) / (p + q) * std::pow(1 - p - q, static_cast<double>(t))) <
          1e-9);
  }
  CHECK(tv_curve(tm, 30, Execution::parallel) == d);
  const auto from_pi = tv_curve_from(tm, tm.pi, 10);
  for (double v : from_pi) CHECK(v < 1e-15);

  CHECK(exact_conductance(tm) == doctest::Approx(std::max(p, q)));
  const auto sym = matrix_from_dense(two_state(0.2, 0.2), {0.5, 0.5});
  CHECK(exact_conductance(sym) == doctest::Approx(0.2));
  CHECK(tv_mixing_time(tm, 0.25) == 3);
}

TEST_CASE("oracle: identity chain has zero gap") {
  const auto tm = matrix_from_dense({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}, {0.2, 0.3, 0.5});
  CHECK(std::abs(spectral_gap(tm).gap) < 1e-12);
  CHECK_FALSE(is_irreducible(tm));
}

TEST_CASE("oracle: every kernel is reversible at depth two") {
  const auto engine = case1_engine(2, 16);
  for (auto kind : kAll) {
    for (bool lazy : {false, true}) {
      const auto tm = build_transition_matrix(engine, {kind, lazy});
      CHECK(tm.max_row_sum_error() < 1e-12);
      CHECK(check_detailed_balance(tm).relative < 1e-10);
      CHECK(is_irreducible(tm));
    }
  }
}

TEST_CASE("oracle: corrupted reverse probabilities break balance") {
  const auto engine = engine_for(std::vector<double>(16, 0.0), model(2, 0.0, 0.3));
  const KernelFactory factory = [](const PosteriorEngine& e) -> std::unique_ptr<Kernel> {
    return std::make_unique<SkewedReverse>(e);
  };
  const auto tm = build_transition_matrix(engine, {KernelKind::grow_prune, false}, factory,
                                          Execution::serial);
  CHECK(check_detailed_balance(tm).absolute > 1e-3);
}

TEST_CASE("oracle: serial and parallel matrices agree") {
  const auto engine = case1_engine(3, 32);
  for (auto kind : kAll) {
    const auto s = build_transition_matrix(engine, {kind, true}, Execution::serial);
    const auto p = build_transition_matrix(engine, {kind, true}, Execution::parallel);
    CHECK(s.col == p.col);
    CHECK(s.val == p.val);
    CHECK(s.pi == p.pi);
  }
}

TEST_CASE("oracle: Lanczos agrees with the dense solver") {
  const auto engine = case1_engine(4, 64);
  for (auto kind : {KernelKind::grow_prune, KernelKind::informed_twiggy}) {
    const auto tm = build_transition_matrix(engine, {kind, true});
    const auto dense = spectral_gap(tm);
    const auto lan = spectral_gap_lanczos(tm);
    CHECK_FALSE(dense.sparse);
    CHECK(lan.sparse);
    CHECK(lan.gap == doctest::Approx(dense.gap).epsilon(1e-6));
  }
}

TEST_CASE("oracle: Cheeger sandwich and bottleneck sets") {
  const auto engine = case1_engine(2, 16);
  for (auto kind : kAll) {
    const auto tm = build_transition_matrix(engine, {kind, true});
    const double gap = spectral_gap(tm).gap;
    const double phi = exact_conductance(tm);
    CHECK(phi * phi / 2 <= gap * (1 + 1e-9));
    CHECK(gap <= 2 * phi * (1 + 1e-9));
    if (is_tree_kernel(kind)) {
      for (std::size_t pos = 1; pos < 4; ++pos) {
        CHECK(bottleneck_ratio(tm, states_without(tm, pos)) >= phi * (1 - 1e-12));
      }
    }
  }
}

TEST_CASE("oracle: classic canonical path by hand") {
  const int L = 3;
  const NodeSet star = set_of(L, {1, 2, 3});
  NodeSet t = set_of(L, {});
  std::vector<NodeSet> path{t};
  while (!(t == star)) {
    t = canonical_transition(t, star, L, PathKind::classic);
    path.push_back(t);
  }
  REQUIRE(path.size() == 4);
  CHECK(path[1] == set_of(L, {1}));
  CHECK(path[2] == set_of(L, {1, 3}));
  CHECK(path[3] == star);
  // one redundant node is removed
  CHECK(canonical_transition(set_of(L, {1, 2, 3, 6}), star, L, PathKind::classic) == star);
}

TEST_CASE("oracle: twiggy canonical path reaches a chain in one step") {
  const int L = 3;
  const NodeSet star = set_of(L, {1, 2, 4});
  CHECK(canonical_transition(set_of(L, {}), star, L, PathKind::twiggy) == star);
  CHECK(canonical_transition(set_of(L, {1, 2, 4, 3, 7}), star, L, PathKind::twiggy) == star);
}

TEST_CASE("oracle: congestion agrees with pair enumeration") {
  for (int L : {2, 3}) {
    const auto engine = case1_engine(L, 32, 5);
    const NodeSet star = set_of(L, {1});
    for (auto kind : {KernelKind::grow_prune, KernelKind::twiggy, KernelKind::informed_grow_prune,
                      KernelKind::informed_twiggy}) {
      const bool twig = kind == KernelKind::twiggy || kind == KernelKind::informed_twiggy;
      const auto tm = build_transition_matrix(engine, {kind, true});
      const auto ens = build_ensemble(tm, star, twig ? PathKind::twiggy : PathKind::classic);
      std::size_t len = 0;
      CHECK(brute_force_congestion(tm, ens, &len) == doctest::Approx(ens.congestion).epsilon(1e-9));
      CHECK(len == ens.max_length);
      CHECK(static_cast<double>(ens.max_length) <= std::ldexp(1.0, L + 1));
      CHECK(spectral_gap(tm).gap >= 1.0 / (ens.max_length * ens.congestion) * (1 - 1e-9));
    }
  }
}

TEST_CASE("oracle: path length bound at depth four") {
  const auto engine = case1_engine(4, 64);
  const NodeSet star = spanning_tree(4, {{3, 0}});
  const auto tm = build_transition_matrix(engine, {KernelKind::grow_prune, true});
  CHECK(build_ensemble(tm, star, PathKind::classic).max_length <= 32);
  const auto tw = build_transition_matrix(engine, {KernelKind::twiggy, true});
  CHECK(build_ensemble(tw, star, PathKind::twiggy).max_length <= 32);
}

TEST_CASE("oracle: drift functions") {
  const auto engine = case1_engine(3, 64);
  const NodeSet star = set_of(3, {1, 2, 3});
  const auto tm = build_transition_matrix(engine, {KernelKind::informed_grow_prune, true});
  const auto dr = drift_report(tm, engine, star);
  const double expect = std::exp(1.0 - static_cast<double>(star.count()) / 8.0);
  const std::size_t si = tm.space.index(star);
  CHECK(dr.v2[si] == doctest::Approx(1.0));
  for (std::size_t i = 0; i < tm.size(); ++i) {
    if (!star.subset_of(tm.space[i])) CHECK(dr.v2[i] == doctest::Approx(expect));
    if (star.subset_of(tm.space[i])) CHECK(dr.v2[i] >= 1.0);
  }
  CHECK(dr.underfit + dr.overfit + 1 == tm.size());
}

TEST_CASE("oracle: report") {
  const auto engine = case1_engine(2, 16);
  OracleOptions opt;
  opt.t_star = set_of(2, {1, 2, 3});
  for (auto kind : kAll) {
    const auto rep = run_oracle(engine, {kind, true}, opt);
    CHECK_FALSE(rep.failed());
    const auto j = to_json(rep);
    CHECK(j["status"] == "ok");
  }
  std::ostringstream out;
  write_matrix_csv(out, build_transition_matrix(engine, {KernelKind::grow_prune, true}));
  CHECK(out.str().rfind("i,j,p\n", 0) == 0);
}
