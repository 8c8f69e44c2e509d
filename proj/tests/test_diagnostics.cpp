#include "doctest.h"

#include <sstream>

#include "dyadcart/diagnostics.hpp"
#include "support.hpp"

using namespace dyadcart;

namespace {

NodeSet set_of(std::size_t size, std::initializer_list<std::size_t> pos) {
  NodeSet s(size);
  s.set(0);
  for (auto p : pos) s.set(p);
  return s;
}

// K chains, each a list of 0/1 values for position 1.
IndicatorPanel panel_of(const std::vector<std::vector<int>>& bits, std::uint64_t every = 100) {
  IndicatorPanel panel;
  for (const auto& chain : bits) {
    std::vector<NodeSet> rec;
    for (int b : chain) rec.push_back(b ? set_of(4, {1}) : set_of(4, {}));
    panel.chains.push_back(rec);
  }
  for (std::size_t i = 0; i < bits.front().size(); ++i) panel.steps.push_back((i + 1) * every);
  return panel;
}

// Textbook Gelman-Rubin ratio written out directly.
double reference_bgr(const std::vector<std::vector<double>>& x) {
  const double K = static_cast<double>(x.size()), m = static_cast<double>(x[0].size());
  std::vector<double> means;
  double grand = 0.0;
  for (const auto& c : x) {
    double s = 0.0;
    for (double v : c) s += v;
    means.push_back(s / m);
    grand += s / m / K;
  }
  double W = 0.0, B = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    for (double v : x[k]) W += (v - means[k]) * (v - means[k]) / (m - 1) / K;
    B += m * (means[k] - grand) * (means[k] - grand) / (K - 1);
  }
  return ((m - 1) / m * W + B / m) / W;
}

}  // namespace

TEST_CASE("diagnostics: identical constant chains give one") {
  const auto panel = panel_of({{1, 1, 1}, {1, 1, 1}, {1, 1, 1}});
  CHECK(local_bgr(panel, 1, 3, 3) == 1.0);
  CHECK(local_bgr(panel, 2, 3, 3) == 1.0);
}

TEST_CASE("diagnostics: frozen disagreement is infinite") {
  const auto panel = panel_of({{0, 0}, {1, 1}});
  CHECK(std::isinf(local_bgr(panel, 1, 2, 2)));
  const auto series = bgr_series(panel, {1}, 2);
  std::ostringstream out;
  write_bgr_csv(out, series);
  CHECK(out.str().find("1e+12") != std::string::npos);
  CHECK(bgr_alpha_time(panel, {1}, 1.1, 2, 1000000) == 1000000);
}

TEST_CASE("diagnostics: bgr statistic matches the textbook form") {
  Rng rng(10);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<std::vector<double>> x(4, std::vector<double>(30));
    for (auto& c : x) {
      for (auto& v : c) v = rng.normal() + 0.3 * static_cast<double>(rng.index(3));
    }
    CHECK(bgr_statistic(x) == doctest::Approx(reference_bgr(x)).epsilon(1e-12));
  }
}

TEST_CASE("diagnostics: Bernoulli calibration") {
  Rng rng(2024);
  int inside = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    std::vector<std::vector<int>> bits(10, std::vector<int>(100));
    for (auto& c : bits) {
      for (auto& b : c) b = rng.coin() ? 1 : 0;
    }
    const double r = local_bgr(panel_of(bits), 1, 100, 100);
    inside += r >= 0.9 && r <= 1.15;
  }
  CHECK(inside >= 950);
}

TEST_CASE("diagnostics: alpha time") {
  std::vector<std::vector<int>> bits(3, std::vector<int>(250));
  for (std::size_t i = 0; i < 250; ++i) {
    for (auto& c : bits) c[i] = (i % 3) == 0;
  }
  const auto panel = panel_of(bits);
  // first computable window ends at record 100
  CHECK(bgr_alpha_time(panel, {1, 2}, 1.1, 100, 1000000) == 100 * 100);
  CHECK_THROWS(local_bgr(panel, 1, 50, 100));
}

TEST_CASE("diagnostics: hitting times") {
  ChainTrace t;
  t.initial = set_of(8, {1});
  t.records.push_back({10, true, 0.0, set_of(8, {1, 2})});
  t.records.push_back({20, true, 0.0, set_of(8, {1, 2, 3})});
  t.records.push_back({30, true, 0.0, set_of(8, {1, 3})});
  CHECK(hitting_time(t, {1}, HitMode::contains) == 0);
  CHECK(hitting_time(t, {2}, HitMode::contains) == 10);
  CHECK(hitting_time(t, {1, 3}, HitMode::contains) == 20);
  CHECK(hitting_time(t, {1, 3}, HitMode::equals) == 30);
  CHECK(hitting_time(t, {7}, HitMode::contains) == kNotHit);
  for (std::vector<std::size_t> b : {std::vector<std::size_t>{1}, {2}, {1, 2}, {1, 3}}) {
    const auto c = hitting_time(t, b, HitMode::contains);
    const auto e = hitting_time(t, b, HitMode::equals);
    if (e != kNotHit) CHECK(e >= c);
  }
}

TEST_CASE("diagnostics: F1") {
  const std::vector<std::size_t> truth{1, 2, 3, 4};
  const auto perfect = f1_score({set_of(8, {1, 2, 3, 4})}, truth);
  CHECK(perfect.f1 == 1.0);
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  const auto none = f1_score({set_of(8, {})}, truth);
  CHECK(none.recall == 0.0);
  CHECK(none.f1 == 0.0);
  const auto mixed = f1_score({set_of(8, {1, 2, 5})}, truth);
  CHECK(mixed.precision == doctest::Approx(2.0 / 3.0));
  CHECK(mixed.recall == doctest::Approx(0.5));
  CHECK(mixed.f1 == doctest::Approx(4.0 / 7.0));
}

TEST_CASE("diagnostics: fitted values and MSE") {
  auto spec = testsupport::full_signal(2, 1.5, 4, 0.0);
  const auto design = RegularDesign::from_n(32);
  const auto y = generate_dataset(spec, design);
  const auto raw = haar_inner_products(y, design);
  const NodeSet truth = set_of(32, {1, 2, 3});
  CHECK(fit_mse(truth, raw) < 1e-20);

  spec.noise_sd = 1.0;
  const auto yn = generate_dataset(spec, design);
  const auto rawn = haar_inner_products(yn, design);
  const NodeSet null = set_of(32, {});
  double mean = 0.0, var = 0.0;
  for (double v : yn) mean += v / 32.0;
  for (double v : yn) var += (v - mean) * (v - mean) / 32.0;
  CHECK(fit_mse(null, rawn) == doctest::Approx(var).epsilon(1e-10));

  const NodeSet some = set_of(32, {1, 3, 6});
  const auto fit = fitted_values(some, rawn);
  for (std::size_t i = 0; i < 32; ++i) {
    double ref = 0.0;
    some.for_each([&](std::size_t p) {
      const NodeId node = node_at(p);
      ref += rawn.w[p] / 32.0 * testsupport::psi(node.level, node.index, i, 32);
    });
    CHECK(std::abs(fit[i] - ref) < 1e-10);
  }
  double mse = 0.0;
  for (std::size_t i = 0; i < 32; ++i) mse += (yn[i] - fit[i]) * (yn[i] - fit[i]) / 32.0;
  CHECK(fit_mse(some, rawn) == doctest::Approx(mse).epsilon(1e-10));
}

TEST_CASE("diagnostics: acceptance rate") {
  ChainTrace t;
  t.steps = 40;
  t.accepted = 10;
  CHECK(acceptance_rate(t) == 0.25);
}
