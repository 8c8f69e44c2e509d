#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "dyadcart/haar.hpp"
#include "dyadcart/posterior.hpp"
#include "dyadcart/rng.hpp"
#include "dyadcart/tree.hpp"

namespace testsupport {

using namespace dyadcart;

// Haar column written out from its definition, independent of haar.cpp.
inline double psi(int level, std::uint32_t k, std::size_t i, std::size_t n) {
  if (level < 0) return 1.0;
  const double x = static_cast<double>(i + 1) / static_cast<double>(n);
  const double width = 1.0 / static_cast<double>(1U << level);
  const double lo = k * width, mid = lo + width / 2, hi = lo + width;
  const double amp = std::sqrt(static_cast<double>(1U << level));
  if (x > lo && x <= mid) return amp;
  if (x > mid && x <= hi) return -amp;
  return 0.0;
}

inline std::vector<double> naive_inner_products(const std::vector<double>& y) {
  const std::size_t n = y.size();
  std::vector<double> w(n, 0.0);
  for (std::size_t pos = 0; pos < n; ++pos) {
    const NodeId node = node_at(pos);
    for (std::size_t i = 0; i < n; ++i) w[pos] += y[i] * psi(node.level, node.index, i, n);
  }
  return w;
}

inline std::vector<double> normals(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> y(n);
  for (auto& v : y) v = rng.normal();
  return y;
}

// Connected signal of height `depth` with every coefficient beta.
inline SignalSpec full_signal(int depth, double beta, std::uint64_t seed, double sd = 1.0) {
  SignalSpec s;
  for (int l = 0; l < depth; ++l) {
    for (std::uint32_t k = 0; k < (1U << l); ++k) s.coefficients.push_back({{l, k}, beta});
  }
  s.noise_sd = sd;
  s.seed = seed;
  return s;
}

inline PosteriorEngine engine_for(const std::vector<double>& y, ModelConfig cfg) {
  return PosteriorEngine(haar_inner_products(y, RegularDesign::from_n(y.size())), cfg);
}

inline ModelConfig model(int depth_cap, double c = 3.0, double alpha = 1.0) {
  ModelConfig m;
  m.depth_cap = depth_cap;
  m.c = c;
  m.alpha = alpha;
  return m;
}

}  // namespace testsupport
