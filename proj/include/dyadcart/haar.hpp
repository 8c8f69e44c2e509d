#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "dyadcart/tree.hpp"

namespace dyadcart {

/// Regular design x_i = i/n, i = 1..n, with n = 2^(Lmax+1).
struct RegularDesign {
  std::size_t n = 0;
  int max_level = 0;  // Lmax

  static RegularDesign from_n(std::size_t n);
  static RegularDesign from_max_level(int max_level);

  double x(std::size_t i) const { return static_cast<double>(i + 1) / static_cast<double>(n); }
};

/// Haar basis function psi_lk (or the constant for level -1) at x in [0, 1].
/// Intervals are left-open: psi = 1 on (0, 1/2], -1 on (1/2, 1].
double haar_basis(NodeId node, double x);

/// Inner products of y with every column of the full Haar system
/// (levels -1 .. Lmax), indexed by position 2^l + k (constant at 0). Each
/// column has squared norm n.
struct SufficientStats {
  double yty = 0.0;
  std::vector<double> w;  // size n
  std::size_t n = 0;

  double coefficient(NodeId node) const { return w.at(position(node)); }
  /// Same statistics for the rescaled response y / sigma.
  SufficientStats scaled(double sigma) const;
  /// Relative Parseval defect |yty - sum w^2 / n| / max(yty, 1).
  double parseval_defect() const;
};

/// O(n) pyramid transform.
SufficientStats haar_inner_products(std::span<const double> y, const RegularDesign& design);

/// Evaluates sum_pos coeff[pos] * psi_pos(x_i) for i = 1..n in O(n);
/// `coeff` is indexed by position and may be shorter than n.
std::vector<double> haar_reconstruct(std::span<const double> coeff, const RegularDesign& design);

/// Signal f0 = sum beta_lk psi_lk plus optional Gaussian noise.
struct SignalSpec {
  std::vector<std::pair<NodeId, double>> coefficients;
  double noise_sd = 1.0;
  std::uint64_t seed = 0;

  std::vector<NodeId> support() const;
  double max_abs_coefficient() const;
};

std::vector<double> synthesize_signal(const SignalSpec& spec, const RegularDesign& design);
/// Y = F0 + sigma * eps with eps drawn from Rng(spec.seed).
std::vector<double> generate_dataset(const SignalSpec& spec, const RegularDesign& design);

/// Square-root transformed count data.
struct CountData {
  std::vector<std::int64_t> counts;
  std::vector<double> y;      // sqrt(N + 1/4)
  double sigma = 0.5;         // known noise level of the transformed data
};

inline constexpr std::size_t kCountSampleSize = 2048;

/// Reads exactly 2048 nonnegative integers, one per line (commas also accepted).
CountData ingest_counts(std::istream& in);

/// Dataset CSV with header `i,x,y`; i is 1-based.
void write_dataset_csv(std::ostream& out, std::span<const double> y);
std::vector<double> read_dataset_csv(std::istream& in);

}  // namespace dyadcart
