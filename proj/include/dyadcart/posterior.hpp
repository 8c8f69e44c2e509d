#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "dyadcart/haar.hpp"
#include "dyadcart/tree.hpp"

namespace dyadcart {

/// Named per-level inclusion schedules for the spike-and-slab baseline.
enum class SlabPrior {
  same_as_tree,   // p_l = split probability
  geometric6,     // 0.01 n^(1/4) 6^(-l)
  geometric6_half,  // 0.01 n^(1/4) 6^(-l/2)
  constant001,    // 0.01
  constant001_geometric6_half,  // 0.01 * 6^(-l/2)
};

struct ModelConfig {
  double c = 3.0;        // split probability exponent
  double alpha = 1.0;    // p = min(alpha * n^(-c), 0.499)
  int depth_cap = 0;     // L; 0 selects Lmax
  double twig_base = 2.0;  // D
  double informed_lower = 1.0;
  double informed_upper = std::exp(10.0);
  SlabPrior slab_prior = SlabPrior::same_as_tree;
  /// Explicit per-level slab probabilities; overrides slab_prior when set.
  std::vector<double> slab_level_probs;
};

inline constexpr double kMaxSplitProbability = 0.499;

/// Log posterior of trees (and of spike-and-slab inclusion sets) up to a
/// constant, under the Galton-Watson tree prior and the unit-information
/// g-prior with known unit noise variance.
///
/// Immutable after construction.
class PosteriorEngine {
 public:
  /// `stats` are the raw statistics; they are rescaled by 1/sigma first.
  PosteriorEngine(const SufficientStats& stats, const ModelConfig& config, double sigma = 1.0);

  const SufficientStats& stats() const { return stats_; }
  const ModelConfig& config() const { return config_; }
  int depth_cap() const { return depth_cap_; }
  std::size_t n() const { return stats_.n; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  double split_probability(int level) const;
  double slab_probability(int level) const;

  /// Score w^2 / (2(n+1)) of the column at `pos`.
  double score(std::size_t pos) const { return score_[pos]; }
  /// log(1+n) / 2.
  double dimension_penalty() const { return half_log1n_; }

  double log_prior(const DyadicTree& tree) const;
  double log_marginal(const DyadicTree& tree) const;
  double log_post(const DyadicTree& tree) const { return log_prior(tree) + log_marginal(tree); }

  /// Log marginal likelihood of an arbitrary active set containing the constant.
  double log_marginal_set(const NodeSet& active) const;
  /// Raw-set version of log_post for trees (no validation).
  double log_post_set(const NodeSet& tree_nodes) const;

  /// Log posterior ratio of adding the external node at `pos`.
  double grow_term(std::size_t pos) const { return grow_term_[pos]; }
  double log_ratio_grow(const DyadicTree& tree, NodeId node) const;
  /// Ratio adding the whole twig; equals the sum of single-node grow terms.
  double log_ratio_twig(const DyadicTree& tree, const Twig& twig) const;
  double twig_term(std::size_t top, std::size_t bottom) const;

  // Spike-and-slab: independent inclusion with per-level probability.
  double ss_log_prior(const NodeSet& active) const;
  double ss_log_post(const NodeSet& active) const {
    return ss_log_prior(active) + log_marginal_set(active);
  }
  /// Log ratio of flipping position `pos` (>= 1) in `active`.
  double ss_log_ratio(const NodeSet& active, std::size_t pos) const {
    return active.test(pos) ? -ss_flip_term_[pos] : ss_flip_term_[pos];
  }
  double ss_flip_term(std::size_t pos) const { return ss_flip_term_[pos]; }

 private:
  SufficientStats stats_;
  ModelConfig config_;
  int depth_cap_;
  std::vector<double> log_p_, log_q_;        // per level 0..L (level L: p = 0)
  std::vector<double> ss_log_p_, ss_log_q_;  // per level 0..L-1
  std::vector<double> score_;                // per position < n
  std::vector<double> grow_term_;            // per position < 2^L
  std::vector<double> ss_flip_term_;         // per position < 2^L
  double half_log1n_;
  double const_term_;
  std::vector<std::string> warnings_;
};

/// Per-level slab probabilities of a named schedule for sample size n.
std::vector<double> slab_schedule(SlabPrior prior, std::size_t n, int depth_cap,
                                  double split_probability);

}  // namespace dyadcart
