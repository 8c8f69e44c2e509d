#include "dyadcart/posterior.hpp"

#include <algorithm>
#include <numbers>

#include "dyadcart/error.hpp"

namespace dyadcart {

std::vector<double> slab_schedule(SlabPrior prior, std::size_t n, int depth_cap,
                                  double split_probability) {
  std::vector<double> out(static_cast<std::size_t>(depth_cap));
  const double n4 = std::pow(static_cast<double>(n), 0.25);
  for (int l = 0; l < depth_cap; ++l) {
    double p = split_probability;
    switch (prior) {
      case SlabPrior::same_as_tree: p = split_probability; break;
      case SlabPrior::geometric6: p = 0.01 * n4 * std::pow(6.0, -l); break;
      case SlabPrior::geometric6_half: p = 0.01 * n4 * std::pow(6.0, -0.5 * l); break;
      case SlabPrior::constant001: p = 0.01; break;
      case SlabPrior::constant001_geometric6_half: p = 0.01 * std::pow(6.0, -0.5 * l); break;
    }
    out[static_cast<std::size_t>(l)] = p;
  }
  return out;
}

PosteriorEngine::PosteriorEngine(const SufficientStats& stats, const ModelConfig& config,
                                 double sigma)
    : stats_(stats.scaled(sigma)), config_(config) {
  const auto design = RegularDesign::from_n(stats_.n);
  depth_cap_ = config.depth_cap == 0 ? design.max_level : config.depth_cap;
  if (depth_cap_ < 1 || depth_cap_ > design.max_level) {
    throw validation_error("depth cap L=" + std::to_string(depth_cap_) + " must lie in [1, Lmax=" +
                           std::to_string(design.max_level) + "]");
  }
  if (!(config.twig_base > 1.0)) throw validation_error("twig layer base D must exceed 1");
  if (!(config.informed_lower >= 1.0) || !(config.informed_upper >= config.informed_lower)) {
    throw validation_error("informed thresholds need 1 <= lower <= upper");
  }
  if (config.c <= 2.5) {
    warnings_.push_back("split exponent c=" + std::to_string(config.c) +
                        " is at most 5/2; consistency guarantees need c > 5/2");
  }

  const double nd = static_cast<double>(stats_.n);
  double p = config.alpha * std::pow(nd, -config.c);
  if (!(p > 0.0)) throw validation_error("split probability must be positive");
  if (p > kMaxSplitProbability) {
    warnings_.push_back("split probability " + std::to_string(p) + " clipped to 0.499");
    p = kMaxSplitProbability;
  }
  const auto L = static_cast<std::size_t>(depth_cap_);
  log_p_.assign(L + 1, std::log(p));
  log_q_.assign(L + 1, std::log1p(-p));
  log_p_[L] = -std::numeric_limits<double>::infinity();
  log_q_[L] = 0.0;

  auto slab = config.slab_level_probs.empty()
                  ? slab_schedule(config.slab_prior, stats_.n, depth_cap_, p)
                  : config.slab_level_probs;
  if (slab.size() < L) throw validation_error("slab probabilities must cover every level < L");
  ss_log_p_.resize(L);
  ss_log_q_.resize(L);
  for (std::size_t l = 0; l < L; ++l) {
    double s = slab[l];
    if (!(s > 0.0) || !(s < 1.0)) throw validation_error("slab probabilities must lie in (0,1)");
    if (s > kMaxSplitProbability) {
      warnings_.push_back("slab probability at level " + std::to_string(l) + " clipped to 0.499");
      s = kMaxSplitProbability;
    }
    ss_log_p_[l] = std::log(s);
    ss_log_q_[l] = std::log1p(-s);
  }

  half_log1n_ = 0.5 * std::log1p(nd);
  const_term_ = -0.5 * nd * std::log(2.0 * std::numbers::pi) - 0.5 * stats_.yty;
  score_.resize(stats_.n);
  for (std::size_t pos = 0; pos < stats_.n; ++pos) {
    score_[pos] = stats_.w[pos] * stats_.w[pos] / (2.0 * (nd + 1.0));
  }
  const std::size_t cap = std::size_t{1} << depth_cap_;
  grow_term_.assign(cap, 0.0);
  ss_flip_term_.assign(cap, 0.0);
  for (std::size_t pos = 1; pos < cap; ++pos) {
    const auto l = static_cast<std::size_t>(level_of(pos));
    grow_term_[pos] = log_p_[l] - log_q_[l] + 2.0 * log_q_[l + 1] - half_log1n_ + score_[pos];
    ss_flip_term_[pos] = ss_log_p_[l] - ss_log_q_[l] - half_log1n_ + score_[pos];
  }
}

double PosteriorEngine::split_probability(int level) const {
  if (level < 0) return 1.0;
  if (level >= depth_cap_) return 0.0;
  return std::exp(log_p_[static_cast<std::size_t>(level)]);
}

double PosteriorEngine::slab_probability(int level) const {
  return std::exp(ss_log_p_.at(static_cast<std::size_t>(level)));
}

double PosteriorEngine::log_prior(const DyadicTree& tree) const {
  if (tree.depth_cap() != depth_cap_) throw validation_error("tree depth cap mismatch");
  tree.validate();
  double lp = 0.0;
  const auto& s = tree.nodes();
  s.for_each([&](std::size_t pos) {
    if (pos == 0) {
      if (!tree.internal_at(1)) lp += log_q_[0];
      return;
    }
    const auto l = static_cast<std::size_t>(level_of(pos));
    lp += log_p_[l];
    for (std::size_t c = 2 * pos; c <= 2 * pos + 1; ++c) {
      if (!tree.internal_at(c)) lp += log_q_[l + 1];
    }
  });
  return lp;
}

double PosteriorEngine::log_marginal_set(const NodeSet& active) const {
  double lm = const_term_;
  active.for_each([&](std::size_t pos) { lm += score_[pos] - half_log1n_; });
  return lm;
}

double PosteriorEngine::log_marginal(const DyadicTree& tree) const {
  if (tree.depth_cap() != depth_cap_) throw validation_error("tree depth cap mismatch");
  tree.validate();
  return log_marginal_set(tree.nodes());
}

double PosteriorEngine::log_post_set(const NodeSet& s) const {
  const std::size_t cap = std::size_t{1} << depth_cap_;
  double lp = const_term_;
  s.for_each([&](std::size_t pos) {
    lp += score_[pos] - half_log1n_;
    if (pos == 0) {
      if (!s.test(1)) lp += log_q_[0];
      return;
    }
    const auto l = static_cast<std::size_t>(level_of(pos));
    lp += log_p_[l];
    for (std::size_t c = 2 * pos; c <= 2 * pos + 1; ++c) {
      if (c >= cap || !s.test(c)) lp += log_q_[l + 1];
    }
  });
  return lp;
}

double PosteriorEngine::log_ratio_grow(const DyadicTree& tree, NodeId node) const {
  const std::size_t pos = position(node);
  if (node.level < 0 || node.level >= depth_cap_ || tree.internal_at(pos) ||
      !tree.internal_at(parent_position(pos))) {
    throw validation_error("log_ratio_grow: " + to_string(node) + " is not a growable node");
  }
  return grow_term_[pos];
}

double PosteriorEngine::twig_term(std::size_t top, std::size_t bottom) const {
  double r = 0.0;
  for (std::size_t p = bottom;; p = parent_position(p)) {
    r += grow_term_[p];
    if (p == top) break;
  }
  return r;
}

double PosteriorEngine::log_ratio_twig(const DyadicTree& tree, const Twig& twig) const {
  const std::size_t top = position(twig.top);
  const std::size_t bottom = position(twig.bottom);
  if (twig.top.level < 0 || twig.bottom.level >= depth_cap_ || tree.internal_at(top) ||
      !tree.internal_at(parent_position(top))) {
    throw validation_error("log_ratio_twig: twig does not start at an external node");
  }
  for (std::size_t p = bottom; p != top; p = parent_position(p)) {
    if (p <= 1 || tree.internal_at(p)) {
      throw validation_error("log_ratio_twig: twig is not an ancestral chain of new nodes");
    }
  }
  return twig_term(top, bottom);
}

double PosteriorEngine::ss_log_prior(const NodeSet& active) const {
  const std::size_t cap = std::size_t{1} << depth_cap_;
  double lp = 0.0;
  for (std::size_t pos = 1; pos < cap; ++pos) {
    const auto l = static_cast<std::size_t>(level_of(pos));
    lp += active.test(pos) ? ss_log_p_[l] : ss_log_q_[l];
  }
  return lp;
}

}  // namespace dyadcart
