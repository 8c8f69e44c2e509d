#include "dyadcart/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dyadcart/error.hpp"

namespace dyadcart {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLogHalf = std::log(0.5);

double log_sum_exp(const std::vector<double>& lw) {
  if (lw.empty()) return kNegInf;
  const double m = *std::max_element(lw.begin(), lw.end());
  double s = 0.0;
  for (double v : lw) s += std::exp(v - m);
  return m + std::log(s);
}

/// Index drawn with probability proportional to exp(lw[i]).
std::size_t draw_log_weighted(const std::vector<double>& lw, double log_z, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < lw.size(); ++i) {
    acc += std::exp(lw[i] - log_z);
    if (u < acc) return i;
  }
  return lw.size() - 1;
}

/// log Gamma(T): probability of the grow branch given which branches exist.
double log_grow_branch(bool can_grow, bool can_prune) {
  if (can_grow && can_prune) return kLogHalf;
  return can_grow ? 0.0 : kNegInf;
}
double log_prune_branch(bool can_grow, bool can_prune) {
  if (can_grow && can_prune) return kLogHalf;
  return can_prune ? 0.0 : kNegInf;
}

bool choose_grow(bool can_grow, bool can_prune, Rng& rng) {
  if (can_grow && can_prune) return rng.coin();
  return can_grow;
}

std::size_t cap_of(int depth_cap) { return std::size_t{1} << depth_cap; }

bool is_single_growable(const NodeSet& s, int L, std::size_t p) {
  return p >= 1 && p < cap_of(L) && !s.test(p) && s.test(parent_position(p));
}

bool is_preterminal(const NodeSet& s, int L, std::size_t p) {
  if (p == 0 || p >= cap_of(L) || !s.test(p)) return false;
  return !tree_ops::internal(s, L, 2 * p) && !tree_ops::internal(s, L, 2 * p + 1);
}

// ------------------------------------------------------------ grow / prune

class GrowPruneKernel final : public Kernel {
 public:
  using Kernel::Kernel;
  KernelKind kind() const override { return KernelKind::grow_prune; }

  Proposal sample(const NodeSet& s, Rng& rng) override {
    const int L = depth_cap();
    tree_ops::growable(s, L, grow_);
    tree_ops::preterminals(s, L, prune_);
    const bool g = !grow_.empty(), p = !prune_.empty();
    if (choose_grow(g, p, rng)) {
      const auto pos = static_cast<std::uint32_t>(grow_[rng.index(grow_.size())]);
      return {Edit{EditType::grow, pos, pos},
              log_grow_branch(g, p) - std::log(static_cast<double>(grow_.size()))};
    }
    const auto pos = static_cast<std::uint32_t>(prune_[rng.index(prune_.size())]);
    return {Edit{EditType::prune, pos, pos},
            log_prune_branch(g, p) - std::log(static_cast<double>(prune_.size()))};
  }

  void moves(const NodeSet& s, std::vector<Proposal>& out) override {
    out.clear();
    const int L = depth_cap();
    tree_ops::growable(s, L, grow_);
    tree_ops::preterminals(s, L, prune_);
    const bool g = !grow_.empty(), p = !prune_.empty();
    const double lg = log_grow_branch(g, p) - std::log(static_cast<double>(grow_.size()));
    const double lp = log_prune_branch(g, p) - std::log(static_cast<double>(prune_.size()));
    for (auto pos : grow_) {
      const auto q = static_cast<std::uint32_t>(pos);
      out.push_back({Edit{EditType::grow, q, q}, lg});
    }
    for (auto pos : prune_) {
      const auto q = static_cast<std::uint32_t>(pos);
      out.push_back({Edit{EditType::prune, q, q}, lp});
    }
  }

  double log_proposal(const NodeSet& s, const Edit& e) override {
    const int L = depth_cap();
    if (e.top != e.bottom) return kNegInf;
    const std::size_t G = tree_ops::growable_count(s, L);
    const std::size_t P = tree_ops::preterminal_count(s, L);
    if (e.type == EditType::grow) {
      if (!is_single_growable(s, L, e.top)) return kNegInf;
      return log_grow_branch(G > 0, P > 0) - std::log(static_cast<double>(G));
    }
    if (e.type == EditType::prune) {
      if (!is_preterminal(s, L, e.top)) return kNegInf;
      return log_prune_branch(G > 0, P > 0) - std::log(static_cast<double>(P));
    }
    return kNegInf;
  }

 private:
  std::vector<std::size_t> grow_, prune_;
};

// ------------------------------------------------------------------ twiggy

class TwiggyKernel final : public Kernel {
 public:
  explicit TwiggyKernel(const PosteriorEngine& engine) : Kernel(engine) {
    const int L = depth_cap();
    const double log_d = std::log(engine.config().twig_base);
    layer_log_weight_.resize(static_cast<std::size_t>(L));
    for (int l = 0; l < L; ++l) layer_log_weight_[static_cast<std::size_t>(l)] = -l * log_d;
    missing_.resize(static_cast<std::size_t>(L));
  }
  KernelKind kind() const override { return KernelKind::twiggy; }

  Proposal sample(const NodeSet& s, Rng& rng) override {
    const int L = depth_cap();
    const double log_z = layers(s);
    const bool g = log_z > kNegInf;
    tree_ops::twig_prunable(s, L, prune_);
    const bool p = !prune_.empty();
    if (choose_grow(g, p, rng)) {
      // layer with probability proportional to D^-l among eligible layers
      const double u = rng.uniform();
      double acc = 0.0;
      int layer = -1;
      for (int l = 0; l < L; ++l) {
        const auto li = static_cast<std::size_t>(l);
        if (missing_[li] == 0) continue;
        layer = l;
        acc += std::exp(layer_log_weight_[li] - log_z);
        if (u < acc) break;
      }
      const auto li = static_cast<std::size_t>(layer);
      const std::size_t lo = std::size_t{1} << layer;
      const std::size_t b = s.nth_unset_in_range(lo, 2 * lo, rng.index(missing_[li]));
      const auto top = tree_ops::twig_top(s, b);
      return {Edit{EditType::grow, static_cast<std::uint32_t>(top), static_cast<std::uint32_t>(b)},
              log_grow_branch(g, p) + layer_log_weight_[li] - log_z -
                  std::log(static_cast<double>(missing_[li]))};
    }
    const std::size_t top = prune_[rng.index(prune_.size())];
    const std::size_t b = tree_ops::chain_bottom(s, L, top);
    return {Edit{EditType::prune, static_cast<std::uint32_t>(top), static_cast<std::uint32_t>(b)},
            log_prune_branch(g, p) - std::log(static_cast<double>(prune_.size()))};
  }

  void moves(const NodeSet& s, std::vector<Proposal>& out) override {
    out.clear();
    const int L = depth_cap();
    const double log_z = layers(s);
    const bool g = log_z > kNegInf;
    tree_ops::twig_prunable(s, L, prune_);
    const bool p = !prune_.empty();
    const std::size_t cap = cap_of(L);
    for (std::size_t b = 1; b < cap; ++b) {
      if (s.test(b)) continue;
      const auto li = static_cast<std::size_t>(level_of(b));
      const double lf = log_grow_branch(g, p) + layer_log_weight_[li] - log_z -
                        std::log(static_cast<double>(missing_[li]));
      out.push_back({Edit{EditType::grow, static_cast<std::uint32_t>(tree_ops::twig_top(s, b)),
                          static_cast<std::uint32_t>(b)},
                     lf});
    }
    const double lp = log_prune_branch(g, p) - std::log(static_cast<double>(prune_.size()));
    for (auto top : prune_) {
      out.push_back({Edit{EditType::prune, static_cast<std::uint32_t>(top),
                          static_cast<std::uint32_t>(tree_ops::chain_bottom(s, L, top))},
                     lp});
    }
  }

  double log_proposal(const NodeSet& s, const Edit& e) override {
    const int L = depth_cap();
    const double log_z = layers(s);
    const bool g = log_z > kNegInf;
    const std::size_t P = tree_ops::twig_prunable_count(s, L);
    const bool p = P > 0;
    if (e.type == EditType::grow) {
      if (e.bottom == 0 || e.bottom >= cap_of(L) || s.test(e.bottom) ||
          tree_ops::twig_top(s, e.bottom) != e.top) {
        return kNegInf;
      }
      const auto li = static_cast<std::size_t>(level_of(e.bottom));
      return log_grow_branch(g, p) + layer_log_weight_[li] - log_z -
             std::log(static_cast<double>(missing_[li]));
    }
    if (e.type == EditType::prune) {
      if (!tree_ops::is_twig_prunable(s, L, e.top) ||
          tree_ops::chain_bottom(s, L, e.top) != e.bottom) {
        return kNegInf;
      }
      return log_prune_branch(g, p) - std::log(static_cast<double>(P));
    }
    return kNegInf;
  }

 private:
  /// Fills missing_ with |K_l| per layer and returns log sum_{l in E} D^-l.
  double layers(const NodeSet& s) {
    const int L = depth_cap();
    double z = 0.0;
    for (int l = 0; l < L; ++l) {
      const std::size_t lo = std::size_t{1} << l;
      const auto li = static_cast<std::size_t>(l);
      missing_[li] = lo - s.count_range(lo, 2 * lo);
      if (missing_[li] > 0) z += std::exp(layer_log_weight_[li]);
    }
    return z > 0.0 ? std::log(z) : kNegInf;
  }

  std::vector<double> layer_log_weight_;
  std::vector<std::size_t> missing_;
  std::vector<std::size_t> prune_;
};

// ---------------------------------------------------------------- informed

/// Locally informed thresholded proposals. With twig neighborhoods every
/// non-internal node is a grow target and every twig-prunable node a prune
/// target; otherwise neighborhoods are single-node grows and prunes.
class InformedKernel final : public Kernel {
 public:
  InformedKernel(const PosteriorEngine& engine, bool twig) : Kernel(engine), twig_(twig) {
    log_upper_ = std::log(engine.config().informed_upper);
    log_lower_ = std::log(engine.config().informed_lower);
    acc_.assign(cap_of(depth_cap()), 0.0);
  }
  KernelKind kind() const override {
    return twig_ ? KernelKind::informed_twiggy : KernelKind::informed_grow_prune;
  }

  Proposal sample(const NodeSet& s, Rng& rng) override {
    neighborhoods(s);
    const bool g = !grow_.empty(), p = !prune_.empty();
    if (choose_grow(g, p, rng)) {
      const std::size_t i = draw_log_weighted(grow_w_, grow_z_, rng);
      return {grow_[i], log_grow_branch(g, p) + grow_w_[i] - grow_z_};
    }
    const std::size_t i = draw_log_weighted(prune_w_, prune_z_, rng);
    return {prune_[i], log_prune_branch(g, p) + prune_w_[i] - prune_z_};
  }

  void moves(const NodeSet& s, std::vector<Proposal>& out) override {
    out.clear();
    neighborhoods(s);
    const bool g = !grow_.empty(), p = !prune_.empty();
    for (std::size_t i = 0; i < grow_.size(); ++i) {
      out.push_back({grow_[i], log_grow_branch(g, p) + grow_w_[i] - grow_z_});
    }
    for (std::size_t i = 0; i < prune_.size(); ++i) {
      out.push_back({prune_[i], log_prune_branch(g, p) + prune_w_[i] - prune_z_});
    }
  }

  double log_proposal(const NodeSet& s, const Edit& e) override {
    neighborhoods(s);
    const bool g = !grow_.empty(), p = !prune_.empty();
    const auto& list = e.type == EditType::grow ? grow_ : prune_;
    const auto& w = e.type == EditType::grow ? grow_w_ : prune_w_;
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (list[i] == e) {
        return e.type == EditType::grow ? log_grow_branch(g, p) + w[i] - grow_z_
                                        : log_prune_branch(g, p) + w[i] - prune_z_;
      }
    }
    return kNegInf;
  }

 private:
  double grow_weight(double log_ratio) const { return std::min(log_ratio, log_upper_); }
  double prune_weight(double log_ratio) const {
    return std::clamp(log_ratio, log_lower_, log_upper_);
  }

  void neighborhoods(const NodeSet& s) {
    const int L = depth_cap();
    const auto& eng = engine();
    grow_.clear();
    grow_w_.clear();
    prune_.clear();
    prune_w_.clear();
    if (twig_) {
      // top-down accumulation of grow terms along each missing chain
      const std::size_t cap = cap_of(L);
      for (std::size_t b = 1; b < cap; ++b) {
        if (s.test(b)) continue;
        const std::size_t par = parent_position(b);
        acc_[b] = eng.grow_term(b) + (s.test(par) ? 0.0 : acc_[par]);
        std::size_t top = b;
        while (!s.test(parent_position(top))) top = parent_position(top);
        grow_.push_back({EditType::grow, static_cast<std::uint32_t>(top),
                         static_cast<std::uint32_t>(b)});
        grow_w_.push_back(grow_weight(acc_[b]));
      }
      tree_ops::twig_prunable(s, L, scratch_);
      for (auto top : scratch_) {
        const auto b = tree_ops::chain_bottom(s, L, top);
        prune_.push_back({EditType::prune, static_cast<std::uint32_t>(top),
                          static_cast<std::uint32_t>(b)});
        prune_w_.push_back(prune_weight(-eng.twig_term(top, b)));
      }
    } else {
      tree_ops::growable(s, L, scratch_);
      for (auto pos : scratch_) {
        const auto q = static_cast<std::uint32_t>(pos);
        grow_.push_back({EditType::grow, q, q});
        grow_w_.push_back(grow_weight(eng.grow_term(pos)));
      }
      tree_ops::preterminals(s, L, scratch_);
      for (auto pos : scratch_) {
        const auto q = static_cast<std::uint32_t>(pos);
        prune_.push_back({EditType::prune, q, q});
        prune_w_.push_back(prune_weight(-eng.grow_term(pos)));
      }
    }
    grow_z_ = log_sum_exp(grow_w_);
    prune_z_ = log_sum_exp(prune_w_);
  }

  bool twig_;
  double log_upper_, log_lower_;
  std::vector<double> acc_;
  std::vector<std::size_t> scratch_;
  std::vector<Edit> grow_, prune_;
  std::vector<double> grow_w_, prune_w_;
  double grow_z_ = kNegInf, prune_z_ = kNegInf;
};

// ----------------------------------------------------------- spike-and-slab

class SpikeSlabKernel final : public Kernel {
 public:
  using Kernel::Kernel;
  KernelKind kind() const override { return KernelKind::spike_slab; }

  Proposal sample(const NodeSet&, Rng& rng) override {
    const std::size_t m = cap_of(depth_cap()) - 1;
    const auto pos = static_cast<std::uint32_t>(1 + rng.index(m));
    return {Edit{EditType::flip, pos, pos}, -std::log(static_cast<double>(m))};
  }

  void moves(const NodeSet&, std::vector<Proposal>& out) override {
    out.clear();
    const std::size_t cap = cap_of(depth_cap());
    const double lf = -std::log(static_cast<double>(cap - 1));
    for (std::size_t p = 1; p < cap; ++p) {
      const auto q = static_cast<std::uint32_t>(p);
      out.push_back({Edit{EditType::flip, q, q}, lf});
    }
  }

  double log_proposal(const NodeSet&, const Edit& e) override {
    const std::size_t cap = cap_of(depth_cap());
    if (e.type != EditType::flip || e.top == 0 || e.top >= cap) return kNegInf;
    return -std::log(static_cast<double>(cap - 1));
  }
};

}  // namespace

std::string_view kernel_code(KernelKind kind) {
  switch (kind) {
    case KernelKind::grow_prune: return "bc";
    case KernelKind::twiggy: return "tw";
    case KernelKind::informed_grow_prune: return "ibc";
    case KernelKind::informed_twiggy: return "itw";
    case KernelKind::spike_slab: return "ss";
  }
  return "?";
}

std::string_view kernel_name(KernelKind kind) {
  switch (kind) {
    case KernelKind::grow_prune: return "grow_prune";
    case KernelKind::twiggy: return "twiggy";
    case KernelKind::informed_grow_prune: return "informed_grow_prune";
    case KernelKind::informed_twiggy: return "informed_twiggy";
    case KernelKind::spike_slab: return "spike_slab";
  }
  return "?";
}

KernelKind parse_kernel(std::string_view text) {
  for (auto k : kAllKernels) {
    if (text == kernel_code(k) || text == kernel_name(k)) return k;
  }
  throw validation_error("unknown kernel '" + std::string(text) +
                         "' (expected bc, tw, ibc, itw or ss)");
}

Edit inverse(const Edit& e) {
  Edit out = e;
  if (e.type == EditType::grow) out.type = EditType::prune;
  else if (e.type == EditType::prune) out.type = EditType::grow;
  return out;
}

void apply_edit(NodeSet& s, const Edit& e) {
  switch (e.type) {
    case EditType::grow: tree_ops::set_path(s, e.top, e.bottom); break;
    case EditType::prune: tree_ops::clear_path(s, e.top, e.bottom); break;
    case EditType::flip: s.flip(e.top); break;
  }
}

double Kernel::log_ratio(const NodeSet& s, const Edit& e) const {
  switch (e.type) {
    case EditType::grow: return engine_->twig_term(e.top, e.bottom);
    case EditType::prune: return -engine_->twig_term(e.top, e.bottom);
    case EditType::flip: return engine_->ss_log_ratio(s, e.top);
  }
  return kNegInf;
}

double Kernel::log_target(const NodeSet& s) const {
  return kind() == KernelKind::spike_slab ? engine_->ss_log_post(s) : engine_->log_post_set(s);
}

NodeSet Kernel::null_state() const {
  NodeSet s(cap_of(depth_cap()));
  s.set(0);
  return s;
}

std::unique_ptr<Kernel> make_kernel(KernelKind kind, const PosteriorEngine& engine) {
  switch (kind) {
    case KernelKind::grow_prune: return std::make_unique<GrowPruneKernel>(engine);
    case KernelKind::twiggy: return std::make_unique<TwiggyKernel>(engine);
    case KernelKind::informed_grow_prune: return std::make_unique<InformedKernel>(engine, false);
    case KernelKind::informed_twiggy: return std::make_unique<InformedKernel>(engine, true);
    case KernelKind::spike_slab: return std::make_unique<SpikeSlabKernel>(engine);
  }
  throw validation_error("unknown kernel kind");
}

StepOutcome mh_step(Kernel& kernel, ChainState& chain, bool lazy) {
  ++chain.steps;
  if (lazy && chain.rng.coin()) return {false, true};
  const Proposal pr = kernel.sample(chain.state, chain.rng);
  const double lr = kernel.log_ratio(chain.state, pr.edit);
  apply_edit(chain.state, pr.edit);
  const double rev = kernel.log_reverse(chain.state, pr.edit);
  const double a = lr + rev - pr.log_forward;
  const bool accept = a >= 0.0 || chain.rng.uniform() < std::exp(a);
  if (accept) {
    chain.log_post += lr;
    ++chain.accepted;
  } else {
    apply_edit(chain.state, inverse(pr.edit));
  }
  return {accept, false};
}

}  // namespace dyadcart
