#pragma once

#include <cstdint>
#include <memory>
#include <string_view>
#include <vector>

#include "dyadcart/posterior.hpp"
#include "dyadcart/rng.hpp"
#include "dyadcart/tree.hpp"

namespace dyadcart {

enum class KernelKind { grow_prune, twiggy, informed_grow_prune, informed_twiggy, spike_slab };

inline constexpr KernelKind kAllKernels[] = {KernelKind::grow_prune, KernelKind::twiggy,
                                             KernelKind::informed_grow_prune,
                                             KernelKind::informed_twiggy, KernelKind::spike_slab};

/// Short code used on the command line and in output paths: bc, tw, ibc, itw, ss.
std::string_view kernel_code(KernelKind kind);
std::string_view kernel_name(KernelKind kind);
/// Accepts the short code or the long name.
KernelKind parse_kernel(std::string_view text);
constexpr bool is_tree_kernel(KernelKind kind) { return kind != KernelKind::spike_slab; }

struct KernelSpec {
  KernelKind kind = KernelKind::grow_prune;
  bool lazy = false;  // hold with probability 1/2 before proposing
};

enum class EditType : std::uint8_t { grow, prune, flip };

/// A proposal edit on a node set. grow/prune add/remove every position on the
/// ancestral path top..bottom (a single node when top == bottom); flip toggles
/// position `top` of a spike-and-slab inclusion set.
struct Edit {
  EditType type = EditType::grow;
  std::uint32_t top = 0;
  std::uint32_t bottom = 0;

  friend bool operator==(const Edit&, const Edit&) = default;
};

Edit inverse(const Edit& e);
void apply_edit(NodeSet& s, const Edit& e);

struct Proposal {
  Edit edit;
  double log_forward = 0.0;  // log S(current -> candidate)
};

/// A Metropolis-Hastings proposal kernel over tree (or inclusion) states.
///
/// Instances keep scratch buffers and are not safe for concurrent use; make
/// one per worker. The engine is shared read-only.
class Kernel {
 public:
  explicit Kernel(const PosteriorEngine& engine) : engine_(&engine) {}
  virtual ~Kernel() = default;

  virtual KernelKind kind() const = 0;
  const PosteriorEngine& engine() const { return *engine_; }
  int depth_cap() const { return engine_->depth_cap(); }

  /// Draws one proposal from state s.
  virtual Proposal sample(const NodeSet& s, Rng& rng) = 0;
  /// Every proposal with positive probability from s (distinct candidates).
  virtual void moves(const NodeSet& s, std::vector<Proposal>& out) = 0;
  /// log S(s -> apply(s, e)); -inf when the kernel cannot propose e.
  virtual double log_proposal(const NodeSet& s, const Edit& e) = 0;
  /// Reverse proposal probability given the post-edit state `after`.
  virtual double log_reverse(const NodeSet& after, const Edit& e) {
    return log_proposal(after, inverse(e));
  }

  /// Log target ratio pi(apply(s,e)) / pi(s).
  double log_ratio(const NodeSet& s, const Edit& e) const;
  /// Unnormalized log target of a state.
  double log_target(const NodeSet& s) const;
  /// T_null for tree kernels, the constant-only set for spike-and-slab.
  NodeSet null_state() const;

 protected:
  const PosteriorEngine* engine_;
};

std::unique_ptr<Kernel> make_kernel(KernelKind kind, const PosteriorEngine& engine);

/// log of the MH transition probability carried by a proposal whose target
/// ratio and reverse probability are known: min(fwd, ratio + rev).
inline double log_transition(double log_fwd, double log_ratio, double log_rev) {
  const double b = log_ratio + log_rev;
  return b < log_fwd ? b : log_fwd;
}

struct ChainState {
  NodeSet state;
  double log_post = 0.0;
  std::uint64_t steps = 0;
  std::uint64_t accepted = 0;
  Rng rng;
};

struct StepOutcome {
  bool accepted = false;
  bool held = false;  // lazy hold; no proposal drawn
};

/// One Metropolis-Hastings step; edits the state in place and reverts on
/// rejection, updating the cached log target incrementally.
StepOutcome mh_step(Kernel& kernel, ChainState& chain, bool lazy);

}  // namespace dyadcart
