#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "dyadcart/kernels.hpp"

namespace dyadcart {

enum class InitMode {
  null_tree,     // T_null (constant-only inclusion set for spike-and-slab)
  random_grows,  // r ~ U{0..2^L/4} uniform random grows from T_null
  given,         // RunOptions::initial
};

struct RunOptions {
  KernelSpec kernel;
  int chains = 10;
  std::uint64_t steps = 10000;
  /// Record every this many steps (records at steps r, 2r, ...); 0 disables.
  std::uint64_t record_every = 100;
  std::uint64_t seed = 0;
  InitMode init = InitMode::null_tree;
  std::optional<NodeSet> initial;
  /// Signal positions whose hitting times are tracked at every step.
  std::vector<std::size_t> hit_target;
  /// Stop a chain once its state contains hit_target.
  bool stop_on_hit = false;
  /// Worker threads; 0 keeps the OpenMP default.
  int threads = 0;
};

inline constexpr std::int64_t kNotHit = -1;

struct TraceRecord {
  std::uint64_t step = 0;
  bool accepted = false;
  double log_post = 0.0;
  NodeSet state;
};

struct ChainTrace {
  int chain = 0;
  std::uint64_t seed = 0;
  NodeSet initial;
  double initial_log_post = 0.0;
  std::vector<TraceRecord> records;
  std::uint64_t steps = 0;
  std::uint64_t accepted = 0;
  std::uint64_t held = 0;
  std::int64_t hit_contains = kNotHit;  // steps until hit_target is contained
  std::int64_t hit_equals = kNotHit;    // steps until the state equals hit_target
  double final_log_post = 0.0;
  double fresh_log_post = 0.0;  // recomputed at the end, for drift checks
};

/// Runs independent replicas; chain c uses Rng(derive_seed(seed, c)), so the
/// output does not depend on the number of workers or their scheduling.
std::vector<ChainTrace> run_chains(const PosteriorEngine& engine, const RunOptions& options);

/// Random initial state of the given kernel family.
NodeSet random_initial_state(const Kernel& kernel, Rng& rng);

/// Writes `chain,step,accepted,log_post,tree` rows (with header when asked).
void write_trace_csv(std::ostream& out, const ChainTrace& trace, bool header = true);
std::string encode_state(const NodeSet& s);

}  // namespace dyadcart
