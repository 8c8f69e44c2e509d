#include "dyadcart/chains.hpp"

#include <cstdio>
#include <exception>
#include <ostream>
#include <string>

#include <omp.h>

#include "dyadcart/error.hpp"

namespace dyadcart {

namespace {

struct HitTracker {
  const std::vector<std::size_t>* target;
  std::size_t target_count;

  bool contains(const NodeSet& s) const {
    for (auto p : *target) {
      if (!s.test(p)) return false;
    }
    return true;
  }
  bool equals(const NodeSet& s) const {
    return s.count() == target_count + 1 && contains(s);
  }
};

void check_target(const std::vector<std::size_t>& target, std::size_t cap) {
  for (auto p : target) {
    if (p == 0 || p >= cap) {
      throw validation_error("hit target position " + std::to_string(p) +
                             " lies outside the tree capacity");
    }
  }
}

ChainTrace run_one(const PosteriorEngine& engine, const RunOptions& opt, int chain_index) {
  auto kernel = make_kernel(opt.kernel.kind, engine);
  ChainTrace trace;
  trace.chain = chain_index;
  trace.seed = derive_seed(opt.seed, static_cast<std::uint64_t>(chain_index));

  ChainState chain;
  chain.rng = Rng(trace.seed);
  switch (opt.init) {
    case InitMode::null_tree: chain.state = kernel->null_state(); break;
    case InitMode::random_grows: chain.state = random_initial_state(*kernel, chain.rng); break;
    case InitMode::given: chain.state = *opt.initial; break;
  }
  chain.log_post = kernel->log_target(chain.state);
  trace.initial = chain.state;
  trace.initial_log_post = chain.log_post;

  const bool track = !opt.hit_target.empty();
  const HitTracker hits{&opt.hit_target, opt.hit_target.size()};
  if (track) {
    if (hits.contains(chain.state)) trace.hit_contains = 0;
    if (hits.equals(chain.state)) trace.hit_equals = 0;
  }
  if (opt.record_every > 0) trace.records.reserve(opt.steps / opt.record_every);

  for (std::uint64_t t = 1; t <= opt.steps; ++t) {
    const auto out = mh_step(*kernel, chain, opt.kernel.lazy);
    if (out.held) ++trace.held;
    if (track && out.accepted) {
      const auto step = static_cast<std::int64_t>(t);
      if (trace.hit_contains == kNotHit && hits.contains(chain.state)) trace.hit_contains = step;
      if (trace.hit_equals == kNotHit && hits.equals(chain.state)) trace.hit_equals = step;
    }
    if (opt.record_every > 0 && t % opt.record_every == 0) {
      trace.records.push_back({t, out.accepted, chain.log_post, chain.state});
    }
    if (opt.stop_on_hit && trace.hit_contains != kNotHit) break;
  }
  trace.steps = chain.steps;
  trace.accepted = chain.accepted;
  trace.final_log_post = chain.log_post;
  trace.fresh_log_post = kernel->log_target(chain.state);
  return trace;
}

}  // namespace

NodeSet random_initial_state(const Kernel& kernel, Rng& rng) {
  const int L = kernel.depth_cap();
  const std::size_t cap = std::size_t{1} << L;
  NodeSet s = kernel.null_state();
  const std::size_t r = rng.index(cap / 4 + 1);
  if (is_tree_kernel(kernel.kind())) {
    std::vector<std::size_t> grow;
    for (std::size_t i = 0; i < r; ++i) {
      tree_ops::growable(s, L, grow);
      if (grow.empty()) break;
      s.set(grow[rng.index(grow.size())]);
    }
  } else {
    for (std::size_t i = 0; i < r; ++i) {
      const std::size_t inactive = (cap - 1) - s.count_range(1, cap);
      if (inactive == 0) break;
      s.set(s.nth_unset_in_range(1, cap, rng.index(inactive)));
    }
  }
  return s;
}

std::vector<ChainTrace> run_chains(const PosteriorEngine& engine, const RunOptions& opt) {
  if (opt.chains < 1) throw validation_error("at least one chain is required");
  const std::size_t cap = std::size_t{1} << engine.depth_cap();
  check_target(opt.hit_target, cap);
  if (opt.init == InitMode::given) {
    if (!opt.initial || opt.initial->size() != cap || !opt.initial->test(0)) {
      throw validation_error("given initial state does not match the depth cap");
    }
    if (is_tree_kernel(opt.kernel.kind)) {
      DyadicTree::from_set_unchecked(engine.depth_cap(), *opt.initial).validate();
    }
  }

  std::vector<ChainTrace> traces(static_cast<std::size_t>(opt.chains));
  std::exception_ptr failure;
  const int threads = opt.threads > 0 ? opt.threads : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (int c = 0; c < opt.chains; ++c) {
    try {
      traces[static_cast<std::size_t>(c)] = run_one(engine, opt, c);
    } catch (...) {
#pragma omp critical(dyadcart_chain_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return traces;
}

std::string encode_state(const NodeSet& s) {
  std::string out;
  s.for_each([&](std::size_t p) {
    if (!out.empty()) out.push_back(' ');
    out += to_string(node_at(p));
  });
  return out;
}

void write_trace_csv(std::ostream& out, const ChainTrace& trace, bool header) {
  if (header) out << "chain,step,accepted,log_post,tree\n";
  char buf[64];
  for (const auto& r : trace.records) {
    std::snprintf(buf, sizeof buf, "%.17g", r.log_post);
    out << trace.chain << ',' << r.step << ',' << (r.accepted ? 1 : 0) << ',' << buf << ','
        << encode_state(r.state) << '\n';
  }
  if (!out) throw io_error("failed writing trace for chain " + std::to_string(trace.chain));
}

}  // namespace dyadcart
