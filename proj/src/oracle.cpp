#include "dyadcart/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <numeric>
#include <ostream>

#include <Eigen/Dense>
#include <omp.h>

#include "dyadcart/chains.hpp"
#include "dyadcart/error.hpp"

namespace dyadcart {

namespace {

std::uint32_t key_of(const NodeSet& s) { return static_cast<std::uint32_t>(s.low_word()); }

double log_sum_exp(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

// ------------------------------------------------------------- state space

StateSpace StateSpace::trees(int depth_cap) {
  if (depth_cap < 1 || depth_cap > 5) {
    throw validation_error("exact tree enumeration needs 1 <= L <= 5, got L=" +
                           std::to_string(depth_cap));
  }
  StateSpace sp;
  sp.depth_cap_ = depth_cap;
  for (auto& t : enumerate_trees(depth_cap)) sp.states_.push_back(t.nodes());
  for (std::size_t i = 0; i < sp.states_.size(); ++i) {
    sp.lookup_.emplace(key_of(sp.states_[i]), static_cast<std::uint32_t>(i));
  }
  return sp;
}

StateSpace StateSpace::subsets(int depth_cap) {
  if (depth_cap < 1 || depth_cap > 4) {
    throw validation_error("exact inclusion-set enumeration needs 1 <= L <= 4, got L=" +
                           std::to_string(depth_cap));
  }
  StateSpace sp;
  sp.depth_cap_ = depth_cap;
  const std::size_t cap = std::size_t{1} << depth_cap;
  const std::uint32_t count = std::uint32_t{1} << (cap - 1);
  for (std::uint32_t x = 0; x < count; ++x) {
    NodeSet s(cap);
    const std::uint32_t mask = (x << 1) | 1U;
    for (std::size_t p = 0; p < cap; ++p) {
      if ((mask >> p) & 1U) s.set(p);
    }
    sp.lookup_.emplace(mask, static_cast<std::uint32_t>(sp.states_.size()));
    sp.states_.push_back(std::move(s));
  }
  return sp;
}

StateSpace StateSpace::for_kernel(KernelKind kind, int depth_cap) {
  return is_tree_kernel(kind) ? trees(depth_cap) : subsets(depth_cap);
}

std::optional<std::size_t> StateSpace::find(const NodeSet& s) const {
  const auto it = lookup_.find(key_of(s));
  if (it == lookup_.end() || s.size() != (std::size_t{1} << depth_cap_)) return std::nullopt;
  return it->second;
}

std::size_t StateSpace::index(const NodeSet& s) const {
  auto i = find(s);
  if (!i) throw validation_error("state '" + encode_state(s) + "' is not in the state space");
  return *i;
}

// -------------------------------------------------------- transition matrix

double TransitionMatrix::at(std::size_t i, std::size_t j) const {
  const auto b = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[i]);
  const auto e = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[i + 1]);
  const auto it = std::lower_bound(b, e, static_cast<std::uint32_t>(j));
  if (it == e || *it != j) return 0.0;
  return val[static_cast<std::size_t>(it - col.begin())];
}

void TransitionMatrix::left_multiply(const std::vector<double>& x, std::vector<double>& y) const {
  y.assign(size(), 0.0);
  for (std::size_t i = 0; i < size(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) y[col[k]] += xi * val[k];
  }
}

double TransitionMatrix::max_row_sum_error() const {
  double err = 0.0;
  for (std::size_t i = 0; i < size(); ++i) {
    double s = 0.0;
    for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += val[k];
    err = std::max(err, std::abs(s - 1.0));
  }
  return err;
}

namespace {

using Row = std::vector<std::pair<std::uint32_t, double>>;

void build_row(Kernel& kernel, const StateSpace& space, std::size_t i, bool lazy,
               std::vector<Proposal>& moves, Row& row) {
  row.clear();
  const NodeSet& s = space[i];
  kernel.moves(s, moves);
  NodeSet t = s;
  double off = 0.0;
  for (const auto& m : moves) {
    const double lr = kernel.log_ratio(s, m.edit);
    apply_edit(t, m.edit);
    const double rev = kernel.log_reverse(t, m.edit);
    const auto j = space.index(t);
    apply_edit(t, inverse(m.edit));
    double p = std::exp(log_transition(m.log_forward, lr, rev));
    if (lazy) p *= 0.5;
    if (j == i || p == 0.0) continue;
    row.emplace_back(static_cast<std::uint32_t>(j), p);
    off += p;
  }
  row.emplace_back(static_cast<std::uint32_t>(i), std::max(0.0, 1.0 - off));
  std::sort(row.begin(), row.end());
  // merge duplicate targets
  std::size_t w = 0;
  for (std::size_t r = 0; r < row.size(); ++r) {
    if (w > 0 && row[w - 1].first == row[r].first) {
      row[w - 1].second += row[r].second;
    } else {
      row[w++] = row[r];
    }
  }
  row.resize(w);
}

}  // namespace

TransitionMatrix build_transition_matrix(const PosteriorEngine& engine, const KernelSpec& spec,
                                         Execution exec) {
  return build_transition_matrix(
      engine, spec, [&](const PosteriorEngine& e) { return make_kernel(spec.kind, e); }, exec);
}

TransitionMatrix build_transition_matrix(const PosteriorEngine& engine, const KernelSpec& spec,
                                         const KernelFactory& factory, Execution exec) {
  TransitionMatrix tm;
  tm.kind = spec.kind;
  tm.lazy = spec.lazy;
  tm.space = StateSpace::for_kernel(spec.kind, engine.depth_cap());
  const std::size_t n = tm.space.size();
  if (n > kMaxOracleStates) throw validation_error("state space too large for the oracle");

  std::vector<Row> rows(n);
  std::vector<double> log_target(n);
  std::exception_ptr failure;
  const int threads = exec == Execution::parallel ? omp_get_max_threads() : 1;
#pragma omp parallel num_threads(threads)
  {
    std::unique_ptr<Kernel> kernel;
    try {
      kernel = factory(engine);
    } catch (...) {
#pragma omp critical(dyadcart_oracle_failure)
      if (!failure) failure = std::current_exception();
    }
    std::vector<Proposal> moves;
#pragma omp for schedule(dynamic, 64)
    for (std::size_t i = 0; i < n; ++i) {
      if (!kernel) continue;
      try {
        build_row(*kernel, tm.space, i, spec.lazy, moves, rows[i]);
        log_target[i] = kernel->log_target(tm.space[i]);
      } catch (...) {
#pragma omp critical(dyadcart_oracle_failure)
        if (!failure) failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);

  tm.row_ptr.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) tm.row_ptr[i + 1] = tm.row_ptr[i] + rows[i].size();
  tm.col.resize(tm.row_ptr[n]);
  tm.val.resize(tm.row_ptr[n]);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t k = tm.row_ptr[i];
    for (const auto& [j, p] : rows[i]) {
      tm.col[k] = j;
      tm.val[k++] = p;
    }
  }
  const double z = log_sum_exp(log_target);
  tm.log_pi.resize(n);
  tm.pi.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    tm.log_pi[i] = log_target[i] - z;
    tm.pi[i] = std::exp(tm.log_pi[i]);
  }
  return tm;
}

TransitionMatrix matrix_from_dense(const std::vector<std::vector<double>>& P,
                                   const std::vector<double>& pi) {
  TransitionMatrix tm;
  const std::size_t n = P.size();
  if (pi.size() != n) throw validation_error("stationary law size mismatch");
  tm.row_ptr.assign(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (P[i].size() != n) throw validation_error("transition matrix must be square");
    for (std::size_t j = 0; j < n; ++j) {
      if (P[i][j] != 0.0 || i == j) {
        tm.col.push_back(static_cast<std::uint32_t>(j));
        tm.val.push_back(P[i][j]);
      }
    }
    tm.row_ptr[i + 1] = tm.col.size();
  }
  tm.pi = pi;
  for (double p : pi) tm.log_pi.push_back(std::log(p));
  return tm;
}

BalanceResidual check_detailed_balance(const TransitionMatrix& tm) {
  BalanceResidual r;
  for (std::size_t i = 0; i < tm.size(); ++i) {
    for (std::size_t k = tm.row_ptr[i]; k < tm.row_ptr[i + 1]; ++k) {
      const std::size_t j = tm.col[k];
      if (j == i) continue;
      const double a = tm.pi[i] * tm.val[k];
      const double b = tm.pi[j] * tm.at(j, i);
      const double d = std::abs(a - b);
      r.absolute = std::max(r.absolute, d);
      r.relative = std::max(r.relative, d / std::max(std::max(a, b), 1e-300));
    }
  }
  return r;
}

bool is_irreducible(const TransitionMatrix& tm) {
  const std::size_t n = tm.size();
  if (n == 0) return false;
  // forward and backward reachability from state 0
  std::vector<std::vector<std::uint32_t>> rev(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = tm.row_ptr[i]; k < tm.row_ptr[i + 1]; ++k) {
      if (tm.col[k] != i && tm.val[k] > 0.0) rev[tm.col[k]].push_back(static_cast<std::uint32_t>(i));
    }
  }
  auto reach = [&](bool forward) {
    std::vector<char> seen(n, 0);
    std::vector<std::size_t> stack{0};
    seen[0] = 1;
    std::size_t count = 1;
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      auto visit = [&](std::size_t v) {
        if (!seen[v]) {
          seen[v] = 1;
          ++count;
          stack.push_back(v);
        }
      };
      if (forward) {
        for (std::size_t k = tm.row_ptr[u]; k < tm.row_ptr[u + 1]; ++k) {
          if (tm.val[k] > 0.0) visit(tm.col[k]);
        }
      } else {
        for (auto v : rev[u]) visit(v);
      }
    }
    return count == n;
  };
  return reach(true) && reach(false);
}

// --------------------------------------------------------------- spectrum

SpectralResult spectral_gap(const TransitionMatrix& tm, std::size_t dense_limit) {
  const std::size_t n = tm.size();
  if (n < 2) throw validation_error("spectral gap needs at least two states");
  if (n > dense_limit) return spectral_gap_lanczos(tm);
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                            static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = tm.row_ptr[i]; k < tm.row_ptr[i + 1]; ++k) {
      const std::size_t j = tm.col[k];
      S(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          tm.val[k] * std::exp(0.5 * (tm.log_pi[i] - tm.log_pi[j]));
    }
  }
  const Eigen::MatrixXd sym = 0.5 * (S + S.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw validation_error("eigen solver failed");
  const auto& ev = es.eigenvalues();
  SpectralResult r;
  r.lambda1 = ev(static_cast<Eigen::Index>(n) - 2);
  r.lambda_min = ev(0);
  r.gap = 1.0 - r.lambda1;
  return r;
}

SpectralResult spectral_gap_lanczos(const TransitionMatrix& tm, int max_iterations,
                                    double tolerance) {
  const std::size_t n = tm.size();
  // S = D^{1/2} P D^{-1/2} in the same sparsity pattern
  std::vector<double> sval(tm.val.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = tm.row_ptr[i]; k < tm.row_ptr[i + 1]; ++k) {
      sval[k] = tm.val[k] * std::exp(0.5 * (tm.log_pi[i] - tm.log_pi[tm.col[k]]));
    }
  }
  std::vector<double> q0(n);
  double nn = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    q0[i] = std::exp(0.5 * tm.log_pi[i]);
    nn += q0[i] * q0[i];
  }
  for (double& v : q0) v /= std::sqrt(nn);
  auto apply = [&](const std::vector<double>& x, std::vector<double>& y) {
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t k = tm.row_ptr[i]; k < tm.row_ptr[i + 1]; ++k) acc += sval[k] * x[tm.col[k]];
      y[i] = acc;
    }
  };
  auto deflate = [&](std::vector<double>& v) {
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) d += v[i] * q0[i];
    for (std::size_t i = 0; i < n; ++i) v[i] -= d * q0[i];
  };
  auto norm = [](const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
  };

  Rng rng(0x1a2b3c4dULL);
  std::vector<double> q(n), q_prev(n, 0.0), w(n);
  for (auto& v : q) v = rng.uniform() - 0.5;
  deflate(q);
  const double nq = norm(q);
  for (auto& v : q) v /= nq;

  std::vector<double> alpha, beta;
  SpectralResult r;
  r.sparse = true;
  double b_prev = 0.0;
  for (int it = 0; it < max_iterations; ++it) {
    apply(q, w);
    for (std::size_t i = 0; i < n; ++i) w[i] -= b_prev * q_prev[i];
    double a = 0.0;
    for (std::size_t i = 0; i < n; ++i) a += w[i] * q[i];
    for (std::size_t i = 0; i < n; ++i) w[i] -= a * q[i];
    deflate(w);
    alpha.push_back(a);
    const double b = norm(w);
    r.iterations = it + 1;
    const bool breakdown = b < 1e-14;
    if ((it + 1) % 10 == 0 || breakdown || it + 1 == max_iterations) {
      // Ritz values of the tridiagonal; stop once the top pair's residual
      // bound b * |last eigenvector component| is below tolerance.
      const auto m = static_cast<Eigen::Index>(alpha.size());
      Eigen::VectorXd d(m), e(std::max<Eigen::Index>(m - 1, 0));
      for (Eigen::Index k = 0; k < m; ++k) d(k) = alpha[static_cast<std::size_t>(k)];
      for (Eigen::Index k = 0; k + 1 < m; ++k) e(k) = beta[static_cast<std::size_t>(k)];
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
      es.computeFromTridiagonal(d, e, Eigen::ComputeEigenvectors);
      r.lambda1 = es.eigenvalues()(m - 1);
      r.lambda_min = es.eigenvalues()(0);
      const double resid = b * std::abs(es.eigenvectors()(m - 1, m - 1));
      if (resid <= tolerance || breakdown) break;
    }
    beta.push_back(b);
    q_prev.swap(q);
    for (std::size_t i = 0; i < n; ++i) q[i] = w[i] / b;
    b_prev = b;
  }
  r.gap = 1.0 - r.lambda1;
  return r;
}

// ------------------------------------------------------------- conductance

double exact_conductance(const TransitionMatrix& tm, bool allow_large) {
  const std::size_t n = tm.size();
  const std::size_t limit = allow_large ? 30 : 26;
  if (n > limit) {
    throw validation_error("exact conductance over " + std::to_string(n) +
                           " states exceeds the subset enumeration limit");
  }
  std::vector<long double> Q(n * n, 0.0L);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = tm.row_ptr[i]; k < tm.row_ptr[i + 1]; ++k) {
      if (tm.col[k] != i) Q[i * n + tm.col[k]] = static_cast<long double>(tm.pi[i]) * tm.val[k];
    }
  }
  // Gray-code walk over subsets, updating pi(A) and Q(A, A^c) by one state.
  std::uint64_t A = 0;
  long double mass = 0.0L, cut = 0.0L;
  double best = std::numeric_limits<double>::infinity();
  const std::uint64_t total = std::uint64_t{1} << n;
  for (std::uint64_t g = 1; g < total; ++g) {
    const auto v = static_cast<std::size_t>(std::countr_zero(g));
    const bool adding = !((A >> v) & 1U);
    long double to_in = 0.0L, to_out = 0.0L;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == v) continue;
      if ((A >> j) & 1U) to_in += Q[v * n + j];
      else to_out += Q[v * n + j];
    }
    if (adding) {
      A |= std::uint64_t{1} << v;
      mass += tm.pi[v];
      cut += to_out - to_in;
    } else {
      A &= ~(std::uint64_t{1} << v);
      mass -= tm.pi[v];
      cut -= to_out - to_in;
    }
    if (mass > 0.0L && mass <= 0.5L) {
      best = std::min(best, static_cast<double>(cut / mass));
    }
  }
  return best;
}

double bottleneck_ratio(const TransitionMatrix& tm, const std::vector<bool>& in_set) {
  if (in_set.size() != tm.size()) throw validation_error("set membership size mismatch");
  double mass = 0.0, cut = 0.0;
  for (std::size_t i = 0; i < tm.size(); ++i) {
    if (!in_set[i]) continue;
    mass += tm.pi[i];
    for (std::size_t k = tm.row_ptr[i]; k < tm.row_ptr[i + 1]; ++k) {
      if (!in_set[tm.col[k]]) cut += tm.pi[i] * tm.val[k];
    }
  }
  const double small = std::min(mass, 1.0 - mass);
  if (!(small > 0.0)) throw validation_error("bottleneck set must have mass in (0, 1)");
  return cut / small;
}

std::vector<bool> states_without(const TransitionMatrix& tm, std::size_t pos) {
  std::vector<bool> out(tm.size());
  for (std::size_t i = 0; i < tm.size(); ++i) out[i] = !tm.space[i].test(pos);
  return out;
}

// ---------------------------------------------------------------------- TV

namespace {
double tv_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return 0.5 * s;
}
}  // namespace

std::vector<double> tv_curve_from(const TransitionMatrix& tm, std::vector<double> start,
                                  std::size_t t_max) {
  std::vector<double> out, next;
  out.push_back(tv_distance(start, tm.pi));
  for (std::size_t t = 1; t <= t_max; ++t) {
    tm.left_multiply(start, next);
    start.swap(next);
    out.push_back(tv_distance(start, tm.pi));
  }
  return out;
}

std::vector<double> tv_curve(const TransitionMatrix& tm, std::size_t t_max, Execution exec) {
  const std::size_t n = tm.size();
  std::vector<std::vector<double>> curves(n);
  const int threads = exec == Execution::parallel ? omp_get_max_threads() : 1;
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (std::size_t x = 0; x < n; ++x) {
    std::vector<double> e(n, 0.0);
    e[x] = 1.0;
    curves[x] = tv_curve_from(tm, std::move(e), t_max);
  }
  std::vector<double> d(t_max + 1, 0.0);
  for (const auto& c : curves) {
    for (std::size_t t = 0; t <= t_max; ++t) d[t] = std::max(d[t], c[t]);
  }
  return d;
}

std::size_t tv_mixing_time(const TransitionMatrix& tm, double epsilon, std::size_t t_max,
                           Execution exec) {
  const std::size_t n = tm.size();
  std::size_t worst = 0;
  bool exceeded = false;
  const int threads = exec == Execution::parallel ? omp_get_max_threads() : 1;
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads) reduction(max : worst) \
    reduction(|| : exceeded)
  for (std::size_t x = 0; x < n; ++x) {
    std::vector<double> cur(n, 0.0), next;
    cur[x] = 1.0;
    std::size_t t = 0;
    while (tv_distance(cur, tm.pi) > epsilon) {
      if (t == t_max) {
        exceeded = true;
        break;
      }
      tm.left_multiply(cur, next);
      cur.swap(next);
      ++t;
    }
    worst = std::max(worst, t);
  }
  if (exceeded) throw validation_error("TV mixing time exceeds the iteration limit");
  return worst;
}

// --------------------------------------------------------- canonical paths

NodeSet spanning_tree(int depth_cap, const std::vector<NodeId>& signal) {
  const std::size_t cap = std::size_t{1} << depth_cap;
  NodeSet s(cap);
  s.set(0);
  for (const auto& node : signal) {
    if (node.level >= depth_cap) {
      throw validation_error("signal node " + to_string(node) + " lies at or below the depth cap");
    }
    for (std::size_t p = position(node);; p = parent_position(p)) {
      s.set(p);
      if (p == 0) break;
    }
  }
  return s;
}

NodeSet canonical_transition(const NodeSet& tree, const NodeSet& t_star, int depth_cap,
                             PathKind kind) {
  if (tree == t_star) throw validation_error("canonical transition is undefined at T*");
  const std::size_t cap = std::size_t{1} << depth_cap;
  NodeSet out = tree;
  // redundant internal nodes
  std::size_t max_red = 0, min_twig_red = cap;
  bool any_red = false;
  tree.for_each([&](std::size_t p) {
    if (t_star.test(p)) return;
    any_red = true;
    max_red = std::max(max_red, p);
    if (p < min_twig_red && tree_ops::is_twig_prunable(tree, depth_cap, p)) min_twig_red = p;
  });
  if (any_red) {
    if (kind == PathKind::classic) {
      out.reset(max_red);
    } else {
      tree_ops::clear_path(out, min_twig_red, tree_ops::chain_bottom(tree, depth_cap, min_twig_red));
    }
    return out;
  }
  // tree is a strict subset of T*
  if (kind == PathKind::classic) {
    std::size_t best = 0;
    t_star.for_each([&](std::size_t p) {
      if (p >= 1 && !tree.test(p) && tree.test(parent_position(p))) best = std::max(best, p);
    });
    out.set(best);
  } else {
    std::size_t best = 0;
    t_star.for_each([&](std::size_t p) {
      if (!tree.test(p)) best = std::max(best, p);
    });
    tree_ops::set_path(out, tree_ops::twig_top(tree, best), best);
  }
  return out;
}

CanonicalEnsemble build_ensemble(const TransitionMatrix& tm, const NodeSet& t_star,
                                 PathKind kind) {
  if (!is_tree_kernel(tm.kind)) throw validation_error("canonical paths need a tree kernel");
  const int L = tm.space.depth_cap();
  const std::size_t n = tm.size();
  CanonicalEnsemble ens;
  ens.kind = kind;
  ens.t_star = tm.space.index(t_star);
  ens.next.assign(n, ens.t_star);
  for (std::size_t i = 0; i < n; ++i) {
    if (i == ens.t_star) continue;
    const NodeSet g = canonical_transition(tm.space[i], t_star, L, kind);
    const std::size_t j = tm.space.index(g);
    if (!(tm.at(i, j) > 0.0)) {
      throw validation_error("canonical step " + encode_state(tm.space[i]) + " -> " +
                             encode_state(g) + " is not a kernel transition");
    }
    if (g.hamming(t_star) >= tm.space[i].hamming(t_star)) {
      throw validation_error("canonical step from " + encode_state(tm.space[i]) +
                             " does not approach T*");
    }
    ens.next[i] = j;
  }
  // depth by following next pointers (each step strictly approaches T*)
  ens.depth.assign(n, 0);
  std::vector<char> done(n, 0);
  done[ens.t_star] = 1;
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t u = i;
    while (!done[u]) {
      stack.push_back(u);
      u = ens.next[u];
    }
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      ens.depth[v] = ens.depth[ens.next[v]] + 1;
      done[v] = 1;
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return ens.depth[a] > ens.depth[b]; });
  // subtree masses (in log space, pi can underflow) and the tree diameter
  // in one bottom-up sweep
  std::vector<double> log_mass(tm.log_pi);
  std::vector<std::size_t> down1(n, 0), down2(n, 0);
  for (auto u : order) {
    if (u == ens.t_star) continue;
    const std::size_t p = ens.next[u];
    const double hi = std::max(log_mass[p], log_mass[u]), lo = std::min(log_mass[p], log_mass[u]);
    log_mass[p] = hi + std::log1p(std::exp(lo - hi));
    const std::size_t cand = down1[u] + 1;
    if (cand > down1[p]) {
      down2[p] = down1[p];
      down1[p] = cand;
    } else if (cand > down2[p]) {
      down2[p] = cand;
    }
  }
  for (std::size_t u = 0; u < n; ++u) ens.max_length = std::max(ens.max_length, down1[u] + down2[u]);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t u = 0; u < n; ++u) {
    if (u == ens.t_star) continue;
    const double lm = std::min(log_mass[u], 0.0);
    const double log_load = std::log(2.0) + lm + std::log1p(-std::exp(lm));
    const double log_q = tm.log_pi[u] + std::log(tm.at(u, ens.next[u]));
    if (log_load - log_q > best) {
      best = log_load - log_q;
      ens.worst_edge = u;
    }
  }
  ens.congestion = std::exp(best);
  return ens;
}

double brute_force_congestion(const TransitionMatrix& tm, const CanonicalEnsemble& ens,
                              std::size_t* max_length) {
  const std::size_t n = tm.size();
  std::vector<double> load(n, 0.0);
  std::size_t longest = 0;
  std::vector<std::size_t> pa, pb;
  auto path_to_root = [&](std::size_t u, std::vector<std::size_t>& out) {
    out.clear();
    out.push_back(u);
    while (u != ens.t_star) {
      u = ens.next[u];
      out.push_back(u);
    }
  };
  for (std::size_t a = 0; a < n; ++a) {
    path_to_root(a, pa);
    for (std::size_t b = 0; b < n; ++b) {
      if (a == b) continue;
      path_to_root(b, pb);
      // drop the shared suffix; the last shared state is where the paths meet
      std::size_t ia = pa.size(), ib = pb.size();
      while (ia > 0 && ib > 0 && pa[ia - 1] == pb[ib - 1]) {
        --ia;
        --ib;
      }
      const double w = tm.pi[a] * tm.pi[b];
      for (std::size_t k = 0; k < ia; ++k) load[pa[k]] += w;  // edge (pa[k], next)
      for (std::size_t k = 0; k < ib; ++k) load[pb[k]] += w;
      longest = std::max(longest, ia + ib);
    }
  }
  double rho = 0.0;
  for (std::size_t u = 0; u < n; ++u) {
    if (u == ens.t_star) continue;
    rho = std::max(rho, load[u] / (tm.pi[u] * tm.at(u, ens.next[u])));
  }
  if (max_length) *max_length = longest;
  return rho;
}

// -------------------------------------------------------------------- drift

DriftReport drift_report(const TransitionMatrix& tm, const PosteriorEngine& engine,
                         const NodeSet& t_star, const DriftOptions& options) {
  const std::size_t n = tm.size();
  const int L = tm.space.depth_cap();
  const double cap = std::ldexp(1.0, L);
  const auto& st = engine.stats();
  const double nd = static_cast<double>(st.n);
  const double scale = 1.0 / (cap * (options.c_f0 + 2.0) * (options.c_f0 + 2.0) * (nd + 1.0));
  const std::size_t star_count = t_star.count();
  DriftReport r;
  r.v1.resize(n);
  r.v2.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const NodeSet& s = tm.space[i];
    double explained = 0.0;
    s.for_each([&](std::size_t p) { explained += st.w[p] * st.w[p]; });
    r.v1[i] = std::exp(scale * (st.yty - explained / nd));
    std::size_t extra = 0, missing = 0, uni = 0;
    for (std::size_t p = 0; p < t_star.size(); ++p) {
      const bool a = s.test(p), b = t_star.test(p);
      extra += a && !b;
      missing += b && !a;
      uni += a || b;
    }
    (void)star_count;
    const double v2 = static_cast<double>(extra) +
                      static_cast<double>(std::min<std::size_t>(missing, 1)) * (cap - static_cast<double>(uni));
    r.v2[i] = std::exp(v2 / cap);
  }
  r.v1_ratio.resize(n);
  r.v2_ratio.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double pv1 = 0.0, pv2 = 0.0;
    for (std::size_t k = tm.row_ptr[i]; k < tm.row_ptr[i + 1]; ++k) {
      pv1 += tm.val[k] * r.v1[tm.col[k]];
      pv2 += tm.val[k] * r.v2[tm.col[k]];
    }
    r.v1_ratio[i] = pv1 / r.v1[i];
    r.v2_ratio[i] = pv2 / r.v2[i];
    const NodeSet& s = tm.space[i];
    const bool covers = t_star.subset_of(s);
    if (!covers) {
      ++r.underfit;
      r.underfit_v1_ok += r.v1_ratio[i] < 1.0;
      r.max_underfit_v1_ratio = std::max(r.max_underfit_v1_ratio, r.v1_ratio[i]);
    } else if (!(s == t_star)) {
      ++r.overfit;
      r.overfit_v2_ok += r.v2_ratio[i] < 1.0;
      r.max_overfit_v2_ratio = std::max(r.max_overfit_v2_ratio, r.v2_ratio[i]);
    }
  }
  return r;
}

// ------------------------------------------------------------------ report

OracleReport run_oracle(const PosteriorEngine& engine, const KernelSpec& spec,
                        const OracleOptions& opt) {
  OracleReport rep;
  rep.kind = spec.kind;
  rep.lazy = spec.lazy;
  rep.depth_cap = engine.depth_cap();
  const auto tm = build_transition_matrix(engine, spec);
  rep.states = tm.size();
  rep.row_sum_error = tm.max_row_sum_error();
  rep.log_pi_min = *std::min_element(tm.log_pi.begin(), tm.log_pi.end());
  rep.pi_min = std::exp(rep.log_pi_min);
  if (rep.row_sum_error > 1e-12) rep.failures.push_back("rows do not sum to one");

  if (opt.balance) {
    rep.balance = check_detailed_balance(tm);
    rep.irreducible = is_irreducible(tm);
    if (rep.balance->relative > 1e-10) rep.failures.push_back("detailed balance residual");
    if (!*rep.irreducible) rep.failures.push_back("transition graph is not irreducible");
  }
  const bool need_gap = opt.gap || opt.conductance || opt.tv || opt.paths;
  if (need_gap) {
    rep.spectral = spectral_gap(tm);
    if (spec.lazy && !rep.spectral->sparse && rep.spectral->lambda_min < -1e-10) {
      rep.failures.push_back("lazy chain has a negative eigenvalue");
    }
  }
  const double gap = rep.spectral ? rep.spectral->gap : 0.0;
  const bool exact_phi = tm.size() <= 8 || (opt.allow_large_conductance && tm.size() <= 26);
  if (opt.conductance && exact_phi) {
    rep.conductance = exact_conductance(tm, opt.allow_large_conductance);
    const double phi = *rep.conductance;
    if (!(phi * phi / 2.0 <= gap * (1.0 + 1e-9)) || !(gap <= 2.0 * phi * (1.0 + 1e-9))) {
      rep.failures.push_back("Cheeger inequality");
    }
  }
  if (opt.tv && tm.size() <= 1000) {
    rep.tau = tv_mixing_time(tm, opt.epsilon);
    const double upper = (-rep.log_pi_min + std::log(1.0 / opt.epsilon)) / gap;
    const double lower = (1.0 - gap) / (2.0 * gap) * std::log(1.0 / (2.0 * opt.epsilon));
    if (static_cast<double>(*rep.tau) > upper) rep.failures.push_back("mixing time upper bound");
    if (static_cast<double>(*rep.tau) < lower) rep.failures.push_back("mixing time lower bound");
  }
  if (opt.paths && opt.t_star && is_tree_kernel(spec.kind)) {
    const bool twig = spec.kind == KernelKind::twiggy || spec.kind == KernelKind::informed_twiggy;
    const PathKind kind = twig ? opt.path_kind : PathKind::classic;
    const auto ens = build_ensemble(tm, *opt.t_star, kind);
    rep.max_length = ens.max_length;
    rep.congestion = ens.congestion;
    if (static_cast<double>(ens.max_length) > std::ldexp(1.0, rep.depth_cap + 1)) {
      rep.failures.push_back("path length exceeds 2^(L+1)");
    }
    if (gap < 1.0 / (static_cast<double>(ens.max_length) * ens.congestion) * (1.0 - 1e-9)) {
      rep.failures.push_back("canonical path lower bound on the gap");
    }
  }
  if (opt.drift && opt.t_star && is_tree_kernel(spec.kind)) {
    rep.drift = drift_report(tm, engine, *opt.t_star, opt.drift_options);
  }
  return rep;
}

nlohmann::json to_json(const OracleReport& r) {
  nlohmann::json j;
  j["kernel"] = std::string(kernel_code(r.kind));
  j["L"] = r.depth_cap;
  j["states"] = r.states;
  j["lazy"] = r.lazy;
  j["row_sum_error"] = r.row_sum_error;
  j["pi_min"] = r.pi_min;
  j["log_pi_min"] = r.log_pi_min;
  if (r.balance) {
    j["balance_residual"] = r.balance->absolute;
    j["balance_relative"] = r.balance->relative;
  }
  if (r.irreducible) j["irreducible"] = *r.irreducible;
  if (r.spectral) {
    j["gap"] = r.spectral->gap;
    j["lambda1"] = r.spectral->lambda1;
    j["lambda_min"] = r.spectral->lambda_min;
    j["sparse"] = r.spectral->sparse;
  }
  if (r.conductance) j["conductance"] = *r.conductance;
  if (r.tau) j["tau"] = *r.tau;
  if (r.max_length) j["path_length"] = *r.max_length;
  if (r.congestion) j["congestion"] = *r.congestion;
  if (r.drift) {
    const auto& d = *r.drift;
    j["drift"] = {{"underfit", d.underfit},
                  {"underfit_v1_below_one", d.underfit_v1_ok},
                  {"max_underfit_v1_ratio", d.max_underfit_v1_ratio},
                  {"overfit", d.overfit},
                  {"overfit_v2_below_one", d.overfit_v2_ok},
                  {"max_overfit_v2_ratio", d.max_overfit_v2_ratio}};
  }
  j["failures"] = r.failures;
  j["status"] = r.failed() ? "FAILED" : "ok";
  return j;
}

void write_matrix_csv(std::ostream& out, const TransitionMatrix& tm) {
  out << "i,j,p\n";
  char buf[40];
  for (std::size_t i = 0; i < tm.size(); ++i) {
    for (std::size_t k = tm.row_ptr[i]; k < tm.row_ptr[i + 1]; ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", tm.val[k]);
      out << i << ',' << tm.col[k] << ',' << buf << '\n';
    }
  }
  if (!out) throw io_error("failed writing transition matrix");
}

}  // namespace dyadcart
