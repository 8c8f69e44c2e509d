#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "dyadcart/kernels.hpp"

namespace dyadcart {

/// Enumerated chain states: all trees of depth cap L <= 5, or all inclusion
/// sets (constant always included) for spike-and-slab with L <= 4.
class StateSpace {
 public:
  static StateSpace trees(int depth_cap);
  static StateSpace subsets(int depth_cap);
  static StateSpace for_kernel(KernelKind kind, int depth_cap);

  int depth_cap() const { return depth_cap_; }
  std::size_t size() const { return states_.size(); }
  const NodeSet& operator[](std::size_t i) const { return states_[i]; }
  const std::vector<NodeSet>& states() const { return states_; }
  /// Index of a state; throws when it is not enumerated.
  std::size_t index(const NodeSet& s) const;
  std::optional<std::size_t> find(const NodeSet& s) const;

 private:
  int depth_cap_ = 0;
  std::vector<NodeSet> states_;
  std::unordered_map<std::uint32_t, std::uint32_t> lookup_;
};

enum class Execution { serial, parallel };

using KernelFactory = std::function<std::unique_ptr<Kernel>(const PosteriorEngine&)>;

/// Exact row-stochastic transition matrix in compressed sparse row form,
/// with the normalized stationary law.
struct TransitionMatrix {
  KernelKind kind = KernelKind::grow_prune;
  bool lazy = false;
  StateSpace space;
  std::vector<std::size_t> row_ptr;
  std::vector<std::uint32_t> col;  // sorted within each row, diagonal included
  std::vector<double> val;
  std::vector<double> log_pi;
  std::vector<double> pi;

  std::size_t size() const { return row_ptr.empty() ? 0 : row_ptr.size() - 1; }
  double at(std::size_t i, std::size_t j) const;
  /// y = x P (distribution update).
  void left_multiply(const std::vector<double>& x, std::vector<double>& y) const;
  double max_row_sum_error() const;
};

/// States above this size are refused.
inline constexpr std::size_t kMaxOracleStates = 500000;

TransitionMatrix build_transition_matrix(const PosteriorEngine& engine, const KernelSpec& spec,
                                         Execution exec = Execution::parallel);
/// Same, drawing kernels from `factory` (one per worker).
TransitionMatrix build_transition_matrix(const PosteriorEngine& engine, const KernelSpec& spec,
                                         const KernelFactory& factory, Execution exec);
/// Matrix from explicit row-stochastic dense data (tests and hand examples).
TransitionMatrix matrix_from_dense(const std::vector<std::vector<double>>& P,
                                   const std::vector<double>& pi);

struct BalanceResidual {
  double absolute = 0.0;  // max |pi_i P_ij - pi_j P_ji|
  double relative = 0.0;  // same divided by max(pi_i P_ij, 1e-300)
};
BalanceResidual check_detailed_balance(const TransitionMatrix& tm);

/// Strong connectivity of the positive off-diagonal transition graph.
bool is_irreducible(const TransitionMatrix& tm);

struct SpectralResult {
  double gap = 0.0;         // 1 - lambda_1
  double lambda1 = 0.0;     // second largest eigenvalue
  double lambda_min = 0.0;  // smallest eigenvalue (dense only)
  bool sparse = false;
  int iterations = 0;
};

/// Dense symmetric eigensolve up to `dense_limit` states, Lanczos beyond
/// (top Ritz value; lambda_min is then only a Ritz estimate).
SpectralResult spectral_gap(const TransitionMatrix& tm, std::size_t dense_limit = 4000);
SpectralResult spectral_gap_lanczos(const TransitionMatrix& tm, int max_iterations = 2000,
                                    double tolerance = 1e-10);

/// Exact conductance by enumerating all subsets; refuses more than 26 states
/// unless allow_large, and always more than 30.
double exact_conductance(const TransitionMatrix& tm, bool allow_large = false);
/// Q(A, A^c) / min(pi(A), pi(A^c)) for a state subset given by membership.
double bottleneck_ratio(const TransitionMatrix& tm, const std::vector<bool>& in_set);
/// Membership of A = {T : pos not internal}.
std::vector<bool> states_without(const TransitionMatrix& tm, std::size_t pos);

/// d(t) = max_x TV(P^t(x,.), pi) for t = 0..t_max.
std::vector<double> tv_curve(const TransitionMatrix& tm, std::size_t t_max,
                             Execution exec = Execution::parallel);
/// TV from a single start distribution.
std::vector<double> tv_curve_from(const TransitionMatrix& tm, std::vector<double> start,
                                  std::size_t t_max);
/// Smallest t with d(t) <= epsilon (d is nonincreasing); throws past t_max.
std::size_t tv_mixing_time(const TransitionMatrix& tm, double epsilon,
                           std::size_t t_max = 10000000, Execution exec = Execution::parallel);

enum class PathKind { classic, twiggy };

/// The smallest tree containing every signal node as internal.
NodeSet spanning_tree(int depth_cap, const std::vector<NodeId>& signal);

/// One application of the canonical transition function toward T*.
NodeSet canonical_transition(const NodeSet& tree, const NodeSet& t_star, int depth_cap,
                             PathKind kind);

struct CanonicalEnsemble {
  PathKind kind = PathKind::classic;
  std::size_t t_star = 0;
  std::vector<std::size_t> next;   // G(state) for every state but T*
  std::vector<std::size_t> depth;  // steps to T*
  std::size_t max_length = 0;      // l(E)
  double congestion = 0.0;         // rho(E)
  std::size_t worst_edge = 0;      // state u of the worst edge (u, G(u))
};

/// Paths T -> T* obtained by iterating G; pair paths meet where the two
/// paths to T* merge. Throws when a G step is not a kernel transition or
/// does not decrease the Hamming distance to T*.
CanonicalEnsemble build_ensemble(const TransitionMatrix& tm, const NodeSet& t_star,
                                 PathKind kind);
/// Congestion by explicit enumeration of all ordered pairs (test oracle).
double brute_force_congestion(const TransitionMatrix& tm, const CanonicalEnsemble& ens,
                              std::size_t* max_length = nullptr);

struct DriftOptions {
  double c_f0 = 2.0;  // signal size bound C in V1
};

struct DriftReport {
  std::vector<double> v1, v2;
  std::vector<double> v1_ratio, v2_ratio;  // (PV)/V per state
  std::size_t underfit = 0, underfit_v1_ok = 0;
  std::size_t overfit = 0, overfit_v2_ok = 0;  // overfitted states other than T*
  double max_underfit_v1_ratio = 0.0;
  double max_overfit_v2_ratio = 0.0;
};

DriftReport drift_report(const TransitionMatrix& tm, const PosteriorEngine& engine,
                         const NodeSet& t_star, const DriftOptions& options = {});

struct OracleOptions {
  bool balance = true, gap = true, conductance = true, paths = true, drift = true, tv = true;
  double epsilon = 0.25;
  bool allow_large_conductance = false;
  std::optional<NodeSet> t_star;
  DriftOptions drift_options;
  PathKind path_kind = PathKind::classic;
};

/// Exact audit of one kernel; `failed` is set when a checked inequality or
/// invariant does not hold.
struct OracleReport {
  KernelKind kind = KernelKind::grow_prune;
  int depth_cap = 0;
  std::size_t states = 0;
  bool lazy = true;
  double row_sum_error = 0.0;
  std::optional<BalanceResidual> balance;
  std::optional<bool> irreducible;
  std::optional<SpectralResult> spectral;
  std::optional<double> conductance;
  std::optional<std::size_t> tau;
  double pi_min = 0.0;
  double log_pi_min = 0.0;
  std::optional<std::size_t> max_length;
  std::optional<double> congestion;
  std::optional<DriftReport> drift;
  std::vector<std::string> failures;
  bool failed() const { return !failures.empty(); }
};

OracleReport run_oracle(const PosteriorEngine& engine, const KernelSpec& spec,
                        const OracleOptions& options);
nlohmann::json to_json(const OracleReport& report);
/// `i,j,p` rows of the nonzero entries.
void write_matrix_csv(std::ostream& out, const TransitionMatrix& tm);

}  // namespace dyadcart
