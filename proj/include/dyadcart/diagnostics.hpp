#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "json.hpp"

#include "dyadcart/chains.hpp"
#include "dyadcart/haar.hpp"

namespace dyadcart {

/// Inclusion indicators of K chains on a shared recording cadence.
struct IndicatorPanel {
  std::vector<std::vector<NodeSet>> chains;  // [chain][record]
  std::vector<std::uint64_t> steps;          // step of each record

  static IndicatorPanel from_traces(const std::vector<ChainTrace>& traces);
  std::size_t chain_count() const { return chains.size(); }
  std::size_t records() const { return steps.size(); }
};

/// Reported in place of an infinite BGR (frozen disagreement).
inline constexpr double kBgrInfinity = 1e12;

/// Gelman-Rubin ratio [(m-1)/m W + B/m] / W of samples[k][i], k < K chains,
/// i < m draws. W = 0 gives 1 when B = 0 and +inf otherwise.
double bgr_statistic(const std::vector<std::vector<double>>& samples);

/// Local BGR of the indicator at `pos` over records [t - window, t).
double local_bgr(const IndicatorPanel& panel, std::size_t pos, std::size_t t,
                 std::size_t window = 100);

struct BgrSeries {
  std::vector<std::uint64_t> steps;  // step of the last record in each window
  std::vector<std::size_t> nodes;    // monitored positions
  std::vector<std::vector<double>> values;  // [window end][node]
  std::vector<double> worst;                // max over nodes per window end
};

/// Local BGR of every monitored node at every window end t = window..records.
BgrSeries bgr_series(const IndicatorPanel& panel, const std::vector<std::size_t>& monitored,
                     std::size_t window = 100);

/// First step at which the worst monitored local BGR is at most alpha; `cap`
/// when that never happens within the cap.
std::uint64_t bgr_alpha_time(const IndicatorPanel& panel,
                             const std::vector<std::size_t>& monitored, double alpha = 1.1,
                             std::size_t window = 100, std::uint64_t cap = 1000000);
std::uint64_t bgr_alpha_time(const BgrSeries& series, double alpha = 1.1,
                             std::uint64_t cap = 1000000);

enum class HitMode { contains, equals };

/// First recorded step (0 for the initial state) at which the state contains
/// (or equals, ignoring the constant) the target; kNotHit otherwise.
std::int64_t hitting_time(const ChainTrace& trace, const std::vector<std::size_t>& target,
                          HitMode mode);

struct F1Score {
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

/// Per-state precision and recall over levels >= 0 averaged over `states`;
/// F1 is the harmonic mean of the averages. An empty state has precision 0.
F1Score f1_score(const std::vector<NodeSet>& states, const std::vector<std::size_t>& truth);
/// Uses the last `tail` records of every chain.
F1Score f1_tail(const std::vector<ChainTrace>& traces, const std::vector<std::size_t>& truth,
                std::size_t tail = 100);

/// Step function sum over active positions of (w/n) psi, on the raw scale.
std::vector<double> fitted_values(const NodeSet& active, const SufficientStats& raw);
/// Mean squared distance from y to the fitted values, via Parseval.
double fit_mse(const NodeSet& active, const SufficientStats& raw);
std::vector<double> mse_trace(const ChainTrace& trace, const SufficientStats& raw);

double acceptance_rate(const ChainTrace& trace);
double acceptance_rate(const std::vector<ChainTrace>& traces);

struct DiagnosticsReport {
  std::uint64_t tau_bgr = 0;
  std::uint64_t hit_cap = 0;
  std::vector<std::int64_t> hit_contains;  // per chain, kNotHit when capped
  std::vector<std::int64_t> hit_equals;
  F1Score f1;
  double accept_rate = 0.0;
  std::vector<double> final_mse;  // per chain
  BgrSeries bgr;
};

struct DiagnosticsOptions {
  std::size_t window = 100;
  double alpha = 1.1;
  std::uint64_t cap = 1000000;
  std::size_t f1_tail = 100;
};

DiagnosticsReport diagnose(const std::vector<ChainTrace>& traces, const SufficientStats& raw,
                           const std::vector<std::size_t>& truth,
                           const std::vector<std::size_t>& monitored,
                           const DiagnosticsOptions& options = {});

nlohmann::json to_json(const DiagnosticsReport& report);
/// Long-format `t,node,bgr` rows; infinite values are written as the sentinel.
void write_bgr_csv(std::ostream& out, const BgrSeries& series);

}  // namespace dyadcart
