#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dyadcart/chains.hpp"
#include "dyadcart/diagnostics.hpp"
#include "dyadcart/haar.hpp"
#include "dyadcart/posterior.hpp"

namespace dyadcart {

enum class CaseId { example1, example2, case1, case2, case3, call_center };

CaseId parse_case(const std::string& name);
const char* case_name(CaseId id);

/// One sampler configuration inside a plan; spike-and-slab variants differ
/// only in their slab schedule.
struct KernelVariant {
  std::string label;  // bc, tw, ibc, itw, ss, ss2
  KernelSpec spec;
  SlabPrior slab = SlabPrior::same_as_tree;
};

/// A fully resolved run: one dataset, several kernels.
struct ExperimentPlan {
  CaseId id = CaseId::case1;
  std::string label;  // output subdirectory, e.g. example1-j3 or case2-n256
  int depth = 0;      // signal depth j of the examples, 0 otherwise
  std::size_t n = 0;
  double sigma = 1.0;
  SignalSpec signal;
  std::optional<std::filesystem::path> counts;
  ModelConfig model;
  std::vector<KernelVariant> kernels;
  int chains = 10;
  std::uint64_t steps = 100000;
  std::uint64_t record_every = 100;
  std::uint64_t seed = 0;
  InitMode init = InitMode::random_grows;
  bool stop_on_hit = false;
  DiagnosticsOptions diagnostics;
};

struct PlanOverrides {
  std::optional<std::uint64_t> steps;
  std::optional<int> chains;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> record_every;
  std::vector<std::size_t> n;       // replaces the sample-size sweep
  std::vector<int> depths;          // replaces the example depth sweep
  std::vector<std::string> kernels; // labels to keep
  std::optional<std::filesystem::path> counts;
  bool fast = false;
  int threads = 0;
};

/// Resolved plans for a case, one per sweep point.
std::vector<ExperimentPlan> plan_case(CaseId id, const PlanOverrides& overrides = {});

/// Loads or simulates the plan's data on the raw scale.
std::vector<double> plan_data(const ExperimentPlan& plan);
/// Signal positions B (levels >= 0).
std::vector<std::size_t> signal_positions(const ExperimentPlan& plan);
/// Internal positions >= 1 of T*, the smallest tree containing B.
std::vector<std::size_t> spanning_positions(const ExperimentPlan& plan, int depth_cap);

struct KernelResult {
  KernelVariant variant;
  std::vector<ChainTrace> traces;
  DiagnosticsReport report;
  std::vector<std::string> warnings;
};

struct ResultBundle {
  ExperimentPlan plan;
  std::vector<KernelResult> kernels;
};

/// Runs every kernel of the plan; writes `<outdir>/<label>/<kernel>/` with
/// trace_<chain>.csv, report.json and bgr.csv, plus results.csv and
/// summary.csv under `<outdir>/<label>` when outdir is given.
ResultBundle run_plan(const ExperimentPlan& plan, const std::optional<std::filesystem::path>& outdir,
                      int threads = 0);

/// Long-format per-chain metric (every row self-describing).
struct ResultRow {
  std::string case_name, label, kernel, metric;
  std::size_t n = 0;
  int depth = 0;
  std::uint64_t seed = 0;
  int chain = -1;  // -1 for kernel-level metrics
  double value = 0.0;
};

std::vector<ResultRow> result_rows(const ResultBundle& bundle);
void write_result_rows(std::ostream& out, const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_result_rows(std::istream& in);

struct SummaryRow {
  std::string case_name, label, kernel, metric;
  std::size_t n = 0;
  int depth = 0;
  std::size_t count = 0;
  std::size_t missing = 0;  // rows with a NaN value (e.g. a chain that never hit)
  double min = 0.0, q25 = 0.0, median = 0.0, q75 = 0.0, max = 0.0;
};

/// Linear-interpolation quantile of sorted data.
double quantile_sorted(const std::vector<double>& sorted, double q);
/// Quantile table per (label, kernel, metric) in first-appearance order.
std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows);
void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows);

}  // namespace dyadcart
