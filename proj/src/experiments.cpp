#include "dyadcart/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "dyadcart/error.hpp"
#include "dyadcart/oracle.hpp"

namespace dyadcart {

namespace fs = std::filesystem;

namespace {

constexpr std::pair<CaseId, const char*> kCaseNames[] = {
    {CaseId::example1, "example1"}, {CaseId::example2, "example2"}, {CaseId::case1, "case1"},
    {CaseId::case2, "case2"},       {CaseId::case3, "case3"},       {CaseId::call_center, "call_center"},
};

KernelVariant variant(const std::string& label) {
  KernelVariant v;
  v.label = label;
  v.spec.lazy = false;
  if (label == "ss2") {
    v.spec.kind = KernelKind::spike_slab;
    v.slab = SlabPrior::geometric6;
  } else {
    v.spec.kind = parse_kernel(label);
  }
  return v;
}

std::vector<KernelVariant> variants(std::initializer_list<const char*> labels) {
  std::vector<KernelVariant> out;
  for (const char* l : labels) out.push_back(variant(l));
  return out;
}

// p = 0.25 / 2^(Lmax - 6) = 32 / n, written as alpha n^(-c) with c = 1.
ModelConfig simulation_prior() {
  ModelConfig m;
  m.c = 1.0;
  m.alpha = 32.0;
  return m;
}

// Constant split probability p through c = 0.
ModelConfig constant_prior(double p) {
  ModelConfig m;
  m.c = 0.0;
  m.alpha = p;
  return m;
}

SignalSpec signal_of(const std::vector<NodeId>& nodes, double beta = 2.0) {
  SignalSpec s;
  for (const auto& node : nodes) s.coefficients.emplace_back(node, beta);
  s.noise_sd = 1.0;
  return s;
}

std::vector<NodeId> full_tree_nodes(int depth) {
  std::vector<NodeId> out;
  for (int l = 0; l < depth; ++l) {
    for (std::uint32_t k = 0; k < (1U << l); ++k) out.push_back({l, k});
  }
  return out;
}

std::vector<NodeId> case_signal(CaseId id) {
  switch (id) {
    case CaseId::case1: return full_tree_nodes(4);
    case CaseId::case2: return {{4, 0}};
    case CaseId::case3: return {{2, 0}, {2, 3}, {3, 2}, {3, 3}, {3, 4}, {3, 5}, {4, 15}};
    default: return {};
  }
}

void apply_common(ExperimentPlan& p, const PlanOverrides& o) {
  if (o.steps) p.steps = *o.steps;
  if (o.chains) p.chains = *o.chains;
  if (o.seed) p.seed = *o.seed;
  if (o.record_every) p.record_every = *o.record_every;
  if (!o.kernels.empty()) {
    std::vector<KernelVariant> keep;
    for (const auto& label : o.kernels) keep.push_back(variant(label));
    p.kernels = keep;
  }
  if (p.chains < 1) throw validation_error("a plan needs at least one chain");
  if (p.steps < 1) throw validation_error("a plan needs at least one step");
  p.diagnostics.cap = std::max<std::uint64_t>(p.steps, 1);
  p.signal.seed = derive_seed(p.seed, 0xDA7A0000ULL + p.n * 16 + static_cast<std::uint64_t>(p.depth));
}

void check_n(std::size_t n) {
  if (n < 4 || (n & (n - 1)) != 0) {
    throw validation_error("sample size " + std::to_string(n) + " is not a power of two >= 4");
  }
}

}  // namespace

CaseId parse_case(const std::string& name) {
  for (const auto& [id, text] : kCaseNames) {
    if (name == text) return id;
  }
  throw validation_error("unknown case '" + name +
                         "' (expected example1, example2, case1, case2, case3, call_center)");
}

const char* case_name(CaseId id) {
  for (const auto& [cid, text] : kCaseNames) {
    if (cid == id) return text;
  }
  return "?";
}

std::vector<ExperimentPlan> plan_case(CaseId id, const PlanOverrides& o) {
  std::vector<ExperimentPlan> plans;
  switch (id) {
    case CaseId::example1:
    case CaseId::example2: {
      std::vector<int> depths = o.depths.empty() ? std::vector<int>{1, 2, 3, 4} : o.depths;
      const std::size_t n = o.n.empty() ? 512 : o.n.front();
      check_n(n);
      for (int j : depths) {
        if (j < 1) throw validation_error("example depth must be at least 1");
        ExperimentPlan p;
        p.id = id;
        p.depth = j;
        p.n = n;
        p.label = std::string(case_name(id)) + "-j" + std::to_string(j);
        p.signal = signal_of(id == CaseId::example1 ? std::vector<NodeId>{{j, 0}}
                                                     : full_tree_nodes(j));
        p.model = constant_prior(0.1);
        p.kernels = variants({"bc", "tw", "ss"});
        p.chains = o.fast ? 10 : 50;
        p.steps = o.fast ? 100000 : 1000000;
        p.init = InitMode::null_tree;
        p.stop_on_hit = true;
        apply_common(p, o);
        plans.push_back(std::move(p));
      }
      break;
    }
    case CaseId::case1:
    case CaseId::case2:
    case CaseId::case3: {
      std::vector<std::size_t> ns = o.n;
      if (ns.empty()) {
        ns = o.fast ? std::vector<std::size_t>{128, 256}
                    : std::vector<std::size_t>{128, 256, 512, 1024, 2048};
      }
      for (auto n : ns) {
        check_n(n);
        ExperimentPlan p;
        p.id = id;
        p.n = n;
        p.label = std::string(case_name(id)) + "-n" + std::to_string(n);
        p.signal = signal_of(case_signal(id));
        p.model = simulation_prior();
        p.kernels = variants({"bc", "tw", "ibc", "itw", "ss", "ss2"});
        p.chains = 10;
        p.steps = o.fast ? 20000 : 100000;
        p.init = InitMode::random_grows;
        apply_common(p, o);
        plans.push_back(std::move(p));
      }
      break;
    }
    case CaseId::call_center: {
      if (!o.counts) throw usage_error("call_center needs a counts file (--counts)");
      ExperimentPlan p;
      p.id = id;
      p.n = kCountSampleSize;
      p.sigma = 0.5;
      p.label = "call_center";
      p.counts = o.counts;
      p.model = simulation_prior();
      p.kernels = variants({"bc", "ibc", "tw", "itw", "ss", "ss2"});
      for (auto& v : p.kernels) {
        if (v.label == "ss") v.slab = SlabPrior::constant001;
        if (v.label == "ss2") v.slab = SlabPrior::constant001_geometric6_half;
      }
      p.chains = 10;
      p.steps = o.fast ? 10000 : 100000;
      p.init = InitMode::random_grows;
      apply_common(p, o);
      plans.push_back(std::move(p));
      break;
    }
  }
  return plans;
}

std::vector<double> plan_data(const ExperimentPlan& plan) {
  if (plan.counts) {
    std::ifstream in(*plan.counts);
    if (!in) throw io_error("cannot open counts file " + plan.counts->string());
    return ingest_counts(in).y;
  }
  return generate_dataset(plan.signal, RegularDesign::from_n(plan.n));
}

std::vector<std::size_t> signal_positions(const ExperimentPlan& plan) {
  std::vector<std::size_t> out;
  for (const auto& [node, beta] : plan.signal.coefficients) {
    if (node.level >= 0 && beta != 0.0) out.push_back(position(node));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<std::size_t> spanning_positions(const ExperimentPlan& plan, int depth_cap) {
  const NodeSet t = spanning_tree(depth_cap, plan.signal.support());
  std::vector<std::size_t> out;
  t.for_each([&](std::size_t p) {
    if (p > 0) out.push_back(p);
  });
  return out;
}

namespace {

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw io_error("failed writing " + path.string());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path.string());
  return out;
}

}  // namespace

ResultBundle run_plan(const ExperimentPlan& plan, const std::optional<fs::path>& outdir,
                      int threads) {
  ResultBundle bundle;
  bundle.plan = plan;
  const auto y = plan_data(plan);
  const auto design = RegularDesign::from_n(y.size());
  const auto raw = haar_inner_products(y, design);
  const auto B = signal_positions(plan);

  fs::path root;
  if (outdir) {
    root = *outdir / plan.label;
    fs::create_directories(root);
    auto data = open_out(root / "data.csv");
    write_dataset_csv(data, y);
  }

  for (const auto& v : plan.kernels) {
    ModelConfig model = plan.model;
    model.slab_prior = v.slab;
    const PosteriorEngine engine(raw, model, plan.sigma);
    const int L = engine.depth_cap();
    const bool tree = is_tree_kernel(v.spec.kind);
    std::vector<std::size_t> truth = B;
    if (tree && !B.empty()) truth = spanning_positions(plan, L);
    std::vector<std::size_t> monitored = B;
    if (monitored.empty()) {
      for (std::size_t p = 1; p < (std::size_t{1} << L); ++p) monitored.push_back(p);
    }

    RunOptions ro;
    ro.kernel = v.spec;
    ro.chains = plan.chains;
    ro.steps = plan.steps;
    ro.record_every = plan.record_every;
    ro.seed = plan.seed;
    ro.init = plan.init;
    ro.hit_target = truth;
    ro.stop_on_hit = plan.stop_on_hit && !truth.empty();
    ro.threads = threads;

    KernelResult kr;
    kr.variant = v;
    kr.warnings = engine.warnings();
    kr.traces = run_chains(engine, ro);
    auto dopt = plan.diagnostics;
    if (plan.stop_on_hit) monitored.clear();  // chains stop at different times
    kr.report = diagnose(kr.traces, raw, truth, monitored, dopt);

    if (outdir) {
      const fs::path dir = root / v.label;
      fs::create_directories(dir);
      for (const auto& t : kr.traces) {
        auto out = open_out(dir / ("trace_" + std::to_string(t.chain) + ".csv"));
        write_trace_csv(out, t);
      }
      auto j = to_json(kr.report);
      j["case"] = case_name(plan.id);
      j["label"] = plan.label;
      j["kernel"] = v.label;
      j["n"] = plan.n;
      j["L"] = L;
      j["seed"] = plan.seed;
      j["chains"] = plan.chains;
      j["steps"] = plan.steps;
      j["init"] = plan.init == InitMode::null_tree ? "null" : "random_grows";
      j["warnings"] = kr.warnings;
      write_json(dir / "report.json", j);
      if (!kr.report.bgr.steps.empty()) {
        auto out = open_out(dir / "bgr.csv");
        write_bgr_csv(out, kr.report.bgr);
      }
      if (plan.id == CaseId::call_center) {
        auto out = open_out(dir / "mse.csv");
        out << "chain,step,mse\n";
        char buf[40];
        for (const auto& t : kr.traces) {
          const auto m = mse_trace(t, raw);
          for (std::size_t r = 0; r < m.size(); ++r) {
            std::snprintf(buf, sizeof buf, "%.10g", m[r]);
            out << t.chain << ',' << t.records[r].step << ',' << buf << '\n';
          }
        }
      }
    }
    bundle.kernels.push_back(std::move(kr));
  }

  if (outdir) {
    const auto rows = result_rows(bundle);
    auto res = open_out(root / "results.csv");
    write_result_rows(res, rows);
    auto sum = open_out(root / "summary.csv");
    write_summary_csv(sum, summarize(rows));
  }
  return bundle;
}

std::vector<ResultRow> result_rows(const ResultBundle& bundle) {
  std::vector<ResultRow> rows;
  const auto& p = bundle.plan;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& k : bundle.kernels) {
    auto add = [&](const std::string& metric, int chain, double value) {
      rows.push_back({case_name(p.id), p.label, k.variant.label, metric, p.n, p.depth, p.seed, chain,
                      value});
    };
    const auto& r = k.report;
    for (std::size_t c = 0; c < r.hit_contains.size(); ++c) {
      const int chain = static_cast<int>(c);
      const auto hc = r.hit_contains[c], he = r.hit_equals[c];
      // censored at the step budget
      add("hit_contains", chain, hc == kNotHit ? static_cast<double>(p.steps) : static_cast<double>(hc));
      add("hit_contains_missed", chain, hc == kNotHit ? 1.0 : 0.0);
      if (!p.stop_on_hit) {
        add("hit_equals", chain, he == kNotHit ? static_cast<double>(p.steps) : static_cast<double>(he));
        add("hit_equals_missed", chain, he == kNotHit ? 1.0 : 0.0);
      }
      add("final_mse", chain, r.final_mse[c]);
      add("accept_rate", chain, acceptance_rate(k.traces[c]));
    }
    if (!p.stop_on_hit) {
      add("tau_bgr", -1, static_cast<double>(r.tau_bgr));
      double min_worst = nan;
      for (double w : r.bgr.worst) {
        if (std::isnan(min_worst) || w < min_worst) min_worst = w;
      }
      add("min_worst_bgr", -1, std::isnan(min_worst) ? nan : std::min(min_worst, kBgrInfinity));
      add("f1", -1, r.f1.f1);
      add("precision", -1, r.f1.precision);
      add("recall", -1, r.f1.recall);
    }
  }
  return rows;
}

void write_result_rows(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << "case,label,n,depth,kernel,seed,metric,chain,value\n";
  char buf[40];
  for (const auto& r : rows) {
    if (std::isnan(r.value)) std::snprintf(buf, sizeof buf, "nan");
    else std::snprintf(buf, sizeof buf, "%.17g", r.value);
    out << r.case_name << ',' << r.label << ',' << r.n << ',' << r.depth << ',' << r.kernel << ','
        << r.seed << ',' << r.metric << ',' << r.chain << ',' << buf << '\n';
  }
  if (!out) throw io_error("failed writing result rows");
}

std::vector<ResultRow> read_result_rows(std::istream& in) {
  std::vector<ResultRow> rows;
  std::string line;
  if (!std::getline(in, line) || line.rfind("case,label,", 0) != 0) {
    throw validation_error("results file lacks the expected header");
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 9) throw validation_error("malformed results row at line " + std::to_string(lineno));
    try {
      ResultRow r;
      r.case_name = f[0];
      r.label = f[1];
      r.n = std::stoull(f[2]);
      r.depth = std::stoi(f[3]);
      r.kernel = f[4];
      r.seed = std::stoull(f[5]);
      r.metric = f[6];
      r.chain = std::stoi(f[7]);
      r.value = f[8] == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(f[8]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw validation_error("unparseable results row at line " + std::to_string(lineno));
    }
  }
  return rows;
}

double quantile_sorted(const std::vector<double>& s, double q) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double h = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (h - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
  std::vector<SummaryRow> out;
  std::vector<std::vector<double>> values;
  std::map<std::tuple<std::string, std::string, std::string>, std::size_t> slot;
  for (const auto& r : rows) {
    const auto key = std::make_tuple(r.label, r.kernel, r.metric);
    auto it = slot.find(key);
    if (it == slot.end()) {
      it = slot.emplace(key, out.size()).first;
      SummaryRow s;
      s.case_name = r.case_name;
      s.label = r.label;
      s.kernel = r.kernel;
      s.metric = r.metric;
      s.n = r.n;
      s.depth = r.depth;
      out.push_back(s);
      values.emplace_back();
    }
    auto& s = out[it->second];
    if (std::isnan(r.value)) ++s.missing;
    else values[it->second].push_back(r.value);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& v = values[i];
    std::sort(v.begin(), v.end());
    auto& s = out[i];
    s.count = v.size();
    s.min = quantile_sorted(v, 0.0);
    s.q25 = quantile_sorted(v, 0.25);
    s.median = quantile_sorted(v, 0.5);
    s.q75 = quantile_sorted(v, 0.75);
    s.max = quantile_sorted(v, 1.0);
  }
  return out;
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
  out << "case,label,n,depth,kernel,metric,count,missing,min,q25,median,q75,max\n";
  char buf[200];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%.10g,%.10g,%.10g,%.10g,%.10g", r.count, r.missing,
                  r.min, r.q25, r.median, r.q75, r.max);
    out << r.case_name << ',' << r.label << ',' << r.n << ',' << r.depth << ',' << r.kernel << ','
        << r.metric << ',' << buf << '\n';
  }
  if (!out) throw io_error("failed writing summary");
}

}  // namespace dyadcart
