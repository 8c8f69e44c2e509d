// dyadcart: data generation, sampling, exact oracle audits and canned experiments.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dyadcart/chains.hpp"
#include "dyadcart/config.hpp"
#include "dyadcart/diagnostics.hpp"
#include "dyadcart/error.hpp"
#include "dyadcart/experiments.hpp"
#include "dyadcart/haar.hpp"
#include "dyadcart/kernels.hpp"
#include "dyadcart/oracle.hpp"
#include "dyadcart/posterior.hpp"

namespace fs = std::filesystem;
using namespace dyadcart;

namespace {

const std::map<std::string, SlabPrior> kSlabNames = {
    {"tree", SlabPrior::same_as_tree},
    {"geometric6", SlabPrior::geometric6},
    {"geometric6-half", SlabPrior::geometric6_half},
    {"const001", SlabPrior::constant001},
    {"const001-geometric6-half", SlabPrior::constant001_geometric6_half},
};

struct ModelFlags {
  double c = 3.0;
  double alpha = 1.0;
  int L = 0;
  double D = 2.0;
  double lower = 1.0;
  double upper = std::exp(10.0);
  std::string slab = "tree";

  void add(CLI::App* app) {
    app->add_option("--c", c, "split probability exponent c in p = min(alpha n^-c, 0.499)")
        ->capture_default_str();
    app->add_option("--alpha", alpha, "split probability multiplier alpha")->capture_default_str();
    app->add_option("--L", L, "depth cap L (0 selects Lmax = log2(n) - 1)")->capture_default_str();
    app->add_option("--D", D, "twiggy layer weight base D (weights D^-l)")->capture_default_str();
    app->add_option("--informed-lower", lower, "informed prune weight lower clamp")
        ->capture_default_str();
    app->add_option("--informed-upper", upper, "informed weight upper clamp (default e^10)")
        ->capture_default_str();
    app->add_option("--slab", slab, "spike-and-slab level schedule: tree (same as the split "
                                    "probability), geometric6 (0.01 n^(1/4) 6^-l), geometric6-half, "
                                    "const001, const001-geometric6-half")
        ->capture_default_str();
  }

  ModelConfig config() const {
    ModelConfig m;
    m.c = c;
    m.alpha = alpha;
    m.depth_cap = L;
    m.twig_base = D;
    m.informed_lower = lower;
    m.informed_upper = upper;
    const auto it = kSlabNames.find(slab);
    if (it == kSlabNames.end()) throw usage_error("unknown slab schedule '" + slab + "'");
    m.slab_prior = it->second;
    return m;
  }
};

struct DataFlags {
  std::string case_name;
  std::size_t n = 0;
  int depth = 3;
  std::uint64_t seed = 1;
  std::optional<double> sigma;
  std::string counts;
  std::string data;

  void add(CLI::App* app, bool with_data_file) {
    app->add_option("--case", case_name,
                    "simulated signal: example1, example2, case1, case2, case3 (default case1)");
    app->add_option("--n", n, "sample size, a power of two (default 128)");
    app->add_option("--depth", depth, "signal depth j of the examples")->capture_default_str();
    app->add_option("--data-seed", seed, "seed of the simulated noise")->capture_default_str();
    app->add_option("--sigma", sigma, "known noise level (default 1, or 0.5 for counts)");
    app->add_option("--counts", counts, "file of 2048 call counts; uses y = sqrt(N + 1/4)");
    if (with_data_file) app->add_option("--data", data, "dataset CSV with header i,x,y");
  }

  struct Loaded {
    std::vector<double> y;
    double sigma = 1.0;
    std::optional<ExperimentPlan> plan;  // simulated data only
  };

  Loaded load() const {
    const int sources = !case_name.empty() + !counts.empty() + !data.empty();
    if (sources > 1) throw usage_error("--case, --counts and --data are mutually exclusive");
    Loaded out;
    if (!counts.empty()) {
      std::ifstream in(counts);
      if (!in) throw io_error("cannot open counts file " + counts);
      const auto cd = ingest_counts(in);
      out.y = cd.y;
      out.sigma = sigma.value_or(cd.sigma);
      return out;
    }
    if (!data.empty()) {
      std::ifstream in(data);
      if (!in) throw io_error("cannot open dataset " + data);
      out.y = read_dataset_csv(in);
      out.sigma = sigma.value_or(1.0);
      return out;
    }
    PlanOverrides o;
    o.n = {n == 0 ? 128 : n};
    o.depths = {depth};
    o.seed = seed;
    const auto id = parse_case(case_name.empty() ? "case1" : case_name);
    if (id == CaseId::call_center) throw usage_error("call_center data comes from --counts");
    auto plans = plan_case(id, o);
    auto plan = plans.front();
    plan.signal.seed = seed;
    // small n: keep only the part of the signal the design can represent
    const int lmax = RegularDesign::from_n(plan.n).max_level;
    auto& coef = plan.signal.coefficients;
    const auto before = coef.size();
    std::erase_if(coef, [&](const auto& c) { return c.first.level >= lmax; });
    if (coef.size() != before) {
      std::cerr << "warning: dropped " << before - coef.size()
                << " signal nodes at or below level Lmax=" << lmax << '\n';
    }
    if (sigma) {
      if (*sigma < 0) throw validation_error("sigma must be nonnegative");
      plan.signal.noise_sd = *sigma;
    }
    out.y = generate_dataset(plan.signal, RegularDesign::from_n(plan.n));
    out.sigma = sigma.value_or(1.0);
    if (out.sigma == 0.0) out.sigma = 1.0;
    out.plan = plan;
    return out;
  }
};

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw io_error("cannot write " + p.string());
  return out;
}

std::vector<std::size_t> parse_positions(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string tok;
  while (ss >> tok) {
    const auto node = parse_node(tok);
    if (node.level < 0) continue;
    out.push_back(position(node));
  }
  return out;
}

// ------------------------------------------------------------- gen-data

struct GenData {
  DataFlags data;
  std::string out;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("gen-data", "simulate a dataset or transform call counts");
    data.add(sub, false);
    sub->add_option("--out", out, "output CSV (i,x,y)")->required();
    sub->callback([this] { run(); });
  }

  void run() {
    const auto d = data.load();
    auto f = open_out(out);
    write_dataset_csv(f, d.y);
  }
};

// ------------------------------------------------------------------ run

struct Run {
  DataFlags data;
  ModelFlags model;
  std::string kernel = "bc";
  bool lazy = false;
  int chains = 10;
  std::uint64_t steps = 10000;
  std::uint64_t record_every = 100;
  std::uint64_t seed = 1;
  std::string init = "random";
  std::string out;
  std::string truth;
  int threads = 0;
  std::size_t window = 100;
  double bgr_alpha = 1.1;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("run", "run independent MH chains and their diagnostics");
    data.add(sub, true);
    model.add(sub);
    sub->add_option("--kernel", kernel, "bc, tw, ibc, itw or ss")->capture_default_str();
    sub->add_flag("--lazy", lazy, "hold with probability 1/2 before each proposal");
    sub->add_option("--chains", chains, "number of chains")->capture_default_str();
    sub->add_option("--steps", steps, "MH steps per chain")->capture_default_str();
    sub->add_option("--record-every", record_every, "record cadence in steps")->capture_default_str();
    sub->add_option("--seed", seed, "base seed of the chain streams")->capture_default_str();
    sub->add_option("--init", init, "initial state: null or random (r ~ U{0..2^L/4} grows)")
        ->capture_default_str();
    sub->add_option("--truth", truth, "true internal nodes 'l:k ...' for hitting times and F1 "
                                      "(default: T* of the simulated signal)");
    sub->add_option("--window", window, "local BGR window in records")->capture_default_str();
    sub->add_option("--bgr-alpha", bgr_alpha, "BGR alpha-time threshold")->capture_default_str();
    sub->add_option("--threads", threads, "worker threads (0 = OpenMP default)");
    sub->add_option("--out", out, "output directory for traces and report.json");
    sub->callback([this] { execute(); });
  }

  void execute() {
    const auto d = data.load();
    const auto raw = haar_inner_products(d.y, RegularDesign::from_n(d.y.size()));
    const PosteriorEngine engine(raw, model.config(), d.sigma);
    for (const auto& w : engine.warnings()) std::cerr << "warning: " << w << '\n';
    const int L = engine.depth_cap();

    RunOptions ro;
    ro.kernel = KernelSpec{parse_kernel(kernel), lazy};
    ro.chains = chains;
    ro.steps = steps;
    ro.record_every = record_every;
    ro.seed = seed;
    ro.threads = threads;
    if (init == "null") ro.init = InitMode::null_tree;
    else if (init == "random") ro.init = InitMode::random_grows;
    else throw usage_error("--init must be null or random");

    std::vector<std::size_t> target;
    if (!truth.empty()) {
      target = parse_positions(truth);
    } else if (d.plan) {
      target = is_tree_kernel(ro.kernel.kind) ? spanning_positions(*d.plan, L)
                                              : signal_positions(*d.plan);
    }
    for (auto p : target) {
      if (p >= (std::size_t{1} << L)) throw validation_error("truth node lies below the depth cap");
    }
    ro.hit_target = target;
    const auto traces = run_chains(engine, ro);

    std::vector<std::size_t> monitored;
    if (d.plan) monitored = signal_positions(*d.plan);
    if (monitored.empty()) monitored = target;
    if (monitored.empty()) {
      for (std::size_t p = 1; p < (std::size_t{1} << L); ++p) monitored.push_back(p);
    }
    DiagnosticsOptions dopt;
    dopt.window = window;
    dopt.alpha = bgr_alpha;
    dopt.cap = steps;
    const auto rep = diagnose(traces, raw, target, monitored, dopt);
    auto j = to_json(rep);
    j["kernel"] = std::string(kernel_code(ro.kernel.kind));
    j["lazy"] = lazy;
    j["n"] = raw.n;
    j["L"] = L;
    j["chains"] = chains;
    j["steps"] = steps;
    j["seed"] = seed;
    j["warnings"] = engine.warnings();

    if (!out.empty()) {
      fs::create_directories(out);
      for (const auto& t : traces) {
        auto f = open_out(fs::path(out) / ("trace_" + std::to_string(t.chain) + ".csv"));
        write_trace_csv(f, t);
      }
      auto f = open_out(fs::path(out) / "report.json");
      f << j.dump(2) << '\n';
      if (!rep.bgr.steps.empty()) {
        auto b = open_out(fs::path(out) / "bgr.csv");
        write_bgr_csv(b, rep.bgr);
      }
    }
    std::cout << j.dump(2) << '\n';
  }
};

// --------------------------------------------------------------- oracle

struct Oracle {
  DataFlags data;
  ModelFlags model;
  std::string kernel = "bc";
  int L = 2;
  std::vector<std::string> checks{"all"};
  bool eager = false;
  double epsilon = 0.25;
  bool large_conductance = false;
  std::string path_kind = "auto";
  std::string out;
  std::string matrix_csv;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("oracle", "exact audit of one kernel on an enumerated space");
    data.add(sub, true);
    model.add(sub);
    sub->add_option("--kernel", kernel, "bc, tw, ibc, itw or ss")->capture_default_str();
    sub->add_option("--check", checks, "balance, gap, conductance, paths, drift, tv or all")
        ->delimiter(',')
        ->capture_default_str();
    sub->add_flag("--no-lazy", eager, "audit the non-lazy chain");
    sub->add_option("--epsilon", epsilon, "TV mixing threshold")->capture_default_str();
    sub->add_flag("--allow-large-conductance", large_conductance,
                  "enumerate all 2^26 subsets at L=3 (slow)");
    sub->add_option("--paths", path_kind, "canonical paths: auto, classic or twiggy")
        ->capture_default_str();
    sub->add_option("--out", out, "write the JSON report here");
    sub->add_option("--matrix-csv", matrix_csv, "dump P as i,j,p rows");
    sub->callback([this] { execute(); });
  }

  void execute() {
    L = model.L == 0 ? 2 : model.L;
    if (L < 1 || L > 5) throw validation_error("oracle depth cap must lie in [1, 5], got " + std::to_string(L));
    DataFlags df = data;
    if (df.case_name.empty() && df.counts.empty() && df.data.empty()) df.case_name = "case1";
    if (df.n == 0) df.n = std::max<std::size_t>(16, std::size_t{1} << (L + 1));
    const auto d = df.load();
    const auto raw = haar_inner_products(d.y, RegularDesign::from_n(d.y.size()));
    auto cfg = model.config();
    cfg.depth_cap = L;
    const PosteriorEngine engine(raw, cfg, d.sigma);
    for (const auto& w : engine.warnings()) std::cerr << "warning: " << w << '\n';

    const KernelSpec spec{parse_kernel(kernel), !eager};
    OracleOptions opt;
    bool all = false;
    opt.balance = opt.gap = opt.conductance = opt.paths = opt.drift = opt.tv = false;
    for (const auto& c : checks) {
      if (c == "all") all = true;
      else if (c == "balance") opt.balance = true;
      else if (c == "gap") opt.gap = true;
      else if (c == "conductance") opt.conductance = true;
      else if (c == "paths") opt.paths = true;
      else if (c == "drift") opt.drift = true;
      else if (c == "tv") opt.tv = true;
      else throw usage_error("unknown check '" + c + "'");
    }
    if (all) opt.balance = opt.gap = opt.conductance = opt.paths = opt.drift = opt.tv = true;
    opt.epsilon = epsilon;
    opt.allow_large_conductance = large_conductance;
    const bool twig = spec.kind == KernelKind::twiggy || spec.kind == KernelKind::informed_twiggy;
    if (path_kind == "auto") opt.path_kind = twig ? PathKind::twiggy : PathKind::classic;
    else if (path_kind == "classic") opt.path_kind = PathKind::classic;
    else if (path_kind == "twiggy") opt.path_kind = PathKind::twiggy;
    else throw usage_error("--paths must be auto, classic or twiggy");

    std::vector<NodeId> signal;
    if (d.plan) {
      for (const auto& node : d.plan->signal.support()) {
        if (node.level >= 0 && node.level < L) signal.push_back(node);
      }
    }
    opt.t_star = spanning_tree(L, signal);

    const auto rep = run_oracle(engine, spec, opt);
    auto j = to_json(rep);
    j["n"] = raw.n;
    j["t_star"] = encode_state(*opt.t_star);
    if (!out.empty()) {
      auto f = open_out(out);
      f << j.dump(2) << '\n';
    }
    if (!matrix_csv.empty()) {
      auto f = open_out(matrix_csv);
      write_matrix_csv(f, build_transition_matrix(engine, spec));
    }
    std::cout << j.dump(2) << '\n';
    if (rep.failed()) throw validation_error("oracle report FAILED");
  }
};

// ------------------------------------------------------------ reproduce

struct Reproduce {
  std::string case_name;
  bool fast = false;
  std::string out = "results";
  std::string counts;
  std::optional<std::uint64_t> steps, seed, record_every;
  std::optional<int> chains;
  std::vector<std::size_t> n;
  std::vector<int> depths;
  std::vector<std::string> kernels;
  int threads = 0;

  void add(CLI::App& app) {
    auto* sub = app.add_subcommand("reproduce", "run a canned experiment and write its bundle");
    sub->add_option("--case", case_name,
                    "example1, example2, case1, case2, case3 or call_center")->required();
    sub->add_flag("--fast", fast, "scaled-down run");
    sub->add_option("--out", out, "bundle root directory")->capture_default_str();
    sub->add_option("--counts", counts, "call count file (call_center)");
    sub->add_option("--steps", steps, "override steps per chain (examples: 1e6, cases: 1e5)");
    sub->add_option("--chains", chains, "override chain count (examples: 50, cases: 10)");
    sub->add_option("--seed", seed, "override the base seed (default 0)");
    sub->add_option("--record-every", record_every, "override the record cadence (default 100)");
    sub->add_option("--sizes", n, "sample sizes to sweep")->delimiter(',');
    sub->add_option("--depths", depths, "example signal depths to sweep")->delimiter(',');
    sub->add_option("--kernels", kernels, "kernel labels to run (bc,tw,ibc,itw,ss,ss2)")
        ->delimiter(',');
    sub->add_option("--threads", threads, "worker threads (0 = OpenMP default)");
    sub->callback([this] { execute(); });
  }

  void execute() {
    PlanOverrides o;
    o.fast = fast;
    o.steps = steps;
    o.chains = chains;
    o.seed = seed;
    o.record_every = record_every;
    o.n = n;
    o.depths = depths;
    o.kernels = kernels;
    if (!counts.empty()) o.counts = fs::path(counts);
    const auto plans = plan_case(parse_case(case_name), o);
    const fs::path root = fs::path(out) / case_name;
    std::vector<ResultRow> all;
    for (const auto& p : plans) {
      std::cerr << "running " << p.label << '\n';
      const auto bundle = run_plan(p, root, threads);
      const auto rows = result_rows(bundle);
      all.insert(all.end(), rows.begin(), rows.end());
    }
    fs::create_directories(root);
    auto r = open_out(root / "results.csv");
    write_result_rows(r, all);
    auto s = open_out(root / "summary.csv");
    const auto table = summarize(all);
    write_summary_csv(s, table);
    write_summary_csv(std::cout, table);
  }
};

KeyKind classify(CLI::App* sub, const std::string& key) {
  if (key == "config" || key == "help") return KeyKind::unknown;
  const CLI::Option* opt = sub->get_option_no_throw("--" + key);
  if (opt == nullptr) return KeyKind::unknown;
  return opt->get_type_size_max() == 0 ? KeyKind::flag : KeyKind::value;
}

// Splices `--config FILE` entries in right after the subcommand so that
// explicit flags, which come later, win.
std::vector<std::string> expand_config(CLI::App& app, std::vector<std::string> args) {
  if (args.empty()) return args;
  CLI::App* sub = nullptr;
  for (auto* s : app.get_subcommands({})) {
    if (s->get_name() == args.front()) sub = s;
  }
  if (sub == nullptr) return args;
  std::vector<std::string> rest{args.front()}, tokens;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" || args[i].rfind("--config=", 0) == 0) {
      std::string path;
      if (args[i] == "--config") {
        if (i + 1 >= args.size()) throw usage_error("--config needs a file");
        path = args[++i];
      } else {
        path = args[i].substr(9);
      }
      const auto more =
          config_tokens(load_config(path), [&](const std::string& k) { return classify(sub, k); });
      tokens.insert(tokens.end(), more.begin(), more.end());
    } else {
      rest.push_back(args[i]);
    }
  }
  std::vector<std::string> out{rest.front()};
  out.insert(out.end(), tokens.begin(), tokens.end());
  out.insert(out.end(), rest.begin() + 1, rest.end());
  return out;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage: return 2;
    case ErrorKind::validation: return 3;
    case ErrorKind::io: return 4;
  }
  return 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian dyadic CART samplers, exact chain oracle and experiments", "dyadcart"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.set_version_flag("--version", "dyadcart 1.0 (rng stream 1)");

  GenData gen;
  Run run;
  Oracle oracle;
  Reproduce repro;
  gen.add(app);
  run.add(app);
  oracle.add(app);
  repro.add(app);
  for (auto* s : app.get_subcommands({})) {
    s->add_option("--config", "flat key = value file with header 'dyadcart-config 1'; "
                              "later flags override it");
  }

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(app, args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
