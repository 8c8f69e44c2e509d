#include "doctest.h"

#include <filesystem>
#include <sstream>

#include "dyadcart/config.hpp"
#include "dyadcart/error.hpp"
#include "dyadcart/experiments.hpp"

using namespace dyadcart;
namespace fs = std::filesystem;

TEST_CASE("experiments: case names") {
  for (auto id : {CaseId::example1, CaseId::example2, CaseId::case1, CaseId::case2, CaseId::case3,
                  CaseId::call_center}) {
    CHECK(parse_case(case_name(id)) == id);
  }
  CHECK_THROWS(parse_case("case9"));
}

TEST_CASE("experiments: plan shapes") {
  const auto ex1 = plan_case(CaseId::example1);
  REQUIRE(ex1.size() == 4);
  for (int j = 1; j <= 4; ++j) {
    const auto& p = ex1[static_cast<std::size_t>(j - 1)];
    CHECK(p.depth == j);
    CHECK(p.n == 512);
    CHECK(p.chains == 50);
    CHECK(p.steps == 1000000);
    CHECK(p.init == InitMode::null_tree);
    CHECK(signal_positions(p) == std::vector<std::size_t>{std::size_t{1} << j});
    CHECK(p.label == "example1-j" + std::to_string(j));
  }
  const auto ex2 = plan_case(CaseId::example2, {.depths = {3}});
  REQUIRE(ex2.size() == 1);
  CHECK(signal_positions(ex2[0]) == std::vector<std::size_t>{1, 2, 3, 4, 5, 6, 7});

  const auto c2 = plan_case(CaseId::case2, {.fast = true});
  REQUIRE(c2.size() == 2);
  CHECK(c2[0].signal.support() == std::vector<NodeId>{{4, 0}});
  CHECK(c2[0].kernels.size() == 6);
  for (const auto& p : plan_case(CaseId::case1)) CHECK(signal_positions(p).size() == 15);

  PlanOverrides o;
  o.steps = 123;
  o.chains = 2;
  o.kernels = {"tw"};
  const auto c3 = plan_case(CaseId::case3, o);
  CHECK(c3.size() == 5);
  CHECK(c3[0].steps == 123);
  CHECK(c3[0].chains == 2);
  REQUIRE(c3[0].kernels.size() == 1);
  CHECK(c3[0].kernels[0].spec.kind == KernelKind::twiggy);

  try {
    plan_case(CaseId::call_center);
    FAIL("expected a usage error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::usage);
  }
  CHECK_THROWS(plan_case(CaseId::case1, {.n = {100}}));
}

TEST_CASE("experiments: bundle shape and rerun equality") {
  PlanOverrides o;
  o.depths = {2};
  o.chains = 5;
  o.steps = 3000;
  o.seed = 4;
  const auto plan = plan_case(CaseId::example1, o).front();
  const auto a = run_plan(plan, std::nullopt, 1);
  const auto b = run_plan(plan, std::nullopt, 2);
  REQUIRE(a.kernels.size() == 3);
  for (const auto& k : a.kernels) CHECK(k.report.hit_contains.size() == 5);
  std::ostringstream ra, rb;
  write_result_rows(ra, result_rows(a));
  write_result_rows(rb, result_rows(b));
  CHECK(ra.str() == rb.str());
}

TEST_CASE("experiments: case bundle carries BGR times") {
  PlanOverrides o;
  o.n = {128};
  o.steps = 20000;
  o.chains = 4;
  o.kernels = {"bc", "ss"};
  const auto plan = plan_case(CaseId::case1, o).front();
  const fs::path dir = fs::temp_directory_path() / "dyadcart_test_bundle";
  fs::remove_all(dir);
  const auto bundle = run_plan(plan, dir, 1);
  const auto rows = result_rows(bundle);
  int tau = 0;
  for (const auto& r : rows) tau += r.metric == "tau_bgr";
  CHECK(tau == 2);
  for (const char* f : {"data.csv", "results.csv", "summary.csv", "bc/report.json", "bc/trace_0.csv",
                        "bc/bgr.csv", "ss/trace_3.csv"}) {
    CHECK(fs::exists(dir / plan.label / f));
  }
  fs::remove_all(dir);
}

TEST_CASE("experiments: quantiles and summaries") {
  const std::vector<double> v{1, 2, 3, 4, 5};
  CHECK(quantile_sorted(v, 0.0) == 1);
  CHECK(quantile_sorted(v, 0.5) == 3);
  CHECK(quantile_sorted(v, 0.25) == 2);
  CHECK(quantile_sorted({1, 2}, 0.5) == 1.5);
  double prev = 0;
  for (double q = 0; q <= 1.0; q += 0.05) {
    CHECK(quantile_sorted(v, q) >= prev);
    prev = quantile_sorted(v, q);
  }

  std::vector<ResultRow> rows;
  for (int c = 0; c < 7; ++c) rows.push_back({"case1", "case1-n128", "bc", "x", 128, 0, 1, c, 2.5});
  rows.push_back({"case1", "case1-n128", "bc", "x", 128, 0, 1, 7, std::nan("")});
  rows.push_back({"case1", "case1-n128", "tw", "x", 128, 0, 1, 0, 1.0});
  const auto s = summarize(rows);
  REQUIRE(s.size() == 2);
  CHECK(s[0].kernel == "bc");
  CHECK(s[0].count == 7);
  CHECK(s[0].missing == 1);
  CHECK(s[0].min == 2.5);
  CHECK(s[0].median == 2.5);
  CHECK(s[0].max == 2.5);

  std::stringstream io;
  write_result_rows(io, rows);
  const auto back = read_result_rows(io);
  REQUIRE(back.size() == rows.size());
  std::ostringstream s1, s2;
  write_summary_csv(s1, s);
  write_summary_csv(s2, summarize(back));
  CHECK(s1.str() == s2.str());
}

TEST_CASE("config: parsing") {
  std::istringstream ok("# run file\ndyadcart-config 1\nkernel = tw  # twiggy\nlazy = true\nsteps=500\n");
  const auto entries = parse_config(ok);
  REQUIRE(entries.size() == 3);
  CHECK(entries[0].key == "kernel");
  CHECK(entries[0].value == "tw");
  CHECK(entries[2].value == "500");

  auto classify = [](const std::string& k) {
    if (k == "lazy") return KeyKind::flag;
    if (k == "kernel" || k == "steps") return KeyKind::value;
    return KeyKind::unknown;
  };
  CHECK(config_tokens(entries, classify) ==
        std::vector<std::string>{"--kernel", "tw", "--lazy", "--steps", "500"});

  std::stringstream io;
  write_config(io, entries);
  const auto again = parse_config(io);
  CHECK(again.size() == 3);

  for (const char* bad : {"kernel = tw\n", "dyadcart-config 2\n", "dyadcart-config 1\nsteps\n",
                          "dyadcart-config 1\na = 1\na = 2\n", ""}) {
    std::istringstream in(bad);
    CHECK_THROWS_AS(parse_config(in), Error);
  }
  std::istringstream unknown("dyadcart-config 1\ncolour = red\n");
  CHECK_THROWS(config_tokens(parse_config(unknown), classify));
  std::istringstream badflag("dyadcart-config 1\nlazy = maybe\n");
  CHECK_THROWS(config_tokens(parse_config(badflag), classify));
  std::istringstream off("dyadcart-config 1\nlazy = false\n");
  CHECK(config_tokens(parse_config(off), classify).empty());
}
