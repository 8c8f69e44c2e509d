#include "dyadcart/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "dyadcart/error.hpp"

namespace dyadcart {

IndicatorPanel IndicatorPanel::from_traces(const std::vector<ChainTrace>& traces) {
  IndicatorPanel panel;
  if (traces.empty()) return panel;
  const std::size_t m = traces.front().records.size();
  for (const auto& t : traces) {
    if (t.records.size() != m) {
      throw validation_error("chains have different numbers of records");
    }
  }
  for (const auto& r : traces.front().records) panel.steps.push_back(r.step);
  panel.chains.reserve(traces.size());
  for (const auto& t : traces) {
    std::vector<NodeSet> states;
    states.reserve(m);
    for (const auto& r : t.records) states.push_back(r.state);
    panel.chains.push_back(std::move(states));
  }
  return panel;
}

double bgr_statistic(const std::vector<std::vector<double>>& samples) {
  const std::size_t K = samples.size();
  if (K < 2) throw validation_error("BGR needs at least two chains");
  const std::size_t m = samples.front().size();
  if (m < 2) throw validation_error("BGR needs at least two draws per chain");
  std::vector<double> means(K, 0.0);
  double W = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    if (samples[k].size() != m) throw validation_error("BGR chains have unequal lengths");
    double s = 0.0;
    for (double v : samples[k]) s += v;
    means[k] = s / static_cast<double>(m);
    double ss = 0.0;
    for (double v : samples[k]) ss += (v - means[k]) * (v - means[k]);
    W += ss / static_cast<double>(m - 1);
  }
  W /= static_cast<double>(K);
  double grand = 0.0;
  for (double v : means) grand += v;
  grand /= static_cast<double>(K);
  double B = 0.0;
  for (double v : means) B += (v - grand) * (v - grand);
  B *= static_cast<double>(m) / static_cast<double>(K - 1);
  if (W == 0.0) return B == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
  const double md = static_cast<double>(m);
  return ((md - 1.0) / md * W + B / md) / W;
}

double local_bgr(const IndicatorPanel& panel, std::size_t pos, std::size_t t,
                 std::size_t window) {
  if (t < window || t > panel.records()) {
    throw validation_error("local BGR needs window <= t <= number of records");
  }
  std::vector<std::vector<double>> samples(panel.chain_count());
  for (std::size_t k = 0; k < panel.chain_count(); ++k) {
    for (std::size_t i = t - window; i < t; ++i) {
      samples[k].push_back(panel.chains[k][i].test(pos) ? 1.0 : 0.0);
    }
  }
  return bgr_statistic(samples);
}

namespace {

// BGR of 0/1 indicators from per-chain window counts c_k out of m.
double bgr_from_counts(const std::vector<std::size_t>& c, std::size_t m) {
  const std::size_t K = c.size();
  bool frozen = true, agree = true;
  for (auto v : c) {
    frozen = frozen && (v == 0 || v == m);
    agree = agree && v == c.front();
  }
  if (frozen) return agree ? 1.0 : std::numeric_limits<double>::infinity();
  const double md = static_cast<double>(m);
  double W = 0.0, grand = 0.0;
  for (auto v : c) {
    const double cv = static_cast<double>(v);
    W += (cv - cv * cv / md) / (md - 1.0);
    grand += cv / md;
  }
  W /= static_cast<double>(K);
  grand /= static_cast<double>(K);
  double B = 0.0;
  for (auto v : c) B += (static_cast<double>(v) / md - grand) * (static_cast<double>(v) / md - grand);
  B *= md / static_cast<double>(K - 1);
  return ((md - 1.0) / md * W + B / md) / W;
}

}  // namespace

BgrSeries bgr_series(const IndicatorPanel& panel, const std::vector<std::size_t>& monitored,
                     std::size_t window) {
  if (window < 2) throw validation_error("BGR window must be at least 2");
  if (panel.chain_count() < 2) throw validation_error("BGR needs at least two chains");
  BgrSeries out;
  out.nodes = monitored;
  const std::size_t R = panel.records();
  if (R < window || monitored.empty()) return out;
  const std::size_t K = panel.chain_count();
  const std::size_t J = monitored.size();
  // counts[j][k]: number of records in the window that include node j
  std::vector<std::vector<std::size_t>> counts(J, std::vector<std::size_t>(K, 0));
  for (std::size_t j = 0; j < J; ++j) {
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t i = 0; i < window; ++i) counts[j][k] += panel.chains[k][i].test(monitored[j]);
    }
  }
  for (std::size_t t = window;; ++t) {
    std::vector<double> row(J);
    double worst = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
      row[j] = bgr_from_counts(counts[j], window);
      worst = std::max(worst, row[j]);
    }
    out.steps.push_back(panel.steps[t - 1]);
    out.values.push_back(std::move(row));
    out.worst.push_back(worst);
    if (t == R) break;
    for (std::size_t j = 0; j < J; ++j) {
      for (std::size_t k = 0; k < K; ++k) {
        counts[j][k] += panel.chains[k][t].test(monitored[j]);
        counts[j][k] -= panel.chains[k][t - window].test(monitored[j]);
      }
    }
  }
  return out;
}

std::uint64_t bgr_alpha_time(const BgrSeries& series, double alpha, std::uint64_t cap) {
  for (std::size_t i = 0; i < series.worst.size(); ++i) {
    if (series.steps[i] > cap) break;
    if (series.worst[i] <= alpha) return series.steps[i];
  }
  return cap;
}

std::uint64_t bgr_alpha_time(const IndicatorPanel& panel,
                             const std::vector<std::size_t>& monitored, double alpha,
                             std::size_t window, std::uint64_t cap) {
  if (monitored.empty()) throw validation_error("BGR alpha-time needs a monitored node");
  return bgr_alpha_time(bgr_series(panel, monitored, window), alpha, cap);
}

std::int64_t hitting_time(const ChainTrace& trace, const std::vector<std::size_t>& target,
                          HitMode mode) {
  if (target.empty()) throw validation_error("hitting time needs a nonempty target");
  auto hit = [&](const NodeSet& s) {
    for (auto p : target) {
      if (!s.test(p)) return false;
    }
    return mode == HitMode::contains || s.count() == target.size() + 1;
  };
  if (trace.initial.size() > 0 && hit(trace.initial)) return 0;
  for (const auto& r : trace.records) {
    if (hit(r.state)) return static_cast<std::int64_t>(r.step);
  }
  return kNotHit;
}

F1Score f1_score(const std::vector<NodeSet>& states, const std::vector<std::size_t>& truth) {
  if (truth.empty()) throw validation_error("F1 needs a nonempty truth set");
  if (states.empty()) throw validation_error("F1 needs at least one state");
  double prec = 0.0, rec = 0.0;
  for (const auto& s : states) {
    std::size_t hits = 0;
    for (auto p : truth) hits += s.test(p);
    const std::size_t size = s.count() - (s.test(0) ? 1 : 0);
    prec += size > 0 ? static_cast<double>(hits) / static_cast<double>(size) : 0.0;
    rec += static_cast<double>(hits) / static_cast<double>(truth.size());
  }
  F1Score out;
  out.precision = prec / static_cast<double>(states.size());
  out.recall = rec / static_cast<double>(states.size());
  const double d = out.precision + out.recall;
  out.f1 = d > 0.0 ? 2.0 * out.precision * out.recall / d : 0.0;
  return out;
}

F1Score f1_tail(const std::vector<ChainTrace>& traces, const std::vector<std::size_t>& truth,
                std::size_t tail) {
  std::vector<NodeSet> states;
  for (const auto& t : traces) {
    const std::size_t m = t.records.size();
    for (std::size_t i = m > tail ? m - tail : 0; i < m; ++i) states.push_back(t.records[i].state);
  }
  return f1_score(states, truth);
}

std::vector<double> fitted_values(const NodeSet& active, const SufficientStats& raw) {
  std::vector<double> coeff(raw.n, 0.0);
  const double n = static_cast<double>(raw.n);
  active.for_each([&](std::size_t p) { coeff[p] = raw.w[p] / n; });
  return haar_reconstruct(coeff, RegularDesign::from_n(raw.n));
}

double fit_mse(const NodeSet& active, const SufficientStats& raw) {
  const double n = static_cast<double>(raw.n);
  double explained = 0.0;
  active.for_each([&](std::size_t p) { explained += raw.w[p] * raw.w[p]; });
  return std::max(0.0, raw.yty - explained / n) / n;
}

std::vector<double> mse_trace(const ChainTrace& trace, const SufficientStats& raw) {
  std::vector<double> out;
  out.reserve(trace.records.size());
  for (const auto& r : trace.records) out.push_back(fit_mse(r.state, raw));
  return out;
}

double acceptance_rate(const ChainTrace& trace) {
  return trace.steps > 0 ? static_cast<double>(trace.accepted) / static_cast<double>(trace.steps)
                         : 0.0;
}

double acceptance_rate(const std::vector<ChainTrace>& traces) {
  std::uint64_t a = 0, s = 0;
  for (const auto& t : traces) {
    a += t.accepted;
    s += t.steps;
  }
  return s > 0 ? static_cast<double>(a) / static_cast<double>(s) : 0.0;
}

DiagnosticsReport diagnose(const std::vector<ChainTrace>& traces, const SufficientStats& raw,
                           const std::vector<std::size_t>& truth,
                           const std::vector<std::size_t>& monitored,
                           const DiagnosticsOptions& options) {
  DiagnosticsReport rep;
  rep.hit_cap = options.cap;
  for (const auto& t : traces) {
    rep.hit_contains.push_back(t.hit_contains);
    rep.hit_equals.push_back(t.hit_equals);
    rep.final_mse.push_back(t.records.empty() ? fit_mse(t.initial, raw)
                                              : fit_mse(t.records.back().state, raw));
  }
  rep.accept_rate = acceptance_rate(traces);
  const bool has_records = !traces.empty() && !traces.front().records.empty();
  if (has_records && !truth.empty()) rep.f1 = f1_tail(traces, truth, options.f1_tail);
  if (has_records && traces.size() >= 2 && !monitored.empty()) {
    rep.bgr = bgr_series(IndicatorPanel::from_traces(traces), monitored, options.window);
    rep.tau_bgr = bgr_alpha_time(rep.bgr, options.alpha, options.cap);
  } else {
    rep.tau_bgr = options.cap;
  }
  return rep;
}

namespace {
double finite_or_cap(double v) { return std::isfinite(v) ? std::min(v, kBgrInfinity) : kBgrInfinity; }
}  // namespace

nlohmann::json to_json(const DiagnosticsReport& r) {
  nlohmann::json j;
  j["tau_bgr"] = r.tau_bgr;
  auto hits = [&](const std::vector<std::int64_t>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (auto h : v) a.push_back(h == kNotHit ? nlohmann::json(nullptr) : nlohmann::json(h));
    return a;
  };
  j["hit_contains"] = hits(r.hit_contains);
  j["hit_equals"] = hits(r.hit_equals);
  j["hit_cap"] = r.hit_cap;
  j["f1"] = r.f1.f1;
  j["precision"] = r.f1.precision;
  j["recall"] = r.f1.recall;
  j["accept_rate"] = r.accept_rate;
  j["final_mse"] = r.final_mse;
  double min_worst = kBgrInfinity;
  for (double v : r.bgr.worst) min_worst = std::min(min_worst, finite_or_cap(v));
  j["min_worst_bgr"] = r.bgr.worst.empty() ? nlohmann::json(nullptr) : nlohmann::json(min_worst);
  return j;
}

void write_bgr_csv(std::ostream& out, const BgrSeries& series) {
  out << "t,node,bgr\n";
  char buf[64];
  for (std::size_t i = 0; i < series.steps.size(); ++i) {
    for (std::size_t j = 0; j < series.nodes.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%.10g", finite_or_cap(series.values[i][j]));
      out << series.steps[i] << ',' << to_string(node_at(series.nodes[j])) << ',' << buf << '\n';
    }
  }
  if (!out) throw io_error("failed writing BGR series");
}

}  // namespace dyadcart
