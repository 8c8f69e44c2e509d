#include "dyadcart/haar.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "dyadcart/error.hpp"
#include "dyadcart/rng.hpp"

namespace dyadcart {

RegularDesign RegularDesign::from_n(std::size_t n) {
  if (n < 4 || !std::has_single_bit(n)) {
    throw validation_error("sample size " + std::to_string(n) +
                           " must be a power of two and at least 4");
  }
  return RegularDesign{n, static_cast<int>(std::bit_width(n)) - 2};
}

RegularDesign RegularDesign::from_max_level(int max_level) {
  if (max_level < 1 || max_level > 24) {
    throw validation_error("maximal resolution must lie in [1, 24]");
  }
  return RegularDesign{std::size_t{1} << (max_level + 1), max_level};
}

double haar_basis(NodeId node, double x) {
  if (node.level < 0) return (x >= 0.0 && x <= 1.0) ? 1.0 : 0.0;
  const double scale = std::ldexp(1.0, node.level);
  const double u = scale * x - static_cast<double>(node.index);
  const double amp = std::sqrt(scale);
  if (u > 0.0 && u <= 0.5) return amp;
  if (u > 0.5 && u <= 1.0) return -amp;
  return 0.0;
}

SufficientStats SufficientStats::scaled(double sigma) const {
  if (!(sigma > 0.0)) throw validation_error("noise level must be positive");
  SufficientStats out = *this;
  out.yty /= sigma * sigma;
  for (auto& v : out.w) v /= sigma;
  return out;
}

double SufficientStats::parseval_defect() const {
  double sum = 0.0;
  for (double v : w) sum += v * v;
  return std::abs(yty - sum / static_cast<double>(n)) / std::max(yty, 1.0);
}

SufficientStats haar_inner_products(std::span<const double> y, const RegularDesign& design) {
  if (design.n < 4 || !std::has_single_bit(design.n)) {
    throw validation_error("design size must be a power of two and at least 4");
  }
  if (y.size() != design.n) {
    throw validation_error("response has length " + std::to_string(y.size()) + ", expected " +
                           std::to_string(design.n));
  }
  const std::size_t n = design.n;
  SufficientStats stats;
  stats.n = n;
  stats.w.assign(n, 0.0);
  for (double v : y) stats.yty += v * v;

  // sums holds block sums at the current resolution; the wavelet at level l
  // is 2^(l/2) * (left half sum - right half sum) of its block.
  std::vector<double> sums(y.begin(), y.end());
  std::vector<double> next(n / 2);
  for (int level = design.max_level; level >= 0; --level) {
    const std::size_t blocks = std::size_t{1} << level;
    const double amp = std::sqrt(static_cast<double>(blocks));
    for (std::size_t k = 0; k < blocks; ++k) {
      const double a = sums[2 * k];
      const double b = sums[2 * k + 1];
      stats.w[blocks + k] = amp * (a - b);
      next[k] = a + b;
    }
    std::copy_n(next.begin(), blocks, sums.begin());
  }
  stats.w[0] = sums[0];
  return stats;
}

std::vector<double> haar_reconstruct(std::span<const double> coeff, const RegularDesign& design) {
  const std::size_t n = design.n;
  if (coeff.size() > n) throw validation_error("more coefficients than design columns");
  auto c = [&](std::size_t pos) { return pos < coeff.size() ? coeff[pos] : 0.0; };
  // values holds the function value on each block at the current resolution.
  std::vector<double> values(n, 0.0);
  std::vector<double> next(n, 0.0);
  values[0] = c(0);
  for (int level = 0; level <= design.max_level; ++level) {
    const std::size_t blocks = std::size_t{1} << level;
    const double amp = std::sqrt(static_cast<double>(blocks));
    for (std::size_t k = 0; k < blocks; ++k) {
      const double d = amp * c(blocks + k);
      next[2 * k] = values[k] + d;
      next[2 * k + 1] = values[k] - d;
    }
    std::copy_n(next.begin(), 2 * blocks, values.begin());
  }
  return values;
}

std::vector<NodeId> SignalSpec::support() const {
  std::vector<NodeId> out;
  for (const auto& [node, beta] : coefficients) out.push_back(node);
  return out;
}

double SignalSpec::max_abs_coefficient() const {
  double m = 0.0;
  for (const auto& [node, beta] : coefficients) m = std::max(m, std::abs(beta));
  return m;
}

std::vector<double> synthesize_signal(const SignalSpec& spec, const RegularDesign& design) {
  std::vector<double> coeff(design.n, 0.0);
  for (const auto& [node, beta] : spec.coefficients) {
    const bool in_range =
        node.level >= -1 && node.level < design.max_level &&
        (node.level < 0 ? node.index == 0 : node.index < (std::uint32_t{1} << node.level));
    if (!in_range) {
      throw validation_error("signal node " + to_string(node) +
                             " is outside levels -1 .. Lmax-1 = " +
                             std::to_string(design.max_level - 1));
    }
    if (!std::isfinite(beta)) {
      throw validation_error("signal coefficient at " + to_string(node) + " is not finite");
    }
    coeff[position(node)] += beta;
  }
  return haar_reconstruct(coeff, design);
}

std::vector<double> generate_dataset(const SignalSpec& spec, const RegularDesign& design) {
  if (!(spec.noise_sd >= 0.0)) throw validation_error("noise level must be nonnegative");
  auto y = synthesize_signal(spec, design);
  if (spec.noise_sd == 0.0) return y;
  Rng rng(spec.seed);
  for (auto& v : y) v += spec.noise_sd * rng.normal();
  return y;
}

namespace {
std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}
}  // namespace

CountData ingest_counts(std::istream& in) {
  CountData data;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t start = 0;
    bool any = false;
    for (;;) {
      const auto comma = line.find(',', start);
      const auto field = trim(std::string_view(line).substr(
          start, comma == std::string::npos ? std::string::npos : comma - start));
      if (!field.empty()) {
        any = true;
        std::int64_t v = 0;
        auto r = std::from_chars(field.data(), field.data() + field.size(), v);
        if (r.ec != std::errc{} || r.ptr != field.data() + field.size()) {
          throw validation_error("line " + std::to_string(line_no) + ": '" + field +
                                 "' is not an integer count");
        }
        if (v < 0) {
          throw validation_error("line " + std::to_string(line_no) + ": negative count " +
                                 field);
        }
        data.counts.push_back(v);
      } else if (comma != std::string::npos) {
        throw validation_error("line " + std::to_string(line_no) + ": empty field");
      }
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    (void)any;
  }
  if (data.counts.size() != kCountSampleSize) {
    throw validation_error("expected 2048 counts, found " + std::to_string(data.counts.size()));
  }
  data.y.reserve(data.counts.size());
  for (auto c : data.counts) data.y.push_back(std::sqrt(static_cast<double>(c) + 0.25));
  return data;
}

void write_dataset_csv(std::ostream& out, std::span<const double> y) {
  out << "i,x,y\n";
  const double n = static_cast<double>(y.size());
  char buf[96];
  for (std::size_t i = 0; i < y.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", i + 1, static_cast<double>(i + 1) / n,
                  y[i]);
    out << buf;
  }
  if (!out) throw io_error("failed writing dataset CSV");
}

std::vector<double> read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != "i,x,y") {
    throw validation_error("dataset CSV must start with the header i,x,y");
  }
  std::vector<double> y;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto last = line.rfind(',');
    if (last == std::string::npos) {
      throw validation_error("dataset line " + std::to_string(line_no) + " is malformed");
    }
    const auto field = trim(std::string_view(line).substr(last + 1));
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (end == field.c_str() || *end != '\0') {
      throw validation_error("dataset line " + std::to_string(line_no) + ": bad y value");
    }
    y.push_back(v);
  }
  return y;
}

}  // namespace dyadcart
