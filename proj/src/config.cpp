#include "dyadcart/config.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "dyadcart/error.hpp"

namespace dyadcart {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string where(std::size_t line) { return "config line " + std::to_string(line) + ": "; }

}  // namespace

std::vector<ConfigEntry> parse_config(std::istream& in) {
  std::vector<ConfigEntry> out;
  std::set<std::string> seen;
  std::string raw;
  std::size_t line = 0;
  bool header = false;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;
    if (!header) {
      const std::string expected = std::string(kConfigHeader) + " " + std::to_string(kConfigVersion);
      if (text.rfind(kConfigHeader, 0) != 0) {
        throw validation_error(where(line) + "missing header '" + expected + "'");
      }
      if (text != expected) {
        throw validation_error(where(line) + "unsupported config version '" + text + "'");
      }
      header = true;
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw validation_error(where(line) + "expected key = value");
    ConfigEntry e{trim(text.substr(0, eq)), trim(text.substr(eq + 1)), line};
    if (e.key.empty()) throw validation_error(where(line) + "empty key");
    if (!seen.insert(e.key).second) {
      throw validation_error(where(line) + "duplicate key '" + e.key + "'");
    }
    out.push_back(std::move(e));
  }
  if (!header) throw validation_error("config file is empty or lacks its version header");
  return out;
}

std::vector<ConfigEntry> load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config file " + path.string());
  return parse_config(in);
}

void write_config(std::ostream& out, const std::vector<ConfigEntry>& entries) {
  out << kConfigHeader << ' ' << kConfigVersion << '\n';
  for (const auto& e : entries) out << e.key << " = " << e.value << '\n';
  if (!out) throw io_error("failed writing config");
}

std::vector<std::string> config_tokens(const std::vector<ConfigEntry>& entries,
                                       const std::function<KeyKind(const std::string&)>& classify) {
  std::vector<std::string> tokens;
  for (const auto& e : entries) {
    switch (classify(e.key)) {
      case KeyKind::unknown:
        throw validation_error(where(e.line) + "unknown key '" + e.key + "'");
      case KeyKind::flag:
        if (e.value == "true" || e.value == "1") {
          tokens.push_back("--" + e.key);
        } else if (e.value != "false" && e.value != "0") {
          throw validation_error(where(e.line) + "flag '" + e.key + "' needs true or false");
        }
        break;
      case KeyKind::value:
        tokens.push_back("--" + e.key);
        tokens.push_back(e.value);
        break;
    }
  }
  return tokens;
}

}  // namespace dyadcart
