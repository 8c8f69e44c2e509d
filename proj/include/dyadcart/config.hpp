#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace dyadcart {

/// Flat `key = value` run configuration. The first non-comment line must be
/// the version header `dyadcart-config 1`; `#` starts a comment.
inline constexpr int kConfigVersion = 1;
inline constexpr const char* kConfigHeader = "dyadcart-config";

struct ConfigEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

std::vector<ConfigEntry> parse_config(std::istream& in);
std::vector<ConfigEntry> load_config(const std::filesystem::path& path);
void write_config(std::ostream& out, const std::vector<ConfigEntry>& entries);

/// How the front end treats a key: unknown keys are rejected.
enum class KeyKind { unknown, value, flag };

/// Expands entries into command-line tokens (`--key value`, or `--key` for a
/// true flag) so that later command-line flags override them.
std::vector<std::string> config_tokens(const std::vector<ConfigEntry>& entries,
                                       const std::function<KeyKind(const std::string&)>& classify);

}  // namespace dyadcart
