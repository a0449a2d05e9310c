#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace csmri {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

// Parses "key=value" lines. Blank lines and lines starting with '#' are skipped, whitespace
// around keys and values is trimmed, and duplicate keys are rejected.
KeyValues parse_key_values(std::string_view text);
KeyValues read_key_values(std::filesystem::path const &path);

std::string format_key_values(KeyValues const &kv);

int parse_int(std::string const &key, std::string const &value);
double parse_double(std::string const &key, std::string const &value);
bool parse_bool(std::string const &key, std::string const &value);
std::uint64_t parse_u64(std::string const &key, std::string const &value);

// Shortest decimal text that round-trips through parse_double.
std::string format_double(double v);

} // namespace csmri
