#include "csmri/keyvalue.hpp"

#include <charconv>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace csmri {

namespace {

std::string_view trim(std::string_view s)
{
  auto const b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) {
    return {};
  }
  auto const e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string const &key, std::string const &value, char const *what)
{
  throw std::invalid_argument("config key '" + key + "': expected " + what + ", got '" + value + "'");
}

template <typename T>
T parse_number(std::string const &key, std::string const &value, char const *what)
{
  T out{};
  auto const *first = value.data();
  auto const *last = value.data() + value.size();
  auto const [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) {
    bad_value(key, value, what);
  }
  return out;
}

} // namespace

KeyValues parse_key_values(std::string_view text)
{
  KeyValues out;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    auto const nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    line_no++;
    if (line.empty() || line.front() == '#') {
      continue;
    }
    auto const eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": expected key=value");
    }
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) {
      throw std::invalid_argument("line " + std::to_string(line_no) + ": empty key");
    }
    if (!seen.insert(key).second) {
      throw std::invalid_argument("duplicate key '" + key + "'");
    }
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

KeyValues read_key_values(std::filesystem::path const &path)
{
  std::ifstream is(path);
  if (!is) {
    throw std::runtime_error("cannot open " + path.string());
  }
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_key_values(ss.str());
}

std::string format_key_values(KeyValues const &kv)
{
  std::string out;
  for (auto const &[k, v] : kv) {
    out += k + "=" + v + "\n";
  }
  return out;
}

int parse_int(std::string const &key, std::string const &value) { return parse_number<int>(key, value, "an integer"); }

double parse_double(std::string const &key, std::string const &value)
{
  return parse_number<double>(key, value, "a number");
}

std::uint64_t parse_u64(std::string const &key, std::string const &value)
{
  return parse_number<std::uint64_t>(key, value, "a non-negative integer");
}

bool parse_bool(std::string const &key, std::string const &value)
{
  if (value == "true" || value == "1") {
    return true;
  }
  if (value == "false" || value == "0") {
    return false;
  }
  bad_value(key, value, "true/false");
}

std::string format_double(double v)
{
  char buf[64];
  auto const [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

} // namespace csmri
