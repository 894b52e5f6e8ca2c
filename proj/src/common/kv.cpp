#include "emt/kv.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>

#include "emt/model.hpp"

namespace emt::kv {

namespace {

[[noreturn]] void bad(std::string_view key, std::string_view value, const char* what) {
  throw ConfigError("invalid value '" + std::string(value) + "' for key '" + std::string(key) +
                    "': expected " + what);
}

template <typename I>
I parse_integral(std::string_view key, std::string_view value, const char* what) {
  value = trim(value);
  I out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size() || value.empty()) {
    bad(key, value, what);
  }
  return out;
}

}  // namespace

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

int parse_int(std::string_view key, std::string_view value) {
  return parse_integral<int>(key, value, "an integer");
}

std::int64_t parse_i64(std::string_view key, std::string_view value) {
  return parse_integral<std::int64_t>(key, value, "an integer");
}

std::uint64_t parse_u64(std::string_view key, std::string_view value) {
  return parse_integral<std::uint64_t>(key, value, "an unsigned integer");
}

double parse_double(std::string_view key, std::string_view value) {
  value = trim(value);
  std::string buf(value);
  char* end = nullptr;
  const double v = std::strtod(buf.c_str(), &end);
  if (buf.empty() || end != buf.c_str() + buf.size()) bad(key, value, "a number");
  return v;
}

bool parse_bool(std::string_view key, std::string_view value) {
  value = trim(value);
  if (value == "on" || value == "true" || value == "1" || value == "yes") return true;
  if (value == "off" || value == "false" || value == "0" || value == "no") return false;
  bad(key, value, "on|off");
}

WindowSpec parse_window(std::string_view key, std::string_view value) {
  value = trim(value);
  const auto x = value.find('x');
  if (x == std::string_view::npos) bad(key, value, "HxW");
  WindowSpec w{parse_int(key, value.substr(0, x)), parse_int(key, value.substr(x + 1))};
  if (w.h < 1 || w.w < 1) bad(key, value, "positive window extents");
  return w;
}

std::string format_double(double v) {
  char buf[40];
  for (int precision = 6; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

}  // namespace emt::kv
