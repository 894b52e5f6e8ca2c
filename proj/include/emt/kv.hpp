#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "emt/tensor.hpp"

// Scalar parsing/formatting shared by every key = value surface (run config
// files and the config block embedded in checkpoints).

namespace emt::kv {

std::string_view trim(std::string_view s);
int parse_int(std::string_view key, std::string_view value);
std::int64_t parse_i64(std::string_view key, std::string_view value);
std::uint64_t parse_u64(std::string_view key, std::string_view value);
double parse_double(std::string_view key, std::string_view value);
/// on/off, true/false, 1/0, yes/no.
bool parse_bool(std::string_view key, std::string_view value);
/// "32x8" -> {32, 8}
WindowSpec parse_window(std::string_view key, std::string_view value);
/// Shortest decimal form that round-trips a double exactly.
std::string format_double(double v);

}  // namespace emt::kv
