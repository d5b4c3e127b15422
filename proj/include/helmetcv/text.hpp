#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace helmetcv {

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep);
bool iequals(std::string_view a, std::string_view b);

/// Whole-string numeric parses; nullopt on trailing garbage or empty input.
std::optional<double> parse_double(std::string_view s);
std::optional<int> parse_int(std::string_view s);

/// Stable 64-bit FNV-1a; used for seeding, never for integrity.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);

std::string sha256_hex(std::string_view data);
std::string read_file(const std::string& path);

}  // namespace helmetcv
