#pragma once

// Small text helpers shared by the CSV, checkpoint and key=value formats.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace polyrnn {

// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);
std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_integer(std::string_view text);

std::string_view trim(std::string_view text) noexcept;
std::vector<std::string_view> split(std::string_view text, char sep);

// Ordered key=value lines. Blank lines and lines starting with '#' are skipped.
using KeyValues = std::map<std::string, std::string>;
KeyValues read_key_values(const std::filesystem::path& path);
void write_key_values(const std::filesystem::path& path, const KeyValues& values);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace polyrnn
