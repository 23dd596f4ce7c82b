// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace beamfix::csv {

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

/// Strict full-field parse; throws ValidationError naming `what` on failure.
double parse_double(std::string_view text, std::string_view what);
std::int64_t parse_int(std::string_view text, std::string_view what);

/// Splits one line on commas. No quoting: none of our schemas need it.
std::vector<std::string> split_line(std::string_view line);

/// Reads all lines (CR/LF tolerant). Throws RuntimeFailure with the path if unreadable.
std::vector<std::string> read_lines(const std::filesystem::path& path);

/// Writes `content` to `path`, creating parent directories. Throws RuntimeFailure on error.
void write_file(const std::filesystem::path& path, std::string_view content);

/// Reads a whole file into a string.
std::string read_file(const std::filesystem::path& path);

}  // namespace beamfix::csv
