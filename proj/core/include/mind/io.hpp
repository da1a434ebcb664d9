#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mind::io {

// Whole-file helpers; both throw DataError naming the path on failure.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

// Splits on '\n', dropping a trailing '\r'. Empty lines are kept so that
// callers can report line numbers.
std::vector<std::string_view> split_lines(std::string_view text);
// The views would dangle.
std::vector<std::string_view> split_lines(std::string&& text) = delete;

}  // namespace mind::io
