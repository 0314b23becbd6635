#pragma once

#include <string>
#include <vector>

namespace searchbound {

// Writes to "<path>.partial", then renames onto path. An interrupted write
// leaves only the .partial file behind.
void write_file_atomic(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

// Shortest round-trip decimal form, locale-independent.
std::string fmt_double(double v);

std::string csv_row(const std::vector<std::string>& fields);

std::vector<std::string> split_csv_row(const std::string& line);

}  // namespace searchbound
