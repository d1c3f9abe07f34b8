#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace awdlab {

// Shortest round-trippable decimal form ("%.17g"); "nan"/"inf" for non-finite.
std::string fmt_double(double v);
double parse_double(const std::string& s);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Plain comma-separated values, no quoting.
CsvTable read_csv_file(const std::filesystem::path& path);

}  // namespace awdlab
