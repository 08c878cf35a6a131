#pragma once

#include <string>
#include <vector>

namespace laneflow {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

/// Header line plus one line per row, shortest round-trip decimals, LF endings.
std::string to_csv(const CsvTable& table);

void write_csv(const CsvTable& table, const std::string& path);

CsvTable read_csv(const std::string& path);

}  // namespace laneflow
