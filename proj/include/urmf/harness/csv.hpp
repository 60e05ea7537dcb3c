#pragma once

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace urmf::harness {

using CsvCell = std::variant<std::string, double, long long>;

// Header row followed by records; doubles use 6 significant digits and '.'
// as the decimal separator regardless of locale.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_row(std::vector<CsvCell> row);
  const std::vector<std::vector<CsvCell>>& rows() const { return rows_; }
  std::string str() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<CsvCell>> rows_;
};

std::string format_number(double v);

}  // namespace urmf::harness
