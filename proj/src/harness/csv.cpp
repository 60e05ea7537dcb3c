#include "urmf/harness/csv.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace urmf::harness {

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void CsvTable::add_row(std::vector<CsvCell> row) {
  if (row.size() != header_.size()) throw std::invalid_argument("CSV row width does not match header");
  rows_.push_back(std::move(row));
}

std::string CsvTable::str() const {
  std::string out;
  for (std::size_t i = 0; i < header_.size(); ++i) out += (i ? "," : "") + header_[i];
  out += '\n';
  for (const auto& row : rows_) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      std::visit(
          [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, std::string>) out += v;
            else if constexpr (std::is_same_v<T, double>) out += format_number(v);
            else out += std::to_string(v);
          },
          row[i]);
    }
    out += '\n';
  }
  return out;
}

void CsvTable::write(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << str();
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace urmf::harness
