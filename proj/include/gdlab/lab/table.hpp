#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace gdlab::lab {

using Cell = std::variant<std::string, std::int64_t, double>;

/// Columns every row starts with, so tables from different experiments join.
const std::vector<std::string>& key_columns();

/// Fixed-schema table written as UTF-8 CSV with a header row. Doubles use 17
/// significant digits so values round-trip exactly.
class Table {
 public:
  Table() = default;
  /// key_columns() followed by `extra`.
  static Table with_keys(const std::vector<std::string>& extra);
  explicit Table(std::vector<std::string> columns);

  const std::vector<std::string>& columns() const { return columns_; }
  std::size_t rows() const { return rows_.size(); }
  /// Throws std::invalid_argument when the width does not match the header.
  void add_row(std::vector<Cell> row);

  std::string to_csv() const;
  void write(const std::string& path) const;

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<Cell>> rows_;
};

std::string format_cell(const Cell& cell);

}  // namespace gdlab::lab
