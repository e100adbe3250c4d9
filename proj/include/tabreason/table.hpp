// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tabreason/core.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace tabreason
{

class EmptyTable: public Error
{
  public:
    EmptyTable(): Error("table text has no non-blank line") {}
};

struct CellMismatch
{
    std::size_t row = 0; ///< row in the simplified table
    std::size_t col = 0; ///< column in the simplified table
    std::string got;
    std::string expected;

    friend bool operator==(const CellMismatch&, const CellMismatch&) = default;
};

struct SubtableReport
{
    bool is_subtable = false;
    std::vector<std::size_t> matched_row_indices; ///< original row for each simplified row
    std::vector<std::size_t> matched_col_indices; ///< original column for each simplified column
    std::vector<CellMismatch> mismatched_cells;
};

/// One row per non-blank line, cells split on '|' and trimmed; ragged rows
/// are padded with empty cells and the padding is counted in Table::padded_cells.
Table parse_table(std::string_view text);

/// Cells joined with " | ", rows with '\n'. A '|' inside a cell becomes '/',
/// line breaks inside a cell become spaces.
std::string render_table(const Table& table);

/// Collapses whitespace runs to one space and trims both ends.
std::string collapse_whitespace(std::string_view text);

/// Checks that `simplified` is obtained from `original` by deleting rows and
/// columns, keeping order, with cells equal after whitespace collapse. When
/// the check fails the report carries the closest alignment found and its
/// mismatching cells.
SubtableReport check_subtable(const Table& simplified, const Table& original);

} // namespace tabreason
