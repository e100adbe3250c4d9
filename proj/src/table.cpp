// SPDX-License-Identifier: Apache-2.0
#include "tabreason/table.hpp"

#include <algorithm>
#include <cctype>
#include <functional>

namespace tabreason
{

namespace
{

std::string_view trim(std::string_view s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
        s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
        s.remove_suffix(1);
    return s;
}

using Grid = std::vector<std::vector<std::string>>;

Grid normalized_grid(const Table& table)
{
    Grid grid;
    grid.reserve(table.rows.size());
    std::size_t width = 0;
    for (const auto& row: table.rows)
        width = std::max(width, row.size());
    for (const auto& row: table.rows)
    {
        std::vector<std::string> cells;
        cells.reserve(width);
        for (const auto& cell: row)
            cells.push_back(collapse_whitespace(cell));
        cells.resize(width);
        grid.push_back(std::move(cells));
    }
    return grid;
}

// Greedy earliest match of simplified rows onto original rows under a fixed
// column mapping; optimal for order-preserving injective matching.
bool match_rows(const Grid& simplified, const Grid& original, const std::vector<std::size_t>& cols,
                std::vector<std::size_t>& rows_out)
{
    rows_out.clear();
    std::size_t next = 0;
    for (const auto& srow: simplified)
    {
        bool found = false;
        for (; next < original.size(); ++next)
        {
            bool equal = true;
            for (std::size_t j = 0; j < cols.size() && equal; ++j)
                equal = srow[j] == original[next][cols[j]];
            if (equal)
            {
                rows_out.push_back(next++);
                found = true;
                break;
            }
        }
        if (!found)
            return false;
    }
    return true;
}

bool is_column_subsequence(const Grid& simplified, std::size_t j, const Grid& original, std::size_t k)
{
    std::size_t p = 0;
    for (const auto& srow: simplified)
    {
        while (p < original.size() && original[p][k] != srow[j])
            ++p;
        if (p == original.size())
            return false;
        ++p;
    }
    return true;
}

constexpr std::size_t search_budget = 200000;

constexpr std::ptrdiff_t unmatched = -1;

// Order-preserving partial alignment maximizing the summed score; items of
// `left` may stay unmatched. Returns right index per left item or -1.
std::vector<std::ptrdiff_t> align(std::size_t left, std::size_t right,
                                  const std::function<std::size_t(std::size_t, std::size_t)>& score)
{
    std::vector<std::vector<std::size_t>> best(left + 1, std::vector<std::size_t>(right + 1, 0));
    for (std::size_t i = 1; i <= left; ++i)
        for (std::size_t k = 1; k <= right; ++k)
            best[i][k] = std::max({best[i - 1][k], best[i][k - 1], best[i - 1][k - 1] + score(i - 1, k - 1)});

    std::vector<std::ptrdiff_t> mapping(left, unmatched);
    std::size_t i = left;
    std::size_t k = right;
    while (i > 0 && k > 0)
    {
        auto s = score(i - 1, k - 1);
        if (s > 0 && best[i][k] == best[i - 1][k - 1] + s)
        {
            mapping[i - 1] = static_cast<std::ptrdiff_t>(k - 1);
            --i;
            --k;
        }
        else if (best[i][k] == best[i][k - 1])
            --k;
        else
            --i;
    }
    return mapping;
}

} // namespace

std::string collapse_whitespace(std::string_view text)
{
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char c: text)
    {
        if (std::isspace(static_cast<unsigned char>(c)))
        {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space)
            out += ' ';
        pending_space = false;
        out += c;
    }
    return out;
}

Table parse_table(std::string_view text)
{
    Table table;
    std::size_t width = 0;
    std::size_t start = 0;
    while (start <= text.size())
    {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos)
            end = text.size();
        auto line = text.substr(start, end - start);
        start = end + 1;
        if (trim(line).empty())
            continue;

        std::vector<std::string> cells;
        std::size_t cell_start = 0;
        while (true)
        {
            auto bar = line.find('|', cell_start);
            auto cell = line.substr(cell_start, bar == std::string_view::npos ? std::string_view::npos : bar - cell_start);
            cells.emplace_back(trim(cell));
            if (bar == std::string_view::npos)
                break;
            cell_start = bar + 1;
        }
        width = std::max(width, cells.size());
        table.rows.push_back(std::move(cells));
    }
    if (table.rows.empty())
        throw EmptyTable();

    for (auto& row: table.rows)
    {
        table.padded_cells += width - row.size();
        row.resize(width);
    }
    return table;
}

std::string render_table(const Table& table)
{
    std::string out;
    for (std::size_t r = 0; r < table.rows.size(); ++r)
    {
        if (r)
            out += '\n';
        const auto& row = table.rows[r];
        for (std::size_t c = 0; c < row.size(); ++c)
        {
            if (c)
                out += " | ";
            for (char ch: row[c])
            {
                if (ch == '|')
                    out += '/';
                else if (ch == '\n' || ch == '\r')
                    out += ' ';
                else
                    out += ch;
            }
        }
    }
    return out;
}

SubtableReport check_subtable(const Table& simplified_table, const Table& original_table)
{
    const Grid simplified = normalized_grid(simplified_table);
    const Grid original = normalized_grid(original_table);
    const std::size_t rows = simplified.size();
    const std::size_t cols = rows ? simplified.front().size() : 0;
    const std::size_t orig_rows = original.size();
    const std::size_t orig_cols = orig_rows ? original.front().size() : 0;

    SubtableReport report;
    if (rows == 0)
    {
        report.is_subtable = true;
        return report;
    }

    if (rows <= orig_rows && cols <= orig_cols)
    {
        // candidates[j]: original columns that can host simplified column j
        std::vector<std::vector<std::size_t>> candidates(cols);
        for (std::size_t j = 0; j < cols; ++j)
            for (std::size_t k = 0; k < orig_cols; ++k)
                if (is_column_subsequence(simplified, j, original, k))
                    candidates[j].push_back(k);

        std::vector<std::size_t> chosen;
        std::vector<std::size_t> matched_rows;
        std::size_t leaves = 0;
        std::function<bool(std::size_t, std::size_t)> search = [&](std::size_t j, std::size_t min_col) -> bool {
            if (j == cols)
            {
                ++leaves;
                return match_rows(simplified, original, chosen, matched_rows);
            }
            for (auto k: candidates[j])
            {
                if (k < min_col || orig_cols - k < cols - j)
                    continue;
                if (leaves >= search_budget)
                    return false;
                chosen.push_back(k);
                if (search(j + 1, k + 1))
                    return true;
                chosen.pop_back();
            }
            return false;
        };
        if (search(0, 0))
        {
            report.is_subtable = true;
            report.matched_row_indices = matched_rows;
            report.matched_col_indices = chosen;
            return report;
        }
    }

    // No exact embedding: report the best partial alignment for diagnostics.
    auto column_score = [&](std::size_t j, std::size_t k) {
        std::size_t hits = 0;
        for (const auto& srow: simplified)
            for (const auto& orow: original)
                if (!srow[j].empty() && orow[k] == srow[j])
                {
                    ++hits;
                    break;
                }
        return hits;
    };
    auto col_map = align(cols, orig_cols, column_score);
    auto row_score = [&](std::size_t i, std::size_t p) {
        std::size_t hits = 0;
        for (std::size_t j = 0; j < cols; ++j)
            if (col_map[j] != unmatched && simplified[i][j] == original[p][static_cast<std::size_t>(col_map[j])])
                ++hits;
        return hits;
    };
    auto row_map = align(rows, orig_rows, row_score);

    for (auto k: col_map)
        if (k != unmatched)
            report.matched_col_indices.push_back(static_cast<std::size_t>(k));
    for (auto p: row_map)
        if (p != unmatched)
            report.matched_row_indices.push_back(static_cast<std::size_t>(p));

    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
        {
            std::string expected;
            if (row_map[i] != unmatched && col_map[j] != unmatched)
                expected = original[static_cast<std::size_t>(row_map[i])][static_cast<std::size_t>(col_map[j])];
            bool mapped = row_map[i] != unmatched && col_map[j] != unmatched;
            if (!mapped || expected != simplified[i][j])
                report.mismatched_cells.push_back(CellMismatch {i, j, simplified[i][j], expected});
        }
    // only reachable with an empty mismatch list when the search budget ran out
    report.is_subtable = report.mismatched_cells.empty();
    return report;
}

} // namespace tabreason
