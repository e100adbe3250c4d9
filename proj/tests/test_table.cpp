// SPDX-License-Identifier: Apache-2.0
#include "tabreason/table.hpp"

#include <gtest/gtest.h>

using namespace tabreason;

namespace
{

const char* const committees = "Committee | Students | Teachers\n"
                               "Art | 15 | 10\n"
                               "Music | 20 | 15\n"
                               "Science | 18 | 12\n"
                               "Sports | 25 | 8\n"
                               "Drama | 12 | 9\n"
                               "Math | 14 | 11\n"
                               "Chess | 10 | 7\n"
                               "Dance | 16 | 6\n"
                               "Debate | 13 | 5";

} // namespace

TEST(ParseTable, SimplifiedBlock)
{
    auto t = parse_table("Committee | Students | Teachers\nMusic | 20 | 15");
    EXPECT_EQ(t.row_count(), 2u);
    EXPECT_EQ(t.col_count(), 3u);
    EXPECT_EQ(t.rows[1][1], "20");
}

TEST(ParseTable, EmptyThrows)
{
    EXPECT_THROW(parse_table(""), EmptyTable);
    EXPECT_THROW(parse_table("\n  \n"), EmptyTable);
}

TEST(ParseTable, RaggedRowsArePadded)
{
    auto t = parse_table("a|b\nc");
    EXPECT_EQ(t.row_count(), 2u);
    EXPECT_EQ(t.col_count(), 2u);
    EXPECT_EQ(t.rows[1][1], "");
    EXPECT_EQ(t.padded_cells, 1u);
}

TEST(RenderTable, RoundTrip)
{
    auto t = parse_table(committees);
    EXPECT_EQ(parse_table(render_table(t)), t);
    EXPECT_EQ(render_table(parse_table("x")), "x");
}

TEST(RenderTable, SanitizesDelimiter)
{
    Table t;
    t.rows = {{"a|b", "line\nbreak"}};
    EXPECT_EQ(render_table(t), "a/b | line break");
}

TEST(CollapseWhitespace, Runs)
{
    EXPECT_EQ(collapse_whitespace("  a \t b\n\nc  "), "a b c");
}

TEST(CheckSubtable, SimplifiedIsSubtable)
{
    auto original = parse_table(committees);
    auto simplified = parse_table("Committee | Students | Teachers\nMusic | 20 | 15");
    auto r = check_subtable(simplified, original);
    EXPECT_TRUE(r.is_subtable);
    EXPECT_EQ(r.matched_row_indices, (std::vector<std::size_t> {0, 2}));
    EXPECT_EQ(r.matched_col_indices, (std::vector<std::size_t> {0, 1, 2}));
    EXPECT_TRUE(check_subtable(original, original).is_subtable);
}

TEST(CheckSubtable, ColumnDeletion)
{
    auto original = parse_table(committees);
    auto simplified = parse_table("Committee | Teachers\nChess | 7\nDebate | 5");
    auto r = check_subtable(simplified, original);
    EXPECT_TRUE(r.is_subtable);
    EXPECT_EQ(r.matched_col_indices, (std::vector<std::size_t> {0, 2}));
}

TEST(CheckSubtable, AlteredCellIsReported)
{
    auto original = parse_table(committees);
    auto altered = parse_table("Committee | Students | Teachers\nMusic | 99 | 15");
    auto r = check_subtable(altered, original);
    EXPECT_FALSE(r.is_subtable);
    ASSERT_EQ(r.mismatched_cells.size(), 1u);
    EXPECT_EQ(r.mismatched_cells[0].got, "99");
    EXPECT_EQ(r.mismatched_cells[0].expected, "20");
}

TEST(CheckSubtable, OrderMatters)
{
    auto original = parse_table(committees);
    auto swapped = parse_table("Music | 20 | 15\nArt | 15 | 10");
    EXPECT_FALSE(check_subtable(swapped, original).is_subtable);
}

TEST(CheckSubtable, WhitespaceInsensitiveCells)
{
    auto original = parse_table("Name | Value\nTotal  cost | 1");
    auto simplified = parse_table("Total cost | 1");
    EXPECT_TRUE(check_subtable(simplified, original).is_subtable);
}
