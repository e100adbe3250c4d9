// SPDX-License-Identifier: Apache-2.0
#include "tabreason/answer.hpp"

#include <gtest/gtest.h>

using namespace tabreason;

namespace
{

GoldAnswer numeric_gold(const char* literal, Scale scale = Scale::none)
{
    GoldAnswer g;
    g.kind = AnswerKind::numeric;
    g.value = *parse_decimal(literal);
    g.decimals = decimal_places(literal);
    g.scale = scale;
    return g;
}

FinalAnswer numeric_pred(Rational value, Scale scale = Scale::none)
{
    return FinalAnswer {AnswerKind::numeric, std::move(value), scale, ""};
}

std::vector<TrajectoryRecord> labeled(std::size_t total, std::size_t positive)
{
    std::vector<TrajectoryRecord> out(total);
    for (std::size_t i = 0; i < positive; ++i)
        out[i].label = WeakLabel::positive;
    return out;
}

} // namespace

TEST(ValidateScale, Vocabulary)
{
    EXPECT_EQ(validate_scale("'million'").scale, Scale::million);
    EXPECT_EQ(validate_scale(" Thousand ").scale, Scale::thousand);
    EXPECT_EQ(validate_scale("\"percent\"").scale, Scale::percent);
    auto empty = validate_scale("''");
    EXPECT_EQ(empty.scale, Scale::none);
    EXPECT_TRUE(empty.recognized);
    auto other = validate_scale("trillion");
    EXPECT_EQ(other.scale, Scale::none);
    EXPECT_FALSE(other.recognized);
    EXPECT_FALSE(other.diagnostic.empty());
}

TEST(ScaleMultiplier, Units)
{
    EXPECT_EQ(scale_multiplier(Scale::none), Rational(1));
    EXPECT_EQ(scale_multiplier(Scale::thousand), Rational(1000));
    EXPECT_EQ(scale_multiplier(Scale::billion), Rational(1000000000));
    EXPECT_EQ(scale_multiplier(Scale::percent), Rational(1));
}

TEST(NormalizeText, Folds)
{
    EXPECT_EQ(normalize_text("  The  $1,234 Total. "), "the 1234 total");
    auto once = normalize_text("Hello, World!");
    EXPECT_EQ(normalize_text(once), once);
}

TEST(ParseNumberText, Forms)
{
    EXPECT_EQ(parse_number_text("$1,234.5")->value, Rational(12345, 10));
    EXPECT_EQ(parse_number_text("(3,495)")->value, Rational(-3495));
    auto pct = parse_number_text("12.5%");
    ASSERT_TRUE(pct);
    EXPECT_TRUE(pct->percent);
    EXPECT_EQ(pct->value, Rational(125, 10));
    EXPECT_EQ(parse_number_text("-266.95")->decimals, 2);
    EXPECT_FALSE(parse_number_text("no digits"));
}

TEST(Tolerance, FromGoldDecimals)
{
    // two decimals: half a unit in the third place
    EXPECT_TRUE(within_tolerance(*parse_decimal("-266.95108077360635"), *parse_decimal("-266.95"), 2));
    EXPECT_FALSE(within_tolerance(Rational(42), Rational(43), 0));
    EXPECT_TRUE(within_tolerance(Rational(4249, 10), Rational(425), 0));
    // relative part dominates for large magnitudes
    EXPECT_TRUE(within_tolerance(Rational(1000010), Rational(1000000), 0));
    EXPECT_FALSE(within_tolerance(Rational(1000200), Rational(1000000), 0));
}

TEST(NumbersMatch, ScaleFolding)
{
    EXPECT_TRUE(numbers_match(Rational(2447388, 10), Scale::thousand, Rational(2447388, 10), Scale::thousand, 1));
    EXPECT_TRUE(numbers_match(Rational(2447388, 10), Scale::thousand, Rational(244738800), Scale::none, 0));
    EXPECT_FALSE(numbers_match(Rational(2447388, 10), Scale::none, Rational(2447388, 10), Scale::million, 1));
    EXPECT_TRUE(numbers_match(Rational(1, 4), Scale::none, Rational(25), Scale::percent, 0));
}

TEST(CompareAnswers, Examples)
{
    EXPECT_EQ(compare_answers(numeric_pred(*parse_decimal("-266.95108077360635"), Scale::percent),
                              numeric_gold("-266.95", Scale::percent)),
              WeakLabel::positive);

    GoldAnswer spans;
    spans.kind = AnswerKind::multispan;
    spans.value = std::vector<std::string> {"73,260", "57,768"};
    FinalAnswer pred_spans {AnswerKind::multispan, std::vector<std::string> {"57,768", "73,260"}, Scale::none, ""};
    EXPECT_EQ(compare_answers(pred_spans, spans), WeakLabel::positive);

    FinalAnswer dollars {AnswerKind::span, std::string("$420"), Scale::none, "$420"};
    EXPECT_EQ(compare_answers(dollars, numeric_gold("420")), WeakLabel::positive);

    EXPECT_EQ(compare_answers(numeric_pred(Rational(42)), numeric_gold("43")), WeakLabel::negative);
}

TEST(CompareAnswers, WorkedExample)
{
    EXPECT_EQ(compare_answers(numeric_pred(Rational(396232402, 1619), Scale::thousand),
                              numeric_gold("244738.8", Scale::thousand)),
              WeakLabel::positive);
    EXPECT_EQ(compare_answers(numeric_pred(Rational(396232402, 1619), Scale::million),
                              numeric_gold("244738.8", Scale::thousand)),
              WeakLabel::negative);
}

TEST(CompareAnswers, SpansAreMultisets)
{
    GoldAnswer gold;
    gold.kind = AnswerKind::multispan;
    gold.value = std::vector<std::string> {"a", "a", "b"};
    FinalAnswer pred {AnswerKind::multispan, std::vector<std::string> {"a", "b"}, Scale::none, ""};
    EXPECT_EQ(compare_answers(pred, gold), WeakLabel::negative);
}

TEST(CompareAnswers, TextSpans)
{
    GoldAnswer gold;
    gold.kind = AnswerKind::span;
    gold.value = std::string("Services");
    FinalAnswer pred {AnswerKind::span, std::string(" services. "), Scale::none, ""};
    EXPECT_EQ(compare_answers(pred, gold), WeakLabel::positive);
}

TEST(CompareAnswers, IncomparableKindsAreNegative)
{
    GoldAnswer gold;
    gold.kind = AnswerKind::boolean;
    gold.value = true;
    FinalAnswer pred {AnswerKind::multispan, std::vector<std::string> {"x"}, Scale::none, ""};
    EXPECT_EQ(compare_answers(pred, gold), WeakLabel::negative);
}

TEST(ScoreRun, Percentages)
{
    auto headline = score_run(labeled(6251, 3435), Dataset::FinQA);
    EXPECT_EQ(headline.correct_pct, "54.95");
    EXPECT_EQ(headline.incorrect_pct, "45.05");
    EXPECT_EQ(headline.metric, "Acc");
    EXPECT_EQ(score_run(labeled(5, 0), Dataset::TatQA).correct_pct, "0.00");
    auto seven = score_run(labeled(10, 7), Dataset::TabMWP);
    EXPECT_EQ(seven.correct_pct, "70.00");
    EXPECT_EQ(seven.correct, 7u);
    EXPECT_EQ(seven.incorrect, 3u);
    EXPECT_THROW(score_run({}, Dataset::FinQA), EmptyRun);
}

TEST(ScoreRun, MetricNames)
{
    EXPECT_EQ(metric_name(Dataset::FinQA), "Acc");
    EXPECT_EQ(metric_name(Dataset::TatQA), "EM");
    EXPECT_EQ(metric_name(Dataset::TabMWP), "Acc");
}

TEST(ScoreRun, Categories)
{
    auto records = labeled(4, 3);
    records[0].category = "arithmetic";
    records[1].category = "span";
    records[2].category = "arithmetic";
    records[3].category = "arithmetic";
    auto r = score_run(records, Dataset::TatQA);
    ASSERT_EQ(r.categories.count("arithmetic"), 1u);
    EXPECT_EQ(r.categories["arithmetic"].total, 3u);
    EXPECT_EQ(r.categories["arithmetic"].correct, 2u);
    EXPECT_EQ(r.categories["arithmetic"].value, "66.67");
}

TEST(PercentString, HalfUp)
{
    EXPECT_EQ(percent_string(1, 8), "12.50");
    EXPECT_EQ(percent_string(1, 3), "33.33");
    EXPECT_EQ(percent_string(2, 3), "66.67");
    EXPECT_EQ(percent_string(1, 16), "6.25");
    EXPECT_EQ(percent_string(1, 1600), "0.06");
}
