// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tabreason/core.hpp"

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tabreason
{

struct ScaleParse
{
    Scale scale = Scale::none;
    bool recognized = true;
    std::string diagnostic; ///< set when the token was outside the closed vocabulary
};

/// Strips quotes and whitespace, then maps thousand/million/billion/percent
/// (any case) to their unit and the empty string to none. Anything else maps
/// to none with a diagnostic.
ScaleParse validate_scale(std::string_view token);

/// Multiplier of a non-percent unit (1, 1e3, 1e6, 1e9); 1 for percent.
Rational scale_multiplier(Scale scale);

/// Casefold, drop currency symbols and digit-group commas, collapse
/// whitespace, trim surrounding punctuation. Idempotent.
std::string normalize_text(std::string_view text);

struct NumberText
{
    Rational value;
    bool percent = false;
    int decimals = 0;
};

/// Reads a number out of answer text: "$1,234.5", "(3,495)", "12.5%", "-266.95".
std::optional<NumberText> parse_number_text(std::string_view text);

/// Numeric equality under the tolerance max(5 * 10^-(d+1), 1e-4 * max(|a|, |b|))
/// where d is the gold's decimal places.
bool within_tolerance(const Rational& a, const Rational& b, int decimals);

/// Scale-aware numeric match of a prediction against a gold value.
bool numbers_match(const Rational& pred, Scale pred_scale, const Rational& gold, Scale gold_scale, int decimals);

/// The weak-supervision decision for one prediction.
WeakLabel compare_answers(const FinalAnswer& pred, const GoldAnswer& gold);

class EmptyRun: public Error
{
  public:
    EmptyRun(): Error("EmptyRun: no records to score") { }
};

struct CategoryScore
{
    std::size_t total = 0;
    std::size_t correct = 0;
    std::string value; ///< percent with two decimals
    friend bool operator==(const CategoryScore&, const CategoryScore&) = default;
};

struct MetricReport
{
    Dataset dataset = Dataset::FinQA;
    std::string metric; ///< "Acc" or "EM"
    std::size_t total = 0;
    std::size_t correct = 0;
    std::size_t incorrect = 0;
    std::string correct_pct;   ///< e.g. "54.95"
    std::string incorrect_pct;
    std::map<std::string, CategoryScore> categories;

    friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

std::string_view metric_name(Dataset dataset);

/// count / total in percent, two decimals, rounded half up.
std::string percent_string(std::size_t count, std::size_t total);

/// Records must be labeled. Throws EmptyRun on an empty list.
MetricReport score_run(const std::vector<TrajectoryRecord>& records, Dataset dataset);

/// Flat "key: value" lines.
std::string to_text(const MetricReport& report);

} // namespace tabreason
