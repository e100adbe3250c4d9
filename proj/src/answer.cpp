// SPDX-License-Identifier: Apache-2.0
#include "tabreason/answer.hpp"

#include "tabreason/table.hpp"

#include <algorithm>
#include <cctype>

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

std::string lower(std::string_view s)
{
    std::string out(s);
    for (auto& c: out)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

bool digit(char c)
{
    return c >= '0' && c <= '9';
}

const std::vector<std::string_view> currency_symbols {"$", "\xE2\x82\xAC", "\xC2\xA3", "\xC2\xA5", "\xE2\x82\xB9"};

std::string strip_currency(std::string_view text)
{
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size();)
    {
        bool hit = false;
        for (auto sym: currency_symbols)
            if (text.substr(i, sym.size()) == sym)
            {
                i += sym.size();
                hit = true;
                break;
            }
        if (!hit)
            out += text[i++];
    }
    return out;
}

// "1,234,567" -> "1234567"; a comma is dropped only between a digit and a
// run of exactly three digits.
std::string strip_group_commas(std::string_view text)
{
    auto at = [&](std::size_t i) { return i < text.size() ? text[i] : '\0'; };
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i)
    {
        if (text[i] == ',' && i > 0 && digit(text[i - 1]) && digit(at(i + 1)) && digit(at(i + 2)) && digit(at(i + 3))
            && !digit(at(i + 4)))
            continue;
        out += text[i];
    }
    return out;
}

bool surrounding_punct(char c)
{
    static const std::string_view set = " .,;:!?'\"()[]{}`";
    return set.find(c) != std::string_view::npos || std::isspace(static_cast<unsigned char>(c));
}

std::string normalize_once(std::string_view text)
{
    std::string s = lower(text);
    s = strip_currency(s);
    s = strip_group_commas(s);
    s = collapse_whitespace(s);
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && surrounding_punct(s[b]))
        ++b;
    while (e > b && surrounding_punct(s[e - 1]))
        --e;
    return s.substr(b, e - b);
}

std::optional<bool> parse_boolean(std::string_view text)
{
    auto n = normalize_text(text);
    if (n == "yes" || n == "true")
        return true;
    if (n == "no" || n == "false")
        return false;
    return std::nullopt;
}

struct NumericView
{
    Rational value;
    Scale scale = Scale::none;
};

std::optional<NumericView> numeric_view(const AnswerValue& value, Scale scale)
{
    if (auto r = std::get_if<Rational>(&value))
        return NumericView {*r, scale};
    const std::string* text = std::get_if<std::string>(&value);
    if (auto list = std::get_if<std::vector<std::string>>(&value); list && list->size() == 1)
        text = &list->front();
    if (!text)
        return std::nullopt;
    auto parsed = parse_number_text(*text);
    if (!parsed)
        return std::nullopt;
    return NumericView {parsed->value, parsed->percent && scale == Scale::none ? Scale::percent : scale};
}

std::optional<std::string> text_view(const AnswerValue& value)
{
    if (auto s = std::get_if<std::string>(&value))
        return *s;
    if (auto r = std::get_if<Rational>(&value))
        return format_significant(*r);
    if (auto b = std::get_if<bool>(&value))
        return std::string(*b ? "yes" : "no");
    if (auto list = std::get_if<std::vector<std::string>>(&value); list && list->size() == 1)
        return list->front();
    return std::nullopt;
}

bool texts_match(const std::string& pred, Scale pred_scale, const std::string& gold, Scale gold_scale)
{
    if (normalize_text(pred) == normalize_text(gold))
        return true;
    auto p = parse_number_text(pred);
    auto g = parse_number_text(gold);
    if (!p || !g)
        return false;
    return numbers_match(p->value, p->percent && pred_scale == Scale::none ? Scale::percent : pred_scale, g->value,
                         g->percent && gold_scale == Scale::none ? Scale::percent : gold_scale, g->decimals);
}

} // namespace

ScaleParse validate_scale(std::string_view token)
{
    auto s = trim(token);
    while (!s.empty() && (s.front() == '\'' || s.front() == '"' || std::isspace(static_cast<unsigned char>(s.front()))))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == '\'' || s.back() == '"' || std::isspace(static_cast<unsigned char>(s.back()))))
        s.remove_suffix(1);
    auto word = lower(s);
    if (word.empty())
        return {Scale::none, true, {}};
    for (auto scale: {Scale::thousand, Scale::million, Scale::billion, Scale::percent})
        if (word == to_string(scale))
            return {scale, true, {}};
    return {Scale::none, false, "unrecognized scale token '" + std::string(s) + "'"};
}

Rational scale_multiplier(Scale scale)
{
    switch (scale)
    {
        case Scale::thousand: return pow10(3);
        case Scale::million: return pow10(6);
        case Scale::billion: return pow10(9);
        case Scale::none:
        case Scale::percent: return Rational(1);
    }
    return Rational(1);
}

std::string normalize_text(std::string_view text)
{
    std::string current(text);
    while (true)
    {
        auto next = normalize_once(current);
        if (next == current)
            return next;
        current = std::move(next);
    }
}

std::optional<NumberText> parse_number_text(std::string_view text)
{
    std::string s;
    for (char c: strip_currency(trim(text)))
        if (!std::isspace(static_cast<unsigned char>(c)))
            s += c;
    NumberText out;
    if (!s.empty() && s.back() == '.')
        s.pop_back();
    if (!s.empty() && s.back() == '%')
    {
        out.percent = true;
        s.pop_back();
    }
    bool negative = false;
    if (s.size() >= 2 && s.front() == '(' && s.back() == ')')
    {
        negative = true;
        s = s.substr(1, s.size() - 2);
    }
    if (!s.empty() && s.back() == '%' && !out.percent)
    {
        out.percent = true;
        s.pop_back();
    }
    if (s.find(',') != std::string::npos)
    {
        auto stripped = strip_group_commas(s);
        if (stripped.find(',') != std::string::npos)
            return std::nullopt;
        s = stripped;
    }
    auto value = parse_decimal(s);
    if (!value)
        return std::nullopt;
    out.value = negative ? Rational(-*value) : *value;
    out.decimals = decimal_places(s);
    return out;
}

bool within_tolerance(const Rational& a, const Rational& b, int decimals)
{
    Rational abs_tol = Rational(5) * pow10(-(std::max(decimals, 0) + 1));
    Rational rel_tol = Rational(1, 10000) * std::max(abs(a), abs(b));
    return abs(a - b) <= std::max(abs_tol, rel_tol);
}

bool numbers_match(const Rational& pred, Scale pred_scale, const Rational& gold, Scale gold_scale, int decimals)
{
    if (pred_scale == gold_scale)
        return within_tolerance(pred, gold, decimals);
    if (pred_scale == Scale::percent)
        return within_tolerance(pred, gold, decimals) || within_tolerance(pred / 100, gold, decimals);
    if (gold_scale == Scale::percent)
        return within_tolerance(pred, gold, decimals) || within_tolerance(pred * 100, gold, decimals);
    Rational folded = pred * scale_multiplier(pred_scale) / scale_multiplier(gold_scale);
    return within_tolerance(folded, gold, decimals);
}

WeakLabel compare_answers(const FinalAnswer& pred, const GoldAnswer& gold)
{
    auto label = [](bool ok) { return ok ? WeakLabel::positive : WeakLabel::negative; };
    switch (gold.kind)
    {
        case AnswerKind::numeric: {
            auto g = std::get_if<Rational>(&gold.value);
            auto p = numeric_view(pred.value, pred.scale);
            if (!g || !p)
                return WeakLabel::negative;
            return label(numbers_match(p->value, p->scale, *g, gold.scale, gold.decimals));
        }
        case AnswerKind::span:
        case AnswerKind::choice: {
            auto g = text_view(gold.value);
            auto p = text_view(pred.value);
            if (!g || !p)
                return WeakLabel::negative;
            return label(texts_match(*p, pred.scale, *g, gold.scale));
        }
        case AnswerKind::multispan: {
            std::vector<std::string> g;
            if (auto list = std::get_if<std::vector<std::string>>(&gold.value))
                g = *list;
            else if (auto t = text_view(gold.value))
                g = {*t};
            std::vector<std::string> p;
            if (auto list = std::get_if<std::vector<std::string>>(&pred.value))
                p = *list;
            else if (auto t = text_view(pred.value))
                p = {*t};
            else
                return WeakLabel::negative;
            if (g.size() != p.size())
                return WeakLabel::negative;
            for (auto& s: g)
                s = normalize_text(s);
            for (auto& s: p)
                s = normalize_text(s);
            std::sort(g.begin(), g.end());
            std::sort(p.begin(), p.end());
            return label(g == p);
        }
        case AnswerKind::boolean: {
            std::optional<bool> g;
            if (auto b = std::get_if<bool>(&gold.value))
                g = *b;
            else if (auto t = std::get_if<std::string>(&gold.value))
                g = parse_boolean(*t);
            std::optional<bool> p;
            if (auto b = std::get_if<bool>(&pred.value))
                p = *b;
            else if (auto t = text_view(pred.value))
                p = parse_boolean(*t);
            return label(g && p && *g == *p);
        }
    }
    return WeakLabel::negative;
}

std::string_view metric_name(Dataset dataset)
{
    return dataset == Dataset::TatQA ? "EM" : "Acc";
}

std::string percent_string(std::size_t count, std::size_t total)
{
    if (total == 0)
        return "0.00";
    // hundredths of a percent, rounded half up
    Rational scaled = Rational(BigInt(count) * 10000, BigInt(total)) + Rational(1, 2);
    BigInt hundredths = floor_div(scaled);
    BigInt whole = hundredths / 100;
    BigInt frac = hundredths % 100;
    std::string f = frac.str();
    if (f.size() < 2)
        f.insert(0, 2 - f.size(), '0');
    return whole.str() + "." + f;
}

MetricReport score_run(const std::vector<TrajectoryRecord>& records, Dataset dataset)
{
    if (records.empty())
        throw EmptyRun();
    MetricReport report;
    report.dataset = dataset;
    report.metric = metric_name(dataset);
    report.total = records.size();
    for (const auto& r: records)
    {
        bool ok = r.label == WeakLabel::positive;
        report.correct += ok;
        if (r.category)
        {
            auto& cat = report.categories[*r.category];
            ++cat.total;
            cat.correct += ok;
        }
    }
    report.incorrect = report.total - report.correct;
    report.correct_pct = percent_string(report.correct, report.total);
    report.incorrect_pct = percent_string(report.incorrect, report.total);
    for (auto& [name, cat]: report.categories)
        cat.value = percent_string(cat.correct, cat.total);
    return report;
}

std::string to_text(const MetricReport& report)
{
    std::string out;
    out += "dataset: " + std::string(to_string(report.dataset)) + "\n";
    out += "metric: " + report.metric + "\n";
    out += "total: " + std::to_string(report.total) + "\n";
    out += "correct: " + std::to_string(report.correct) + "\n";
    out += "incorrect: " + std::to_string(report.incorrect) + "\n";
    out += "correct_pct: " + report.correct_pct + "\n";
    out += "incorrect_pct: " + report.incorrect_pct + "\n";
    out += report.metric + ": " + report.correct_pct + "\n";
    for (const auto& [name, cat]: report.categories)
        out += "category." + name + ": " + cat.value + " (" + std::to_string(cat.correct) + "/"
               + std::to_string(cat.total) + ")\n";
    return out;
}

} // namespace tabreason
