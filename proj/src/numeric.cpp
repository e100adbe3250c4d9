// SPDX-License-Identifier: Apache-2.0
#include "tabreason/numeric.hpp"

#include <cctype>

namespace tabreason
{

namespace
{

constexpr int max_literal_exponent = 4000;

bool is_digit(char c)
{
    return c >= '0' && c <= '9';
}

std::size_t decimal_digit_count(const BigInt& v)
{
    return (v < 0 ? BigInt(-v) : v).str().size();
}

} // namespace

Rational pow10(int exponent)
{
    BigInt p = boost::multiprecision::pow(BigInt(10), static_cast<unsigned>(exponent < 0 ? -exponent : exponent));
    return exponent < 0 ? Rational(BigInt(1), p) : Rational(p);
}

std::optional<Rational> parse_decimal(std::string_view text)
{
    std::size_t i = 0;
    bool negative = false;
    if (i < text.size() && (text[i] == '+' || text[i] == '-'))
        negative = text[i++] == '-';

    BigInt mantissa = 0;
    int scale = 0;
    bool any_digit = false;
    while (i < text.size() && is_digit(text[i]))
    {
        mantissa = mantissa * 10 + (text[i++] - '0');
        any_digit = true;
    }
    if (i < text.size() && text[i] == '.')
    {
        ++i;
        while (i < text.size() && is_digit(text[i]))
        {
            mantissa = mantissa * 10 + (text[i++] - '0');
            --scale;
            any_digit = true;
        }
    }
    if (!any_digit)
        return std::nullopt;

    if (i < text.size() && (text[i] == 'e' || text[i] == 'E'))
    {
        ++i;
        bool exp_negative = false;
        if (i < text.size() && (text[i] == '+' || text[i] == '-'))
            exp_negative = text[i++] == '-';
        if (i >= text.size() || !is_digit(text[i]))
            return std::nullopt;
        int exponent = 0;
        while (i < text.size() && is_digit(text[i]))
        {
            exponent = exponent * 10 + (text[i++] - '0');
            if (exponent > max_literal_exponent)
                return std::nullopt;
        }
        scale += exp_negative ? -exponent : exponent;
    }
    if (i != text.size())
        return std::nullopt;

    Rational value = Rational(mantissa) * pow10(scale);
    return negative ? Rational(-value) : value;
}

int decimal_places(std::string_view text)
{
    auto dot = text.find('.');
    if (dot == std::string_view::npos)
        return 0;
    int places = 0;
    for (std::size_t i = dot + 1; i < text.size() && is_digit(text[i]); ++i)
        ++places;
    return places;
}

std::string format_exact(const Rational& value)
{
    BigInt num = boost::multiprecision::numerator(value);
    BigInt den = boost::multiprecision::denominator(value);
    if (den == 1)
        return num.str();

    BigInt rest = den;
    int twos = 0;
    int fives = 0;
    while (rest % 2 == 0)
    {
        rest /= 2;
        ++twos;
    }
    while (rest % 5 == 0)
    {
        rest /= 5;
        ++fives;
    }
    if (rest != 1)
        return num.str() + "/" + den.str();

    int places = std::max(twos, fives);
    BigInt scaled = boost::multiprecision::numerator(value * pow10(places));
    bool negative = scaled < 0;
    std::string digits = (negative ? BigInt(-scaled) : scaled).str();
    if (digits.size() <= static_cast<std::size_t>(places))
        digits.insert(0, static_cast<std::size_t>(places) - digits.size() + 1, '0');
    digits.insert(digits.size() - static_cast<std::size_t>(places), ".");
    return (negative ? "-" : "") + digits;
}

std::optional<Rational> parse_exact(std::string_view text)
{
    auto slash = text.find('/');
    if (slash == std::string_view::npos)
        return parse_decimal(text);
    auto num = parse_decimal(text.substr(0, slash));
    auto den = parse_decimal(text.substr(slash + 1));
    if (!num || !den || *den == 0)
        return std::nullopt;
    return *num / *den;
}

BigInt floor_div(const Rational& value)
{
    BigInt num = boost::multiprecision::numerator(value);
    BigInt den = boost::multiprecision::denominator(value);
    BigInt q = num / den;
    if (num % den != 0 && num < 0)
        q -= 1;
    return q;
}

Rational round_half_even(const Rational& value, int places)
{
    Rational scaled = value * pow10(places);
    BigInt floor = floor_div(scaled);
    Rational frac = scaled - Rational(floor);
    Rational half(1, 2);
    if (frac > half || (frac == half && floor % 2 != 0))
        floor += 1;
    return Rational(floor) / pow10(places);
}

std::string format_significant(const Rational& value, int digits)
{
    if (value == 0)
        return "0";
    bool negative = value < 0;
    Rational x = negative ? Rational(-value) : value;

    int e = static_cast<int>(decimal_digit_count(boost::multiprecision::numerator(x)))
          - static_cast<int>(decimal_digit_count(boost::multiprecision::denominator(x)));
    while (x < pow10(e))
        --e;
    while (x >= pow10(e + 1))
        ++e;

    BigInt n = floor_div(round_half_even(x * pow10(digits - 1 - e), 0));
    if (n == boost::multiprecision::pow(BigInt(10), static_cast<unsigned>(digits)))
    {
        n /= 10;
        ++e;
    }
    std::string s = n.str();

    auto trim_fraction = [](std::string out) {
        if (out.find('.') == std::string::npos)
            return out;
        while (!out.empty() && out.back() == '0')
            out.pop_back();
        if (!out.empty() && out.back() == '.')
            out.pop_back();
        return out;
    };

    std::string out;
    if (e >= -6 && e < 12)
    {
        if (e >= digits - 1)
            out = s + std::string(static_cast<std::size_t>(e - digits + 1), '0');
        else if (e >= 0)
            out = trim_fraction(s.substr(0, static_cast<std::size_t>(e + 1)) + "." + s.substr(static_cast<std::size_t>(e + 1)));
        else
            out = trim_fraction("0." + std::string(static_cast<std::size_t>(-e - 1), '0') + s);
    }
    else
    {
        std::string mantissa = trim_fraction(s.substr(0, 1) + "." + s.substr(1));
        std::string exp = std::to_string(e < 0 ? -e : e);
        if (exp.size() < 2)
            exp.insert(0, "0");
        out = mantissa + (e < 0 ? "e-" : "e+") + exp;
    }
    return (negative ? "-" : "") + out;
}

} // namespace tabreason
