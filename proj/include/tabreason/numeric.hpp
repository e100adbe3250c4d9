// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <optional>
#include <string>
#include <string_view>

namespace tabreason
{

/// Exact rational number used for every numeric answer, gold value and
/// interpreter result. Decimal literals convert without loss.
using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

/// Parses a plain decimal literal: optional sign, digits, optional fraction,
/// optional exponent ("-266.95", ".5", "1e3"). No grouping, no currency.
std::optional<Rational> parse_decimal(std::string_view text);

/// Number of digits after the decimal point in a plain literal ("244738.8" -> 1).
int decimal_places(std::string_view text);

/// Lossless text form: a terminating decimal when the denominator only has
/// factors 2 and 5, otherwise "p/q". Inverse of parse_exact.
std::string format_exact(const Rational& value);
std::optional<Rational> parse_exact(std::string_view text);

/// Rounded display form with `digits` significant digits, trailing zeros
/// trimmed; switches to scientific notation outside [1e-6, 1e12).
std::string format_significant(const Rational& value, int digits = 12);

/// Round half to even at `places` decimals (places may be negative).
Rational round_half_even(const Rational& value, int places);

BigInt floor_div(const Rational& value);
Rational pow10(int exponent);

} // namespace tabreason
