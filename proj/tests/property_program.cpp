// SPDX-License-Identifier: Apache-2.0
// Interpreter properties over randomly generated programs.
#include "oracle.hpp"

#include "tabreason/program.hpp"

#include <gtest/gtest.h>

#include <thread>

using namespace tabreason;

namespace
{

mpq_class to_mpq(const Rational& r)
{
    return oracle::parse_exact(format_exact(r));
}

std::optional<Value> try_run(const std::string& source)
{
    try
    {
        return run_program(source);
    }
    catch (const ProgramError&)
    {
        return std::nullopt;
    }
}

} // namespace

TEST(ProgramProperty, AgreesWithReferenceEvaluator)
{
    oracle::Rng rng(99);
    int compared = 0;
    for (int i = 0; i < 400; ++i)
    {
        auto program = oracle::random_program(rng);
        auto expected = oracle::evaluate(program);
        if (!expected.div_by_zero && expected.max_magnitude > mpq_class(mpz_class("1" + std::string(40, '0'), 10)))
            continue;
        auto source = oracle::render(program, rng, false);
        auto got = try_run(source);
        if (expected.div_by_zero)
        {
            EXPECT_FALSE(got) << source;
            continue;
        }
        ASSERT_TRUE(got) << source;
        EXPECT_TRUE(oracle::relative_close(to_mpq(got->number), expected.value, mpq_class(1, 1000000000))) << source;
        ++compared;
    }
    EXPECT_GT(compared, 300);
}

TEST(ProgramProperty, DigitGroupingDoesNotChangeValue)
{
    oracle::Rng rng(5);
    for (int i = 0; i < 300; ++i)
    {
        auto program = oracle::random_program(rng);
        auto plain = try_run(oracle::render(program, rng, false));
        auto grouped = try_run(oracle::render(program, rng, true));
        ASSERT_EQ(plain.has_value(), grouped.has_value());
        if (plain)
            EXPECT_EQ(plain->number, grouped->number);
    }
}

TEST(ProgramProperty, DeterministicAcrossThreads)
{
    oracle::Rng rng(17);
    std::vector<std::string> sources;
    for (int i = 0; i < 100; ++i)
        sources.push_back(oracle::render(oracle::random_program(rng), rng, true));
    auto evaluate_all = [&] {
        std::vector<std::string> out;
        for (const auto& s: sources)
        {
            auto v = try_run(s);
            out.push_back(v ? format_exact(v->number) : "error");
        }
        return out;
    };
    auto reference = evaluate_all();
    std::vector<std::vector<std::string>> results(4);
    std::vector<std::thread> threads;
    for (auto& r: results)
        threads.emplace_back([&r, &evaluate_all] { r = evaluate_all(); });
    for (auto& t: threads)
        t.join();
    for (const auto& r: results)
        EXPECT_EQ(r, reference);
}

TEST(ProgramProperty, ComparisonChainsMatchPairwise)
{
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> d(-5, 5);
    for (int i = 0; i < 500; ++i)
    {
        int a = d(rng), b = d(rng), c = d(rng);
        auto chained = run_program("ans = " + std::to_string(a) + " < " + std::to_string(b) + " <= " + std::to_string(c));
        EXPECT_EQ(chained.flag, a < b && b <= c) << a << " " << b << " " << c;
    }
}

TEST(ProgramProperty, FloorDivAndModReconstruct)
{
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> d(-1000, 1000);
    for (int i = 0; i < 500; ++i)
    {
        int a = d(rng), b = d(rng);
        if (b == 0)
            continue;
        auto q = run_program("ans = " + std::to_string(a) + " // " + std::to_string(b)).number;
        auto r = run_program("ans = " + std::to_string(a) + " % " + std::to_string(b)).number;
        EXPECT_EQ(q * b + r, Rational(a));
        // remainder takes the divisor's sign
        EXPECT_TRUE(r == 0 || (r > 0) == (b > 0));
    }
}
