// SPDX-License-Identifier: Apache-2.0
#include "fixtures.hpp"

#include "tabreason/core.hpp"

#include <gtest/gtest.h>

using namespace tabreason;
using namespace testing_support;

TEST(Names, ToolRoundTrip)
{
    for (auto tool: all_tools)
    {
        auto name = wire_name(tool);
        ASSERT_TRUE(parse_tool_id(name)) << name;
        EXPECT_EQ(*parse_tool_id(name), tool);
    }
    EXPECT_EQ(wire_name(ToolId::ProgramGeneratorAndVerifier), "Program_Generator_And_Verifier");
    EXPECT_EQ(file_stem(ToolId::ScaleFinder), "scale_finder");
}

TEST(Names, AlternativeSpellingsAndCase)
{
    EXPECT_EQ(parse_tool_id("Program_Generator"), ToolId::ProgramGeneratorAndVerifier);
    EXPECT_FALSE(parse_tool_id("row_lookup"));
    EXPECT_FALSE(parse_tool_id("Quantum_Solver"));
}

TEST(Names, EnumsRoundTrip)
{
    for (auto d: {Dataset::FinQA, Dataset::TatQA, Dataset::TabMWP})
        EXPECT_EQ(parse_dataset(to_string(d)), d);
    for (auto s: {Split::train, Split::dev, Split::test})
        EXPECT_EQ(parse_split(to_string(s)), s);
    for (auto p: {Phase::PE, Phase::IT, Phase::IT_KTO})
        EXPECT_EQ(parse_phase(to_string(p)), p);
    for (auto k: {FailureKind::InvalidPlan, FailureKind::BackendError, FailureKind::ParseError, FailureKind::ExecError})
        EXPECT_EQ(parse_failure_kind(to_string(k)), k);
    EXPECT_EQ(to_string(Scale::none), "");
    EXPECT_EQ(to_string(Scale::thousand), "thousand");
}

TEST(InitialState, WorkedExample)
{
    auto instance = worked::instance();
    auto state = initial_state(instance);
    EXPECT_EQ(state.question, worked::question);
    EXPECT_TRUE(state.answer.empty());
    EXPECT_EQ(state.table, instance.table);
    EXPECT_EQ(initial_state(instance), state);
    EXPECT_FALSE(is_terminal(state));
}

TEST(InitialState, EmptyContextKeepsTable)
{
    auto instance = worked::instance();
    instance.context.clear();
    auto state = initial_state(instance);
    EXPECT_TRUE(state.context.empty());
    EXPECT_EQ(state.table, instance.table);
}

TEST(IsTerminal, OnlyFinalAnswer)
{
    ToolState s;
    s.answer.payload = ExecutionResult {Rational(1149, 100)};
    EXPECT_FALSE(is_terminal(s));
    s.answer.payload = FinalAnswer {AnswerKind::numeric, Rational(2447388, 10), Scale::thousand, "244738.8"};
    EXPECT_TRUE(is_terminal(s));
}

TEST(ValidateInstance, RejectsBlankQuestionAndEmptyInputs)
{
    auto instance = worked::instance();
    EXPECT_NO_THROW(validate_instance(instance));
    auto blank = instance;
    blank.question = "   ";
    EXPECT_THROW(validate_instance(blank), Error);
    auto bare = instance;
    bare.context.clear();
    bare.table = {};
    EXPECT_THROW(validate_instance(bare), Error);
}

TEST(PythonList, EscapesQuotes)
{
    EXPECT_EQ(python_list_literal({"73,260", "57,768"}), "['73,260', '57,768']");
    EXPECT_EQ(python_list_literal({"it's"}), "['it\\'s']");
    EXPECT_EQ(python_list_literal({}), "[]");
}
