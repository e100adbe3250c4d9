// SPDX-License-Identifier: Apache-2.0
#include "tabreason/planner.hpp"

#include "tabreason/table.hpp"

#include <cctype>
#include <set>
#include <sstream>

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

} // namespace

std::string_view to_string(PlanErrorKind kind)
{
    switch (kind)
    {
        case PlanErrorKind::EmptyPlan: return "EmptyPlan";
        case PlanErrorKind::UnknownTool: return "UnknownTool";
        case PlanErrorKind::NoFinalAnswerGenerator: return "NoFinalAnswerGenerator";
        case PlanErrorKind::ExecutorWithoutGenerator: return "ExecutorWithoutGenerator";
        case PlanErrorKind::GeneratorWithoutExecutor: return "GeneratorWithoutExecutor";
        case PlanErrorKind::DuplicateTool: return "DuplicateTool";
    }
    return "";
}

PlanError::PlanError(PlanErrorKind kind, std::string detail):
    Error(std::string(to_string(kind)) + (detail.empty() ? "" : "(" + detail + ")")),
    kind_(kind),
    detail_(std::move(detail))
{
}

PromptFields state_fields(const ToolState& state)
{
    return PromptFields {
        {"CONTEXT", state.context},
        {"TABLE", render_table(state.table)},
        {"QUESTION", state.question},
    };
}

std::string render_planner_prompt(const ToolState& state, const PromptTemplate& tpl)
{
    return render_prompt(tpl, state_fields(state));
}

std::string render_planner_prompt(const ProblemInstance& instance, const PromptTemplate& tpl)
{
    return render_planner_prompt(initial_state(instance), tpl);
}

Trajectory parse_trajectory(std::string_view completion)
{
    if (auto end = completion.find("#END"); end != std::string_view::npos)
        completion = completion.substr(0, end);

    std::string line;
    std::size_t start = 0;
    while (start < completion.size())
    {
        auto end = completion.find('\n', start);
        auto candidate = trim(completion.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
        start = end == std::string_view::npos ? completion.size() : end + 1;
        if (candidate.starts_with("MODULES:"))
            candidate = trim(candidate.substr(8));
        if (!candidate.empty())
        {
            line = candidate;
            break;
        }
    }
    if (line.empty())
        throw PlanError(PlanErrorKind::EmptyPlan, "");

    // the one alias spelled with a space
    for (std::size_t pos; (pos = line.find("Knowledge Retrieval")) != std::string::npos;)
        line[pos + 9] = '_';

    Trajectory trajectory;
    std::istringstream tokens(line);
    for (std::string token; tokens >> token;)
    {
        auto tool = parse_tool_id(token);
        if (!tool)
            throw PlanError(PlanErrorKind::UnknownTool, token);
        trajectory.steps.push_back(*tool);
    }
    return trajectory;
}

std::string format_trajectory(const Trajectory& trajectory)
{
    std::string out;
    for (auto tool: trajectory.steps)
    {
        if (!out.empty())
            out += ' ';
        out += wire_name(tool);
    }
    return out;
}

Trajectory validate_trajectory(Trajectory trajectory)
{
    const auto& steps = trajectory.steps;
    if (steps.empty())
        throw PlanError(PlanErrorKind::EmptyPlan, "");
    if (steps.back() != ToolId::AnswerGenerator)
        throw PlanError(PlanErrorKind::NoFinalAnswerGenerator, std::string(wire_name(steps.back())));

    std::set<ToolId> seen;
    for (std::size_t i = 0; i < steps.size(); ++i)
    {
        if (!seen.insert(steps[i]).second)
            throw PlanError(PlanErrorKind::DuplicateTool, std::string(wire_name(steps[i])));
        if (steps[i] == ToolId::ProgramExecutor && (i == 0 || steps[i - 1] != ToolId::ProgramGeneratorAndVerifier))
            throw PlanError(PlanErrorKind::ExecutorWithoutGenerator, "step " + std::to_string(i));
        if (steps[i] == ToolId::ProgramGeneratorAndVerifier
            && (i + 1 >= steps.size() || steps[i + 1] != ToolId::ProgramExecutor))
            throw PlanError(PlanErrorKind::GeneratorWithoutExecutor, "step " + std::to_string(i));
    }
    return trajectory;
}

Trajectory repair_and_validate(Trajectory trajectory)
{
    if (!trajectory.steps.empty() && trajectory.steps.back() != ToolId::AnswerGenerator)
        trajectory.steps.push_back(ToolId::AnswerGenerator);
    return validate_trajectory(std::move(trajectory));
}

} // namespace tabreason
