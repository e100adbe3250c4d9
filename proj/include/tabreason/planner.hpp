// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tabreason/core.hpp"
#include "tabreason/prompt.hpp"

#include <string>
#include <string_view>

namespace tabreason
{

enum class PlanErrorKind
{
    EmptyPlan,
    UnknownTool,
    NoFinalAnswerGenerator,
    ExecutorWithoutGenerator,
    GeneratorWithoutExecutor,
    DuplicateTool,
};

std::string_view to_string(PlanErrorKind kind);

class PlanError: public Error
{
  public:
    PlanError(PlanErrorKind kind, std::string detail);

    [[nodiscard]] PlanErrorKind kind() const noexcept { return kind_; }
    [[nodiscard]] const std::string& detail() const noexcept { return detail_; }

  private:
    PlanErrorKind kind_;
    std::string detail_;
};

/// CONTEXT / TABLE / QUESTION fields of a state, table rendered as pipe text.
PromptFields state_fields(const ToolState& state);

std::string render_planner_prompt(const ProblemInstance& instance, const PromptTemplate& tpl);
std::string render_planner_prompt(const ToolState& state, const PromptTemplate& tpl);

/// Reads the first line carrying module names, after dropping anything from
/// "#END" on and an optional "MODULES:" prefix.
Trajectory parse_trajectory(std::string_view completion);

/// Canonical names joined by single spaces.
std::string format_trajectory(const Trajectory& trajectory);

/// Returns the trajectory unchanged or throws PlanError naming the first
/// violated rule.
Trajectory validate_trajectory(Trajectory trajectory);

/// Appends a missing trailing Answer_Generator once, then validates.
Trajectory repair_and_validate(Trajectory trajectory);

} // namespace tabreason
