// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tabreason/answer.hpp"
#include "tabreason/backend.hpp"
#include "tabreason/core.hpp"
#include "tabreason/prompt.hpp"
#include "tabreason/table.hpp"

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace tabreason
{

/// Completion that cannot be used by the tool that requested it.
class ToolParseError: public Error
{
  public:
    using Error::Error;
};

/// A deterministic tool could not compute its result.
class ToolExecError: public Error
{
  public:
    using Error::Error;
};

enum class BindingKind
{
    llm,
    deterministic,
};

struct ToolBinding
{
    ToolId tool = ToolId::AnswerGenerator;
    BindingKind kind = BindingKind::deterministic;
    std::optional<PromptTemplate> prompt;
    std::optional<std::string> adapter;
    std::string output_parser; ///< section header the parser looks for; empty for deterministic tools
};

/// Throws Error unless llm bindings carry a template and an adapter and
/// deterministic ones carry neither.
void validate_binding(const ToolBinding& binding);

/// Output section header of an llm-backed tool, e.g. "SIMPLIFIED TABLE:".
std::string_view section_header(ToolId tool);

using ParsedOutput = std::variant<Table, std::string, std::vector<std::string>, ProgramText, ScaleParse>;

/// Drops everything from "#END" on, finds the tool's section header (or uses
/// the whole completion) and converts the payload to the tool's native shape.
ParsedOutput parse_tool_output(ToolId tool, std::string_view completion);

/// "['a', 'b']" with an optional trailing period; bare numbers are accepted
/// as their text.
std::vector<std::string> parse_span_list(std::string_view text);

/// Fills a tool template from a state; SOLUTION is the rendered answer slot.
std::string render_llm_prompt(const PromptTemplate& tpl, const ToolState& state);

/// Prompt an llm tool sees for a state; the scale finder's SOLUTION field is
/// the rendered answer slot. Deterministic tools get a fixed rendering of the
/// state so they can be exported with the same shape.
std::string render_tool_prompt(ToolId tool, const TemplateSet& templates, const ToolState& state);

/// The output section a step produced, reconstructed from its states and
/// terminated with "#END" the way the few-shot examples are.
std::string step_completion(const StepRecord& step);

/// The final answer the deterministic Answer_Generator reads off a state.
std::optional<FinalAnswer> extract_answer(const ToolState& state);

struct ToolSettings
{
    double temperature = 0.0;
    int max_tokens = 1024;
};

struct StepOutcome
{
    ToolState state;
    std::optional<std::string> digest;
    std::optional<SubtableReport> subtable;
    std::optional<std::string> warning;
};

struct TrajectoryDiagnostics
{
    std::size_t subtable_violations = 0;
    std::vector<std::string> warnings;
};

/// Executes tools against a gateway. Immutable after construction and safe
/// to share between worker threads.
class ToolRuntime
{
  public:
    ToolRuntime(Gateway& gateway, TemplateSet templates, std::map<ToolId, ToolBinding> bindings,
                ToolSettings settings = {});

    /// Bindings for every tool: templates from the set, adapters from the
    /// routing table for the phase.
    static std::map<ToolId, ToolBinding> make_bindings(const TemplateSet& templates, const RoutingTable& routing,
                                                       Phase phase);

    StepOutcome apply(ToolId tool, const ToolState& state) const;

    /// Folds the plan over the initial state. Backend, parse and execution
    /// failures end the run and are stored in the record; the label stays
    /// negative until the caller compares the prediction.
    TrajectoryRecord run_trajectory(const ProblemInstance& instance, const Trajectory& plan,
                                    TrajectoryDiagnostics* diagnostics = nullptr) const;

    [[nodiscard]] const TemplateSet& templates() const noexcept { return templates_; }
    [[nodiscard]] const ToolSettings& settings() const noexcept { return settings_; }
    [[nodiscard]] Gateway& gateway() const noexcept { return gateway_; }

  private:
    Gateway& gateway_;
    TemplateSet templates_;
    std::map<ToolId, ToolBinding> bindings_;
    ToolSettings settings_;
};

ChatRequest make_request(const std::string& adapter, std::string prompt, const ToolSettings& settings);

} // namespace tabreason
