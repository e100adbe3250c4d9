// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tabreason/numeric.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace tabreason
{

/// Root of every exception thrown by the library.
class Error: public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

enum class Dataset
{
    FinQA,
    TatQA,
    TabMWP,
};

enum class Split
{
    train,
    dev,
    test,
};

enum class Scale
{
    none,
    thousand,
    million,
    billion,
    percent,
};

enum class AnswerKind
{
    numeric,
    span,
    multispan,
    boolean,
    choice,
};

enum class ToolId
{
    RowLookup,
    ColumnLookup,
    ContextExtractor,
    SpanExtractor,
    KnowledgeRetrieval,
    ProgramGeneratorAndVerifier,
    ProgramExecutor,
    SolutionGenerator,
    ScaleFinder,
    AnswerGenerator,
};

inline constexpr std::array<ToolId, 10> all_tools {
    ToolId::RowLookup,          ToolId::ColumnLookup,
    ToolId::ContextExtractor,   ToolId::SpanExtractor,
    ToolId::KnowledgeRetrieval, ToolId::ProgramGeneratorAndVerifier,
    ToolId::ProgramExecutor,    ToolId::SolutionGenerator,
    ToolId::ScaleFinder,        ToolId::AnswerGenerator,
};

enum class WeakLabel : int
{
    positive = 1,
    negative = -1,
};

/// Which adapter generation serves the tools: prompt-engineered base model,
/// instruction-tuned adapters, or preference-optimized adapters.
enum class Phase
{
    PE,
    IT,
    IT_KTO,
};

std::string_view to_string(Dataset dataset);
std::string_view to_string(Split split);
std::string_view to_string(AnswerKind kind);
std::string_view to_string(Phase phase);
std::string_view to_string(WeakLabel label);

/// Scale wire form: "" for none, otherwise the unit word.
std::string_view to_string(Scale scale);

std::optional<Dataset> parse_dataset(std::string_view text);
std::optional<Split> parse_split(std::string_view text);
std::optional<AnswerKind> parse_answer_kind(std::string_view text);
std::optional<Phase> parse_phase(std::string_view text);

/// Canonical planner-vocabulary name, e.g. "Program_Generator_And_Verifier".
std::string_view wire_name(ToolId tool);

/// Lower-case file stem used for per-tool exports, e.g. "scale_finder".
std::string file_stem(ToolId tool);

/// Exact, case-sensitive match on the canonical names plus the alternative
/// spellings of the tool overview table ("Program_Generator", "Answer_Extractor", ...).
std::optional<ToolId> parse_tool_id(std::string_view token);

/// Cells of a pipe-delimited table. Equality is cell-level; the padding count
/// is bookkeeping only.
struct Table
{
    std::vector<std::vector<std::string>> rows;
    std::size_t padded_cells = 0;

    [[nodiscard]] bool empty() const noexcept { return rows.empty(); }
    [[nodiscard]] std::size_t row_count() const noexcept { return rows.size(); }
    [[nodiscard]] std::size_t col_count() const noexcept { return rows.empty() ? 0 : rows.front().size(); }

    friend bool operator==(const Table& a, const Table& b) { return a.rows == b.rows; }
};

/// numeric -> Rational, span/choice -> text, multispan -> list, boolean -> flag.
using AnswerValue = std::variant<Rational, std::string, std::vector<std::string>, bool>;

struct GoldAnswer
{
    AnswerKind kind = AnswerKind::span;
    AnswerValue value;
    Scale scale = Scale::none;
    int decimals = 0; ///< digits after the point in the source literal (numeric only)
    std::optional<std::string> derivation;

    friend bool operator==(const GoldAnswer&, const GoldAnswer&) = default;
};

struct FinalAnswer
{
    AnswerKind kind = AnswerKind::span;
    AnswerValue value;
    Scale scale = Scale::none;
    std::string raw;

    friend bool operator==(const FinalAnswer&, const FinalAnswer&) = default;
};

struct ProblemInstance
{
    std::string id;
    std::string question;
    std::string context;
    Table table;
    GoldAnswer gold;
    Dataset dataset = Dataset::FinQA;
    Split split = Split::train;
    std::optional<std::string> category; ///< source answer-type tags, passed through verbatim
};

/// Throws Error when the question is blank or both context and table are empty.
void validate_instance(const ProblemInstance& instance);

struct EmptySlot
{
    friend bool operator==(const EmptySlot&, const EmptySlot&) = default;
};

struct SolutionText
{
    std::string text;
    friend bool operator==(const SolutionText&, const SolutionText&) = default;
};

struct ProgramText
{
    std::string source;
    friend bool operator==(const ProgramText&, const ProgramText&) = default;
};

/// Program output: a number, or the rendered text of a list/boolean result.
struct ExecutionResult
{
    std::variant<Rational, std::string> value;
    friend bool operator==(const ExecutionResult&, const ExecutionResult&) = default;
};

struct SpanList
{
    std::vector<std::string> spans;
    friend bool operator==(const SpanList&, const SpanList&) = default;
};

using SlotPayload = std::variant<EmptySlot, SolutionText, ProgramText, ExecutionResult, SpanList, FinalAnswer>;

/// The threaded answer a_i. A scale found by the scale finder is attached
/// next to the payload so the draft answer it qualifies survives.
struct AnswerSlot
{
    SlotPayload payload;
    std::optional<Scale> scale;

    [[nodiscard]] bool empty() const noexcept
    {
        return std::holds_alternative<EmptySlot>(payload) && !scale;
    }
    friend bool operator==(const AnswerSlot&, const AnswerSlot&) = default;
};

std::string_view slot_kind_name(const AnswerSlot& slot);

/// Human-readable rendering of the slot payload (used in prompts and exports).
std::string render_slot(const AnswerSlot& slot);
std::string render_answer_value(const AnswerValue& value);

/// Single-quoted Python list literal with backslash escapes.
std::string python_list_literal(const std::vector<std::string>& items);

struct ToolState
{
    std::string question;
    std::string context;
    Table table;
    AnswerSlot answer;

    friend bool operator==(const ToolState&, const ToolState&) = default;
};

ToolState initial_state(const ProblemInstance& instance);
bool is_terminal(const ToolState& state);

struct Trajectory
{
    std::vector<ToolId> steps;
    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct StepRecord
{
    ToolId tool = ToolId::AnswerGenerator;
    ToolState input;
    ToolState output;
    std::optional<std::string> digest; ///< backend call digest, llm tools only

    friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

enum class FailureKind
{
    InvalidPlan,
    BackendError,
    ParseError,
    ExecError,
};

std::string_view to_string(FailureKind kind);
std::optional<FailureKind> parse_failure_kind(std::string_view text);

struct FailureReason
{
    FailureKind kind = FailureKind::ParseError;
    std::optional<std::size_t> step; ///< index into the plan; absent for planning failures
    std::string message;

    friend bool operator==(const FailureReason&, const FailureReason&) = default;
};

struct TrajectoryRecord
{
    std::string instance_id;
    Dataset dataset = Dataset::FinQA;
    std::optional<std::string> category;
    ToolState input;                         ///< initial state (q, c, t, empty)
    std::optional<std::string> planner_digest;
    std::optional<std::string> plan_raw;     ///< raw planner line when it could not be used as-is
    Trajectory plan;
    std::vector<StepRecord> steps;
    std::optional<FinalAnswer> predicted;
    WeakLabel label = WeakLabel::negative;
    std::optional<FailureReason> failure;

    friend bool operator==(const TrajectoryRecord&, const TrajectoryRecord&) = default;
};

struct TrainingConfig
{
    double learning_rate = 1e-5;
    int batch_size = 32;
    int epochs = 10;
    int lora_rank = 64;
    int lora_alpha = 32;
    double lora_dropout = 0.05;
    double kto_beta = 0.1;
    double desirable_weight = 1.0;
    double undesirable_weight = 1.0;
};

} // namespace tabreason
