// SPDX-License-Identifier: Apache-2.0
#include "tabreason/core.hpp"

#include <algorithm>
#include <cctype>
#include <utility>

namespace tabreason
{

namespace
{

struct ToolName
{
    ToolId tool;
    std::string_view wire;
};

constexpr std::array<ToolName, 10> canonical_names {{
    {ToolId::RowLookup, "Row_Lookup"},
    {ToolId::ColumnLookup, "Column_Lookup"},
    {ToolId::ContextExtractor, "Context_Extractor"},
    {ToolId::SpanExtractor, "Span_Extractor"},
    {ToolId::KnowledgeRetrieval, "Knowledge_Retrieval"},
    {ToolId::ProgramGeneratorAndVerifier, "Program_Generator_And_Verifier"},
    {ToolId::ProgramExecutor, "Program_Executor"},
    {ToolId::SolutionGenerator, "Solution_Generator"},
    {ToolId::ScaleFinder, "Scale_Finder"},
    {ToolId::AnswerGenerator, "Answer_Generator"},
}};

// Spellings used by the tool overview table. "Row_/Column_Extractor" names a
// single combined tool there and has no unambiguous mapping, so it is absent.
constexpr std::array<ToolName, 5> alias_names {{
    {ToolId::RowLookup, "Row_Extractor"},
    {ToolId::ColumnLookup, "Column_Extractor"},
    {ToolId::KnowledgeRetrieval, "Knowledge Retrieval"},
    {ToolId::ProgramGeneratorAndVerifier, "Program_Generator"},
    {ToolId::AnswerGenerator, "Answer_Extractor"},
}};

std::string lower(std::string_view text)
{
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

} // namespace

std::string python_list_literal(const std::vector<std::string>& items)
{
    std::string out = "[";
    for (std::size_t i = 0; i < items.size(); ++i)
    {
        if (i)
            out += ", ";
        out += '\'';
        for (char c: items[i])
        {
            if (c == '\'' || c == '\\')
                out += '\\';
            out += c;
        }
        out += '\'';
    }
    return out + "]";
}

std::string_view to_string(Dataset dataset)
{
    switch (dataset)
    {
        case Dataset::FinQA: return "FinQA";
        case Dataset::TatQA: return "TAT-QA";
        case Dataset::TabMWP: return "TabMWP";
    }
    return "";
}

std::string_view to_string(Split split)
{
    switch (split)
    {
        case Split::train: return "train";
        case Split::dev: return "dev";
        case Split::test: return "test";
    }
    return "";
}

std::string_view to_string(AnswerKind kind)
{
    switch (kind)
    {
        case AnswerKind::numeric: return "numeric";
        case AnswerKind::span: return "span";
        case AnswerKind::multispan: return "multispan";
        case AnswerKind::boolean: return "boolean";
        case AnswerKind::choice: return "choice";
    }
    return "";
}

std::string_view to_string(Phase phase)
{
    switch (phase)
    {
        case Phase::PE: return "PE";
        case Phase::IT: return "IT";
        case Phase::IT_KTO: return "IT+KTO";
    }
    return "";
}

std::string_view to_string(WeakLabel label)
{
    return label == WeakLabel::positive ? "+1" : "-1";
}

std::string_view to_string(Scale scale)
{
    switch (scale)
    {
        case Scale::none: return "";
        case Scale::thousand: return "thousand";
        case Scale::million: return "million";
        case Scale::billion: return "billion";
        case Scale::percent: return "percent";
    }
    return "";
}

std::string_view to_string(FailureKind kind)
{
    switch (kind)
    {
        case FailureKind::InvalidPlan: return "InvalidPlan";
        case FailureKind::BackendError: return "BackendError";
        case FailureKind::ParseError: return "ParseError";
        case FailureKind::ExecError: return "ExecError";
    }
    return "";
}

std::optional<Dataset> parse_dataset(std::string_view text)
{
    auto key = lower(text);
    if (key == "finqa")
        return Dataset::FinQA;
    if (key == "tatqa" || key == "tat-qa")
        return Dataset::TatQA;
    if (key == "tabmwp")
        return Dataset::TabMWP;
    return std::nullopt;
}

std::optional<Split> parse_split(std::string_view text)
{
    if (text == "train")
        return Split::train;
    if (text == "dev" || text == "validation" || text == "val")
        return Split::dev;
    if (text == "test")
        return Split::test;
    return std::nullopt;
}

std::optional<AnswerKind> parse_answer_kind(std::string_view text)
{
    for (auto kind: {AnswerKind::numeric, AnswerKind::span, AnswerKind::multispan, AnswerKind::boolean, AnswerKind::choice})
        if (to_string(kind) == text)
            return kind;
    return std::nullopt;
}

std::optional<Phase> parse_phase(std::string_view text)
{
    auto key = lower(text);
    if (key == "pe")
        return Phase::PE;
    if (key == "it")
        return Phase::IT;
    if (key == "it+kto" || key == "kto" || key == "it_kto")
        return Phase::IT_KTO;
    return std::nullopt;
}

std::optional<FailureKind> parse_failure_kind(std::string_view text)
{
    for (auto kind: {FailureKind::InvalidPlan, FailureKind::BackendError, FailureKind::ParseError, FailureKind::ExecError})
        if (to_string(kind) == text)
            return kind;
    return std::nullopt;
}

std::string_view wire_name(ToolId tool)
{
    for (const auto& entry: canonical_names)
        if (entry.tool == tool)
            return entry.wire;
    return "";
}

std::string file_stem(ToolId tool)
{
    return lower(wire_name(tool));
}

std::optional<ToolId> parse_tool_id(std::string_view token)
{
    for (const auto& entry: canonical_names)
        if (entry.wire == token)
            return entry.tool;
    for (const auto& entry: alias_names)
        if (entry.wire == token)
            return entry.tool;
    return std::nullopt;
}

void validate_instance(const ProblemInstance& instance)
{
    auto blank = [](const std::string& s) {
        return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
    };
    if (blank(instance.question))
        throw Error("instance " + instance.id + ": question is empty");
    if (blank(instance.context) && instance.table.empty())
        throw Error("instance " + instance.id + ": both context and table are empty");
}

std::string render_answer_value(const AnswerValue& value)
{
    struct Visitor
    {
        std::string operator()(const Rational& v) const { return format_significant(v); }
        std::string operator()(const std::string& v) const { return v; }
        std::string operator()(const std::vector<std::string>& v) const { return python_list_literal(v); }
        std::string operator()(bool v) const { return v ? "yes" : "no"; }
    };
    return std::visit(Visitor {}, value);
}

std::string_view slot_kind_name(const AnswerSlot& slot)
{
    struct Visitor
    {
        std::string_view operator()(const EmptySlot&) const { return "empty"; }
        std::string_view operator()(const SolutionText&) const { return "solution_text"; }
        std::string_view operator()(const ProgramText&) const { return "program"; }
        std::string_view operator()(const ExecutionResult&) const { return "execution_result"; }
        std::string_view operator()(const SpanList&) const { return "spans"; }
        std::string_view operator()(const FinalAnswer&) const { return "final"; }
    };
    return std::visit(Visitor {}, slot.payload);
}

std::string render_slot(const AnswerSlot& slot)
{
    struct Visitor
    {
        std::string operator()(const EmptySlot&) const { return ""; }
        std::string operator()(const SolutionText& s) const { return s.text; }
        std::string operator()(const ProgramText& p) const { return p.source; }
        std::string operator()(const ExecutionResult& r) const
        {
            if (auto* number = std::get_if<Rational>(&r.value))
                return format_significant(*number);
            return std::get<std::string>(r.value);
        }
        std::string operator()(const SpanList& s) const { return python_list_literal(s.spans); }
        std::string operator()(const FinalAnswer& f) const { return render_answer_value(f.value); }
    };
    return std::visit(Visitor {}, slot.payload);
}

ToolState initial_state(const ProblemInstance& instance)
{
    return ToolState {
        .question = instance.question,
        .context = instance.context,
        .table = instance.table,
        .answer = AnswerSlot {},
    };
}

bool is_terminal(const ToolState& state)
{
    return std::holds_alternative<FinalAnswer>(state.answer.payload);
}

} // namespace tabreason
