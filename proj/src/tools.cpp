// SPDX-License-Identifier: Apache-2.0
#include "tabreason/tools.hpp"

#include "tabreason/planner.hpp"
#include "tabreason/program.hpp"

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

const std::vector<std::string_view> known_headers {
    "SIMPLIFIED TABLE:", "SIMPLIFIED CONTEXT:", "SOLUTION:", "KNOWLEDGE:", "ANSWER:",
    "SCALE:",            "MODULES:",            "QUESTION:", "TABLE:",     "CONTEXT:",
};

// Position of `header` at the start of a line, or npos.
std::size_t find_header(std::string_view text, std::string_view header)
{
    for (std::size_t pos = text.find(header); pos != std::string_view::npos; pos = text.find(header, pos + 1))
    {
        std::size_t line_start = pos;
        while (line_start > 0 && (text[line_start - 1] == ' ' || text[line_start - 1] == '\t'))
            --line_start;
        if (line_start == 0 || text[line_start - 1] == '\n')
            return pos;
    }
    return std::string_view::npos;
}

void reject_foreign_headers(ToolId tool, std::string_view payload, std::string_view own)
{
    std::size_t start = 0;
    while (start <= payload.size())
    {
        auto end = payload.find('\n', start);
        auto line = trim(payload.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
        for (auto header: known_headers)
            if (header != own && line.starts_with(header))
                throw ToolParseError(std::string(wire_name(tool)) + ": unexpected section '" + std::string(header)
                                     + "' in completion");
        if (end == std::string_view::npos)
            break;
        start = end + 1;
    }
}

// Strips trailing blanks from every line and surrounding blank lines.
std::string tidy_block(std::string_view text)
{
    std::string out;
    std::size_t start = 0;
    while (start <= text.size())
    {
        auto end = text.find('\n', start);
        auto line = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
        while (!line.empty() && (line.back() == ' ' || line.back() == '\t' || line.back() == '\r'))
            line.remove_suffix(1);
        out.append(line).append("\n");
        if (end == std::string_view::npos)
            break;
        start = end + 1;
    }
    return std::string(trim(out));
}

bool starts_same_line(ToolId tool)
{
    return tool == ToolId::SpanExtractor || tool == ToolId::SolutionGenerator || tool == ToolId::ScaleFinder;
}

const PromptTemplate& state_template()
{
    static const PromptTemplate tpl = parse_template("name: state\n"
                                                     "version: 1\n"
                                                     "@@query\n"
                                                     "{?CONTEXT}CONTEXT:\n{CONTEXT}\n\n{/CONTEXT}"
                                                     "{?TABLE}TABLE:\n{TABLE}\n\n{/TABLE}"
                                                     "QUESTION: {QUESTION}\n\n"
                                                     "CURRENT ANSWER ({KIND}): {SOLUTION}\n"
                                                     "{?SCALE}CURRENT SCALE: {SCALE}\n{/SCALE}"
                                                     "\n{TOOL}:\n",
                                                     "<state>");
    return tpl;
}

std::string ascii_lower(std::string_view s)
{
    std::string out(s);
    for (auto& c: out)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

FinalAnswer answer_from_text(std::string_view text, Scale scale)
{
    FinalAnswer out;
    out.raw = std::string(text);
    out.scale = scale;
    if (auto number = parse_number_text(text))
    {
        out.kind = AnswerKind::numeric;
        out.value = number->value;
        if (number->percent && scale == Scale::none)
            out.scale = Scale::percent;
        return out;
    }
    auto word = normalize_text(text);
    if (word == "yes" || word == "true" || word == "no" || word == "false")
    {
        out.kind = AnswerKind::boolean;
        out.value = word == "yes" || word == "true";
        return out;
    }
    out.kind = AnswerKind::span;
    out.value = std::string(text);
    return out;
}

// Text after the last "The answer is", up to the end of that sentence.
std::optional<std::string> answer_sentence(std::string_view text)
{
    static const std::string needle = "the answer is";
    auto folded = ascii_lower(text);
    auto pos = folded.rfind(needle);
    if (pos == std::string::npos)
        return std::nullopt;
    auto rest = text.substr(pos + needle.size());
    rest = rest.substr(0, static_cast<std::size_t>(std::find(rest.begin(), rest.end(), '\n') - rest.begin()));
    // a period ends the sentence unless it sits inside a number
    for (std::size_t i = 0; i < rest.size(); ++i)
        if (rest[i] == '.' && (i + 1 == rest.size() || std::isspace(static_cast<unsigned char>(rest[i + 1]))))
        {
            rest = rest.substr(0, i);
            break;
        }
    auto value = trim(rest);
    while (!value.empty() && (value.front() == ':' || value.front() == ' '))
        value.remove_prefix(1);
    if (value.empty())
        return std::nullopt;
    return std::string(value);
}

} // namespace

void validate_binding(const ToolBinding& binding)
{
    bool llm = binding.kind == BindingKind::llm;
    if (llm && (!binding.prompt || !binding.adapter))
        throw Error("binding for " + std::string(wire_name(binding.tool)) + " needs a template and an adapter");
    if (!llm && (binding.prompt || binding.adapter))
        throw Error("deterministic binding for " + std::string(wire_name(binding.tool))
                    + " cannot carry a template or adapter");
}

std::string_view section_header(ToolId tool)
{
    switch (tool)
    {
        case ToolId::RowLookup:
        case ToolId::ColumnLookup: return "SIMPLIFIED TABLE:";
        case ToolId::ContextExtractor: return "SIMPLIFIED CONTEXT:";
        case ToolId::SpanExtractor:
        case ToolId::SolutionGenerator: return "SOLUTION:";
        case ToolId::KnowledgeRetrieval: return "KNOWLEDGE:";
        case ToolId::ProgramGeneratorAndVerifier: return "ANSWER:";
        case ToolId::ScaleFinder: return "SCALE:";
        case ToolId::ProgramExecutor:
        case ToolId::AnswerGenerator: return "";
    }
    return "";
}

std::vector<std::string> parse_span_list(std::string_view text)
{
    auto s = trim(text);
    if (!s.empty() && s.back() == '.')
        s = trim(s.substr(0, s.size() - 1));
    auto fail = [&](const std::string& why) -> ToolParseError {
        return ToolParseError("span list " + why + ": " + std::string(s.substr(0, 200)));
    };
    if (s.size() < 2 || s.front() != '[' || s.back() != ']')
        throw fail("is not a bracketed list");

    std::vector<std::string> out;
    std::size_t i = 1;
    const std::size_t end = s.size() - 1;
    auto skip_space = [&] {
        while (i < end && std::isspace(static_cast<unsigned char>(s[i])))
            ++i;
    };
    skip_space();
    while (i < end)
    {
        std::string item;
        char q = s[i];
        if (q == '\'' || q == '"')
        {
            ++i;
            bool closed = false;
            while (i < end)
            {
                char c = s[i++];
                if (c == '\\' && i < end)
                {
                    char e = s[i++];
                    item += e == 'n' ? '\n' : (e == 't' ? '\t' : e);
                    continue;
                }
                if (c == q)
                {
                    closed = true;
                    break;
                }
                item += c;
            }
            if (!closed)
                throw fail("has an unterminated string");
        }
        else
        {
            std::size_t start = i;
            while (i < end && s[i] != ',')
                ++i;
            auto bare = trim(s.substr(start, i - start));
            if (bare.empty() || !parse_number_text(bare))
                throw fail("has an unquoted element");
            item = std::string(bare);
        }
        out.push_back(std::move(item));
        skip_space();
        if (i < end && s[i] == ',')
        {
            ++i;
            skip_space();
            continue;
        }
        if (i < end)
            throw fail("has a missing comma");
    }
    return out;
}

ParsedOutput parse_tool_output(ToolId tool, std::string_view completion)
{
    auto header = section_header(tool);
    if (header.empty())
        throw Error(std::string(wire_name(tool)) + " does not parse completions");
    if (auto end = completion.find("#END"); end != std::string_view::npos)
        completion = completion.substr(0, end);

    std::string_view payload = completion;
    if (auto pos = find_header(completion, header); pos != std::string_view::npos)
        payload = completion.substr(pos + header.size());
    reject_foreign_headers(tool, payload, header);

    auto body = tidy_block(payload);
    if (body.empty() && tool != ToolId::ScaleFinder)
        throw ToolParseError(std::string(wire_name(tool)) + ": empty completion");

    switch (tool)
    {
        case ToolId::RowLookup:
        case ToolId::ColumnLookup:
            try
            {
                return parse_table(body);
            }
            catch (const EmptyTable&)
            {
                throw ToolParseError(std::string(wire_name(tool)) + ": no table rows in completion");
            }
        case ToolId::ContextExtractor:
        case ToolId::SolutionGenerator:
        case ToolId::KnowledgeRetrieval: return body;
        case ToolId::SpanExtractor: return parse_span_list(body);
        case ToolId::ProgramGeneratorAndVerifier:
            try
            {
                parse_program(body);
            }
            catch (const ProgramError& e)
            {
                throw ToolParseError(std::string("program rejected: ") + e.what());
            }
            return ProgramText {body};
        case ToolId::ScaleFinder: {
            auto first_line = body.substr(0, body.find('\n'));
            return validate_scale(first_line);
        }
        default: break;
    }
    throw Error("unreachable tool parser");
}

std::string render_llm_prompt(const PromptTemplate& tpl, const ToolState& state)
{
    auto fields = state_fields(state);
    fields["SOLUTION"] = render_slot(state.answer);
    return render_prompt(tpl, fields);
}

std::string render_tool_prompt(ToolId tool, const TemplateSet& templates, const ToolState& state)
{
    auto name = template_name(tool);
    if (name.empty())
    {
        auto fields = state_fields(state);
        fields["KIND"] = std::string(slot_kind_name(state.answer));
        fields["SOLUTION"] = render_slot(state.answer);
        fields["SCALE"] = state.answer.scale ? std::string(to_string(*state.answer.scale)) : "";
        fields["TOOL"] = std::string(wire_name(tool));
        return render_prompt(state_template(), fields);
    }
    return render_llm_prompt(templates.get(name), state);
}

std::string step_completion(const StepRecord& step)
{
    std::string payload;
    switch (step.tool)
    {
        case ToolId::RowLookup:
        case ToolId::ColumnLookup: payload = render_table(step.output.table); break;
        case ToolId::ContextExtractor: payload = step.output.context; break;
        case ToolId::KnowledgeRetrieval: {
            std::string_view added(step.output.context);
            if (added.starts_with(step.input.context))
                added.remove_prefix(step.input.context.size());
            added = trim(added);
            if (added.starts_with("KNOWLEDGE:"))
                added.remove_prefix(10);
            payload = trim(added);
            break;
        }
        case ToolId::ScaleFinder:
            payload = "'" + std::string(to_string(step.output.answer.scale.value_or(Scale::none))) + "'";
            break;
        default: payload = render_slot(step.output.answer); break;
    }
    return (starts_same_line(step.tool) ? " " : "\n") + payload + "\n#END";
}

std::optional<FinalAnswer> extract_answer(const ToolState& state)
{
    Scale scale = state.answer.scale.value_or(Scale::none);
    const auto& payload = state.answer.payload;
    if (auto result = std::get_if<ExecutionResult>(&payload))
    {
        if (auto number = std::get_if<Rational>(&result->value))
        {
            FinalAnswer out;
            out.kind = AnswerKind::numeric;
            out.value = *number;
            out.scale = scale;
            out.raw = format_significant(*number);
            return out;
        }
        return answer_from_text(std::get<std::string>(result->value), scale);
    }
    if (auto spans = std::get_if<SpanList>(&payload); spans && !spans->spans.empty())
    {
        FinalAnswer out;
        out.scale = scale;
        out.raw = python_list_literal(spans->spans);
        if (spans->spans.size() == 1)
        {
            out.kind = AnswerKind::span;
            out.value = spans->spans.front();
        }
        else
        {
            out.kind = AnswerKind::multispan;
            out.value = spans->spans;
        }
        return out;
    }
    if (auto final = std::get_if<FinalAnswer>(&payload))
        return *final;
    if (auto solution = std::get_if<SolutionText>(&payload))
        if (auto sentence = answer_sentence(solution->text))
            return answer_from_text(*sentence, scale);
    if (auto sentence = answer_sentence(state.context))
        return answer_from_text(*sentence, scale);
    return std::nullopt;
}

ChatRequest make_request(const std::string& adapter, std::string prompt, const ToolSettings& settings)
{
    ChatRequest request;
    request.adapter = adapter;
    request.messages.push_back(ChatMessage {"user", std::move(prompt)});
    request.temperature = settings.temperature;
    request.max_tokens = settings.max_tokens;
    request.stop = {"#END"};
    return request;
}

ToolRuntime::ToolRuntime(Gateway& gateway, TemplateSet templates, std::map<ToolId, ToolBinding> bindings,
                         ToolSettings settings):
    gateway_(gateway),
    templates_(std::move(templates)),
    bindings_(std::move(bindings)),
    settings_(settings)
{
    for (const auto& [tool, binding]: bindings_)
        validate_binding(binding);
}

std::map<ToolId, ToolBinding> ToolRuntime::make_bindings(const TemplateSet& templates, const RoutingTable& routing,
                                                         Phase phase)
{
    std::map<ToolId, ToolBinding> out;
    for (auto tool: all_tools)
    {
        ToolBinding b;
        b.tool = tool;
        auto name = template_name(tool);
        if (!name.empty())
        {
            b.kind = BindingKind::llm;
            b.prompt = templates.get(name);
            b.adapter = routing.route(tool, phase);
            b.output_parser = section_header(tool);
        }
        out.emplace(tool, std::move(b));
    }
    return out;
}

StepOutcome ToolRuntime::apply(ToolId tool, const ToolState& state) const
{
    auto it = bindings_.find(tool);
    if (it == bindings_.end())
        throw UnroutedTool("UnroutedTool: no binding for " + std::string(wire_name(tool)));
    const auto& binding = it->second;

    StepOutcome out;
    out.state = state;
    auto& next = out.state;

    if (binding.kind == BindingKind::deterministic)
    {
        if (tool == ToolId::ProgramExecutor)
        {
            auto program = std::get_if<ProgramText>(&state.answer.payload);
            if (!program)
                throw ToolExecError("Program_Executor: the answer slot holds no program");
            try
            {
                auto value = run_program(program->source);
                ExecutionResult result;
                if (value.kind == Value::Kind::Number)
                    result.value = value.number;
                else
                    result.value = render_value(value);
                next.answer.payload = std::move(result);
            }
            catch (const ProgramError& e)
            {
                throw ToolExecError(std::string("Program_Executor: ") + e.what());
            }
            return out;
        }
        if (tool == ToolId::AnswerGenerator)
        {
            auto answer = extract_answer(state);
            if (!answer)
                throw ToolParseError("Answer_Generator: no answer could be read from the state");
            next.answer.payload = std::move(*answer);
            return out;
        }
        throw Error("no deterministic implementation for " + std::string(wire_name(tool)));
    }

    auto reply = gateway_.complete(make_request(*binding.adapter, render_llm_prompt(*binding.prompt, state), settings_));
    out.digest = reply.digest;
    auto parsed = parse_tool_output(tool, reply.text);

    switch (tool)
    {
        case ToolId::RowLookup:
        case ToolId::ColumnLookup: {
            next.table = std::get<Table>(std::move(parsed));
            auto report = check_subtable(next.table, state.table);
            if (!report.is_subtable)
                out.warning = std::string(wire_name(tool)) + ": simplified table is not a subtable ("
                              + std::to_string(report.mismatched_cells.size()) + " mismatched cells)";
            out.subtable = std::move(report);
            break;
        }
        case ToolId::ContextExtractor: next.context = std::get<std::string>(std::move(parsed)); break;
        case ToolId::KnowledgeRetrieval: {
            auto knowledge = std::get<std::string>(std::move(parsed));
            next.context = (state.context.empty() ? "" : state.context + "\n\n") + "KNOWLEDGE:\n" + knowledge;
            break;
        }
        case ToolId::SpanExtractor:
            next.answer.payload = SpanList {std::get<std::vector<std::string>>(std::move(parsed))};
            break;
        case ToolId::SolutionGenerator:
            next.answer.payload = SolutionText {std::get<std::string>(std::move(parsed))};
            break;
        case ToolId::ProgramGeneratorAndVerifier: next.answer.payload = std::get<ProgramText>(std::move(parsed)); break;
        case ToolId::ScaleFinder: {
            auto scale = std::get<ScaleParse>(std::move(parsed));
            if (!scale.recognized)
                out.warning = "Scale_Finder: " + scale.diagnostic;
            next.answer.scale = scale.scale;
            break;
        }
        default: throw Error("unexpected llm tool " + std::string(wire_name(tool)));
    }
    return out;
}

TrajectoryRecord ToolRuntime::run_trajectory(const ProblemInstance& instance, const Trajectory& plan,
                                             TrajectoryDiagnostics* diagnostics) const
{
    TrajectoryRecord record;
    record.instance_id = instance.id;
    record.dataset = instance.dataset;
    record.category = instance.category;
    record.input = initial_state(instance);
    record.plan = plan;
    record.label = WeakLabel::negative;

    ToolState state = record.input;
    for (std::size_t i = 0; i < plan.steps.size(); ++i)
    {
        auto tool = plan.steps[i];
        auto fail = [&](FailureKind kind, const std::string& message) {
            record.failure = FailureReason {kind, i, message};
        };
        try
        {
            auto outcome = apply(tool, state);
            if (diagnostics)
            {
                if (outcome.subtable && !outcome.subtable->is_subtable)
                    ++diagnostics->subtable_violations;
                if (outcome.warning)
                    diagnostics->warnings.push_back(instance.id + ": " + *outcome.warning);
            }
            record.steps.push_back(StepRecord {tool, state, outcome.state, outcome.digest});
            state = std::move(outcome.state);
        }
        catch (const ToolParseError& e)
        {
            fail(FailureKind::ParseError, e.what());
        }
        catch (const ToolExecError& e)
        {
            fail(FailureKind::ExecError, e.what());
        }
        catch (const BackendError& e)
        {
            fail(FailureKind::BackendError, e.what());
        }
        catch (const CassetteMiss& e)
        {
            fail(FailureKind::BackendError, e.what());
        }
        catch (const UnroutedTool& e)
        {
            fail(FailureKind::BackendError, e.what());
        }
        if (record.failure)
            return record;
        if (tool == ToolId::AnswerGenerator)
            break;
    }
    if (auto final = std::get_if<FinalAnswer>(&state.answer.payload))
        record.predicted = *final;
    return record;
}

} // namespace tabreason
