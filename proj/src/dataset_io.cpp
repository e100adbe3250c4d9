// SPDX-License-Identifier: Apache-2.0
#include "tabreason/dataset_io.hpp"

#include "tabreason/backend.hpp"
#include "tabreason/planner.hpp"
#include "tabreason/table.hpp"
#include "tabreason/tools.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace tabreason
{

using nlohmann::json;

SchemaError::SchemaError(std::string field, std::string item, std::string detail):
    Error("SchemaError: field '" + field + "'" + (item.empty() ? "" : " of item '" + item + "'")
          + (detail.empty() ? "" : ": " + detail)),
    field_(std::move(field)),
    item_(std::move(item))
{
}

namespace
{

std::string dump(const json& j)
{
    return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

const json& field(const json& j, const char* name, const std::string& item)
{
    if (!j.is_object())
        throw SchemaError(name, item, "parent is not an object");
    auto it = j.find(name);
    if (it == j.end())
        throw SchemaError(name, item, "missing");
    return *it;
}

std::string string_field(const json& j, const char* name, const std::string& item)
{
    const auto& v = field(j, name, item);
    if (!v.is_string())
        throw SchemaError(name, item, "expected a string");
    return v.get<std::string>();
}

std::optional<std::string> optional_string(const json& j, const char* name, const std::string& item)
{
    auto it = j.find(name);
    if (it == j.end() || it->is_null())
        return std::nullopt;
    if (!it->is_string())
        throw SchemaError(name, item, "expected a string");
    return it->get<std::string>();
}

// Literal text of a JSON scalar as it appeared in the source.
std::optional<std::string> scalar_text(const json& v)
{
    if (v.is_string())
        return v.get<std::string>();
    if (v.is_number_integer() || v.is_number_unsigned())
        return v.dump();
    if (v.is_number_float())
        return v.dump();
    return std::nullopt;
}

Scale scale_field(const json& j, const char* name, const std::string& item)
{
    auto it = j.find(name);
    if (it == j.end() || it->is_null())
        return Scale::none;
    if (!it->is_string())
        throw SchemaError(name, item, "expected a string");
    auto parsed = validate_scale(it->get<std::string>());
    if (!parsed.recognized)
        throw SchemaError(name, item, parsed.diagnostic);
    return parsed.scale;
}

std::vector<std::vector<std::string>> cell_rows(const json& rows, const char* name, const std::string& item)
{
    if (!rows.is_array())
        throw SchemaError(name, item, "expected a list of rows");
    std::vector<std::vector<std::string>> out;
    for (const auto& row: rows)
    {
        if (!row.is_array())
            throw SchemaError(name, item, "expected a list of cells");
        std::vector<std::string> cells;
        for (const auto& cell: row)
        {
            auto text = scalar_text(cell);
            cells.push_back(text.value_or(""));
        }
        out.push_back(std::move(cells));
    }
    return out;
}

std::string join_lines(const json& list, const char* name, const std::string& item)
{
    if (list.is_null())
        return "";
    if (!list.is_array())
        throw SchemaError(name, item, "expected a list of strings");
    std::string out;
    for (const auto& line: list)
    {
        if (!line.is_string())
            throw SchemaError(name, item, "expected a list of strings");
        if (!out.empty())
            out += '\n';
        out += line.get<std::string>();
    }
    return out;
}

std::string sanitize_cell(const std::string& raw)
{
    std::string out;
    out.reserve(raw.size());
    for (char c: raw)
    {
        if (c == '|')
            out += '/';
        else if (c == '\n' || c == '\r' || c == '\t')
            out += ' ';
        else
            out += c;
    }
    auto b = out.find_first_not_of(' ');
    if (b == std::string::npos)
        return "";
    auto e = out.find_last_not_of(' ');
    return out.substr(b, e - b + 1);
}

GoldAnswer numeric_or_text_gold(const std::string& text, Scale scale, AnswerKind fallback)
{
    GoldAnswer gold;
    gold.scale = scale;
    if (auto number = parse_number_text(text))
    {
        gold.kind = AnswerKind::numeric;
        gold.value = number->value;
        gold.decimals = number->decimals;
        if (number->percent && scale == Scale::none)
            gold.scale = Scale::percent;
        return gold;
    }
    gold.kind = fallback;
    gold.value = text;
    return gold;
}

void check_instance(const ProblemInstance& instance)
{
    try
    {
        validate_instance(instance);
    }
    catch (const Error& e)
    {
        throw SchemaError("question", instance.id, e.what());
    }
}

} // namespace

Table make_table(const std::vector<std::vector<std::string>>& rows)
{
    Table table;
    std::size_t width = 0;
    for (const auto& row: rows)
    {
        std::vector<std::string> cells;
        cells.reserve(row.size());
        bool blank = true;
        for (const auto& cell: row)
        {
            cells.push_back(sanitize_cell(cell));
            blank = blank && cells.back().empty();
        }
        if (blank)
            continue;
        width = std::max(width, cells.size());
        table.rows.push_back(std::move(cells));
    }
    for (auto& row: table.rows)
    {
        table.padded_cells += width - row.size();
        row.resize(width);
    }
    return table;
}

std::vector<ProblemInstance> load_finqa(const json& data, Split split)
{
    if (!data.is_array())
        throw SchemaError("<root>", "", "FinQA file must hold a JSON array");
    std::vector<ProblemInstance> out;
    out.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
    {
        const auto& item = data[i];
        ProblemInstance p;
        p.id = item.contains("id") ? string_field(item, "id", std::to_string(i)) : "finqa-" + std::to_string(i);
        p.dataset = Dataset::FinQA;
        p.split = split;
        auto pre = join_lines(item.value("pre_text", json()), "pre_text", p.id);
        auto post = join_lines(item.value("post_text", json()), "post_text", p.id);
        p.context = pre.empty() ? post : (post.empty() ? pre : pre + "\n" + post);
        if (item.contains("table"))
            p.table = make_table(cell_rows(item["table"], "table", p.id));
        const auto& qa = field(item, "qa", p.id);
        p.question = string_field(qa, "question", p.id);
        const auto& exe = field(qa, "exe_ans", p.id);
        auto text = scalar_text(exe);
        if (!text)
            throw SchemaError("qa.exe_ans", p.id, "expected a number or yes/no");
        auto word = normalize_text(*text);
        if (exe.is_string() && (word == "yes" || word == "no"))
        {
            p.gold.kind = AnswerKind::boolean;
            p.gold.value = word == "yes";
        }
        else
        {
            auto number = parse_number_text(*text);
            if (!number)
                throw SchemaError("qa.exe_ans", p.id, "not a number: " + *text);
            p.gold.kind = AnswerKind::numeric;
            p.gold.value = number->value;
            p.gold.decimals = number->decimals;
        }
        if (auto program = qa.find("program"); program != qa.end() && program->is_string())
            p.gold.derivation = program->get<std::string>();
        check_instance(p);
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<ProblemInstance> load_tatqa(const json& data, Split split)
{
    if (!data.is_array())
        throw SchemaError("<root>", "", "TAT-QA file must hold a JSON array");
    std::vector<ProblemInstance> out;
    for (std::size_t i = 0; i < data.size(); ++i)
    {
        const auto& doc = data[i];
        std::string doc_id = std::to_string(i);
        if (auto t = doc.find("table"); t != doc.end() && t->is_object())
            if (auto uid = t->find("uid"); uid != t->end() && uid->is_string())
                doc_id = uid->get<std::string>();

        Table table;
        if (auto t = doc.find("table"); t != doc.end() && t->is_object())
            table = make_table(cell_rows(field(*t, "table", doc_id), "table.table", doc_id));

        std::vector<std::pair<long, std::string>> paragraphs;
        if (auto ps = doc.find("paragraphs"); ps != doc.end() && ps->is_array())
            for (std::size_t k = 0; k < ps->size(); ++k)
            {
                const auto& para = (*ps)[k];
                long order = para.contains("order") && para["order"].is_number() ? para["order"].get<long>()
                                                                                   : static_cast<long>(k);
                paragraphs.emplace_back(order, string_field(para, "text", doc_id));
            }
        std::stable_sort(paragraphs.begin(), paragraphs.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        std::string context;
        for (const auto& [order, text]: paragraphs)
        {
            if (!context.empty())
                context += '\n';
            context += text;
        }

        const auto& questions = field(doc, "questions", doc_id);
        if (!questions.is_array())
            throw SchemaError("questions", doc_id, "expected a list");
        for (const auto& q: questions)
        {
            ProblemInstance p;
            p.id = string_field(q, "uid", doc_id);
            p.dataset = Dataset::TatQA;
            p.split = split;
            p.question = string_field(q, "question", p.id);
            p.context = context;
            p.table = table;
            auto type = string_field(q, "answer_type", p.id);
            auto scale = scale_field(q, "scale", p.id);
            const auto& answer = field(q, "answer", p.id);
            if (type == "span" || type == "multi-span")
            {
                std::vector<std::string> spans;
                if (answer.is_array())
                {
                    for (const auto& s: answer)
                    {
                        auto t = scalar_text(s);
                        if (!t)
                            throw SchemaError("answer", p.id, "span is not text");
                        spans.push_back(*t);
                    }
                }
                else if (auto t = scalar_text(answer))
                    spans.push_back(*t);
                else
                    throw SchemaError("answer", p.id, "expected text or a list");
                p.gold.scale = scale;
                if (type == "span" && spans.size() == 1)
                {
                    p.gold.kind = AnswerKind::span;
                    p.gold.value = spans.front();
                }
                else
                {
                    p.gold.kind = AnswerKind::multispan;
                    p.gold.value = spans;
                }
            }
            else if (type == "arithmetic" || type == "count")
            {
                auto t = scalar_text(answer.is_array() && answer.size() == 1 ? answer[0] : answer);
                if (!t)
                    throw SchemaError("answer", p.id, "expected a number");
                p.gold = numeric_or_text_gold(*t, scale, AnswerKind::span);
            }
            else
                throw SchemaError("answer_type", p.id, "unknown type '" + type + "'");
            if (auto d = optional_string(q, "derivation", p.id); d && !d->empty())
                p.gold.derivation = d;
            auto from = optional_string(q, "answer_from", p.id);
            p.category = type + (from ? "/" + *from : "");
            check_instance(p);
            out.push_back(std::move(p));
        }
    }
    return out;
}

std::vector<ProblemInstance> load_tabmwp(const json& data, Split split)
{
    if (!data.is_object())
        throw SchemaError("<root>", "", "TabMWP file must hold a JSON object keyed by problem id");
    std::vector<ProblemInstance> out;
    out.reserve(data.size());
    for (const auto& [pid, item]: data.items())
    {
        ProblemInstance p;
        p.id = pid;
        p.dataset = Dataset::TabMWP;
        p.split = split;
        p.question = string_field(item, "question", pid);
        std::vector<std::string> choices;
        if (auto c = item.find("choices"); c != item.end() && c->is_array())
            for (const auto& choice: *c)
                if (auto t = scalar_text(choice))
                    choices.push_back(*t);
        if (!choices.empty())
        {
            p.question += "\nOptions: ";
            for (std::size_t k = 0; k < choices.size(); ++k)
                p.question += (k ? ", " : "") + choices[k];
        }
        p.context = optional_string(item, "table_title", pid).value_or("");
        auto table_text = string_field(item, "table", pid);
        if (!table_text.empty())
        {
            try
            {
                p.table = parse_table(table_text);
            }
            catch (const EmptyTable&)
            {
            }
        }
        auto answer = scalar_text(field(item, "answer", pid));
        if (!answer)
            throw SchemaError("answer", pid, "expected text or a number");
        auto type = optional_string(item, "ans_type", pid).value_or("");
        if (!choices.empty())
        {
            p.gold.kind = AnswerKind::choice;
            p.gold.value = *answer;
        }
        else if (type == "integer_number" || type == "decimal_number")
            p.gold = numeric_or_text_gold(*answer, Scale::none, AnswerKind::span);
        else if (type == "boolean_text")
        {
            p.gold.kind = AnswerKind::span;
            p.gold.value = *answer;
        }
        else
            p.gold = numeric_or_text_gold(*answer, Scale::none, AnswerKind::span);
        if (!type.empty())
            p.category = type;
        check_instance(p);
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<ProblemInstance> load_dataset(Dataset kind, const std::filesystem::path& path, Split split)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot read dataset file " + path.string());
    json data;
    try
    {
        data = json::parse(in);
    }
    catch (const json::exception& e)
    {
        throw SchemaError("<root>", path.string(), e.what());
    }
    switch (kind)
    {
        case Dataset::FinQA: return load_finqa(data, split);
        case Dataset::TatQA: return load_tatqa(data, split);
        case Dataset::TabMWP: return load_tabmwp(data, split);
    }
    return {};
}

DataManifest DataManifest::load(const std::filesystem::path& path)
{
    json j;
    try
    {
        j = json::parse(read_file(path));
    }
    catch (const json::exception& e)
    {
        throw SchemaError("<root>", path.string(), e.what());
    }
    if (!j.is_object())
        throw SchemaError("<root>", path.string(), "expected an object");
    DataManifest m;
    auto base = path.parent_path();
    for (const auto& [name, splits]: j.items())
    {
        auto dataset = parse_dataset(name);
        if (!dataset)
            throw SchemaError(name, path.string(), "unknown dataset");
        if (!splits.is_object())
            throw SchemaError(name, path.string(), "expected an object of split paths");
        for (const auto& [split_name, file]: splits.items())
        {
            auto split = parse_split(split_name);
            if (!split || !file.is_string())
                throw SchemaError(name + "." + split_name, path.string(), "unknown split or non-string path");
            std::filesystem::path p = file.get<std::string>();
            m.files_[{*dataset, *split}] = p.is_absolute() ? p : base / p;
        }
    }
    return m;
}

std::optional<std::filesystem::path> DataManifest::locate(Dataset dataset, Split split) const
{
    auto it = files_.find({dataset, split});
    if (it == files_.end())
        return std::nullopt;
    return it->second;
}

std::filesystem::path DataManifest::require(Dataset dataset, Split split) const
{
    auto p = locate(dataset, split);
    if (!p)
        throw IoError("data manifest has no " + std::string(to_string(dataset)) + " " + std::string(to_string(split))
                      + " file");
    return *p;
}

// ---------------------------------------------------------------------------
// JSON forms

json to_json(const Table& table)
{
    return render_table(table);
}

json to_json(const FinalAnswer& answer)
{
    json j {{"kind", to_string(answer.kind)}, {"scale", to_string(answer.scale)}, {"raw", answer.raw}};
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, Rational>)
                j["number"] = format_exact(v);
            else
                j["value"] = v;
        },
        answer.value);
    return j;
}

json to_json(const AnswerSlot& slot)
{
    json j = json::object();
    j["kind"] = slot_kind_name(slot);
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, SolutionText>)
                j["text"] = p.text;
            else if constexpr (std::is_same_v<T, ProgramText>)
                j["source"] = p.source;
            else if constexpr (std::is_same_v<T, ExecutionResult>)
            {
                if (auto n = std::get_if<Rational>(&p.value))
                    j["number"] = format_exact(*n);
                else
                    j["text"] = std::get<std::string>(p.value);
            }
            else if constexpr (std::is_same_v<T, SpanList>)
                j["spans"] = p.spans;
            else if constexpr (std::is_same_v<T, FinalAnswer>)
                j["answer"] = to_json(p);
        },
        slot.payload);
    if (slot.scale)
        j["scale"] = to_string(*slot.scale);
    return j;
}

json to_json(const ToolState& state)
{
    return json {
        {"q", state.question},
        {"c", state.context},
        {"table_text", render_table(state.table)},
        {"answer_slot", to_json(state.answer)},
    };
}

json to_json(const TrajectoryRecord& record)
{
    json j;
    j["id"] = record.instance_id;
    j["dataset"] = to_string(record.dataset);
    if (record.category)
        j["category"] = *record.category;
    j["input"] = to_json(record.input);
    if (record.planner_digest)
        j["planner_digest"] = *record.planner_digest;
    if (record.plan_raw)
        j["plan_raw"] = *record.plan_raw;
    j["plan"] = json::array();
    for (auto tool: record.plan.steps)
        j["plan"].push_back(wire_name(tool));
    j["steps"] = json::array();
    for (const auto& step: record.steps)
    {
        json s {{"tool", wire_name(step.tool)}, {"input", to_json(step.input)}, {"output", to_json(step.output)}};
        if (step.digest)
            s["digest"] = *step.digest;
        j["steps"].push_back(std::move(s));
    }
    if (record.predicted)
        j["predicted"] = to_json(*record.predicted);
    j["label"] = static_cast<int>(record.label);
    if (record.failure)
    {
        json f {{"kind", to_string(record.failure->kind)}, {"message", record.failure->message}};
        if (record.failure->step)
            f["step"] = *record.failure->step;
        j["failure"] = std::move(f);
    }
    return j;
}

FinalAnswer final_answer_from_json(const json& j, const std::string& item)
{
    FinalAnswer a;
    auto kind = parse_answer_kind(string_field(j, "kind", item));
    if (!kind)
        throw SchemaError("predicted.kind", item, "unknown answer kind");
    a.kind = *kind;
    a.scale = scale_field(j, "scale", item);
    a.raw = optional_string(j, "raw", item).value_or("");
    if (auto n = j.find("number"); n != j.end())
    {
        auto value = n->is_string() ? parse_exact(n->get<std::string>()) : std::nullopt;
        if (!value)
            throw SchemaError("predicted.number", item, "not an exact number");
        a.value = *value;
    }
    else
    {
        const auto& v = field(j, "value", item);
        if (v.is_string())
            a.value = v.get<std::string>();
        else if (v.is_boolean())
            a.value = v.get<bool>();
        else if (v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_string(); }))
            a.value = v.get<std::vector<std::string>>();
        else
            throw SchemaError("predicted.value", item, "unsupported value");
    }
    return a;
}

AnswerSlot slot_from_json(const json& j, const std::string& item)
{
    AnswerSlot slot;
    auto kind = string_field(j, "kind", item);
    if (kind == "empty")
        slot.payload = EmptySlot {};
    else if (kind == "solution_text")
        slot.payload = SolutionText {string_field(j, "text", item)};
    else if (kind == "program")
        slot.payload = ProgramText {string_field(j, "source", item)};
    else if (kind == "execution_result")
    {
        ExecutionResult r;
        if (j.contains("number"))
        {
            auto value = parse_exact(string_field(j, "number", item));
            if (!value)
                throw SchemaError("answer_slot.number", item, "not an exact number");
            r.value = *value;
        }
        else
            r.value = string_field(j, "text", item);
        slot.payload = std::move(r);
    }
    else if (kind == "spans")
    {
        const auto& spans = field(j, "spans", item);
        if (!spans.is_array() || !std::all_of(spans.begin(), spans.end(), [](const json& e) { return e.is_string(); }))
            throw SchemaError("answer_slot.spans", item, "expected a list of strings");
        slot.payload = SpanList {spans.get<std::vector<std::string>>()};
    }
    else if (kind == "final")
        slot.payload = final_answer_from_json(field(j, "answer", item), item);
    else
        throw SchemaError("answer_slot.kind", item, "unknown slot kind '" + kind + "'");
    if (j.contains("scale"))
        slot.scale = scale_field(j, "scale", item);
    return slot;
}

ToolState state_from_json(const json& j, const std::string& item)
{
    ToolState s;
    s.question = string_field(j, "q", item);
    s.context = string_field(j, "c", item);
    auto text = string_field(j, "table_text", item);
    if (!text.empty())
    {
        try
        {
            s.table = parse_table(text);
        }
        catch (const EmptyTable&)
        {
        }
    }
    s.answer = slot_from_json(field(j, "answer_slot", item), item);
    return s;
}

TrajectoryRecord record_from_json(const json& j)
{
    TrajectoryRecord r;
    r.instance_id = string_field(j, "id", "");
    const auto& id = r.instance_id;
    auto dataset = parse_dataset(string_field(j, "dataset", id));
    if (!dataset)
        throw SchemaError("dataset", id, "unknown dataset");
    r.dataset = *dataset;
    r.category = optional_string(j, "category", id);
    r.input = state_from_json(field(j, "input", id), id);
    r.planner_digest = optional_string(j, "planner_digest", id);
    r.plan_raw = optional_string(j, "plan_raw", id);
    const auto& plan = field(j, "plan", id);
    if (!plan.is_array())
        throw SchemaError("plan", id, "expected a list");
    for (const auto& t: plan)
    {
        auto tool = t.is_string() ? parse_tool_id(t.get<std::string>()) : std::nullopt;
        if (!tool)
            throw SchemaError("plan", id, "unknown tool");
        r.plan.steps.push_back(*tool);
    }
    const auto& steps = field(j, "steps", id);
    if (!steps.is_array())
        throw SchemaError("steps", id, "expected a list");
    for (const auto& s: steps)
    {
        StepRecord step;
        auto tool = parse_tool_id(string_field(s, "tool", id));
        if (!tool)
            throw SchemaError("steps.tool", id, "unknown tool");
        step.tool = *tool;
        step.input = state_from_json(field(s, "input", id), id);
        step.output = state_from_json(field(s, "output", id), id);
        step.digest = optional_string(s, "digest", id);
        r.steps.push_back(std::move(step));
    }
    if (auto p = j.find("predicted"); p != j.end() && !p->is_null())
        r.predicted = final_answer_from_json(*p, id);
    const auto& label = field(j, "label", id);
    if (!label.is_number_integer() || (label.get<int>() != 1 && label.get<int>() != -1))
        throw SchemaError("label", id, "must be +1 or -1");
    r.label = label.get<int>() == 1 ? WeakLabel::positive : WeakLabel::negative;
    if (auto f = j.find("failure"); f != j.end() && !f->is_null())
    {
        FailureReason reason;
        auto kind = parse_failure_kind(string_field(*f, "kind", id));
        if (!kind)
            throw SchemaError("failure.kind", id, "unknown failure kind");
        reason.kind = *kind;
        reason.message = string_field(*f, "message", id);
        if (auto step = f->find("step"); step != f->end() && !step->is_null())
        {
            if (!step->is_number_unsigned() && !step->is_number_integer())
                throw SchemaError("failure.step", id, "expected an index");
            reason.step = step->get<std::size_t>();
        }
        r.failure = std::move(reason);
    }
    return r;
}

json to_json(const MetricReport& report)
{
    json categories = json::object();
    for (const auto& [name, cat]: report.categories)
        categories[name] = json {{"total", cat.total}, {"correct", cat.correct}, {"value", cat.value}};
    return json {
        {"dataset", to_string(report.dataset)},
        {"metric", report.metric},
        {"total", report.total},
        {"correct", report.correct},
        {"incorrect", report.incorrect},
        {"correct_pct", report.correct_pct},
        {"incorrect_pct", report.incorrect_pct},
        {"categories", std::move(categories)},
    };
}

MetricReport metric_report_from_json(const json& j)
{
    MetricReport r;
    auto dataset = parse_dataset(string_field(j, "dataset", "metrics"));
    if (!dataset)
        throw SchemaError("metrics.dataset", "", "unknown dataset");
    r.dataset = *dataset;
    r.metric = string_field(j, "metric", "metrics");
    r.total = field(j, "total", "metrics").get<std::size_t>();
    r.correct = field(j, "correct", "metrics").get<std::size_t>();
    r.incorrect = field(j, "incorrect", "metrics").get<std::size_t>();
    r.correct_pct = string_field(j, "correct_pct", "metrics");
    r.incorrect_pct = string_field(j, "incorrect_pct", "metrics");
    if (auto cats = j.find("categories"); cats != j.end() && cats->is_object())
        for (const auto& [name, c]: cats->items())
            r.categories[name] = CategoryScore {c.at("total").get<std::size_t>(), c.at("correct").get<std::size_t>(),
                                                c.at("value").get<std::string>()};
    return r;
}

void write_trajectories(const std::filesystem::path& path, const std::vector<TrajectoryRecord>& records)
{
    std::string content;
    for (const auto& r: records)
        content += dump(to_json(r)) + "\n";
    write_file(path, content);
}

namespace
{

template <typename F>
void for_each_jsonl(const std::filesystem::path& path, F&& f)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot read " + path.string());
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line))
    {
        ++number;
        if (line.empty())
            continue;
        json j;
        try
        {
            j = json::parse(line);
        }
        catch (const json::exception& e)
        {
            throw SchemaError("<line>", path.string() + ":" + std::to_string(number), e.what());
        }
        try
        {
            f(j);
        }
        catch (const json::exception& e)
        {
            throw SchemaError("<line>", path.string() + ":" + std::to_string(number), e.what());
        }
    }
}

} // namespace

std::vector<TrajectoryRecord> read_trajectories(const std::filesystem::path& path)
{
    std::vector<TrajectoryRecord> out;
    for_each_jsonl(path, [&](const json& j) { out.push_back(record_from_json(j)); });
    return out;
}

// ---------------------------------------------------------------------------
// exports

json to_json(const ExportLine& line)
{
    json j {
        {"tool", line.tool},
        {"prompt", line.prompt},
        {"completion", line.completion},
        {"template_version", line.template_version},
    };
    if (line.label)
        j["label"] = static_cast<int>(*line.label);
    return j;
}

ExportLine export_line_from_json(const json& j)
{
    ExportLine line;
    line.tool = string_field(j, "tool", "");
    line.prompt = string_field(j, "prompt", line.tool);
    line.completion = string_field(j, "completion", line.tool);
    line.template_version = string_field(j, "template_version", line.tool);
    if (auto l = j.find("label"); l != j.end())
    {
        if (!l->is_number_integer() || (l->get<int>() != 1 && l->get<int>() != -1))
            throw SchemaError("label", line.tool, "must be +1 or -1");
        line.label = l->get<int>() == 1 ? WeakLabel::positive : WeakLabel::negative;
    }
    return line;
}

std::string export_stem(const std::string& tool)
{
    if (tool == "planner")
        return tool;
    auto id = parse_tool_id(tool);
    if (!id)
        throw Error("unknown tool '" + tool + "'");
    return file_stem(*id);
}

std::string template_version_for(const std::string& tool, const TemplateSet& templates)
{
    std::string name = "planner";
    if (tool != "planner")
    {
        auto id = parse_tool_id(tool);
        if (!id)
            throw Error("unknown tool '" + tool + "'");
        name = std::string(template_name(*id));
        if (name.empty())
            return "state@1";
    }
    return name + "@" + templates.get(name).version;
}

std::vector<ExportLine> record_examples(const TrajectoryRecord& record, const TemplateSet& templates)
{
    std::vector<ExportLine> out;
    for (const auto& step: record.steps)
    {
        std::string tool(wire_name(step.tool));
        out.push_back(ExportLine {
            tool,
            render_tool_prompt(step.tool, templates, step.input),
            step_completion(step),
            template_version_for(tool, templates),
            record.label,
        });
    }
    std::string plan = record.plan.steps.empty() ? record.plan_raw.value_or("") : format_trajectory(record.plan);
    out.push_back(ExportLine {
        "planner",
        render_planner_prompt(record.input, templates.planner()),
        " " + plan + "\n#END",
        template_version_for("planner", templates),
        record.label,
    });
    return out;
}

namespace
{

ExportCounts write_exports(const std::vector<TrajectoryRecord>& records, const TemplateSet& templates,
                           const std::filesystem::path& dir, bool labeled)
{
    std::map<std::string, std::string> files;
    ExportCounts counts;
    files["planner"];
    counts["planner"] = 0;
    for (const auto& record: records)
    {
        for (auto& line: record_examples(record, templates))
        {
            if (!labeled)
                line.label.reset();
            auto stem = export_stem(line.tool);
            files[stem] += dump(to_json(line)) + "\n";
            ++counts[stem];
        }
    }
    std::filesystem::create_directories(dir);
    for (const auto& [stem, content]: files)
        write_file(dir / (stem + ".jsonl"), content);
    return counts;
}

} // namespace

ExportCounts export_it(const std::vector<TrajectoryRecord>& records, const TemplateSet& templates,
                       const std::filesystem::path& dir)
{
    for (const auto& r: records)
        if (r.label != WeakLabel::positive)
            throw MixedLabelError("MixedLabelError: record '" + r.instance_id + "' is negative");
    return write_exports(records, templates, dir, false);
}

ExportCounts export_kto(const std::vector<TrajectoryRecord>& records, const TemplateSet& templates,
                        const std::filesystem::path& dir)
{
    return write_exports(records, templates, dir, true);
}

std::vector<ExportLine> read_export(const std::filesystem::path& path)
{
    std::vector<ExportLine> out;
    for_each_jsonl(path, [&](const json& j) { out.push_back(export_line_from_json(j)); });
    return out;
}

// ---------------------------------------------------------------------------
// manifest

RunCounts count_records(const std::vector<TrajectoryRecord>& records)
{
    RunCounts c;
    c.total = records.size();
    for (const auto& r: records)
    {
        if (r.label == WeakLabel::positive)
            ++c.positive;
        else
            ++c.negative;
        if (r.failure)
            ++c.failed[std::string(to_string(r.failure->kind))];
    }
    return c;
}

void check_manifest(const RunManifest& m)
{
    if (m.counts.total != m.counts.positive + m.counts.negative)
        throw SchemaError("counts", m.run_id, "total is not positive + negative");
    std::size_t failed = 0;
    for (const auto& [kind, n]: m.counts.failed)
        failed += n;
    if (failed > m.counts.negative)
        throw SchemaError("counts.failed", m.run_id, "more failures than negatives");
}

json to_json(const RunManifest& m)
{
    json datasets = json::array();
    for (auto d: m.datasets)
        datasets.push_back(to_string(d));
    json metrics = json::array();
    for (const auto& r: m.metrics)
        metrics.push_back(to_json(r));
    return json {
        {"run_id", m.run_id},
        {"phase", to_string(m.phase)},
        {"datasets", std::move(datasets)},
        {"split", to_string(m.split)},
        {"mode", m.mode},
        {"templates", m.template_versions},
        {"routing", m.routing},
        {"counts",
         {{"total", m.counts.total},
          {"positive", m.counts.positive},
          {"negative", m.counts.negative},
          {"failed", m.counts.failed}}},
        {"subtable_violations", m.subtable_violations},
        {"metrics", std::move(metrics)},
        {"trajectories", m.trajectories},
        {"trajectories_sha256", m.trajectories_sha256},
    };
}

RunManifest manifest_from_json(const json& j)
{
    RunManifest m;
    try
    {
        m.run_id = string_field(j, "run_id", "");
        auto phase = parse_phase(string_field(j, "phase", m.run_id));
        if (!phase)
            throw SchemaError("phase", m.run_id, "unknown phase");
        m.phase = *phase;
        for (const auto& d: field(j, "datasets", m.run_id))
        {
            auto ds = parse_dataset(d.get<std::string>());
            if (!ds)
                throw SchemaError("datasets", m.run_id, "unknown dataset");
            m.datasets.push_back(*ds);
        }
        auto split = parse_split(string_field(j, "split", m.run_id));
        if (!split)
            throw SchemaError("split", m.run_id, "unknown split");
        m.split = *split;
        m.mode = optional_string(j, "mode", m.run_id).value_or("");
        m.template_versions = field(j, "templates", m.run_id).get<std::map<std::string, std::string>>();
        m.routing = field(j, "routing", m.run_id);
        const auto& counts = field(j, "counts", m.run_id);
        m.counts.total = field(counts, "total", m.run_id).get<std::size_t>();
        m.counts.positive = field(counts, "positive", m.run_id).get<std::size_t>();
        m.counts.negative = field(counts, "negative", m.run_id).get<std::size_t>();
        m.counts.failed = field(counts, "failed", m.run_id).get<std::map<std::string, std::size_t>>();
        m.subtable_violations = j.value("subtable_violations", std::size_t {0});
        for (const auto& r: field(j, "metrics", m.run_id))
            m.metrics.push_back(metric_report_from_json(r));
        m.trajectories = optional_string(j, "trajectories", m.run_id).value_or("");
        m.trajectories_sha256 = optional_string(j, "trajectories_sha256", m.run_id).value_or("");
    }
    catch (const json::exception& e)
    {
        throw SchemaError("<manifest>", m.run_id, e.what());
    }
    check_manifest(m);
    return m;
}

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest)
{
    write_file(path, to_json(manifest).dump(2, ' ', false, json::error_handler_t::replace) + "\n");
}

RunManifest read_manifest(const std::filesystem::path& path)
{
    try
    {
        return manifest_from_json(json::parse(read_file(path)));
    }
    catch (const json::exception& e)
    {
        throw SchemaError("<manifest>", path.string(), e.what());
    }
}

Rational headline_metric(const RunManifest& manifest)
{
    if (manifest.counts.total == 0)
        return Rational(0);
    return Rational(BigInt(manifest.counts.positive) * 100, BigInt(manifest.counts.total));
}

// ---------------------------------------------------------------------------

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot read " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_file(const std::filesystem::path& path, const std::string& content)
{
    if (!path.parent_path().empty())
        std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw IoError("cannot write " + tmp.string());
        out << content;
        if (!out)
            throw IoError("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string file_sha256(const std::filesystem::path& path)
{
    return sha256_hex(read_file(path));
}

} // namespace tabreason
