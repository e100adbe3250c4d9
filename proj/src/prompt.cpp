// SPDX-License-Identifier: Apache-2.0
#include "tabreason/prompt.hpp"

#include <fstream>
#include <sstream>

namespace tabreason
{

namespace
{

bool is_placeholder_char(char c)
{
    return (c >= 'A' && c <= 'Z') || c == '_' || (c >= '0' && c <= '9');
}

std::string rstrip(std::string s)
{
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r' || s.back() == ' ' || s.back() == '\t'))
        s.pop_back();
    return s;
}

const std::string& field(const PromptFields& fields, std::string_view name, std::string_view tpl_name)
{
    auto it = fields.find(name);
    if (it == fields.end())
        throw TemplateError("template '" + std::string(tpl_name) + "': unfilled placeholder {" + std::string(name) + "}");
    return it->second;
}

// Renders text[pos..) until `{/stop}` (or end when stop is empty). Returns the
// position just after the closing marker.
std::size_t render_range(std::string_view text, std::size_t pos, std::string_view stop, const PromptFields& fields,
                         std::string_view tpl_name, bool emit, std::string& out)
{
    while (pos < text.size())
    {
        char c = text[pos];
        if (c != '{')
        {
            if (emit)
                out += c;
            ++pos;
            continue;
        }
        std::size_t p = pos + 1;
        char marker = 0;
        if (p < text.size() && (text[p] == '?' || text[p] == '/'))
            marker = text[p++];
        std::size_t name_start = p;
        while (p < text.size() && is_placeholder_char(text[p]))
            ++p;
        if (p == name_start || p >= text.size() || text[p] != '}')
        {
            // literal brace
            if (emit)
                out += c;
            ++pos;
            continue;
        }
        auto name = text.substr(name_start, p - name_start);
        pos = p + 1;
        if (marker == '/')
        {
            if (name != stop)
                throw TemplateError("template '" + std::string(tpl_name) + "': unbalanced {/" + std::string(name) + "}");
            return pos;
        }
        if (marker == '?')
        {
            bool include = emit && !field(fields, name, tpl_name).empty();
            pos = render_range(text, pos, name, fields, tpl_name, include, out);
            continue;
        }
        const auto& value = field(fields, name, tpl_name);
        if (emit)
            out += value;
    }
    if (!stop.empty())
        throw TemplateError("template '" + std::string(tpl_name) + "': missing {/" + std::string(stop) + "}");
    return pos;
}

} // namespace

PromptTemplate parse_template(std::string_view text, std::string_view origin)
{
    PromptTemplate tpl;
    enum class Section
    {
        header,
        fewshot,
        query,
    } section = Section::header;
    std::string fewshot;
    std::string body;

    std::size_t start = 0;
    while (start < text.size())
    {
        auto end = text.find('\n', start);
        auto line = text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
        start = end == std::string_view::npos ? text.size() : end + 1;

        if (line == "@@fewshot")
        {
            section = Section::fewshot;
            continue;
        }
        if (line == "@@query")
        {
            section = Section::query;
            continue;
        }
        switch (section)
        {
            case Section::header: {
                auto colon = line.find(':');
                if (colon == std::string_view::npos)
                {
                    if (!line.empty())
                        throw TemplateError(std::string(origin) + ": malformed header line");
                    break;
                }
                auto key = line.substr(0, colon);
                auto value = line.substr(colon + 1);
                while (!value.empty() && value.front() == ' ')
                    value.remove_prefix(1);
                if (key == "name")
                    tpl.name = value;
                else if (key == "version")
                    tpl.version = value;
                break;
            }
            case Section::fewshot: fewshot.append(line).append("\n"); break;
            case Section::query: body.append(line).append("\n"); break;
        }
    }
    if (tpl.name.empty() || tpl.version.empty())
        throw TemplateError(std::string(origin) + ": template needs 'name' and 'version' headers");
    if (section != Section::query)
        throw TemplateError(std::string(origin) + ": missing @@query section");
    tpl.fewshot_block = rstrip(std::move(fewshot));
    tpl.body = rstrip(std::move(body));
    return tpl;
}

PromptTemplate load_template(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw TemplateError("cannot read template " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_template(buffer.str(), path.string());
}

std::string render_body(const PromptTemplate& tpl, const PromptFields& fields)
{
    std::string out;
    render_range(tpl.body, 0, "", fields, tpl.name, true, out);
    return out;
}

std::string render_prompt(const PromptTemplate& tpl, const PromptFields& fields)
{
    auto query = render_body(tpl, fields);
    if (tpl.fewshot_block.empty())
        return query;
    return tpl.fewshot_block + "\n\n" + query;
}

TemplateSet TemplateSet::load_directory(const std::filesystem::path& dir)
{
    if (!std::filesystem::is_directory(dir))
        throw TemplateError("template directory not found: " + dir.string());
    TemplateSet set;
    for (const auto& entry: std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".tpl")
            set.add(load_template(entry.path()));
    return set;
}

TemplateSet TemplateSet::builtin()
{
    return load_directory(TABREASON_TEMPLATE_DIR);
}

void TemplateSet::add(PromptTemplate tpl)
{
    auto name = tpl.name;
    templates_.insert_or_assign(std::move(name), std::move(tpl));
}

const PromptTemplate& TemplateSet::get(std::string_view name) const
{
    auto it = templates_.find(name);
    if (it == templates_.end())
        throw TemplateError("no template named '" + std::string(name) + "'");
    return it->second;
}

bool TemplateSet::contains(std::string_view name) const
{
    return templates_.find(name) != templates_.end();
}

std::map<std::string, std::string> TemplateSet::versions() const
{
    std::map<std::string, std::string> out;
    for (const auto& [name, tpl]: templates_)
        out.emplace(name, tpl.version);
    return out;
}

std::string_view template_name(ToolId tool)
{
    switch (tool)
    {
        case ToolId::RowLookup: return "row_lookup";
        case ToolId::ColumnLookup: return "column_lookup";
        case ToolId::ContextExtractor: return "context_extractor";
        case ToolId::SpanExtractor: return "span_extractor";
        case ToolId::KnowledgeRetrieval: return "knowledge_retrieval";
        case ToolId::ProgramGeneratorAndVerifier: return "program_generator";
        case ToolId::SolutionGenerator: return "solution_generator";
        case ToolId::ScaleFinder: return "scale_finder";
        case ToolId::ProgramExecutor:
        case ToolId::AnswerGenerator: return "";
    }
    return "";
}

} // namespace tabreason
