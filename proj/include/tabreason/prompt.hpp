// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tabreason/core.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace tabreason
{

class TemplateError: public Error
{
  public:
    using Error::Error;
};

/// A few-shot prompt: a verbatim block of worked examples followed by a query
/// body with `{NAME}` placeholders. `{?NAME}...{/NAME}` emits its content only
/// when NAME is non-empty.
///
/// On disk:
///
///     name: planner
///     version: 1
///     @@fewshot
///     ...verbatim examples...
///     @@query
///     ...body...
struct PromptTemplate
{
    std::string name;
    std::string version;
    std::string body;
    std::string fewshot_block;
};

using PromptFields = std::map<std::string, std::string, std::less<>>;

PromptTemplate parse_template(std::string_view text, std::string_view origin = "<memory>");
PromptTemplate load_template(const std::filesystem::path& path);

/// Renders only the query body. Throws TemplateError when a placeholder has no
/// field or the conditional markers are unbalanced.
std::string render_body(const PromptTemplate& tpl, const PromptFields& fields);

/// Few-shot block, a blank line, then the rendered query body.
std::string render_prompt(const PromptTemplate& tpl, const PromptFields& fields);

/// All templates of one prompt set, keyed by template name.
class TemplateSet
{
  public:
    TemplateSet() = default;
    static TemplateSet load_directory(const std::filesystem::path& dir);
    /// The templates shipped with the source tree.
    static TemplateSet builtin();

    void add(PromptTemplate tpl);
    [[nodiscard]] const PromptTemplate& get(std::string_view name) const;
    [[nodiscard]] bool contains(std::string_view name) const;
    [[nodiscard]] const PromptTemplate& planner() const { return get("planner"); }
    [[nodiscard]] std::map<std::string, std::string> versions() const;

  private:
    std::map<std::string, PromptTemplate, std::less<>> templates_;
};

/// Template name used by an llm-backed tool; empty for deterministic tools.
std::string_view template_name(ToolId tool);

} // namespace tabreason
