// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tabreason/answer.hpp"
#include "tabreason/core.hpp"
#include "tabreason/prompt.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tabreason
{

class SchemaError: public Error
{
  public:
    SchemaError(std::string field, std::string item, std::string detail = {});
    [[nodiscard]] const std::string& field() const noexcept { return field_; }
    [[nodiscard]] const std::string& item() const noexcept { return item_; }

  private:
    std::string field_;
    std::string item_;
};

class IoError: public Error
{
  public:
    using Error::Error;
};

class MixedLabelError: public Error
{
  public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// source datasets

/// Table from raw cell rows: cells trimmed, '|' and line breaks replaced,
/// blank rows dropped, ragged rows padded.
Table make_table(const std::vector<std::vector<std::string>>& rows);

/// FinQA: a JSON array of {id, pre_text, post_text, table, qa{question, program, exe_ans}}.
std::vector<ProblemInstance> load_finqa(const nlohmann::json& data, Split split);
/// TAT-QA: a JSON array of {table{table}, paragraphs[{order, text}], questions[...]},
/// one instance per question.
std::vector<ProblemInstance> load_tatqa(const nlohmann::json& data, Split split);
/// TabMWP: a JSON object keyed by problem id with {question, choices, table,
/// table_title, answer, ans_type}.
std::vector<ProblemInstance> load_tabmwp(const nlohmann::json& data, Split split);

std::vector<ProblemInstance> load_dataset(Dataset kind, const std::filesystem::path& path, Split split);

/// Maps dataset and split to files:
///
///     {"FinQA": {"train": "finqa/train.json", "dev": "finqa/dev.json"},
///      "TAT-QA": {...}, "TabMWP": {...}}
///
/// Relative paths resolve against the manifest's directory.
class DataManifest
{
  public:
    static DataManifest load(const std::filesystem::path& path);
    [[nodiscard]] std::optional<std::filesystem::path> locate(Dataset dataset, Split split) const;
    [[nodiscard]] std::filesystem::path require(Dataset dataset, Split split) const;

  private:
    std::map<std::pair<Dataset, Split>, std::filesystem::path> files_;
};

// ---------------------------------------------------------------------------
// JSON forms

nlohmann::json to_json(const Table& table);
nlohmann::json to_json(const ToolState& state);
nlohmann::json to_json(const AnswerSlot& slot);
nlohmann::json to_json(const FinalAnswer& answer);
nlohmann::json to_json(const TrajectoryRecord& record);
nlohmann::json to_json(const MetricReport& report);

ToolState state_from_json(const nlohmann::json& j, const std::string& item);
AnswerSlot slot_from_json(const nlohmann::json& j, const std::string& item);
FinalAnswer final_answer_from_json(const nlohmann::json& j, const std::string& item);
TrajectoryRecord record_from_json(const nlohmann::json& j);
MetricReport metric_report_from_json(const nlohmann::json& j);

void write_trajectories(const std::filesystem::path& path, const std::vector<TrajectoryRecord>& records);
std::vector<TrajectoryRecord> read_trajectories(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// training exports

/// One prompt/completion pair. `tool` is a canonical tool name or "planner".
struct ExportLine
{
    std::string tool;
    std::string prompt;
    std::string completion;
    std::string template_version;
    std::optional<WeakLabel> label; ///< KTO exports only

    friend bool operator==(const ExportLine&, const ExportLine&) = default;
};

nlohmann::json to_json(const ExportLine& line);
ExportLine export_line_from_json(const nlohmann::json& j);

/// File stem of an export: lower-case tool name or "planner".
std::string export_stem(const std::string& tool);

/// Version tag recorded with exports of a tool's prompt.
std::string template_version_for(const std::string& tool, const TemplateSet& templates);

/// One line per executed step plus one planner line.
std::vector<ExportLine> record_examples(const TrajectoryRecord& record, const TemplateSet& templates);

/// Line counts per export stem.
using ExportCounts = std::map<std::string, std::size_t>;

/// Writes {dir}/{stem}.jsonl for each tool that occurs in the records and
/// {dir}/planner.jsonl. Throws MixedLabelError on a negative record.
ExportCounts export_it(const std::vector<TrajectoryRecord>& records, const TemplateSet& templates,
                       const std::filesystem::path& dir);

/// Same layout with a label on every line; all records contribute.
ExportCounts export_kto(const std::vector<TrajectoryRecord>& records, const TemplateSet& templates,
                        const std::filesystem::path& dir);

std::vector<ExportLine> read_export(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// run manifest

struct RunCounts
{
    std::size_t total = 0;
    std::size_t positive = 0;
    std::size_t negative = 0;
    std::map<std::string, std::size_t> failed; ///< by failure kind

    friend bool operator==(const RunCounts&, const RunCounts&) = default;
};

RunCounts count_records(const std::vector<TrajectoryRecord>& records);

struct RunManifest
{
    std::string run_id;
    Phase phase = Phase::PE;
    std::vector<Dataset> datasets;
    Split split = Split::train;
    std::string mode;
    std::map<std::string, std::string> template_versions;
    nlohmann::json routing = nlohmann::json::object();
    RunCounts counts;
    std::size_t subtable_violations = 0;
    std::vector<MetricReport> metrics;
    std::string trajectories;        ///< trajectory file name
    std::string trajectories_sha256;

    friend bool operator==(const RunManifest&, const RunManifest&) = default;
};

/// Throws SchemaError when total != positive + negative or failures exceed negatives.
void check_manifest(const RunManifest& manifest);

nlohmann::json to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const nlohmann::json& j);
void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);
RunManifest read_manifest(const std::filesystem::path& path);

/// Headline metric as a number (correct percent), for ranking runs.
Rational headline_metric(const RunManifest& manifest);

// ---------------------------------------------------------------------------
// small file helpers

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary file and renames it into place.
void write_file(const std::filesystem::path& path, const std::string& content);
std::string file_sha256(const std::filesystem::path& path);

} // namespace tabreason
