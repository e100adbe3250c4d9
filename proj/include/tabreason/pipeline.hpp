// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tabreason/backend.hpp"
#include "tabreason/core.hpp"
#include "tabreason/dataset_io.hpp"
#include "tabreason/prompt.hpp"
#include "tabreason/tools.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tabreason
{

/// One generation run. As a config file:
///
///     {"phase": "pe", "datasets": ["FinQA"], "split": "train",
///      "routing": "routing.json" | {...}, "workers": 4,
///      "paths": {"data": "data.json", "out": "runs/pe", "cassette": "pe.cassette.jsonl",
///                "templates": "templates"},
///      "mode": "replay", "run_id": "pe-finqa", "temperature": 0, "max_tokens": 1024}
///
/// Relative paths resolve against the config file's directory.
struct PhaseSpec
{
    Phase phase = Phase::PE;
    std::vector<Dataset> datasets;
    Split split = Split::train;
    RoutingTable routing;
    std::size_t workers = 1;
    std::filesystem::path data_manifest;
    std::filesystem::path out_dir;
    std::filesystem::path cassette;
    std::filesystem::path templates;
    std::string mode = "replay";
    std::optional<std::string> run_id;
    ToolSettings settings;
    std::optional<std::size_t> limit; ///< first N instances per dataset
};

PhaseSpec phase_spec_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
PhaseSpec load_phase_spec(const std::filesystem::path& path);

/// Instances of the selected datasets in load order ("All" concatenates).
std::vector<ProblemInstance> load_instances(const DataManifest& manifest, const std::vector<Dataset>& datasets,
                                            Split split, std::optional<std::size_t> limit = std::nullopt);

struct PlanOutcome
{
    Trajectory plan;
    std::optional<std::string> digest;
    std::optional<std::string> raw;       ///< planner line when it had to be repaired or rejected
    std::optional<FailureReason> failure; ///< InvalidPlan or BackendError
};

/// Asks the planner for a trajectory and repairs a missing final generator.
PlanOutcome plan_instance(const ToolRuntime& runtime, const RoutingTable& routing, Phase phase,
                          const ProblemInstance& instance);

/// Plan, execute and label one instance. Never throws for per-instance failures.
TrajectoryRecord solve_instance(const ToolRuntime& runtime, const RoutingTable& routing, Phase phase,
                                const ProblemInstance& instance, TrajectoryDiagnostics* diagnostics = nullptr);

struct GenerationResult
{
    std::filesystem::path trajectories;
    std::filesystem::path manifest_path;
    RunManifest manifest;
    std::vector<TrajectoryRecord> records;
    std::vector<std::string> warnings;
};

/// Runs every instance on a bounded worker pool and writes
/// {out_dir}/trajectories.jsonl (sorted by dataset, then id) and
/// {out_dir}/manifest.json. Throws only on configuration errors.
GenerationResult run_generation(const PhaseSpec& spec, const std::vector<ProblemInstance>& instances,
                                Gateway& gateway, const TemplateSet& templates);

/// Stable short id derived from what determines a run's output.
std::string derive_run_id(const PhaseSpec& spec, const std::vector<ProblemInstance>& instances,
                          const TemplateSet& templates);

// ---------------------------------------------------------------------------
// extraction

struct ExtractResult
{
    ExportCounts counts;
    std::vector<std::string> warnings;
    bool no_positives = false;
};

/// IT exports from the positive records only.
ExtractResult extract_phase2(const std::vector<TrajectoryRecord>& records, const TemplateSet& templates,
                             const std::filesystem::path& dir);

/// Desirable/undesirable weights balancing n_pos and n_neg.
struct ClassWeights
{
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
    Rational desirable {1};
    Rational undesirable {1};
    bool degenerate = false;

    friend bool operator==(const ClassWeights&, const ClassWeights&) = default;
};

/// (1, n_pos/n_neg) when n_pos >= n_neg, else (n_neg/n_pos, 1); (1, 1) and
/// degenerate when either class is empty.
ClassWeights class_weights(std::size_t n_pos, std::size_t n_neg);

nlohmann::json to_json(const TrainingConfig& config);
TrainingConfig training_config_from_json(const nlohmann::json& j);

struct KtoResult
{
    ExportCounts counts;
    std::map<std::string, ClassWeights> weights; ///< by export stem
    std::vector<std::string> warnings;
};

/// KTO exports from all records, plus {dir}/{stem}.config.json holding a
/// TrainingConfig with the stem's class weights.
KtoResult extract_phase4(const std::vector<TrajectoryRecord>& records, const TemplateSet& templates,
                         const std::filesystem::path& dir, const TrainingConfig& base = {});

// ---------------------------------------------------------------------------
// audit and selection

/// Per export stem: how many lines IT and KTO exports must hold.
struct ExpectedCounts
{
    ExportCounts it;
    ExportCounts kto;
};

ExpectedCounts expected_export_counts(const std::vector<TrajectoryRecord>& records);

struct AuditReport
{
    std::vector<std::string> problems;
    std::size_t positives = 0;
    std::size_t negatives = 0;

    [[nodiscard]] bool ok() const noexcept { return problems.empty(); }
};

/// Partition, state threading and failure/label consistency of a run; export
/// line counts when the export directories are given; manifest counts and
/// digest when a manifest is given.
AuditReport audit(const std::vector<TrajectoryRecord>& records, const std::optional<std::filesystem::path>& it_dir,
                  const std::optional<std::filesystem::path>& kto_dir, const std::optional<RunManifest>& manifest = {},
                  const std::optional<std::filesystem::path>& trajectories = {});

class NoCandidates: public Error
{
  public:
    NoCandidates(): Error("NoCandidates: no manifests to select from") { }
};

/// Highest headline metric wins; ties go to the lexicographically smallest run_id.
const RunManifest& select_best(const std::vector<RunManifest>& candidates);

} // namespace tabreason
