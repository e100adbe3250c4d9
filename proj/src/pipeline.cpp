// SPDX-License-Identifier: Apache-2.0
#include "tabreason/pipeline.hpp"

#include "tabreason/answer.hpp"
#include "tabreason/planner.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

namespace tabreason
{

using nlohmann::json;

namespace
{

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p)
{
    std::filesystem::path path = p;
    return path.is_absolute() || base.empty() ? path : base / path;
}

std::string trim(std::string_view s)
{
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos)
        return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

} // namespace

PhaseSpec phase_spec_from_json(const json& j, const std::filesystem::path& base_dir)
{
    if (!j.is_object())
        throw SchemaError("<root>", "phase spec", "expected an object");
    PhaseSpec spec;
    try
    {
        auto phase = parse_phase(j.at("phase").get<std::string>());
        if (!phase)
            throw SchemaError("phase", "phase spec", "unknown phase");
        spec.phase = *phase;

        const auto& datasets = j.at("datasets");
        std::vector<std::string> names;
        if (datasets.is_string())
            names.push_back(datasets.get<std::string>());
        else
            names = datasets.get<std::vector<std::string>>();
        for (const auto& name: names)
        {
            if (name == "all" || name == "All")
            {
                spec.datasets = {Dataset::FinQA, Dataset::TatQA, Dataset::TabMWP};
                continue;
            }
            auto d = parse_dataset(name);
            if (!d)
                throw SchemaError("datasets", "phase spec", "unknown dataset '" + name + "'");
            if (std::find(spec.datasets.begin(), spec.datasets.end(), *d) == spec.datasets.end())
                spec.datasets.push_back(*d);
        }
        if (spec.datasets.empty())
            throw SchemaError("datasets", "phase spec", "empty selection");

        auto split = parse_split(j.value("split", std::string("train")));
        if (!split)
            throw SchemaError("split", "phase spec", "unknown split");
        spec.split = *split;

        if (auto r = j.find("routing"); r != j.end())
            spec.routing = r->is_string() ? RoutingTable::load(resolve(base_dir, r->get<std::string>()))
                                          : RoutingTable::from_json(*r);
        spec.workers = j.value("workers", std::size_t {1});
        if (spec.workers == 0)
            throw SchemaError("workers", "phase spec", "must be at least 1");
        if (auto paths = j.find("paths"); paths != j.end())
        {
            if (auto p = paths->find("data"); p != paths->end())
                spec.data_manifest = resolve(base_dir, p->get<std::string>());
            if (auto p = paths->find("out"); p != paths->end())
                spec.out_dir = resolve(base_dir, p->get<std::string>());
            if (auto p = paths->find("cassette"); p != paths->end())
                spec.cassette = resolve(base_dir, p->get<std::string>());
            if (auto p = paths->find("templates"); p != paths->end())
                spec.templates = resolve(base_dir, p->get<std::string>());
        }
        spec.mode = j.value("mode", std::string("replay"));
        if (!parse_gateway_mode(spec.mode))
            throw SchemaError("mode", "phase spec", "expected live, record or replay");
        if (auto id = j.find("run_id"); id != j.end() && !id->is_null())
            spec.run_id = id->get<std::string>();
        spec.settings.temperature = j.value("temperature", 0.0);
        spec.settings.max_tokens = j.value("max_tokens", 1024);
        if (auto l = j.find("limit"); l != j.end() && !l->is_null())
            spec.limit = l->get<std::size_t>();
    }
    catch (const json::exception& e)
    {
        throw SchemaError("<spec>", "phase spec", e.what());
    }
    spec.routing.check_phase_consistent(spec.phase);
    return spec;
}

PhaseSpec load_phase_spec(const std::filesystem::path& path)
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
    return phase_spec_from_json(j, path.parent_path());
}

std::vector<ProblemInstance> load_instances(const DataManifest& manifest, const std::vector<Dataset>& datasets,
                                            Split split, std::optional<std::size_t> limit)
{
    std::vector<ProblemInstance> out;
    for (auto d: datasets)
    {
        auto part = load_dataset(d, manifest.require(d, split), split);
        if (limit && part.size() > *limit)
            part.resize(*limit);
        std::move(part.begin(), part.end(), std::back_inserter(out));
    }
    return out;
}

// ---------------------------------------------------------------------------

PlanOutcome plan_instance(const ToolRuntime& runtime, const RoutingTable& routing, Phase phase,
                          const ProblemInstance& instance)
{
    PlanOutcome out;
    std::string text;
    try
    {
        auto request = make_request(routing.route_planner(phase),
                                    render_planner_prompt(instance, runtime.templates().planner()),
                                    runtime.settings());
        auto reply = runtime.gateway().complete(request);
        out.digest = reply.digest;
        text = reply.text;
    }
    catch (const BackendError& e)
    {
        out.failure = FailureReason {FailureKind::BackendError, std::nullopt, e.what()};
        return out;
    }
    catch (const CassetteMiss& e)
    {
        out.failure = FailureReason {FailureKind::BackendError, std::nullopt, e.what()};
        return out;
    }
    catch (const UnroutedTool& e)
    {
        out.failure = FailureReason {FailureKind::BackendError, std::nullopt, e.what()};
        return out;
    }

    try
    {
        auto parsed = parse_trajectory(text);
        out.plan = repair_and_validate(parsed);
        if (out.plan != parsed)
            out.raw = trim(text.substr(0, text.find("#END")));
    }
    catch (const PlanError& e)
    {
        out.plan = {};
        out.raw = trim(text.substr(0, text.find("#END")));
        out.failure = FailureReason {FailureKind::InvalidPlan, std::nullopt, e.what()};
    }
    return out;
}

TrajectoryRecord solve_instance(const ToolRuntime& runtime, const RoutingTable& routing, Phase phase,
                                const ProblemInstance& instance, TrajectoryDiagnostics* diagnostics)
{
    auto planned = plan_instance(runtime, routing, phase, instance);
    TrajectoryRecord record;
    if (planned.failure)
    {
        record.instance_id = instance.id;
        record.dataset = instance.dataset;
        record.category = instance.category;
        record.input = initial_state(instance);
        record.failure = planned.failure;
        record.label = WeakLabel::negative;
    }
    else
    {
        record = runtime.run_trajectory(instance, planned.plan, diagnostics);
        if (!record.failure && record.predicted)
            record.label = compare_answers(*record.predicted, instance.gold);
    }
    record.planner_digest = planned.digest;
    record.plan_raw = planned.raw;
    return record;
}

std::string derive_run_id(const PhaseSpec& spec, const std::vector<ProblemInstance>& instances,
                          const TemplateSet& templates)
{
    json key;
    key["phase"] = to_string(spec.phase);
    key["split"] = to_string(spec.split);
    key["datasets"] = json::array();
    for (auto d: spec.datasets)
        key["datasets"].push_back(to_string(d));
    key["routing"] = spec.routing.snapshot(spec.phase);
    key["templates"] = templates.versions();
    key["temperature"] = spec.settings.temperature;
    key["max_tokens"] = spec.settings.max_tokens;
    key["ids"] = json::array();
    for (const auto& p: instances)
        key["ids"].push_back(p.id);
    std::string phase(to_string(spec.phase));
    std::transform(phase.begin(), phase.end(), phase.begin(), [](unsigned char c) {
        return c == '+' ? '-' : static_cast<char>(std::tolower(c));
    });
    return phase + "-" + sha256_hex(key.dump()).substr(0, 12);
}

GenerationResult run_generation(const PhaseSpec& spec, const std::vector<ProblemInstance>& instances,
                                Gateway& gateway, const TemplateSet& templates)
{
    spec.routing.check_phase_consistent(spec.phase);
    if (spec.out_dir.empty())
        throw Error("phase spec: output directory not set");

    ToolRuntime runtime(gateway, templates, ToolRuntime::make_bindings(templates, spec.routing, spec.phase),
                        spec.settings);

    std::vector<TrajectoryRecord> records(instances.size());
    std::vector<TrajectoryDiagnostics> diagnostics(instances.size());
    std::atomic<std::size_t> next {0};
    std::mutex error_mutex;
    std::exception_ptr fatal;

    auto worker = [&] {
        for (;;)
        {
            auto i = next.fetch_add(1);
            if (i >= instances.size())
                return;
            try
            {
                records[i] = solve_instance(runtime, spec.routing, spec.phase, instances[i], &diagnostics[i]);
            }
            catch (...)
            {
                std::lock_guard lock(error_mutex);
                if (!fatal)
                    fatal = std::current_exception();
                next.store(instances.size());
                return;
            }
        }
    };
    auto count = std::max<std::size_t>(1, std::min(spec.workers, instances.size()));
    if (count == 1)
        worker();
    else
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < count; ++t)
            pool.emplace_back(worker);
    }
    if (fatal)
        std::rethrow_exception(fatal);

    std::stable_sort(records.begin(), records.end(), [](const TrajectoryRecord& a, const TrajectoryRecord& b) {
        if (a.dataset != b.dataset)
            return a.dataset < b.dataset;
        return a.instance_id < b.instance_id;
    });

    GenerationResult result;
    result.trajectories = spec.out_dir / "trajectories.jsonl";
    result.manifest_path = spec.out_dir / "manifest.json";
    write_trajectories(result.trajectories, records);

    RunManifest& m = result.manifest;
    m.run_id = spec.run_id ? *spec.run_id : derive_run_id(spec, instances, templates);
    m.phase = spec.phase;
    m.datasets = spec.datasets;
    m.split = spec.split;
    m.mode = std::string(to_string(gateway.mode()));
    m.template_versions = templates.versions();
    m.routing = spec.routing.snapshot(spec.phase);
    m.counts = count_records(records);
    for (const auto& d: diagnostics)
    {
        m.subtable_violations += d.subtable_violations;
        result.warnings.insert(result.warnings.end(), d.warnings.begin(), d.warnings.end());
    }
    for (auto d: spec.datasets)
    {
        std::vector<TrajectoryRecord> part;
        std::copy_if(records.begin(), records.end(), std::back_inserter(part),
                     [d](const TrajectoryRecord& r) { return r.dataset == d; });
        if (!part.empty())
            m.metrics.push_back(score_run(part, d));
    }
    m.trajectories = result.trajectories.filename().string();
    m.trajectories_sha256 = file_sha256(result.trajectories);
    check_manifest(m);
    write_manifest(result.manifest_path, m);
    result.records = std::move(records);
    return result;
}

// ---------------------------------------------------------------------------

ExtractResult extract_phase2(const std::vector<TrajectoryRecord>& records, const TemplateSet& templates,
                             const std::filesystem::path& dir)
{
    std::vector<TrajectoryRecord> positives;
    std::copy_if(records.begin(), records.end(), std::back_inserter(positives),
                 [](const TrajectoryRecord& r) { return r.label == WeakLabel::positive; });
    ExtractResult out;
    if (positives.empty())
    {
        out.no_positives = true;
        out.warnings.push_back("NoPositives: no positive trajectories; exports are empty");
    }
    out.counts = export_it(positives, templates, dir);
    return out;
}

ClassWeights class_weights(std::size_t n_pos, std::size_t n_neg)
{
    ClassWeights w;
    w.n_pos = n_pos;
    w.n_neg = n_neg;
    if (n_pos == 0 || n_neg == 0)
    {
        w.degenerate = true;
        return w;
    }
    if (n_pos >= n_neg)
        w.undesirable = Rational(BigInt(n_pos), BigInt(n_neg));
    else
        w.desirable = Rational(BigInt(n_neg), BigInt(n_pos));
    return w;
}

json to_json(const TrainingConfig& c)
{
    return json {
        {"learning_rate", c.learning_rate},
        {"batch_size", c.batch_size},
        {"epochs", c.epochs},
        {"lora_rank", c.lora_rank},
        {"lora_alpha", c.lora_alpha},
        {"lora_dropout", c.lora_dropout},
        {"kto_beta", c.kto_beta},
        {"desirable_weight", c.desirable_weight},
        {"undesirable_weight", c.undesirable_weight},
    };
}

TrainingConfig training_config_from_json(const json& j)
{
    TrainingConfig c;
    try
    {
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.epochs = j.value("epochs", c.epochs);
        c.lora_rank = j.value("lora_rank", c.lora_rank);
        c.lora_alpha = j.value("lora_alpha", c.lora_alpha);
        c.lora_dropout = j.value("lora_dropout", c.lora_dropout);
        c.kto_beta = j.value("kto_beta", c.kto_beta);
        c.desirable_weight = j.value("desirable_weight", c.desirable_weight);
        c.undesirable_weight = j.value("undesirable_weight", c.undesirable_weight);
    }
    catch (const json::exception& e)
    {
        throw SchemaError("<training config>", "", e.what());
    }
    if (c.learning_rate <= 0 || c.batch_size <= 0 || c.epochs <= 0 || c.lora_rank <= 0 || c.lora_alpha <= 0
        || c.lora_dropout < 0 || c.kto_beta <= 0 || c.desirable_weight <= 0 || c.undesirable_weight <= 0)
        throw SchemaError("<training config>", "", "values must be positive");
    return c;
}

KtoResult extract_phase4(const std::vector<TrajectoryRecord>& records, const TemplateSet& templates,
                         const std::filesystem::path& dir, const TrainingConfig& base)
{
    KtoResult out;
    out.counts = export_kto(records, templates, dir);

    std::map<std::string, std::pair<std::size_t, std::size_t>> tally;
    tally["planner"];
    for (const auto& r: records)
    {
        auto bump = [&](const std::string& stem) {
            auto& [pos, neg] = tally[stem];
            (r.label == WeakLabel::positive ? pos : neg) += 1;
        };
        for (const auto& step: r.steps)
            bump(file_stem(step.tool));
        bump("planner");
    }
    for (const auto& [stem, n]: tally)
    {
        auto w = class_weights(n.first, n.second);
        if (w.degenerate)
            out.warnings.push_back("DegenerateClass: " + stem + " has " + std::to_string(n.first) + " positive and "
                                   + std::to_string(n.second) + " negative examples; weights (1, 1)");
        TrainingConfig config = base;
        config.desirable_weight = w.desirable.convert_to<double>();
        config.undesirable_weight = w.undesirable.convert_to<double>();
        auto j = to_json(config);
        j["tool"] = stem;
        j["n_pos"] = w.n_pos;
        j["n_neg"] = w.n_neg;
        write_file(dir / (stem + ".config.json"), j.dump(2) + "\n");
        out.weights[stem] = w;
    }
    return out;
}

// ---------------------------------------------------------------------------

ExpectedCounts expected_export_counts(const std::vector<TrajectoryRecord>& records)
{
    ExpectedCounts e;
    e.it["planner"] = 0;
    e.kto["planner"] = 0;
    for (const auto& r: records)
    {
        bool positive = r.label == WeakLabel::positive;
        for (const auto& step: r.steps)
        {
            auto stem = file_stem(step.tool);
            ++e.kto[stem];
            if (positive)
                ++e.it[stem];
        }
        ++e.kto["planner"];
        if (positive)
            ++e.it["planner"];
    }
    return e;
}

namespace
{

std::size_t count_lines(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    std::size_t n = 0;
    std::string line;
    while (std::getline(in, line))
        n += !line.empty();
    return n;
}

void audit_exports(const ExportCounts& expected, const std::filesystem::path& dir, const std::string& what,
                   std::vector<std::string>& problems)
{
    std::set<std::string> stems;
    for (const auto& [stem, n]: expected)
        if (n > 0 || stem == "planner")
            stems.insert(stem);
    if (std::filesystem::is_directory(dir))
        for (const auto& entry: std::filesystem::directory_iterator(dir))
            if (entry.path().extension() == ".jsonl")
                stems.insert(entry.path().stem().string());
    for (const auto& stem: stems)
    {
        auto it = expected.find(stem);
        std::size_t want = it == expected.end() ? 0 : it->second;
        auto path = dir / (stem + ".jsonl");
        bool exists = std::filesystem::exists(path);
        std::size_t have = exists ? count_lines(path) : 0;
        if (want > 0 && !exists)
            problems.push_back(what + " export " + stem + ".jsonl is missing (expected " + std::to_string(want)
                               + " lines)");
        else if (have != want)
            problems.push_back(what + " export " + stem + ".jsonl has " + std::to_string(have) + " lines, expected "
                               + std::to_string(want));
    }
}

} // namespace

AuditReport audit(const std::vector<TrajectoryRecord>& records, const std::optional<std::filesystem::path>& it_dir,
                  const std::optional<std::filesystem::path>& kto_dir, const std::optional<RunManifest>& manifest,
                  const std::optional<std::filesystem::path>& trajectories)
{
    AuditReport report;
    auto& problems = report.problems;
    std::set<std::pair<Dataset, std::string>> seen;
    for (const auto& r: records)
    {
        const auto& id = r.instance_id;
        if (!seen.emplace(r.dataset, id).second)
            problems.push_back(id + ": duplicate record");
        if (r.label == WeakLabel::positive)
            ++report.positives;
        else if (r.label == WeakLabel::negative)
            ++report.negatives;
        else
            problems.push_back(id + ": label is neither +1 nor -1");
        if (r.label == WeakLabel::positive && (r.failure || !r.predicted))
            problems.push_back(id + ": positive record without a clean prediction");
        if (r.steps.size() > r.plan.steps.size())
            problems.push_back(id + ": more steps than planned");
        for (std::size_t k = 0; k < r.steps.size(); ++k)
        {
            const auto& s = r.steps[k];
            if (k < r.plan.steps.size() && s.tool != r.plan.steps[k])
                problems.push_back(id + ": step " + std::to_string(k) + " does not follow the plan");
            const auto& before = k == 0 ? r.input : r.steps[k - 1].output;
            if (s.input != before)
                problems.push_back(id + ": state chain broken at step " + std::to_string(k));
            if (s.input.question != r.input.question || s.output.question != r.input.question)
                problems.push_back(id + ": question changed at step " + std::to_string(k));
        }
    }
    if (report.positives + report.negatives != records.size())
        problems.push_back("positives and negatives do not partition the run");

    auto expected = expected_export_counts(records);
    if (it_dir)
        audit_exports(expected.it, *it_dir, "IT", problems);
    if (kto_dir)
        audit_exports(expected.kto, *kto_dir, "KTO", problems);

    if (manifest)
    {
        if (manifest->counts != count_records(records))
            problems.push_back("manifest counts do not match the trajectory file");
        if (trajectories && manifest->trajectories_sha256 != file_sha256(*trajectories))
            problems.push_back("manifest digest does not match the trajectory file");
    }
    return report;
}

const RunManifest& select_best(const std::vector<RunManifest>& candidates)
{
    if (candidates.empty())
        throw NoCandidates();
    const RunManifest* best = &candidates.front();
    Rational best_score = headline_metric(*best);
    for (const auto& m: candidates)
    {
        auto score = headline_metric(m);
        if (score > best_score || (score == best_score && m.run_id < best->run_id))
        {
            best = &m;
            best_score = score;
        }
    }
    return *best;
}

} // namespace tabreason
