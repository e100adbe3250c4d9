// SPDX-License-Identifier: Apache-2.0
#include "tabreason/cli.hpp"

#include "tabreason/answer.hpp"
#include "tabreason/dataset_io.hpp"
#include "tabreason/pipeline.hpp"
#include "tabreason/planner.hpp"
#include "tabreason/program.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <iostream>
#include <iterator>
#include <set>
#include <sstream>

namespace tabreason
{

using nlohmann::json;

void validate_config(const CliConfig& config)
{
    if (config.mode == GatewayMode::replay && config.cassette.empty())
        throw Error("replay mode needs a cassette (--cassette or TABREASON_CASSETTE)");
    if (config.mode != GatewayMode::replay && config.base_url.empty())
        throw Error(std::string(to_string(config.mode)) + " mode needs a backend URL (--base-url or TABREASON_BASE_URL)");
    if (config.mode == GatewayMode::record && config.cassette.empty())
        throw Error("record mode needs a cassette (--cassette or TABREASON_CASSETTE)");
    if (config.workers == 0)
        throw Error("worker count must be at least 1");
}

Gateway make_gateway(const CliConfig& config, std::shared_ptr<Cassette>& cassette)
{
    validate_config(config);
    std::shared_ptr<ChatClient> client;
    if (config.mode != GatewayMode::replay)
        client = std::make_shared<HttpChatClient>(
            HttpClientConfig {config.base_url, config.api_key_env, config.timeout_seconds, config.workers});
    if (!config.cassette.empty())
    {
        if (config.mode == GatewayMode::replay && !std::filesystem::exists(config.cassette))
            throw IoError("cassette not found: " + config.cassette.string());
        cassette = std::make_shared<Cassette>(config.cassette);
    }
    return Gateway(config.mode, client, cassette);
}

namespace
{

// Raw values of the shared settings as given on the command line.
struct GlobalFlags
{
    std::string config;
    std::string base_url;
    std::string api_key_env;
    std::string data;
    std::string templates;
    std::string routing;
    std::string workers;
    std::string mode;
    std::string cassette;
    std::string timeout;
};

std::string env_value(const char* name)
{
    const char* v = std::getenv(name);
    return v ? std::string(v) : std::string();
}

struct Resolved
{
    CliConfig config;
    std::set<std::string> from_flags; ///< keys given on the command line
};

Resolved resolve_config(const GlobalFlags& flags)
{
    json file = json::object();
    std::filesystem::path file_dir;
    auto config_path = flags.config.empty() ? env_value("TABREASON_CONFIG") : flags.config;
    if (!config_path.empty())
    {
        try
        {
            file = json::parse(read_file(config_path));
        }
        catch (const json::exception& e)
        {
            throw SchemaError("<config>", config_path, e.what());
        }
        if (!file.is_object())
            throw SchemaError("<config>", config_path, "expected an object");
        file_dir = std::filesystem::path(config_path).parent_path();
    }

    Resolved r;
    auto pick = [&](const std::string& flag, const char* env, const char* key, bool is_path) -> std::string {
        if (!flag.empty())
        {
            r.from_flags.insert(key);
            return flag;
        }
        if (auto v = env_value(env); !v.empty())
            return v;
        if (auto it = file.find(key); it != file.end() && !it->is_null())
        {
            std::string v = it->is_string() ? it->get<std::string>() : it->dump();
            if (is_path && !file_dir.empty() && std::filesystem::path(v).is_relative())
                return (file_dir / v).string();
            return v;
        }
        return "";
    };

    auto& c = r.config;
    c.base_url = pick(flags.base_url, "TABREASON_BASE_URL", "base_url", false);
    c.api_key_env = pick(flags.api_key_env, "TABREASON_API_KEY_ENV", "api_key_env", false);
    c.data_manifest = pick(flags.data, "TABREASON_DATA", "data", true);
    c.templates = pick(flags.templates, "TABREASON_TEMPLATES", "templates", true);
    c.routing = pick(flags.routing, "TABREASON_ROUTING", "routing", true);
    c.cassette = pick(flags.cassette, "TABREASON_CASSETTE", "cassette", true);
    if (auto w = pick(flags.workers, "TABREASON_WORKERS", "workers", false); !w.empty())
    {
        try
        {
            auto n = std::stol(w);
            if (n < 1)
                throw Error("");
            c.workers = static_cast<std::size_t>(n);
        }
        catch (const std::exception&)
        {
            throw Error("invalid worker count '" + w + "'");
        }
    }
    if (auto m = pick(flags.mode, "TABREASON_MODE", "mode", false); !m.empty())
    {
        auto mode = parse_gateway_mode(m);
        if (!mode)
            throw Error("invalid mode '" + m + "' (expected live, record or replay)");
        c.mode = *mode;
    }
    if (auto t = pick(flags.timeout, "TABREASON_TIMEOUT", "timeout", false); !t.empty())
    {
        try
        {
            c.timeout_seconds = std::stod(t);
        }
        catch (const std::exception&)
        {
            throw Error("invalid timeout '" + t + "'");
        }
    }
    return r;
}

TemplateSet templates_for(const CliConfig& c)
{
    return c.templates.empty() ? TemplateSet::builtin() : TemplateSet::load_directory(c.templates);
}

RoutingTable routing_for(const CliConfig& c)
{
    return c.routing.empty() ? RoutingTable {} : RoutingTable::load(c.routing);
}

Phase phase_arg(const std::string& text)
{
    auto p = parse_phase(text);
    if (!p)
        throw Error("unknown phase '" + text + "' (expected pe, it or it+kto)");
    return *p;
}

std::vector<Dataset> dataset_args(const std::vector<std::string>& names)
{
    std::vector<Dataset> out;
    for (const auto& n: names)
    {
        if (n == "all" || n == "All")
            return {Dataset::FinQA, Dataset::TatQA, Dataset::TabMWP};
        auto d = parse_dataset(n);
        if (!d)
            throw Error("unknown dataset '" + n + "' (expected finqa, tatqa, tabmwp or all)");
        if (std::find(out.begin(), out.end(), *d) == out.end())
            out.push_back(*d);
    }
    return out;
}

Split split_arg(const std::string& text)
{
    auto s = parse_split(text);
    if (!s)
        throw Error("unknown split '" + text + "' (expected train, dev or test)");
    return *s;
}

// -- subcommand bodies --------------------------------------------------------

struct GenerateArgs
{
    std::string spec;
    std::string phase;
    std::vector<std::string> datasets;
    std::string split;
    std::string out;
    std::string run_id;
    std::optional<std::size_t> limit;
    std::optional<double> temperature;
    std::optional<int> max_tokens;
};

int cmd_generate(const GenerateArgs& a, Resolved r, std::ostream& out, std::ostream& err)
{
    PhaseSpec spec;
    if (!a.spec.empty())
    {
        spec = load_phase_spec(a.spec);
        // A --spec phase file outranks env and config file, not explicit flags.
        if (!spec.data_manifest.empty() && !r.from_flags.count("data"))
            r.config.data_manifest = spec.data_manifest;
        if (!spec.cassette.empty() && !r.from_flags.count("cassette"))
            r.config.cassette = spec.cassette;
        if (!spec.templates.empty() && !r.from_flags.count("templates"))
            r.config.templates = spec.templates;
        if (!r.from_flags.count("mode"))
            r.config.mode = *parse_gateway_mode(spec.mode);
        if (!r.from_flags.count("workers"))
            r.config.workers = spec.workers;
        if (!r.config.routing.empty() && r.from_flags.count("routing"))
            spec.routing = RoutingTable::load(r.config.routing);
    }
    else
    {
        if (a.phase.empty() || a.datasets.empty())
            throw Error("generate needs --phase and --dataset (or --spec)");
        spec.routing = routing_for(r.config);
    }
    if (!a.phase.empty())
        spec.phase = phase_arg(a.phase);
    if (!a.datasets.empty())
        spec.datasets = dataset_args(a.datasets);
    if (!a.split.empty())
        spec.split = split_arg(a.split);
    if (!a.out.empty())
        spec.out_dir = a.out;
    if (!a.run_id.empty())
        spec.run_id = a.run_id;
    if (a.limit)
        spec.limit = a.limit;
    if (a.temperature)
        spec.settings.temperature = *a.temperature;
    if (a.max_tokens)
        spec.settings.max_tokens = *a.max_tokens;
    spec.workers = r.config.workers;
    spec.mode = std::string(to_string(r.config.mode));
    if (spec.out_dir.empty())
        throw Error("generate needs --out");
    if (r.config.data_manifest.empty())
        throw Error("generate needs a data manifest (--data or TABREASON_DATA)");
    spec.routing.check_phase_consistent(spec.phase);

    auto templates = templates_for(r.config);
    auto instances = load_instances(DataManifest::load(r.config.data_manifest), spec.datasets, spec.split, spec.limit);
    std::shared_ptr<Cassette> cassette;
    auto gateway = make_gateway(r.config, cassette);
    auto result = run_generation(spec, instances, gateway, templates);
    if (cassette)
        cassette->close();

    for (const auto& w: result.warnings)
        err << "warning: " << w << "\n";
    const auto& m = result.manifest;
    out << "run_id: " << m.run_id << "\n";
    out << "trajectories: " << result.trajectories.string() << "\n";
    out << "manifest: " << result.manifest_path.string() << "\n";
    out << "total: " << m.counts.total << "\n";
    out << "positive: " << m.counts.positive << "\n";
    out << "negative: " << m.counts.negative << "\n";
    for (const auto& [kind, n]: m.counts.failed)
        out << "failed." << kind << ": " << n << "\n";
    out << "subtable_violations: " << m.subtable_violations << "\n";
    for (const auto& report: m.metrics)
        out << to_string(report.dataset) << " " << report.metric << ": " << report.correct_pct << "\n";
    return exit_code::ok;
}

int cmd_extract_it(const std::string& in, const std::string& dir, const Resolved& r, std::ostream& out,
                   std::ostream& err)
{
    auto records = read_trajectories(in);
    auto result = extract_phase2(records, templates_for(r.config), dir);
    for (const auto& w: result.warnings)
        err << "warning: " << w << "\n";
    for (const auto& [stem, n]: result.counts)
        out << stem << ": " << n << "\n";
    return result.no_positives ? exit_code::validation : exit_code::ok;
}

int cmd_extract_kto(const std::string& in, const std::string& dir, const std::string& base_config, const Resolved& r,
                    std::ostream& out, std::ostream& err)
{
    TrainingConfig base;
    if (!base_config.empty())
    {
        try
        {
            base = training_config_from_json(json::parse(read_file(base_config)));
        }
        catch (const json::exception& e)
        {
            throw SchemaError("<training config>", base_config, e.what());
        }
    }
    auto records = read_trajectories(in);
    auto result = extract_phase4(records, templates_for(r.config), dir, base);
    for (const auto& w: result.warnings)
        err << "warning: " << w << "\n";
    for (const auto& [stem, n]: result.counts)
    {
        const auto& w = result.weights.at(stem);
        out << stem << ": " << n << " (pos " << w.n_pos << ", neg " << w.n_neg << ", weights "
            << format_significant(w.desirable, 6) << " " << format_significant(w.undesirable, 6) << ")\n";
    }
    return exit_code::ok;
}

int cmd_eval(const std::string& in, const std::vector<std::string>& names, bool as_json, std::ostream& out)
{
    auto records = read_trajectories(in);
    if (records.empty())
        throw EmptyRun();
    std::vector<Dataset> datasets = names.empty() ? std::vector<Dataset> {} : dataset_args(names);
    if (datasets.empty())
        for (const auto& r: records)
            if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end())
                datasets.push_back(r.dataset);
    std::sort(datasets.begin(), datasets.end());
    json all = json::array();
    bool first = true;
    for (auto d: datasets)
    {
        std::vector<TrajectoryRecord> part;
        std::copy_if(records.begin(), records.end(), std::back_inserter(part),
                     [d](const TrajectoryRecord& r) { return r.dataset == d; });
        auto report = score_run(part, d);
        if (as_json)
            all.push_back(to_json(report));
        else
        {
            out << (first ? "" : "\n") << to_text(report);
            first = false;
        }
    }
    if (as_json)
        out << all.dump(2) << "\n";
    return exit_code::ok;
}

struct PlanArgs
{
    std::string text;
    std::string dataset;
    std::string split = "train";
    std::string id;
    std::string phase = "pe";
    bool prompt_only = false;
};

int cmd_plan(const PlanArgs& a, const Resolved& r, std::ostream& out, std::ostream& err)
{
    if (!a.text.empty())
    {
        try
        {
            auto parsed = parse_trajectory(a.text);
            auto plan = repair_and_validate(parsed);
            out << "plan: " << format_trajectory(plan) << "\n";
            if (plan != parsed)
                out << "repaired: yes\n";
            return exit_code::ok;
        }
        catch (const PlanError& e)
        {
            err << "invalid plan: " << e.what() << "\n";
            return exit_code::validation;
        }
    }
    if (a.dataset.empty() || a.id.empty())
        throw Error("plan needs --text, or --dataset and --id");
    auto datasets = dataset_args({a.dataset});
    auto split = split_arg(a.split);
    if (r.config.data_manifest.empty())
        throw Error("plan needs a data manifest (--data or TABREASON_DATA)");
    auto instances = load_instances(DataManifest::load(r.config.data_manifest), datasets, split);
    auto it = std::find_if(instances.begin(), instances.end(), [&](const auto& p) { return p.id == a.id; });
    if (it == instances.end())
        throw Error("no instance '" + a.id + "' in " + a.dataset + " " + a.split);
    auto templates = templates_for(r.config);
    if (a.prompt_only)
    {
        out << render_planner_prompt(*it, templates.planner());
        return exit_code::ok;
    }
    auto phase = phase_arg(a.phase);
    auto routing = routing_for(r.config);
    routing.check_phase_consistent(phase);
    std::shared_ptr<Cassette> cassette;
    auto gateway = make_gateway(r.config, cassette);
    ToolRuntime runtime(gateway, templates, ToolRuntime::make_bindings(templates, routing, phase));
    auto planned = plan_instance(runtime, routing, phase, *it);
    if (cassette)
        cassette->close();
    if (planned.digest)
        out << "digest: " << *planned.digest << "\n";
    if (planned.raw)
        out << "raw: " << *planned.raw << "\n";
    if (planned.failure)
    {
        err << to_string(planned.failure->kind) << ": " << planned.failure->message << "\n";
        return planned.failure->kind == FailureKind::InvalidPlan ? exit_code::validation : exit_code::config;
    }
    out << "plan: " << format_trajectory(planned.plan) << "\n";
    return exit_code::ok;
}

int cmd_exec_program(const std::string& file, bool exact, std::ostream& out, std::ostream& err)
{
    std::string source;
    if (file == "-")
        source.assign(std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>());
    else
        source = read_file(file);
    try
    {
        auto value = run_program(source);
        if (exact && value.kind == Value::Kind::Number)
            out << format_exact(value.number) << "\n";
        else
            out << render_value(value) << "\n";
        return exit_code::ok;
    }
    catch (const ProgramError& e)
    {
        err << e.what() << "\n";
        return exit_code::validation;
    }
}

int cmd_audit(const std::string& in, const std::string& it_dir, const std::string& kto_dir, const std::string& manifest,
              std::ostream& out, std::ostream& err)
{
    auto records = read_trajectories(in);
    std::optional<RunManifest> m;
    if (!manifest.empty())
        m = read_manifest(manifest);
    auto report = audit(records, it_dir.empty() ? std::nullopt : std::optional<std::filesystem::path>(it_dir),
                        kto_dir.empty() ? std::nullopt : std::optional<std::filesystem::path>(kto_dir), m,
                        std::filesystem::path(in));
    out << "records: " << records.size() << "\n";
    out << "positive: " << report.positives << "\n";
    out << "negative: " << report.negatives << "\n";
    for (const auto& p: report.problems)
        err << "problem: " << p << "\n";
    out << "audit: " << (report.ok() ? "ok" : "FAILED") << "\n";
    return report.ok() ? exit_code::ok : exit_code::validation;
}

int cmd_select(const std::vector<std::string>& manifests, const std::string& out_file, std::ostream& out)
{
    std::vector<RunManifest> candidates;
    for (const auto& path: manifests)
        candidates.push_back(read_manifest(path));
    const auto& best = select_best(candidates);
    json j {
        {"run_id", best.run_id},
        {"phase", to_string(best.phase)},
        {"score", percent_string(best.counts.positive, best.counts.total)},
        {"routing", best.routing},
    };
    if (!out_file.empty())
    {
        json routing;
        routing[std::string(to_string(best.phase))] = best.routing;
        write_file(out_file, routing.dump(2) + "\n");
    }
    out << j.dump(2) << "\n";
    return exit_code::ok;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app {"Plans, executes and labels tool trajectories for table question answering, and exports "
                  "per-tool training data.",
                  "tabreason"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", "tabreason 0.1.0");

    GlobalFlags g;
    app.add_option("--config", g.config, "JSON config file (env TABREASON_CONFIG)");
    app.add_option("--base-url", g.base_url, "Chat-completions backend URL (env TABREASON_BASE_URL)");
    app.add_option("--api-key-env", g.api_key_env,
                   "Name of the variable holding the bearer token (env TABREASON_API_KEY_ENV)");
    app.add_option("--data", g.data, "Dataset manifest JSON (env TABREASON_DATA)");
    app.add_option("--templates", g.templates, "Prompt template directory (env TABREASON_TEMPLATES)");
    app.add_option("--routing", g.routing, "Adapter routing table JSON (env TABREASON_ROUTING)");
    app.add_option("--workers", g.workers, "Worker threads (env TABREASON_WORKERS, default 1)");
    app.add_option("--mode", g.mode, "Backend mode: live, record or replay (env TABREASON_MODE, default replay)");
    app.add_option("--cassette", g.cassette, "Record/replay cassette file (env TABREASON_CASSETTE)");
    app.add_option("--timeout", g.timeout, "Backend request timeout in seconds (env TABREASON_TIMEOUT)");

    auto* generate = app.add_subcommand("generate", "Plan, execute and label every instance of a split");
    GenerateArgs ga;
    generate->add_option("--spec", ga.spec, "Phase spec JSON file");
    generate->add_option("--phase", ga.phase, "pe, it or it+kto");
    generate->add_option("--dataset", ga.datasets, "finqa, tatqa, tabmwp or all (repeatable)");
    generate->add_option("--split", ga.split, "train, dev or test (default train)");
    generate->add_option("--out", ga.out, "Output directory");
    generate->add_option("--run-id", ga.run_id, "Run id (default derived from the inputs)");
    generate->add_option("--limit", ga.limit, "Use the first N instances of each dataset");
    generate->add_option("--temperature", ga.temperature, "Sampling temperature (default 0)");
    generate->add_option("--max-tokens", ga.max_tokens, "Completion token limit (default 1024)");

    auto* extract = app.add_subcommand("extract", "Export training data from a trajectory file");
    extract->require_subcommand(1);
    std::string ex_in, ex_out, ex_base;
    auto* extract_it = extract->add_subcommand("it", "Instruction-tuning exports from positive trajectories");
    extract_it->add_option("--in", ex_in, "Trajectory JSONL")->required();
    extract_it->add_option("--out", ex_out, "Output directory")->required();
    auto* extract_kto = extract->add_subcommand("kto", "Labeled exports and class weights from all trajectories");
    extract_kto->add_option("--in", ex_in, "Trajectory JSONL")->required();
    extract_kto->add_option("--out", ex_out, "Output directory")->required();
    extract_kto->add_option("--base-config", ex_base, "TrainingConfig JSON to start from");

    auto* eval = app.add_subcommand("eval", "Score a labeled trajectory file");
    std::string ev_in;
    std::vector<std::string> ev_datasets;
    bool ev_json = false;
    eval->add_option("--in", ev_in, "Trajectory JSONL")->required();
    eval->add_option("--dataset", ev_datasets, "Restrict to these datasets (repeatable)");
    eval->add_flag("--json", ev_json, "Print JSON instead of key: value lines");

    auto* plan = app.add_subcommand("plan", "Parse a plan line, or ask the planner about one instance");
    PlanArgs pa;
    plan->add_option("--text", pa.text, "Plan text to parse and validate");
    plan->add_option("--dataset", pa.dataset, "Dataset of the instance");
    plan->add_option("--split", pa.split, "Split of the instance (default train)");
    plan->add_option("--id", pa.id, "Instance id");
    plan->add_option("--phase", pa.phase, "Routing phase (default pe)");
    plan->add_flag("--prompt-only", pa.prompt_only, "Print the planner prompt and stop");

    auto* exec = app.add_subcommand("exec-program", "Run a program and print the value of ans");
    std::string ex_file;
    bool ex_exact = false;
    exec->add_option("file", ex_file, "Program file, or - for stdin")->required();
    exec->add_flag("--exact", ex_exact, "Print a numeric result as an exact decimal or fraction");

    auto* audit_cmd = app.add_subcommand("audit", "Check partition and export conservation of a run");
    std::string au_in, au_it, au_kto, au_manifest;
    audit_cmd->add_option("--in", au_in, "Trajectory JSONL")->required();
    audit_cmd->add_option("--it", au_it, "IT export directory");
    audit_cmd->add_option("--kto", au_kto, "KTO export directory");
    audit_cmd->add_option("--manifest", au_manifest, "Run manifest to check against the trajectory file");

    auto* select = app.add_subcommand("select", "Pick the best run among validation manifests");
    std::vector<std::string> se_manifests;
    std::string se_out;
    select->add_option("manifests", se_manifests, "Run manifests")->required();
    select->add_option("--out", se_out, "Write the winning routing table here");

    std::vector<std::string> reversed {args.rbegin(), args.rend()};
    try
    {
        app.parse(reversed);
    }
    catch (const CLI::CallForHelp& e)
    {
        return app.exit(e, out, err);
    }
    catch (const CLI::CallForAllHelp& e)
    {
        return app.exit(e, out, err);
    }
    catch (const CLI::CallForVersion& e)
    {
        return app.exit(e, out, err);
    }
    catch (const CLI::ParseError& e)
    {
        err << "error: " << e.what() << "\n";
        const CLI::App* scope = &app;
        while (!scope->get_subcommands().empty())
            scope = scope->get_subcommands().front();
        err << scope->help();
        return exit_code::usage;
    }

    try
    {
        auto resolved = resolve_config(g);
        if (generate->parsed())
            return cmd_generate(ga, resolved, out, err);
        if (extract_it->parsed())
            return cmd_extract_it(ex_in, ex_out, resolved, out, err);
        if (extract_kto->parsed())
            return cmd_extract_kto(ex_in, ex_out, ex_base, resolved, out, err);
        if (eval->parsed())
            return cmd_eval(ev_in, ev_datasets, ev_json, out);
        if (plan->parsed())
            return cmd_plan(pa, resolved, out, err);
        if (exec->parsed())
            return cmd_exec_program(ex_file, ex_exact, out, err);
        if (audit_cmd->parsed())
            return cmd_audit(au_in, au_it, au_kto, au_manifest, out, err);
        if (select->parsed())
            return cmd_select(se_manifests, se_out, out);
    }
    catch (const SchemaError& e)
    {
        err << "error: " << e.what() << "\n";
        return exit_code::validation;
    }
    catch (const MixedLabelError& e)
    {
        err << "error: " << e.what() << "\n";
        return exit_code::validation;
    }
    catch (const EmptyRun& e)
    {
        err << "error: " << e.what() << "\n";
        return exit_code::validation;
    }
    catch (const NoCandidates& e)
    {
        err << "error: " << e.what() << "\n";
        return exit_code::validation;
    }
    catch (const std::exception& e)
    {
        err << "error: " << e.what() << "\n";
        return exit_code::config;
    }
    err << app.help();
    return exit_code::usage;
}

} // namespace tabreason
