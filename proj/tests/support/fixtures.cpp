// SPDX-License-Identifier: Apache-2.0
#include "fixtures.hpp"

#include "tabreason/dataset_io.hpp"
#include "tabreason/pipeline.hpp"
#include "tabreason/table.hpp"

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <stdexcept>

namespace testing_support
{

using namespace tabreason;
using nlohmann::json;

Workspace::Workspace()
{
    auto pattern = (std::filesystem::temp_directory_path() / "tabreason-test-XXXXXX").string();
    if (!mkdtemp(pattern.data()))
        throw std::runtime_error("mkdtemp failed");
    dir_ = pattern;
}

Workspace::~Workspace()
{
    std::error_code ec;
    std::filesystem::remove_all(dir_, ec);
}

namespace worked
{

const char* const question = "What was the weighted average Services per total service employees for 2018 and 2019?";
const char* const program = "ans = ((781 * 246,548) + (838 * 243,053)) / (781 + 838)";
const char* const plan_line = "Row_Lookup Column_Lookup Context_Extractor Program_Generator_And_Verifier "
                              "Program_Executor Scale_Finder Answer_Generator";

namespace
{

const std::vector<std::vector<std::string>> rows = {
    {"", "2019", "", "2018", "", "Change", ""},
    {"", "Amount", "% of total revenue", "Amount", "% of total revenue", "($)", "(%)"},
    {"", "(In thousands, except percentages)", "", "", "", "", ""},
    {"Cost of revenue:", "", "", "", "", "", ""},
    {"License and subscription", "$64,798", "9%", "$35,452", "5%", "29,346", "83%"},
    {"Maintenance", "16,499", "2%", "14,783", "2%", "1,716", "12%"},
    {"Services", "243,053", "34%", "246,548", "38%", "(3,495)", "(1%)"},
    {"Total cost of revenue", "$324,350", "45%", "296,783", "45%", "27,567", "9%"},
    {"Includes stock-based compensation of:", "", "", "", "", "", ""},
    {"Cost of license and subscription revenue", "$3,011", "", "$1,002", "", "2,009", ""},
    {"Cost of maintenance revenue", "1,820", "", "1,886", "", "(66)", ""},
    {"Cost of services revenue", "22,781", "", "21,856", "", "925", ""},
    {"Total", "$27,612", "", "$24,744", "", "2,868", ""},
};

const char* const paragraph_1 =
    "Excluding the impact of this reclassification, third-party consultants billable to customers primarily for "
    "InsuranceNow implementation engagements increased by $3.2 million and personnel expenses related to new and "
    "existing employees increased by $2.8 million.";
const char* const paragraph_2 =
    "We had 781 professional service employees and 198 technical support and licensing operations employees at "
    "July 31, 2019, compared to 838 professional services employees and 121 technical support and licensing "
    "operations employees at July 31, 2018.";

} // namespace

json tatqa_json()
{
    json question_entry {
        {"uid", "worked"},
        {"order", 1},
        {"question", question},
        {"answer", 244738.8},
        {"derivation", "((781 * 246,548) + (838 * 243,053)) / (781 + 838)"},
        {"answer_type", "arithmetic"},
        {"answer_from", "table-text"},
        {"scale", "thousand"},
    };
    return json::array({json {
        {"table", {{"uid", "worked-table"}, {"table", rows}}},
        {"paragraphs", json::array({json {{"uid", "p1"}, {"order", 1}, {"text", paragraph_1}},
                                    json {{"uid", "p2"}, {"order", 2}, {"text", paragraph_2}}})},
        {"questions", json::array({question_entry})},
    }});
}

ProblemInstance instance()
{
    return load_tatqa(tatqa_json(), Split::train).front();
}

void script(ScriptedClient& client)
{
    auto selected = [](const std::vector<std::size_t>& cols) {
        std::vector<std::vector<std::string>> out;
        for (auto r: {0, 1, 2, 6})
        {
            std::vector<std::string> row;
            for (auto c: cols)
                row.push_back(rows[static_cast<std::size_t>(r)][c]);
            out.push_back(std::move(row));
        }
        return render_table(make_table(out));
    };
    client.script(question, "planner", std::string(" ") + plan_line + "\n#END");
    client.script(question, "Row_Lookup", "\n" + selected({0, 1, 2, 3, 4, 5, 6}) + "\n#END");
    client.script(question, "Column_Lookup", "\n" + selected({0, 1, 3}) + "\n#END");
    client.script(question, "Context_Extractor", std::string("\n") + paragraph_2 + "\n#END");
    client.script(question, "Program_Generator_And_Verifier",
                  std::string("\n#Python Code, return 'ans'.\n") + program + "\n#END");
    client.script(question, "Scale_Finder", " thousand\n#END");
}

TrajectoryRecord solved_record()
{
    auto client = std::make_shared<ScriptedClient>();
    script(*client);
    Gateway gateway(GatewayMode::live, client, nullptr);
    auto routing = RoutingTable::from_json({{"PE", {{"base", "base"}}}});
    auto templates = TemplateSet::builtin();
    ToolRuntime runtime(gateway, templates, ToolRuntime::make_bindings(templates, routing, Phase::PE));
    return solve_instance(runtime, routing, Phase::PE, instance());
}

} // namespace worked

std::filesystem::path write_data_manifest(const std::filesystem::path& dir,
                                          const std::map<Dataset, std::filesystem::path>& files,
                                          const std::string& split)
{
    json j = json::object();
    for (const auto& [dataset, path]: files)
        j[std::string(to_string(dataset))][split] = path.string();
    auto out = dir / "data.json";
    write_file(out, j.dump(2));
    return out;
}

SyntheticCorpus synthetic_corpus(std::size_t count, std::uint64_t seed, ScriptedClient& client)
{
    static const char* const fruits[] = {"apples", "pears", "plums", "figs", "limes"};
    static const char* const names[] = {"Ann", "Bo", "Cy", "Dee", "Eli", "Fay"};
    std::mt19937_64 rng(seed);
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

    SyntheticCorpus corpus;
    corpus.tabmwp = json::object();
    for (std::size_t i = 0; i < count; ++i)
    {
        char pid[32];
        std::snprintf(pid, sizeof pid, "p%04zu", i);
        std::string fruit = fruits[i % 5];
        int rows = pick(2, 5);
        std::string table = "Name | " + fruit;
        std::vector<int> values;
        int total = 0;
        for (int r = 0; r < rows; ++r)
        {
            values.push_back(pick(1, 999));
            total += values.back();
            table += "\n" + std::string(names[r]) + " | " + std::to_string(values.back());
        }
        std::string question = "Problem " + std::to_string(i) + ": how many " + fruit + " are there in total?";
        corpus.tabmwp[pid] = json {
            {"question", question},
            {"choices", nullptr},
            {"table", table},
            {"table_title", "Fruit count"},
            {"answer", std::to_string(total)},
            {"ans_type", "integer_number"},
        };

        std::string right = "ans = ";
        std::string wrong = "ans = ";
        for (int r = 0; r < rows; ++r)
        {
            right += (r ? " + " : "") + std::to_string(values[static_cast<std::size_t>(r)]);
            if (r + 1 < rows)
                wrong += (r ? " + " : "") + std::to_string(values[static_cast<std::size_t>(r)]);
        }
        std::string total_text = std::to_string(total);
        std::string off_text = std::to_string(total + pick(1, 50));

        int roll = pick(0, 99);
        std::string plan;
        if (roll < 40)
        {
            plan = "Program_Generator_And_Verifier Program_Executor Answer_Generator";
            client.script(question, "Program_Generator_And_Verifier", "\n" + right + "\n#END");
            ++corpus.solvable;
        }
        else if (roll < 55)
        {
            plan = "Program_Generator_And_Verifier Program_Executor Answer_Generator";
            client.script(question, "Program_Generator_And_Verifier", "\n" + wrong + "\n#END");
        }
        else if (roll < 60)
        {
            plan = "Program_Generator_And_Verifier Program_Executor Answer_Generator";
            client.script(question, "Program_Generator_And_Verifier", "\nans = (" + total_text + " +\n#END");
        }
        else if (roll < 75)
        {
            plan = "Solution_Generator Answer_Generator";
            client.script(question, "Solution_Generator",
                          " Adding the column gives " + total_text + ". The answer is " + total_text + ".\n#END");
            ++corpus.solvable;
        }
        else if (roll < 80)
        {
            plan = "Solution_Generator Answer_Generator";
            client.script(question, "Solution_Generator", " The answer is " + off_text + ".\n#END");
        }
        else if (roll < 85)
        {
            plan = "Program_Executor Answer_Generator";
        }
        else if (roll < 95)
        {
            plan = "Row_Lookup Program_Generator_And_Verifier Program_Executor Scale_Finder";
            client.script(question, "Row_Lookup", "\n" + table + "\n#END");
            client.script(question, "Program_Generator_And_Verifier", "\n" + right + "\n#END");
            client.script(question, "Scale_Finder", " \n#END");
            ++corpus.solvable;
        }
        else
        {
            plan = "Knowledge_Retrieval Solution_Generator Answer_Generator";
            client.script(question, "Knowledge_Retrieval", "\n- A total is the sum of every row.\n#END");
            client.script(question, "Solution_Generator", " The answer is " + total_text + ".\n#END");
            ++corpus.solvable;
        }
        client.script(question, "planner", " " + plan + "\n#END");
    }
    return corpus;
}

void record_cassette(const std::filesystem::path& data_manifest, Dataset dataset,
                     const std::filesystem::path& cassette_path, ScriptedClient& client,
                     const std::filesystem::path& scratch)
{
    PhaseSpec spec;
    spec.phase = Phase::PE;
    spec.datasets = {dataset};
    spec.split = Split::train;
    spec.out_dir = scratch;
    spec.workers = 1;
    auto instances = load_instances(DataManifest::load(data_manifest), spec.datasets, spec.split);
    auto cassette = std::make_shared<Cassette>(cassette_path);
    std::shared_ptr<ChatClient> borrowed(&client, [](ChatClient*) {});
    Gateway gateway(GatewayMode::record, borrowed, cassette);
    run_generation(spec, instances, gateway, TemplateSet::builtin());
    cassette->close();
}

std::string cli_binary()
{
    const char* bin = std::getenv("TABREASON_BIN");
    if (bin && *bin)
        return bin;
#ifdef TABREASON_TEST_CLI_PATH
    return TABREASON_TEST_CLI_PATH;
#else
    throw std::runtime_error("TABREASON_BIN is not set");
#endif
}

std::pair<int, std::string> run_command(const std::string& command)
{
    FILE* pipe = popen(command.c_str(), "r");
    if (!pipe)
        throw std::runtime_error("popen failed: " + command);
    std::string out;
    std::array<char, 4096> buffer {};
    std::size_t n;
    while ((n = std::fread(buffer.data(), 1, buffer.size(), pipe)) > 0)
        out.append(buffer.data(), n);
    int status = pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

} // namespace testing_support
