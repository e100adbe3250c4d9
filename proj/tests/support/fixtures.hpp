// SPDX-License-Identifier: Apache-2.0
// Shared test data: the worked example, a synthetic replay corpus and
// temporary directories.
#pragma once

#include "scripted_client.hpp"

#include "tabreason/core.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>

namespace testing_support
{

/// Fresh directory under the system temp dir, removed on destruction.
class Workspace
{
  public:
    Workspace();
    ~Workspace();
    Workspace(const Workspace&) = delete;
    Workspace& operator=(const Workspace&) = delete;

    [[nodiscard]] const std::filesystem::path& dir() const noexcept { return dir_; }
    [[nodiscard]] std::filesystem::path operator/(const std::string& name) const { return dir_ / name; }

  private:
    std::filesystem::path dir_;
};

namespace worked
{
extern const char* const question;
extern const char* const program;
extern const char* const plan_line;

/// TAT-QA file content holding the single worked example question.
nlohmann::json tatqa_json();
tabreason::ProblemInstance instance();
/// Replies of every tool on the worked example trajectory.
void script(ScriptedClient& client);
/// The labeled record of the worked example plan run against the scripted replies.
tabreason::TrajectoryRecord solved_record();
} // namespace worked

/// Writes a data manifest pointing at the given dataset files (train split).
std::filesystem::path write_data_manifest(const std::filesystem::path& dir,
                                          const std::map<tabreason::Dataset, std::filesystem::path>& files,
                                          const std::string& split = "train");

/// `count` TabMWP problems asking for a column total, with scripted replies:
/// a mix of program plans, solution plans, wrong programs, malformed
/// programs, invalid and repairable plans.
struct SyntheticCorpus
{
    nlohmann::json tabmwp;
    std::size_t solvable = 0; ///< instances whose script leads to the gold answer
};

SyntheticCorpus synthetic_corpus(std::size_t count, std::uint64_t seed, ScriptedClient& client);

/// Records a cassette for every instance of the data manifest by running the
/// pipeline in record mode against `client`.
void record_cassette(const std::filesystem::path& data_manifest, tabreason::Dataset dataset,
                     const std::filesystem::path& cassette, ScriptedClient& client,
                     const std::filesystem::path& scratch);

/// Path of the built `tabreason` binary (from TABREASON_BIN).
std::string cli_binary();

/// Runs a shell command; returns its exit status and captured stdout.
std::pair<int, std::string> run_command(const std::string& command);

} // namespace testing_support
