// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tabreason/backend.hpp"

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace tabreason
{

namespace exit_code
{
inline constexpr int ok = 0;
inline constexpr int config = 1;
inline constexpr int validation = 2;
inline constexpr int usage = 64;
} // namespace exit_code

/// Settings shared by all subcommands, resolved from flags, then
/// TABREASON_* environment variables, then a JSON config file.
struct CliConfig
{
    std::string base_url;
    std::string api_key_env;
    std::filesystem::path data_manifest;
    std::filesystem::path templates;
    std::filesystem::path routing;
    std::size_t workers = 1;
    GatewayMode mode = GatewayMode::replay;
    std::filesystem::path cassette;
    double timeout_seconds = 120;
};

/// Throws Error when replay lacks a cassette or live/record lack a base URL.
void validate_config(const CliConfig& config);

/// Gateway for the configured mode; the cassette (if any) is returned so the
/// caller can close it.
Gateway make_gateway(const CliConfig& config, std::shared_ptr<Cassette>& cassette);

/// Entry point of the `tabreason` binary. Returns the process exit status.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace tabreason
