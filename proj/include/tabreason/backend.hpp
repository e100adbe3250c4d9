// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "tabreason/core.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

namespace tabreason
{

struct ChatMessage
{
    std::string role; ///< system, user or assistant
    std::string content;

    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatRequest
{
    std::string adapter;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int max_tokens = 1024;
    std::vector<std::string> stop {"#END"};

    friend bool operator==(const ChatRequest&, const ChatRequest&) = default;
};

/// Sorted-key JSON; message content is kept byte for byte.
nlohmann::json canonical_json(const ChatRequest& request);
std::string canonical_string(const ChatRequest& request);
ChatRequest request_from_json(const nlohmann::json& j);

/// Lower-case hex SHA-256 of the canonical string.
std::string request_digest(const ChatRequest& request);
std::string sha256_hex(std::string_view data);

struct CallMeta
{
    double latency_ms = 0;
    long prompt_tokens = 0;
    long completion_tokens = 0;

    friend bool operator==(const CallMeta&, const CallMeta&) = default;
};

struct Completion
{
    std::string text;
    CallMeta meta;
};

class BackendError: public Error
{
  public:
    BackendError(int status, std::string body);
    [[nodiscard]] int status() const noexcept { return status_; }
    [[nodiscard]] const std::string& body() const noexcept { return body_; }

  private:
    int status_;
    std::string body_;
};

class Timeout: public BackendError
{
  public:
    explicit Timeout(std::string detail): BackendError(0, "timeout: " + std::move(detail)) { }
};

class CassetteMiss: public Error
{
  public:
    explicit CassetteMiss(std::string digest);
    [[nodiscard]] const std::string& digest() const noexcept { return digest_; }

  private:
    std::string digest_;
};

class UnroutedTool: public Error
{
  public:
    using Error::Error;
};

/// Anything that can answer a chat request.
class ChatClient
{
  public:
    virtual ~ChatClient() = default;
    virtual Completion complete(const ChatRequest& request) = 0;
};

/// Cuts the text at the earliest occurrence of any stop sequence.
std::string truncate_at_stop(std::string text, const std::vector<std::string>& stop);

struct HttpClientConfig
{
    std::string base_url;           ///< e.g. "http://127.0.0.1:8000"
    std::string api_key_env;        ///< name of the variable holding the bearer token; empty for none
    double timeout_seconds = 120;
    std::size_t max_in_flight = 8;
};

/// POSTs to {base_url}/v1/chat/completions and returns the first choice.
class HttpChatClient: public ChatClient
{
  public:
    explicit HttpChatClient(HttpClientConfig config);
    Completion complete(const ChatRequest& request) override;

  private:
    HttpClientConfig config_;
    std::string origin_;
    std::string path_;
    std::counting_semaphore<4096> slots_;
};

struct CassetteEntry
{
    std::string digest;
    ChatRequest request;
    std::string response;
    CallMeta meta;
};

nlohmann::json to_json(const CassetteEntry& entry);
CassetteEntry cassette_entry_from_json(const nlohmann::json& j);

/// Digest-keyed store of recorded completions. The main file holds one JSON
/// record per line sorted by digest; new entries go to per-thread segment
/// files next to it and are merged back by close().
class Cassette
{
  public:
    explicit Cassette(std::filesystem::path path);
    ~Cassette();

    Cassette(const Cassette&) = delete;
    Cassette& operator=(const Cassette&) = delete;

    [[nodiscard]] std::optional<CassetteEntry> lookup(const std::string& digest) const;
    /// First writer wins when two threads record the same digest.
    void append(CassetteEntry entry);
    [[nodiscard]] std::size_t size() const;
    [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }

    /// Merges segments into the main file. Safe to call more than once.
    void close();

  private:
    struct Segment;
    Segment& segment_for_this_thread();
    void merge_files();

    std::filesystem::path path_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, CassetteEntry> entries_;
    std::mutex segment_mutex_;
    std::map<std::thread::id, std::unique_ptr<Segment>> segments_;
    std::size_t next_segment_ = 0;
    bool dirty_ = false;
};

enum class GatewayMode
{
    live,
    record,
    replay,
};

std::string_view to_string(GatewayMode mode);
std::optional<GatewayMode> parse_gateway_mode(std::string_view text);

struct GatewayReply
{
    std::string text;
    std::string digest;
};

/// live: call the client. replay: cassette only, CassetteMiss otherwise.
/// record: cassette hit or live call that gets persisted.
class Gateway
{
  public:
    Gateway(GatewayMode mode, std::shared_ptr<ChatClient> client, std::shared_ptr<Cassette> cassette);

    GatewayReply complete(const ChatRequest& request);
    [[nodiscard]] GatewayMode mode() const noexcept { return mode_; }

  private:
    GatewayMode mode_;
    std::shared_ptr<ChatClient> client_;
    std::shared_ptr<Cassette> cassette_;
};

/// Adapter names per phase. PE sends every tool and the planner to the base
/// model; IT and IT+KTO need an explicit entry per tool.
///
///     {"PE": {"base": "base"},
///      "IT": {"planner": "planner-it", "Scale_Finder": "scale_finder-it", ...}}
class RoutingTable
{
  public:
    RoutingTable() = default;
    static RoutingTable from_json(const nlohmann::json& j);
    static RoutingTable load(const std::filesystem::path& path);

    [[nodiscard]] std::string route(ToolId tool, Phase phase) const;
    /// Tool given by name; unknown names are unrouted.
    [[nodiscard]] std::string route(std::string_view tool_name, Phase phase) const;
    [[nodiscard]] std::string route_planner(Phase phase) const;

    [[nodiscard]] nlohmann::json to_json() const;
    /// Only the section of one phase, as stored in run manifests.
    [[nodiscard]] nlohmann::json snapshot(Phase phase) const;

    /// Throws Error when a PE section names per-tool adapters.
    void check_phase_consistent(Phase phase) const;

  private:
    std::map<std::string, std::map<std::string, std::string>> table_;
};

} // namespace tabreason
