// SPDX-License-Identifier: Apache-2.0
#include "tabreason/backend.hpp"

#include <httplib.h>
#include <openssl/evp.h>

#include <unistd.h>

#include <chrono>
#include <cstdlib>
#include <fstream>

namespace tabreason
{

using nlohmann::json;

json canonical_json(const ChatRequest& request)
{
    json messages = json::array();
    for (const auto& m: request.messages)
        messages.push_back(json {{"role", m.role}, {"content", m.content}});
    return json {
        {"adapter", request.adapter},
        {"messages", std::move(messages)},
        {"temperature", request.temperature},
        {"max_tokens", request.max_tokens},
        {"stop", request.stop},
    };
}

std::string canonical_string(const ChatRequest& request)
{
    // nlohmann's default object type keeps keys sorted
    return canonical_json(request).dump();
}

ChatRequest request_from_json(const json& j)
{
    ChatRequest r;
    r.adapter = j.at("adapter").get<std::string>();
    for (const auto& m: j.at("messages"))
        r.messages.push_back(ChatMessage {m.at("role").get<std::string>(), m.at("content").get<std::string>()});
    r.temperature = j.at("temperature").get<double>();
    r.max_tokens = j.at("max_tokens").get<int>();
    r.stop = j.at("stop").get<std::vector<std::string>>();
    return r;
}

std::string sha256_hex(std::string_view data)
{
    unsigned char hash[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), hash, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i)
    {
        out += hex[hash[i] >> 4];
        out += hex[hash[i] & 0xF];
    }
    return out;
}

std::string request_digest(const ChatRequest& request)
{
    return sha256_hex(canonical_string(request));
}

BackendError::BackendError(int status, std::string body):
    Error("BackendError(" + std::to_string(status) + "): " + body.substr(0, 500)),
    status_(status),
    body_(std::move(body))
{
}

CassetteMiss::CassetteMiss(std::string digest): Error("CassetteMiss(" + digest + ")"), digest_(std::move(digest)) { }

std::string truncate_at_stop(std::string text, const std::vector<std::string>& stop)
{
    auto cut = std::string::npos;
    for (const auto& s: stop)
        if (!s.empty())
            cut = std::min(cut, text.find(s));
    if (cut != std::string::npos)
        text.resize(cut);
    return text;
}

// ---------------------------------------------------------------------------

HttpChatClient::HttpChatClient(HttpClientConfig config): config_(std::move(config)), slots_(static_cast<std::ptrdiff_t>(
                                                                                          std::clamp<std::size_t>(config_.max_in_flight, 1, 4096)))
{
    if (config_.base_url.empty())
        throw Error("live backend needs a base URL");
    auto scheme = config_.base_url.find("://");
    if (scheme == std::string::npos)
        throw Error("base URL must include a scheme: " + config_.base_url);
    auto slash = config_.base_url.find('/', scheme + 3);
    origin_ = config_.base_url.substr(0, slash);
    std::string prefix = slash == std::string::npos ? "" : config_.base_url.substr(slash);
    while (!prefix.empty() && prefix.back() == '/')
        prefix.pop_back();
    path_ = prefix + "/v1/chat/completions";
}

Completion HttpChatClient::complete(const ChatRequest& request)
{
    slots_.acquire();
    struct Release
    {
        std::counting_semaphore<4096>& s;
        ~Release() { s.release(); }
    } release {slots_};

    json body {
        {"model", request.adapter},
        {"temperature", request.temperature},
        {"max_tokens", request.max_tokens},
        {"stop", request.stop},
    };
    body["messages"] = json::array();
    for (const auto& m: request.messages)
        body["messages"].push_back(json {{"role", m.role}, {"content", m.content}});

    httplib::Client client(origin_);
    auto seconds = std::chrono::duration<double>(config_.timeout_seconds);
    auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(seconds);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);

    httplib::Headers headers;
    if (!config_.api_key_env.empty())
        if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key)
            headers.emplace("Authorization", std::string("Bearer ") + key);

    auto start = std::chrono::steady_clock::now();
    auto res = client.Post(path_, headers, body.dump(), "application/json");
    auto elapsed = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (!res)
    {
        auto err = res.error();
        if (err == httplib::Error::ConnectionTimeout
            || (err == httplib::Error::Read && elapsed >= config_.timeout_seconds * 1000))
            throw Timeout(httplib::to_string(err));
        throw BackendError(0, httplib::to_string(err));
    }
    if (res->status != 200)
        throw BackendError(res->status, res->body);

    Completion out;
    try
    {
        auto reply = json::parse(res->body);
        out.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
        if (auto usage = reply.find("usage"); usage != reply.end() && usage->is_object())
        {
            out.meta.prompt_tokens = usage->value("prompt_tokens", 0L);
            out.meta.completion_tokens = usage->value("completion_tokens", 0L);
        }
    }
    catch (const json::exception& e)
    {
        throw BackendError(res->status, std::string("malformed completion response: ") + e.what());
    }
    out.text = truncate_at_stop(std::move(out.text), request.stop);
    out.meta.latency_ms = elapsed;
    return out;
}

// ---------------------------------------------------------------------------

json to_json(const CassetteEntry& entry)
{
    return json {
        {"digest", entry.digest},
        {"request", canonical_json(entry.request)},
        {"response", entry.response},
        {"meta",
         {{"latency_ms", entry.meta.latency_ms},
          {"prompt_tokens", entry.meta.prompt_tokens},
          {"completion_tokens", entry.meta.completion_tokens}}},
    };
}

CassetteEntry cassette_entry_from_json(const json& j)
{
    CassetteEntry e;
    e.digest = j.at("digest").get<std::string>();
    e.request = request_from_json(j.at("request"));
    e.response = j.at("response").get<std::string>();
    if (auto meta = j.find("meta"); meta != j.end() && meta->is_object())
    {
        e.meta.latency_ms = meta->value("latency_ms", 0.0);
        e.meta.prompt_tokens = meta->value("prompt_tokens", 0L);
        e.meta.completion_tokens = meta->value("completion_tokens", 0L);
    }
    return e;
}

struct Cassette::Segment
{
    std::filesystem::path path;
    std::ofstream out;
};

namespace
{

std::string segment_prefix(const std::filesystem::path& path)
{
    return path.filename().string() + ".seg-";
}

std::vector<std::filesystem::path> segment_files(const std::filesystem::path& path)
{
    std::vector<std::filesystem::path> out;
    auto dir = path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path();
    if (!std::filesystem::is_directory(dir))
        return out;
    auto prefix = segment_prefix(path);
    for (const auto& entry: std::filesystem::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().filename().string().starts_with(prefix))
            out.push_back(entry.path());
    std::sort(out.begin(), out.end());
    return out;
}

void read_entries(const std::filesystem::path& file, std::map<std::string, CassetteEntry>& into)
{
    std::ifstream in(file, std::ios::binary);
    if (!in)
        throw Error("cannot read cassette " + file.string());
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line))
    {
        ++number;
        if (line.empty())
            continue;
        try
        {
            auto entry = cassette_entry_from_json(json::parse(line));
            into.try_emplace(entry.digest, std::move(entry));
        }
        catch (const json::exception& e)
        {
            throw Error(file.string() + ":" + std::to_string(number) + ": malformed cassette line: " + e.what());
        }
    }
}

} // namespace

Cassette::Cassette(std::filesystem::path path): path_(std::move(path))
{
    if (std::filesystem::exists(path_))
        read_entries(path_, entries_);
    auto leftovers = segment_files(path_);
    for (const auto& seg: leftovers)
        read_entries(seg, entries_);
    dirty_ = !leftovers.empty();
}

Cassette::~Cassette()
{
    try
    {
        close();
    }
    catch (...)
    {
    }
}

std::optional<CassetteEntry> Cassette::lookup(const std::string& digest) const
{
    std::shared_lock lock(mutex_);
    auto it = entries_.find(digest);
    if (it == entries_.end())
        return std::nullopt;
    return it->second;
}

std::size_t Cassette::size() const
{
    std::shared_lock lock(mutex_);
    return entries_.size();
}

Cassette::Segment& Cassette::segment_for_this_thread()
{
    std::lock_guard lock(segment_mutex_);
    auto& slot = segments_[std::this_thread::get_id()];
    if (!slot)
    {
        slot = std::make_unique<Segment>();
        auto name = segment_prefix(path_) + std::to_string(::getpid()) + "-" + std::to_string(next_segment_++);
        slot->path = path_.parent_path() / name;
        if (!path_.parent_path().empty())
            std::filesystem::create_directories(path_.parent_path());
        slot->out.open(slot->path, std::ios::binary | std::ios::app);
        if (!slot->out)
            throw Error("cannot write cassette segment " + slot->path.string());
    }
    return *slot;
}

void Cassette::append(CassetteEntry entry)
{
    auto line = to_json(entry).dump();
    {
        std::unique_lock lock(mutex_);
        if (!entries_.try_emplace(entry.digest, std::move(entry)).second)
            return;
        dirty_ = true;
    }
    auto& seg = segment_for_this_thread();
    seg.out << line << '\n';
    seg.out.flush();
}

void Cassette::close()
{
    std::unique_lock lock(mutex_);
    std::lock_guard seg_lock(segment_mutex_);
    if (!dirty_)
        return;
    for (auto& [id, seg]: segments_)
        seg->out.close();
    segments_.clear();

    if (!path_.parent_path().empty())
        std::filesystem::create_directories(path_.parent_path());
    auto tmp = path_;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error("cannot write cassette " + tmp.string());
        for (const auto& [digest, entry]: entries_)
            out << to_json(entry).dump() << '\n';
        if (!out)
            throw Error("failed writing cassette " + tmp.string());
    }
    std::filesystem::rename(tmp, path_);
    for (const auto& seg: segment_files(path_))
        std::filesystem::remove(seg);
    dirty_ = false;
}

// ---------------------------------------------------------------------------

std::string_view to_string(GatewayMode mode)
{
    switch (mode)
    {
        case GatewayMode::live: return "live";
        case GatewayMode::record: return "record";
        case GatewayMode::replay: return "replay";
    }
    return "";
}

std::optional<GatewayMode> parse_gateway_mode(std::string_view text)
{
    if (text == "live")
        return GatewayMode::live;
    if (text == "record")
        return GatewayMode::record;
    if (text == "replay")
        return GatewayMode::replay;
    return std::nullopt;
}

Gateway::Gateway(GatewayMode mode, std::shared_ptr<ChatClient> client, std::shared_ptr<Cassette> cassette):
    mode_(mode),
    client_(std::move(client)),
    cassette_(std::move(cassette))
{
    if (mode_ != GatewayMode::live && !cassette_)
        throw Error(std::string(to_string(mode_)) + " mode needs a cassette");
    if (mode_ != GatewayMode::replay && !client_)
        throw Error(std::string(to_string(mode_)) + " mode needs a backend client");
}

GatewayReply Gateway::complete(const ChatRequest& request)
{
    auto digest = request_digest(request);
    if (mode_ != GatewayMode::live)
    {
        if (auto hit = cassette_->lookup(digest))
            return {hit->response, digest};
        if (mode_ == GatewayMode::replay)
            throw CassetteMiss(digest);
    }
    auto completion = client_->complete(request);
    if (mode_ == GatewayMode::record)
        cassette_->append(CassetteEntry {digest, request, completion.text, completion.meta});
    return {std::move(completion.text), digest};
}

// ---------------------------------------------------------------------------

RoutingTable RoutingTable::from_json(const json& j)
{
    if (!j.is_object())
        throw Error("routing table must be a JSON object");
    RoutingTable table;
    for (const auto& [phase, section]: j.items())
    {
        if (!parse_phase(phase))
            throw Error("routing table: unknown phase '" + phase + "'");
        if (!section.is_object())
            throw Error("routing table: section '" + phase + "' must be an object");
        auto& routes = table.table_[phase];
        for (const auto& [key, adapter]: section.items())
        {
            if (!adapter.is_string())
                throw Error("routing table: adapter for '" + key + "' must be a string");
            routes[key] = adapter.get<std::string>();
        }
    }
    return table;
}

RoutingTable RoutingTable::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error("cannot read routing file " + path.string());
    try
    {
        return from_json(json::parse(in));
    }
    catch (const json::exception& e)
    {
        throw Error("routing file " + path.string() + ": " + e.what());
    }
}

std::string RoutingTable::route(ToolId tool, Phase phase) const
{
    return route(wire_name(tool), phase);
}

std::string RoutingTable::route(std::string_view tool_name, Phase phase) const
{
    auto key = std::string(to_string(phase));
    auto section = table_.find(key);
    if (phase == Phase::PE)
    {
        if (tool_name != "planner" && !parse_tool_id(tool_name))
            throw UnroutedTool("UnroutedTool: unknown tool '" + std::string(tool_name) + "'");
        if (section != table_.end())
            if (auto base = section->second.find("base"); base != section->second.end())
                return base->second;
        return "base";
    }
    auto tool = parse_tool_id(tool_name);
    if (tool_name != "planner" && !tool)
        throw UnroutedTool("UnroutedTool: unknown tool '" + std::string(tool_name) + "'");
    if (section != table_.end())
    {
        std::string canonical = tool ? std::string(wire_name(*tool)) : "planner";
        for (const auto& candidate: {canonical, tool ? file_stem(*tool) : canonical})
            if (auto it = section->second.find(candidate); it != section->second.end())
                return it->second;
    }
    throw UnroutedTool("UnroutedTool: no adapter for '" + std::string(tool_name) + "' in phase " + key);
}

std::string RoutingTable::route_planner(Phase phase) const
{
    return route("planner", phase);
}

json RoutingTable::to_json() const
{
    json j = json::object();
    for (const auto& [phase, routes]: table_)
        j[phase] = routes;
    return j;
}

json RoutingTable::snapshot(Phase phase) const
{
    json j = json::object();
    if (phase == Phase::PE)
    {
        j["base"] = route_planner(Phase::PE);
        return j;
    }
    if (auto it = table_.find(std::string(to_string(phase))); it != table_.end())
        j = it->second;
    return j;
}

void RoutingTable::check_phase_consistent(Phase phase) const
{
    if (phase != Phase::PE)
        return;
    auto it = table_.find("PE");
    if (it == table_.end())
        return;
    for (const auto& [key, adapter]: it->second)
        if (key != "base")
            throw Error("routing table: PE phase cannot route '" + key + "' to a tool adapter");
}

} // namespace tabreason
