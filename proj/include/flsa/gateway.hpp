#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace flsa {

// Sampling defaults: top_p = 0.5 everywhere, temperature 1.0 when generating
// text and 0.0 when choosing among given options.
inline constexpr double kDefaultTopP = 0.5;
inline constexpr double kSamplingTemperature = 1.0;
inline constexpr double kChoiceTemperature = 0.0;

struct ChatRequest {
    std::string system;
    std::string user;
    double temperature = kSamplingTemperature;
    double top_p = kDefaultTopP;
    int max_tokens = 512;
    std::optional<std::int64_t> seed_hint;

    // Concatenated prompt as seen by scripted rules: system, blank line, user.
    std::string prompt_text() const;
};

enum class BackendKind { Http, Scripted };
std::string to_string(BackendKind kind);

struct ChatResponse {
    std::string text;
    BackendKind backend = BackendKind::Scripted;
    bool cached = false;
};

// Canonical serialization: sorted keys, whitespace-normalized texts.
std::string canonical_request(const ChatRequest& request);
// Hex SHA-256 of canonical_request().
std::string cache_key(const ChatRequest& request);
std::string sha256_hex(const std::string& data);

class Backend {
public:
    virtual ~Backend() = default;
    virtual std::string generate(const ChatRequest& request) = 0;
    virtual BackendKind kind() const = 0;
};

// ---------------------------------------------------------------------------
// Scripted backend

struct ScriptedRule {
    std::string pattern;
    // One template, or several cycled by the request's seed_hint.
    std::vector<std::string> responses;
    int priority = 0;
};

// Deterministic stand-in for a model. Rules are Perl-syntax regular
// expressions searched over the concatenated prompt ('.' matches newlines);
// the highest-priority match wins, ties go to the earlier rule. Responses may
// reference capture groups as $1, $2, ...
class ScriptedBackend : public Backend {
public:
    explicit ScriptedBackend(std::vector<ScriptedRule> rules);
    static ScriptedBackend from_file(const std::filesystem::path& path);
    static ScriptedBackend from_jsonl(const std::string& jsonl);

    std::string generate(const ChatRequest& request) override;
    BackendKind kind() const override { return BackendKind::Scripted; }

    // Index of the rule that answers this prompt, or nullopt.
    std::optional<std::size_t> match(const std::string& prompt) const;
    std::size_t rule_count() const;

private:
    struct Compiled;
    std::vector<std::shared_ptr<const Compiled>> rules_;
};

// ---------------------------------------------------------------------------
// HTTP backend (OpenAI-compatible chat completions)

struct HttpResult {
    int status = 0;  // 0 means the connection failed
    std::string body;
    std::string error;
};

// POSTs a JSON body to the endpoint with the given headers.
using HttpTransport =
    std::function<HttpResult(const std::string& url, const std::string& body,
                             const std::vector<std::pair<std::string, std::string>>& headers)>;

HttpTransport default_http_transport(std::chrono::seconds timeout = std::chrono::seconds(120));

struct RetryPolicy {
    int max_attempts = 5;
    std::chrono::milliseconds initial_backoff{500};
    double multiplier = 2.0;
    std::chrono::milliseconds max_backoff{30000};
};

struct HttpBackendOptions {
    std::string endpoint;  // full URL of the chat-completions route
    std::string model;
    std::string api_key;
    RetryPolicy retry;
};

class HttpBackend : public Backend {
public:
    explicit HttpBackend(HttpBackendOptions options, HttpTransport transport = default_http_transport());

    std::string generate(const ChatRequest& request) override;
    BackendKind kind() const override { return BackendKind::Http; }

    std::string request_body(const ChatRequest& request) const;
    // Total HTTP attempts made so far (including retries).
    std::uint64_t attempts() const { return attempts_.load(); }

private:
    HttpBackendOptions options_;
    HttpTransport transport_;
    std::atomic<std::uint64_t> attempts_{0};
};

// Extracts choices[0].message.content from a chat-completions reply.
std::string parse_chat_completion(const std::string& body);

// ---------------------------------------------------------------------------

// Append-only JSONL response cache with an in-memory index. Without a path
// the cache lives in memory only.
class ResponseCache {
public:
    ResponseCache() = default;
    explicit ResponseCache(std::filesystem::path path);

    std::optional<std::string> get(const std::string& key) const;
    void put(const std::string& key, const ChatRequest& request, const std::string& text);
    std::size_t size() const;
    std::size_t skipped_lines() const { return skipped_; }

private:
    std::optional<std::filesystem::path> path_;
    mutable std::shared_mutex mu_;
    std::mutex file_mu_;
    std::unordered_map<std::string, std::string> entries_;
    std::size_t skipped_ = 0;
};

// Spaces out request start times to at most `requests_per_second`.
// Non-positive rates disable limiting.
class RateLimiter {
public:
    explicit RateLimiter(double requests_per_second = 0.0);
    void acquire();
    double rate() const { return rate_; }

private:
    double rate_;
    std::mutex mu_;
    std::chrono::steady_clock::time_point next_;
};

struct GatewayOptions {
    bool use_cache = true;
    std::optional<std::filesystem::path> cache_path;
    std::uint64_t budget = 0;  // max backend calls; 0 = unlimited
    int parallelism = 1;       // bounds concurrent calls issued by the pipeline
    std::shared_ptr<RateLimiter> rate_limiter;
};

// The single entry point for model calls.
class Gateway {
public:
    Gateway(std::unique_ptr<Backend> backend, GatewayOptions options = {});

    // Thread-safe. Throws TransportError, BudgetExceeded, or ResponseError
    // when the backend returns an empty completion.
    ChatResponse complete(const ChatRequest& request);

    std::uint64_t backend_calls() const { return backend_calls_.load(); }
    std::uint64_t cache_hits() const { return cache_hits_.load(); }
    int parallelism() const { return options_.parallelism; }
    BackendKind backend_kind() const { return backend_->kind(); }
    Backend& backend() { return *backend_; }

private:
    std::unique_ptr<Backend> backend_;
    GatewayOptions options_;
    std::optional<ResponseCache> cache_;
    std::atomic<std::uint64_t> backend_calls_{0};
    std::atomic<std::uint64_t> cache_hits_{0};
    std::atomic<std::uint64_t> reserved_{0};
};

}  // namespace flsa
