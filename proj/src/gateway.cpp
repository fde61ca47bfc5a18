#include "flsa/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <boost/regex.hpp>
#include <openssl/evp.h>

#include "flsa/error.hpp"
#include "flsa/log.hpp"
#include "flsa/text.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

namespace flsa {

using nlohmann::json;

std::string ChatRequest::prompt_text() const { return system + "\n\n" + user; }

std::string to_string(BackendKind kind) {
    return kind == BackendKind::Http ? "http" : "scripted";
}

std::string canonical_request(const ChatRequest& r) {
    // nlohmann's object type is an ordered std::map, so keys come out sorted.
    json j;
    j["v"] = 1;
    j["system"] = text::normalize_whitespace(r.system);
    j["user"] = text::normalize_whitespace(r.user);
    j["temperature"] = r.temperature;
    j["top_p"] = r.top_p;
    j["max_tokens"] = r.max_tokens;
    j["seed_hint"] = r.seed_hint ? json(*r.seed_hint) : json(nullptr);
    return j.dump();
}

std::string sha256_hex(const std::string& data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 digest failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

std::string cache_key(const ChatRequest& request) { return sha256_hex(canonical_request(request)); }

// ---------------------------------------------------------------------------

struct ScriptedBackend::Compiled {
    ScriptedRule rule;
    boost::regex re;
    std::size_t order = 0;
};

ScriptedBackend::ScriptedBackend(std::vector<ScriptedRule> rules) {
    bool has_catch_all = false;
    for (std::size_t i = 0; i < rules.size(); ++i) {
        auto c = std::make_shared<Compiled>();
        c->rule = std::move(rules[i]);
        c->order = i;
        if (c->rule.responses.empty()) {
            throw ConfigError("scripted rule " + std::to_string(i + 1) + " has no response");
        }
        try {
            c->re = boost::regex(c->rule.pattern, boost::regex::perl | boost::regex::mod_s);
        } catch (const boost::regex_error& e) {
            throw ConfigError("scripted rule " + std::to_string(i + 1) + ": bad pattern '" +
                              c->rule.pattern + "': " + e.what());
        }
        // A pattern that matches the empty string is found in every prompt.
        if (boost::regex_search(std::string(), c->re)) has_catch_all = true;
        rules_.push_back(std::move(c));
    }
    if (!has_catch_all) {
        throw ConfigError("scripted rule set needs a catch-all rule (a pattern matching any prompt, e.g. \"\")");
    }
    std::stable_sort(rules_.begin(), rules_.end(),
                     [](const auto& a, const auto& b) { return a->rule.priority > b->rule.priority; });
}

ScriptedBackend ScriptedBackend::from_jsonl(const std::string& jsonl) {
    std::vector<ScriptedRule> rules;
    std::istringstream in(jsonl);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) continue;
        try {
            json j = json::parse(line);
            ScriptedRule r;
            r.pattern = j.at("pattern").get<std::string>();
            const json& resp = j.contains("response") ? j.at("response") : j.at("response_template");
            if (resp.is_array()) {
                r.responses = resp.get<std::vector<std::string>>();
            } else {
                r.responses = {resp.get<std::string>()};
            }
            r.priority = j.value("priority", 0);
            rules.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw ParseError("rule file line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return ScriptedBackend(std::move(rules));
}

ScriptedBackend ScriptedBackend::from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open rule file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_jsonl(buf.str());
}

std::size_t ScriptedBackend::rule_count() const { return rules_.size(); }

std::optional<std::size_t> ScriptedBackend::match(const std::string& prompt) const {
    for (const auto& c : rules_) {
        if (boost::regex_search(prompt, c->re)) return c->order;
    }
    return std::nullopt;
}

std::string ScriptedBackend::generate(const ChatRequest& request) {
    const std::string prompt = request.prompt_text();
    for (const auto& c : rules_) {
        boost::smatch m;
        if (!boost::regex_search(prompt, m, c->re)) continue;
        const auto& options = c->rule.responses;
        std::size_t pick = 0;
        if (request.seed_hint) {
            const auto n = static_cast<std::int64_t>(options.size());
            pick = static_cast<std::size_t>(((*request.seed_hint % n) + n) % n);
        }
        return m.format(options[pick], boost::format_perl);
    }
    throw ConfigError("no scripted rule matches the prompt");
}

// ---------------------------------------------------------------------------

namespace {

struct ParsedUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

ParsedUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("endpoint must be an absolute URL: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

bool transient_status(int status) { return status == 0 || status == 408 || status == 429 || status >= 500; }

}  // namespace

HttpTransport default_http_transport(std::chrono::seconds timeout) {
    return [timeout](const std::string& url, const std::string& body,
                     const std::vector<std::pair<std::string, std::string>>& headers) -> HttpResult {
        const ParsedUrl parsed = split_url(url);
        httplib::Client client(parsed.origin);
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);
        httplib::Headers hdrs;
        for (const auto& [k, v] : headers) hdrs.emplace(k, v);
        auto res = client.Post(parsed.path, hdrs, body, "application/json");
        if (!res) return HttpResult{0, {}, httplib::to_string(res.error())};
        return HttpResult{res->status, res->body, {}};
    };
}

HttpBackend::HttpBackend(HttpBackendOptions options, HttpTransport transport)
    : options_(std::move(options)), transport_(std::move(transport)) {
    if (options_.endpoint.empty()) throw ConfigError("http backend requires --endpoint");
    split_url(options_.endpoint);
    if (options_.api_key.empty()) throw ConfigError("http backend requires FLSA_API_KEY in the environment");
    if (options_.retry.max_attempts < 1) throw ConfigError("retry max_attempts must be >= 1");
}

std::string HttpBackend::request_body(const ChatRequest& r) const {
    json j;
    j["model"] = options_.model;
    j["messages"] = json::array();
    if (!r.system.empty()) j["messages"].push_back({{"role", "system"}, {"content", r.system}});
    j["messages"].push_back({{"role", "user"}, {"content", r.user}});
    j["temperature"] = r.temperature;
    j["top_p"] = r.top_p;
    j["max_tokens"] = r.max_tokens;
    j["frequency_penalty"] = 0;
    j["presence_penalty"] = 0;
    if (r.seed_hint) j["seed"] = *r.seed_hint;
    return j.dump();
}

std::string parse_chat_completion(const std::string& body) {
    try {
        json j = json::parse(body);
        const json& content = j.at("choices").at(0).at("message").at("content");
        return content.is_string() ? content.get<std::string>() : std::string();
    } catch (const json::exception& e) {
        throw TransportError(std::string("malformed chat-completion response: ") + e.what());
    }
}

std::string HttpBackend::generate(const ChatRequest& request) {
    const std::string body = request_body(request);
    const std::vector<std::pair<std::string, std::string>> headers = {
        {"Authorization", "Bearer " + options_.api_key}};
    const RetryPolicy& policy = options_.retry;
    double backoff_ms = static_cast<double>(policy.initial_backoff.count());
    std::string last_error;
    for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
        attempts_.fetch_add(1);
        HttpResult res = transport_(options_.endpoint, body, headers);
        if (res.status >= 200 && res.status < 300) return parse_chat_completion(res.body);
        last_error = res.status == 0 ? "connection failed: " + res.error
                                     : "HTTP " + std::to_string(res.status) + ": " + text::truncate(res.body, 200);
        if (!transient_status(res.status)) throw TransportError(last_error);
        if (attempt == policy.max_attempts) break;
        log::warn("request failed (" + last_error + "), retrying in " +
                  std::to_string(static_cast<long>(backoff_ms)) + " ms");
        std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(backoff_ms));
        backoff_ms = std::min(backoff_ms * policy.multiplier, static_cast<double>(policy.max_backoff.count()));
    }
    throw TransportError("giving up after " + std::to_string(policy.max_attempts) + " attempts: " + last_error);
}

// ---------------------------------------------------------------------------

ResponseCache::ResponseCache(std::filesystem::path path) : path_(std::move(path)) {
    std::ifstream in(*path_, std::ios::binary);
    if (!in) return;  // created on first put
    std::string line;
    while (std::getline(in, line)) {
        if (text::trim(line).empty()) continue;
        try {
            json j = json::parse(line);
            entries_.insert_or_assign(j.at("key").get<std::string>(), j.at("text").get<std::string>());
        } catch (const json::exception&) {
            ++skipped_;  // e.g. a torn final line after a crash
        }
    }
    if (skipped_ > 0) log::warn("cache " + path_->string() + ": skipped " + std::to_string(skipped_) + " bad lines");
}

std::optional<std::string> ResponseCache::get(const std::string& key) const {
    std::shared_lock lock(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void ResponseCache::put(const std::string& key, const ChatRequest& request, const std::string& text) {
    {
        std::unique_lock lock(mu_);
        entries_.insert_or_assign(key, text);
    }
    if (!path_) return;
    json j;
    j["key"] = key;
    j["request"] = json::parse(canonical_request(request));
    j["text"] = text;
    const std::string line = j.dump() + "\n";
    std::lock_guard lock(file_mu_);
    std::ofstream out(*path_, std::ios::binary | std::ios::app);
    if (!out) throw Error("cannot append to cache " + path_->string());
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    out.flush();
}

std::size_t ResponseCache::size() const {
    std::shared_lock lock(mu_);
    return entries_.size();
}

RateLimiter::RateLimiter(double requests_per_second)
    : rate_(requests_per_second), next_(std::chrono::steady_clock::now()) {}

void RateLimiter::acquire() {
    if (rate_ <= 0.0) return;
    const auto interval = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / rate_));
    std::chrono::steady_clock::time_point slot;
    {
        std::lock_guard lock(mu_);
        const auto now = std::chrono::steady_clock::now();
        slot = std::max(now, next_);
        next_ = slot + interval;
    }
    std::this_thread::sleep_until(slot);
}

// ---------------------------------------------------------------------------

Gateway::Gateway(std::unique_ptr<Backend> backend, GatewayOptions options)
    : backend_(std::move(backend)), options_(std::move(options)) {
    if (!backend_) throw ConfigError("gateway needs a backend");
    if (options_.parallelism < 1) throw ConfigError("parallelism must be >= 1");
    if (options_.use_cache) {
        if (options_.cache_path) {
            cache_.emplace(*options_.cache_path);
        } else {
            cache_.emplace();
        }
    }
}

ChatResponse Gateway::complete(const ChatRequest& request) {
    std::string key;
    if (cache_) {
        key = cache_key(request);
        if (auto hit = cache_->get(key)) {
            cache_hits_.fetch_add(1);
            return ChatResponse{std::move(*hit), backend_->kind(), true};
        }
    }
    if (options_.budget > 0) {
        const auto n = reserved_.fetch_add(1) + 1;
        if (n > options_.budget) {
            throw BudgetExceeded("gateway call budget of " + std::to_string(options_.budget) + " exhausted");
        }
    }
    if (options_.rate_limiter) options_.rate_limiter->acquire();
    backend_calls_.fetch_add(1);
    std::string text = backend_->generate(request);
    if (text::trim(text).empty()) throw ResponseError("backend returned an empty completion", text);
    if (cache_) cache_->put(key, request, text);
    return ChatResponse{std::move(text), backend_->kind(), false};
}

}  // namespace flsa
