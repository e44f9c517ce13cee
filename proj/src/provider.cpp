#include "metamem/provider.hpp"

#include <cctype>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <fstream>
#include <thread>

#include <httplib.h>

#include "metamem/errors.hpp"
#include "metamem/rng.hpp"

namespace metamem {

void validate(const CompletionRequest& req) {
    if (trim(req.user).empty()) throw ProviderError("completion request has empty user message");
    if (req.n_samples < 1) throw ProviderError("n_samples must be >= 1");
    if (req.temperature < 0.0) throw ProviderError("temperature must be >= 0");
    if (!(req.top_p > 0.0) || req.top_p > 1.0) throw ProviderError("top_p must be in (0, 1]");
    if (req.max_tokens < 1) throw ProviderError("max_tokens must be positive");
}

// --- HTTP chat provider ------------------------------------------------------

nlohmann::json build_chat_body(const HttpProviderConfig& cfg, const CompletionRequest& req,
                               int n) {
    nlohmann::json messages = nlohmann::json::array();
    if (req.system) {
        messages.push_back({{"role", "system"}, {"content", *req.system}});
    }
    messages.push_back({{"role", "user"}, {"content", req.user}});
    nlohmann::json body = {
        {"model", cfg.model},
        {"messages", messages},
        {"temperature", req.temperature},
        {"top_p", req.top_p},
        {"max_tokens", req.max_tokens},
    };
    if (cfg.use_n) body["n"] = n;
    if (req.seed) body["seed"] = *req.seed;
    return body;
}

std::vector<std::string> parse_chat_response(const std::string& body, int expected) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(std::string("malformed completion response: ") + e.what());
    }
    if (!j.contains("choices") || !j["choices"].is_array()) {
        throw ProviderError("completion response has no choices array");
    }
    std::vector<std::string> out;
    for (const auto& choice : j["choices"]) {
        if (!choice.contains("message") || !choice["message"].contains("content") ||
            choice["message"]["content"].is_null()) {
            throw ProviderError("completion choice has no message content");
        }
        out.push_back(choice["message"]["content"].get<std::string>());
    }
    if (static_cast<int>(out.size()) < expected) {
        throw ProviderError("completion returned " + std::to_string(out.size()) +
                            " choices, expected " + std::to_string(expected));
    }
    out.resize(expected);
    return out;
}

// Counting gate bounding concurrent outbound requests.
struct HttpChatProvider::InFlightGate {
    explicit InFlightGate(int limit) : available(limit) {}

    void acquire() {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return available > 0; });
        --available;
    }

    void release() {
        {
            std::lock_guard lock(mu);
            ++available;
        }
        cv.notify_one();
    }

    std::mutex mu;
    std::condition_variable cv;
    int available;
};

namespace {

struct GateGuard {
    explicit GateGuard(HttpChatProvider::InFlightGate& g) : gate(g) { gate.acquire(); }
    ~GateGuard() { gate.release(); }
    HttpChatProvider::InFlightGate& gate;
};

httplib::Result post_json(const std::string& endpoint, const std::string& path,
                          const std::string& api_key, int timeout_ms,
                          const std::string& body) {
    httplib::Client client(endpoint);
    client.set_connection_timeout(0, timeout_ms * 1000LL);
    client.set_read_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);
    client.set_write_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);
    httplib::Headers headers;
    if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
    return client.Post(path, headers, body, "application/json");
}

// Retries transient failures (connection errors, timeouts, 5xx) with
// exponential backoff; client errors fail immediately.
std::string post_with_retries(const std::string& endpoint, const std::string& path,
                              const std::string& api_key, int timeout_ms,
                              const RetryPolicy& retry, const std::string& body,
                              const std::string& what) {
    std::string last_error;
    for (int attempt = 0; attempt < std::max(1, retry.attempts); ++attempt) {
        if (attempt > 0 && retry.backoff_ms > 0) {
            std::this_thread::sleep_for(
                std::chrono::milliseconds(retry.backoff_ms * (1 << (attempt - 1))));
        }
        httplib::Result res = post_json(endpoint, path, api_key, timeout_ms, body);
        if (!res) {
            last_error = what + ": transport error (" + httplib::to_string(res.error()) + ")";
            continue;
        }
        if (res->status >= 200 && res->status < 300) return res->body;
        if (res->status == 401 || res->status == 403) {
            throw ProviderError(what + ": authentication failed (HTTP " +
                                std::to_string(res->status) + ")");
        }
        if (res->status >= 500) {
            last_error = what + ": HTTP " + std::to_string(res->status);
            continue;
        }
        throw ProviderError(what + ": HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    throw ProviderError(last_error + " after " + std::to_string(std::max(1, retry.attempts)) +
                        " attempts");
}

} // namespace

HttpChatProvider::HttpChatProvider(HttpProviderConfig cfg)
    : cfg_(std::move(cfg)), gate_(std::make_unique<InFlightGate>(std::max(1, cfg_.in_flight_limit))) {
    if (cfg_.endpoint.empty()) throw ConfigError("http provider endpoint not configured");
}

HttpChatProvider::~HttpChatProvider() = default;

std::vector<std::string> HttpChatProvider::complete_once(const CompletionRequest& req, int n) {
    GateGuard guard(*gate_);
    const std::string body = build_chat_body(cfg_, req, n).dump();
    const std::string response = post_with_retries(cfg_.endpoint, cfg_.path, cfg_.api_key,
                                                   cfg_.timeout_ms, cfg_.retry, body,
                                                   "chat completion");
    return parse_chat_response(response, n);
}

std::vector<std::string> HttpChatProvider::complete(const CompletionRequest& req) {
    validate(req);
    if (cfg_.use_n) {
        return complete_once(req, req.n_samples);
    }
    // Endpoint without n support: k sequential single-sample requests with
    // varied seeds so samples stay independent.
    std::vector<std::string> out;
    out.reserve(req.n_samples);
    for (int i = 0; i < req.n_samples; ++i) {
        CompletionRequest one = req;
        one.n_samples = 1;
        if (req.seed) one.seed = *req.seed + i;
        auto r = complete_once(one, 1);
        out.push_back(std::move(r.front()));
    }
    return out;
}

std::string HttpChatProvider::describe() const {
    return "http:" + cfg_.endpoint + cfg_.path + " model=" + cfg_.model;
}

// --- scripted chat provider --------------------------------------------------

ScriptedChatProvider::ScriptedChatProvider(std::vector<TranscriptEntry> transcript)
    : transcript_(std::move(transcript)) {}

ScriptedChatProvider::ScriptedChatProvider(std::vector<std::string> texts) {
    transcript_.reserve(texts.size());
    for (auto& t : texts) transcript_.push_back(TranscriptEntry{std::move(t), std::nullopt});
}

std::vector<TranscriptEntry> ScriptedChatProvider::transcript_from_file(
    const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot open transcript: " + p.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed transcript " + p.string() + ": " + e.what());
    }
    if (!j.is_array()) throw DataError("transcript must be a JSON array: " + p.string());
    std::vector<TranscriptEntry> out;
    for (const auto& item : j) {
        TranscriptEntry e;
        if (item.is_string()) {
            e.text = item.get<std::string>();
        } else if (item.is_object()) {
            e.text = item.at("text").get<std::string>();
            if (item.contains("fingerprint") && !item["fingerprint"].is_null()) {
                e.fingerprint = item["fingerprint"].get<std::string>();
            }
        } else {
            throw DataError("transcript entries must be strings or objects: " + p.string());
        }
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<std::string> ScriptedChatProvider::complete(const CompletionRequest& req) {
    validate(req);
    std::lock_guard lock(mu_);
    requests_.push_back(req);
    std::vector<std::string> out;
    out.reserve(req.n_samples);
    for (int i = 0; i < req.n_samples; ++i) {
        if (next_ >= transcript_.size()) {
            throw TranscriptError("transcript exhausted at entry " + std::to_string(next_) +
                                  " (template '" + req.template_key + "')");
        }
        const TranscriptEntry& e = transcript_[next_];
        if (e.fingerprint && *e.fingerprint != req.fingerprint) {
            throw TranscriptError("transcript fingerprint mismatch at entry " +
                                  std::to_string(next_) + ": pinned " + *e.fingerprint +
                                  ", request " + req.fingerprint + " (template '" +
                                  req.template_key + "')");
        }
        out.push_back(e.text);
        ++next_;
    }
    return out;
}

std::string ScriptedChatProvider::describe() const {
    return "scripted(" + std::to_string(transcript_.size()) + " entries)";
}

std::size_t ScriptedChatProvider::remaining() const {
    std::lock_guard lock(mu_);
    return transcript_.size() - next_;
}

// --- embedders ----------------------------------------------------------------

HttpEmbedder::HttpEmbedder(HttpEmbedderConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.endpoint.empty()) throw ConfigError("http embedder endpoint not configured");
    if (cfg_.dim < 1) throw ConfigError("embedding dimension must be positive");
}

std::vector<std::vector<double>> HttpEmbedder::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) throw ProviderError("embed called with no texts");
    nlohmann::json body = {{"model", cfg_.model}, {"input", texts}};
    const std::string response = post_with_retries(cfg_.endpoint, cfg_.path, cfg_.api_key,
                                                   cfg_.timeout_ms, cfg_.retry, body.dump(),
                                                   "embedding");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(response);
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(std::string("malformed embedding response: ") + e.what());
    }
    if (!j.contains("data") || !j["data"].is_array() || j["data"].size() != texts.size()) {
        throw ProviderError("embedding response data does not match input batch");
    }
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& item : j["data"]) {
        auto vec = item.at("embedding").get<std::vector<double>>();
        if (static_cast<int>(vec.size()) != cfg_.dim) {
            throw ProviderError("embedding dimension " + std::to_string(vec.size()) +
                                " does not match configured " + std::to_string(cfg_.dim));
        }
        for (double v : vec) {
            if (!std::isfinite(v)) throw ProviderError("non-finite embedding component");
        }
        out.push_back(std::move(vec));
    }
    return out;
}

ScriptedEmbedder::ScriptedEmbedder(int dim, std::map<std::string, std::vector<double>> table,
                                   bool hash_fallback)
    : dim_(dim), table_(std::move(table)), hash_fallback_(hash_fallback) {
    for (const auto& [text, vec] : table_) {
        if (static_cast<int>(vec.size()) != dim_) {
            throw ConfigError("scripted embedding for '" + text + "' has wrong dimension");
        }
    }
}

ScriptedEmbedder ScriptedEmbedder::from_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot open embedding table: " + p.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed embedding table " + p.string() + ": " + e.what());
    }
    int dim = j.at("dim").get<int>();
    std::map<std::string, std::vector<double>> table;
    if (j.contains("table")) {
        for (const auto& [text, vec] : j["table"].items()) {
            table[text] = vec.get<std::vector<double>>();
        }
    }
    bool fallback = j.value("fallback", std::string("error")) == "hash";
    return ScriptedEmbedder(dim, std::move(table), fallback);
}

std::vector<std::vector<double>> ScriptedEmbedder::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) throw ProviderError("embed called with no texts");
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const std::string& t : texts) {
        auto it = table_.find(t);
        if (it != table_.end()) {
            out.push_back(it->second);
        } else if (hash_fallback_) {
            out.push_back(HashEmbedder::embed_one(t, dim_));
        } else {
            throw TranscriptError("no scripted embedding for text: " + t.substr(0, 60));
        }
    }
    return out;
}

HashEmbedder::HashEmbedder(int dim) : dim_(dim) {
    if (dim < 1) throw ConfigError("embedding dimension must be positive");
}

std::vector<double> HashEmbedder::embed_one(const std::string& text, int dim) {
    std::vector<double> v(dim, 0.0);
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && !std::isalnum(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t j = i;
        while (j < text.size() && std::isalnum(static_cast<unsigned char>(text[j]))) ++j;
        if (j > i) {
            std::string token;
            for (std::size_t k = i; k < j; ++k) {
                token += static_cast<char>(std::tolower(static_cast<unsigned char>(text[k])));
            }
            std::uint64_t h = fnv1a64(token);
            v[h % dim] += (h >> 63) ? 1.0 : -1.0;
        }
        i = j;
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm > 0.0) {
        norm = std::sqrt(norm);
        for (double& x : v) x /= norm;
    }
    return v;
}

std::vector<std::vector<double>> HashEmbedder::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) throw ProviderError("embed called with no texts");
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const std::string& t : texts) out.push_back(embed_one(t, dim_));
    return out;
}

} // namespace metamem
