#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "metamem/types.hpp"

namespace metamem {

struct CompletionRequest {
    std::optional<std::string> system;
    std::string user;
    double temperature = 0.0;
    double top_p = 1.0;
    int max_tokens = 1024;
    int n_samples = 1;
    std::optional<std::int64_t> seed;

    // Metadata, never serialized to the wire: used for scripted-transcript
    // pinning and by tests inspecting captured prompts.
    std::string template_key;
    std::string fingerprint;
};

void validate(const CompletionRequest& req);

class ChatProvider {
public:
    virtual ~ChatProvider() = default;

    // Returns exactly req.n_samples response strings.
    virtual std::vector<std::string> complete(const CompletionRequest& req) = 0;

    virtual std::string describe() const = 0;
};

struct RetryPolicy {
    int attempts = 3;
    int backoff_ms = 1000; // 1s, 2s, 4s
};

struct HttpProviderConfig {
    std::string endpoint; // http://host:port
    std::string path = "/v1/chat/completions";
    std::string model;
    std::string api_key;  // optional bearer credential
    bool use_n = true;    // request n when the endpoint supports it
    int timeout_ms = 60000;
    int in_flight_limit = 8;
    RetryPolicy retry;
};

// Request body for the de-facto standard JSON chat-completion interface.
nlohmann::json build_chat_body(const HttpProviderConfig& cfg, const CompletionRequest& req,
                               int n);

// Extracts choices[i].message.content; a missing or null content raises
// ProviderError rather than yielding an empty string.
std::vector<std::string> parse_chat_response(const std::string& body, int expected);

class HttpChatProvider : public ChatProvider {
public:
    explicit HttpChatProvider(HttpProviderConfig cfg);
    ~HttpChatProvider() override;

    std::vector<std::string> complete(const CompletionRequest& req) override;
    std::string describe() const override;

    struct InFlightGate;

private:
    std::vector<std::string> complete_once(const CompletionRequest& req, int n);

    HttpProviderConfig cfg_;
    std::unique_ptr<InFlightGate> gate_;
};

// ---------------------------------------------------------------------------
// Scripted provider: replays a fixed transcript, in order. Fails loudly on
// exhaustion and on fingerprint mismatch for pinned entries; never drifts
// silently.
// ---------------------------------------------------------------------------

struct TranscriptEntry {
    std::string text;
    std::optional<std::string> fingerprint; // pin, checked against the request
};

class ScriptedChatProvider : public ChatProvider {
public:
    explicit ScriptedChatProvider(std::vector<TranscriptEntry> transcript);
    explicit ScriptedChatProvider(std::vector<std::string> texts);

    // JSON array of strings or of {"text": ..., "fingerprint": ...} objects.
    static std::vector<TranscriptEntry> transcript_from_file(const std::filesystem::path& p);

    std::vector<std::string> complete(const CompletionRequest& req) override;
    std::string describe() const override;

    std::size_t remaining() const;
    const std::vector<CompletionRequest>& requests() const { return requests_; }

private:
    mutable std::mutex mu_;
    std::vector<TranscriptEntry> transcript_;
    std::size_t next_ = 0;
    std::vector<CompletionRequest> requests_;
};

// ---------------------------------------------------------------------------
// Embedding providers.
// ---------------------------------------------------------------------------

class Embedder {
public:
    virtual ~Embedder() = default;

    // One vector per input text, all of dim() length, order preserved.
    virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) = 0;

    virtual int dim() const = 0;
};

struct HttpEmbedderConfig {
    std::string endpoint;
    std::string path = "/v1/embeddings";
    std::string model;
    std::string api_key;
    int dim = 384;
    int timeout_ms = 60000;
    RetryPolicy retry;
};

class HttpEmbedder : public Embedder {
public:
    explicit HttpEmbedder(HttpEmbedderConfig cfg);
    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
    int dim() const override { return cfg_.dim; }

private:
    HttpEmbedderConfig cfg_;
};

// Fixed-table embedder for tests. Misses either fall back to the hash
// embedding or raise, depending on hash_fallback.
class ScriptedEmbedder : public Embedder {
public:
    ScriptedEmbedder(int dim, std::map<std::string, std::vector<double>> table,
                     bool hash_fallback = false);
    static ScriptedEmbedder from_file(const std::filesystem::path& p);

    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
    int dim() const override { return dim_; }

private:
    int dim_;
    std::map<std::string, std::vector<double>> table_;
    bool hash_fallback_;
};

// Deterministic offline embedder: token feature-hashing into dim buckets,
// L2-normalized. Identical texts map to identical vectors.
class HashEmbedder : public Embedder {
public:
    explicit HashEmbedder(int dim = 384);
    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) override;
    int dim() const override { return dim_; }

    static std::vector<double> embed_one(const std::string& text, int dim);

private:
    int dim_;
};

} // namespace metamem
