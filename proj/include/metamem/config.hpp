#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "metamem/evolve.hpp"
#include "metamem/infer.hpp"
#include "metamem/pipeline.hpp"

namespace metamem {

// One chat-model slot. The judge is configured separately from the actor
// (a stronger model scores responses); the classifier slot defaults to the
// judge's settings when left empty.
struct SlotConfig {
    std::string kind = "http"; // http | scripted
    std::string endpoint;
    std::string model;
    std::string path = "/v1/chat/completions";
    std::string transcript; // scripted: transcript file
    bool use_n = true;
};

struct EmbedSlotConfig {
    std::string kind = "none"; // http | scripted | hash | none
    std::string endpoint;
    std::string model;
    std::string path = "/v1/embeddings";
    std::string transcript; // scripted: embedding table file
    int dim = 384;
};

struct RunConfig {
    SlotConfig actor;
    SlotConfig judge;
    SlotConfig classifier; // falls back to judge when endpoint/transcript empty

    EmbedSlotConfig embed;

    int timeout_ms = 60000;
    int retries = 3;
    int backoff_ms = 1000;
    int in_flight_limit = 8;

    int retrieve_topk = 20;
    int filter_chunk = 0; // 0: whole-batch conflict filtering

    double membuild_threshold = 0.75;
    int membuild_char_budget = 4000;

    TrainConfig train;

    double infer_temperature = 0.0;
    double infer_top_p = 0.8;
    int infer_max_tokens = 2000;

    std::string prompts_dir;                    // optional template overrides
    std::string api_key_env = "METAMEM_API_KEY"; // credential env var
};

// Flat `key = value` config file; '#' starts a comment. Unknown keys are
// rejected. Flags are applied after the file, so precedence is
// flag > file > default.
RunConfig load_config_file(const std::filesystem::path& path, RunConfig base = {});
void apply_config_kv(RunConfig& cfg, const std::string& key, const std::string& value);

// Digest of the semantic run configuration (output paths excluded).
std::string config_hash(const RunConfig& cfg);

struct BuiltProviders {
    std::unique_ptr<ChatProvider> actor;
    std::unique_ptr<ChatProvider> judge;
    std::unique_ptr<ChatProvider> classifier;
    std::unique_ptr<Embedder> embedder; // may be null (kind=none)
    TemplateCatalog templates;
};

BuiltProviders build_providers(const RunConfig& cfg);

Pipeline make_pipeline(const BuiltProviders& built, const RunConfig& cfg, RunLog* log = nullptr);

} // namespace metamem
