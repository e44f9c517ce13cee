#include "metamem/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "metamem/errors.hpp"
#include "metamem/rng.hpp"

namespace metamem {

namespace {

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ConfigError("config key " + key + " expects a boolean, got '" + value + "'");
}

int parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        int v = std::stoi(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + " expects an integer, got '" + value + "'");
    }
}

std::int64_t parse_i64(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        long long v = std::stoll(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + " expects an integer, got '" + value + "'");
    }
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key " + key + " expects a number, got '" + value + "'");
    }
}

bool apply_slot_kv(SlotConfig& slot, const std::string& field, const std::string& key,
                   const std::string& value) {
    if (field == "kind") {
        if (value != "http" && value != "scripted") {
            throw ConfigError("config key " + key + " must be http or scripted");
        }
        slot.kind = value;
    } else if (field == "endpoint") {
        slot.endpoint = value;
    } else if (field == "model") {
        slot.model = value;
    } else if (field == "path") {
        slot.path = value;
    } else if (field == "transcript") {
        slot.transcript = value;
    } else if (field == "use_n") {
        slot.use_n = parse_bool(key, value);
    } else {
        return false;
    }
    return true;
}

} // namespace

void apply_config_kv(RunConfig& cfg, const std::string& key, const std::string& value) {
    const auto dot = key.find('.');
    if (dot != std::string::npos) {
        const std::string head = key.substr(0, dot);
        const std::string field = key.substr(dot + 1);
        SlotConfig* slot = nullptr;
        if (head == "actor") slot = &cfg.actor;
        if (head == "judge") slot = &cfg.judge;
        if (head == "classifier") slot = &cfg.classifier;
        if (slot) {
            if (!apply_slot_kv(*slot, field, key, value)) {
                throw ConfigError("unknown config key: " + key);
            }
            return;
        }
        if (head == "embed") {
            if (field == "kind") {
                if (value != "http" && value != "scripted" && value != "hash" && value != "none") {
                    throw ConfigError("embed.kind must be http, scripted, hash or none");
                }
                cfg.embed.kind = value;
            } else if (field == "endpoint") {
                cfg.embed.endpoint = value;
            } else if (field == "model") {
                cfg.embed.model = value;
            } else if (field == "path") {
                cfg.embed.path = value;
            } else if (field == "transcript") {
                cfg.embed.transcript = value;
            } else if (field == "dim") {
                cfg.embed.dim = parse_int(key, value);
            } else {
                throw ConfigError("unknown config key: " + key);
            }
            return;
        }
        if (head == "membuild") {
            if (field == "threshold") {
                cfg.membuild_threshold = parse_double(key, value);
            } else if (field == "char_budget") {
                cfg.membuild_char_budget = parse_int(key, value);
            } else {
                throw ConfigError("unknown config key: " + key);
            }
            return;
        }
        if (head == "infer") {
            if (field == "temperature") {
                cfg.infer_temperature = parse_double(key, value);
            } else if (field == "top_p") {
                cfg.infer_top_p = parse_double(key, value);
            } else if (field == "max_tokens") {
                cfg.infer_max_tokens = parse_int(key, value);
            } else {
                throw ConfigError("unknown config key: " + key);
            }
            return;
        }
        throw ConfigError("unknown config key: " + key);
    }

    if (key == "timeout_ms") cfg.timeout_ms = parse_int(key, value);
    else if (key == "retries") cfg.retries = parse_int(key, value);
    else if (key == "backoff_ms") cfg.backoff_ms = parse_int(key, value);
    else if (key == "in_flight_limit") cfg.in_flight_limit = parse_int(key, value);
    else if (key == "retrieve_topk") cfg.retrieve_topk = parse_int(key, value);
    else if (key == "filter_chunk") cfg.filter_chunk = parse_int(key, value);
    else if (key == "k_samples") cfg.train.k_samples = parse_int(key, value);
    else if (key == "batch_size") cfg.train.batch_size = parse_int(key, value);
    else if (key == "epochs") cfg.train.epochs = parse_int(key, value);
    else if (key == "seed") cfg.train.seed = parse_i64(key, value);
    else if (key == "sample_temperature") cfg.train.sample_temperature = parse_double(key, value);
    else if (key == "sample_top_p") cfg.train.sample_top_p = parse_double(key, value);
    else if (key == "sample_max_tokens") cfg.train.sample_max_tokens = parse_int(key, value);
    else if (key == "prompts_dir") cfg.prompts_dir = value;
    else if (key == "api_key_env") cfg.api_key_env = value;
    else throw ConfigError("unknown config key: " + key);
}

RunConfig load_config_file(const std::filesystem::path& path, RunConfig base) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path.string() + " line " + std::to_string(lineno) +
                              ": expected key = value");
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        try {
            apply_config_kv(base, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(path.string() + " line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return base;
}

std::string config_hash(const RunConfig& cfg) {
    std::ostringstream canon;
    auto slot = [&](const char* name, const SlotConfig& s) {
        canon << name << ".kind=" << s.kind << "\n"
              << name << ".endpoint=" << s.endpoint << "\n"
              << name << ".model=" << s.model << "\n"
              << name << ".path=" << s.path << "\n"
              << name << ".transcript=" << s.transcript << "\n"
              << name << ".use_n=" << s.use_n << "\n";
    };
    slot("actor", cfg.actor);
    slot("judge", cfg.judge);
    slot("classifier", cfg.classifier);
    canon << "embed.kind=" << cfg.embed.kind << "\nembed.endpoint=" << cfg.embed.endpoint
          << "\nembed.model=" << cfg.embed.model << "\nembed.dim=" << cfg.embed.dim
          << "\nembed.transcript=" << cfg.embed.transcript
          << "\nretrieve_topk=" << cfg.retrieve_topk << "\nfilter_chunk=" << cfg.filter_chunk
          << "\nmembuild.threshold=" << cfg.membuild_threshold
          << "\nmembuild.char_budget=" << cfg.membuild_char_budget
          << "\nk_samples=" << cfg.train.k_samples << "\nbatch_size=" << cfg.train.batch_size
          << "\nepochs=" << cfg.train.epochs << "\nseed=" << cfg.train.seed
          << "\nsample_temperature=" << cfg.train.sample_temperature
          << "\nsample_top_p=" << cfg.train.sample_top_p
          << "\nsample_max_tokens=" << cfg.train.sample_max_tokens
          << "\ninfer.temperature=" << cfg.infer_temperature
          << "\ninfer.top_p=" << cfg.infer_top_p
          << "\ninfer.max_tokens=" << cfg.infer_max_tokens
          << "\nprompts_dir=" << cfg.prompts_dir << "\n";
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(canon.str())));
    return buf;
}

namespace {

std::unique_ptr<ChatProvider> build_slot(const SlotConfig& slot, const RunConfig& cfg,
                                         const std::string& name) {
    if (slot.kind == "scripted") {
        if (slot.transcript.empty()) {
            throw ConfigError(name + ": scripted provider needs a transcript file");
        }
        return std::make_unique<ScriptedChatProvider>(
            ScriptedChatProvider::transcript_from_file(slot.transcript));
    }
    HttpProviderConfig http;
    http.endpoint = slot.endpoint;
    http.path = slot.path;
    http.model = slot.model;
    http.use_n = slot.use_n;
    http.timeout_ms = cfg.timeout_ms;
    http.in_flight_limit = cfg.in_flight_limit;
    http.retry.attempts = cfg.retries;
    http.retry.backoff_ms = cfg.backoff_ms;
    if (const char* key = std::getenv(cfg.api_key_env.c_str())) http.api_key = key;
    if (http.endpoint.empty()) {
        throw ConfigError(name + ": http provider needs an endpoint (" + name + ".endpoint)");
    }
    return std::make_unique<HttpChatProvider>(std::move(http));
}

} // namespace

BuiltProviders build_providers(const RunConfig& cfg) {
    BuiltProviders built;
    built.actor = build_slot(cfg.actor, cfg, "actor");
    built.judge = build_slot(cfg.judge, cfg, "judge");

    SlotConfig classifier = cfg.classifier;
    if (classifier.endpoint.empty() && classifier.transcript.empty()) {
        classifier = cfg.judge; // dedicated slot, judge settings by default
    }
    built.classifier = build_slot(classifier, cfg, "classifier");

    if (cfg.embed.kind == "hash") {
        built.embedder = std::make_unique<HashEmbedder>(cfg.embed.dim);
    } else if (cfg.embed.kind == "scripted") {
        if (cfg.embed.transcript.empty()) {
            throw ConfigError("embed: scripted embedder needs a table file (embed.transcript)");
        }
        built.embedder =
            std::make_unique<ScriptedEmbedder>(ScriptedEmbedder::from_file(cfg.embed.transcript));
    } else if (cfg.embed.kind == "http") {
        HttpEmbedderConfig http;
        http.endpoint = cfg.embed.endpoint;
        http.path = cfg.embed.path;
        http.model = cfg.embed.model;
        http.dim = cfg.embed.dim;
        http.timeout_ms = cfg.timeout_ms;
        http.retry.attempts = cfg.retries;
        http.retry.backoff_ms = cfg.backoff_ms;
        if (const char* key = std::getenv(cfg.api_key_env.c_str())) http.api_key = key;
        built.embedder = std::make_unique<HttpEmbedder>(std::move(http));
    } // "none": leave null, full memory sets are rendered without retrieval

    built.templates = cfg.prompts_dir.empty() ? TemplateCatalog::builtin()
                                              : TemplateCatalog::with_overrides(cfg.prompts_dir);
    return built;
}

Pipeline make_pipeline(const BuiltProviders& built, const RunConfig& cfg, RunLog* log) {
    Pipeline pipe;
    pipe.actor = built.actor.get();
    pipe.judge = built.judge.get();
    pipe.classifier = built.classifier.get();
    pipe.embedder = built.embedder.get();
    pipe.templates = &built.templates;
    pipe.retrieve_topk = cfg.retrieve_topk;
    pipe.log = log;
    return pipe;
}

} // namespace metamem
