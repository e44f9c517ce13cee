#pragma once

#include "metamem/log.hpp"
#include "metamem/provider.hpp"
#include "metamem/templates.hpp"

namespace metamem {

// Shared provider/template context threaded through the pipeline stages.
// Slots are borrowed, not owned; a null slot means "not configured" and
// trips a ConfigError when a stage needs it.
struct Pipeline {
    ChatProvider* actor = nullptr;
    ChatProvider* judge = nullptr;
    ChatProvider* classifier = nullptr;
    Embedder* embedder = nullptr; // optional; absent means full-set rendering
    const TemplateCatalog* templates = nullptr;

    int retrieve_topk = 20; // 0 disables retrieval, full set always rendered
    RunLog* log = nullptr;

    ChatProvider& actor_provider() const;
    ChatProvider& judge_provider() const;
    ChatProvider& classifier_provider() const;
    const TemplateCatalog& catalog() const;
};

// Builds a tagged completion request from a template: fills the prompt,
// stamps the template key and the bindings fingerprint.
CompletionRequest make_request(const TemplateCatalog& catalog, const std::string& key,
                               const Bindings& bindings);

} // namespace metamem
