#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "metamem/types.hpp"

namespace metamem {

enum class TemplateName { Gen, Reflect, Action, Filter, Judge, Classify, TopicSummarize };

TemplateName template_name_from_key(const std::string& key);

struct PromptTemplate {
    TemplateName name = TemplateName::Gen;
    std::string key;  // variant key, doubles as the prompts/<key>.txt filename
    std::string text;
};

using Bindings = std::map<std::string, std::string>;

// Placeholders are `{identifier}` tokens; anything else (JSON braces in
// example snippets included) passes through verbatim. Substitution is a
// single left-to-right pass, so values are never re-expanded.
std::vector<std::string> placeholders(const std::string& text);

// Strict fill: a placeholder without a binding, or a binding without a
// placeholder, raises TemplateError naming the offender.
std::string fill(const PromptTemplate& tmpl, const Bindings& bindings);

// Stable request fingerprint: template key + hash of bindings. Cosmetic
// edits to template text keep recorded transcripts valid; changed bindings
// require re-pinning.
std::string bindings_fingerprint(const std::string& key, const Bindings& bindings);

class TemplateCatalog {
public:
    // Compiled-in defaults; the files under prompts/ ship the same text.
    static TemplateCatalog builtin();

    // Builtins overridden per-key by <dir>/<key>.txt files.
    static TemplateCatalog with_overrides(const std::filesystem::path& dir);

    const PromptTemplate& get(const std::string& key) const;

    // Category-specific judge selection; abstention instances use the
    // unanswerable judge regardless of category.
    const PromptTemplate& judge_for(Category c, bool abstention) const;

    std::vector<std::string> keys() const;

private:
    std::map<std::string, PromptTemplate> templates_;
};

} // namespace metamem
