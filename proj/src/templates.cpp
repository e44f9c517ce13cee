#include "metamem/templates.hpp"

#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "metamem/errors.hpp"
#include "metamem/rng.hpp"

namespace metamem {

namespace {

const char* kGen = R"(You are an assistant that answers a user's question using long-term memories recovered from earlier conversations.{experiences_block}

Memories:
{memory}

Question: {question}

Instructions: rely only on the memories above. Resolve conflicts between memories carefully, pay attention to dates, and answer concisely. If the memories do not contain the answer, say that you do not know.)";

const char* kReflect = R"(You are reviewing one attempted answer to a question that was answered using retrieved memories.

Memories:
{memory}

Question: {question}
Ground-truth answer: {answer}
Attempted answer: {response}

This attempt was judged {verdict_word}. Explain in a few sentences why it was {verdict_word}, focusing on how the memories were used or misused: which entries mattered, which were distracting, and what reading of them leads to the ground truth.)";

const char* kAction = R"(You maintain a numbered list of reusable experiences that teach a model how to use retrieved memories when answering questions.

Current experiences ({experience_count} total):
{experiences}

A question was attempted several times. Reflections on the attempts:
{reflections}

Question: {question}
Ground-truth answer: {answer}

Propose edits to the experience list that would help on future questions of this kind. Keep experiences general and transferable; avoid question-specific facts. Reply with a JSON array and no other text, where each element is one of:
  {"action": "ADD", "index": null, "content": "<new experience>"}
  {"action": "DEL", "index": <1-based index>, "content": null}
  {"action": "MOD", "index": <1-based index>, "content": "<revised experience>"}
Reply with [] if no change is needed.)";

const char* kFilter = R"(You maintain a numbered list of reusable experiences that teach a model how to use retrieved memories.

Current experiences ({experience_count} total):
{experiences}

The following edits were proposed independently and may conflict or overlap:
{actions}

Produce one consistent set of edits: drop duplicates, resolve contradictory edits to the same entry, and merge overlapping additions. Indices refer to the current list above. Reply with a JSON array and no other text, elements shaped like:
  {"action": "ADD" | "DEL" | "MOD", "index": <1-based index or null>, "content": "<text or null>", "provenance": "<id>"}
Reply with [] to reject every edit.)";

const char* kJudgeQa = R"(You are grading an answer to a question about earlier conversations.

Question: {question}
Correct answer: {answer}
Model answer: {response}

Memories available to the model:
{memory}

Does the model answer convey the same essential information as the correct answer? Minor wording differences do not matter. Reply with a single word: yes or no.)";

const char* kJudgeTemporal = R"(You are grading an answer to a question that requires reasoning about time.

Question: {question}
Correct answer: {answer}
Model answer: {response}

Memories available to the model:
{memory}

Pay close attention to dates, durations, and the order of events: the model answer is correct only if its temporal details agree with the correct answer. Reply with a single word: yes or no.)";

const char* kJudgeUpdate = R"(You are grading an answer to a question about a fact that changed over time.

Question: {question}
Correct answer: {answer}
Model answer: {response}

Memories available to the model:
{memory}

The correct answer reflects the most recent information. The model answer is correct only if it reflects the updated fact rather than an outdated one. Reply with a single word: yes or no.)";

const char* kJudgePreference = R"(You are grading an answer to a question about the user's preferences.

Question: {question}
Correct answer: {answer}
Model answer: {response}

Memories available to the model:
{memory}

The model answer is correct if it is consistent with the preferences expressed in the memories and covers the essentials of the correct answer. Reply with a single word: yes or no.)";

const char* kJudgeUnanswerable = R"(You are grading an answer to a question that cannot be answered from the available memories.

Question: {question}
Reference note: {answer}
Model answer: {response}

Memories available to the model:
{memory}

The model answer is correct only if it declines to answer or states that the information is not available, rather than inventing an answer. Reply with a single word: yes or no.)";

const char* kClassify = R"(Classify one experience entry from a list that teaches a model how to use retrieved memories.

Experience: {unit}

Reply General if the experience is task-agnostic and would transfer to many different kinds of questions. Reply Specific if it is tied to a particular task, topic, or fact. Reply with a single word: General or Specific.)";

const char* kTopicSummarize = R"(Summarize the following conversation sessions, which all discuss one topic.

{sessions}

First line: a short topic label of a few words. Then a concise summary that keeps every concrete fact: names, numbers, dates, places, decisions, and preferences. Write the summary as standalone statements about the user and the assistant.)";

struct BuiltinEntry {
    const char* key;
    TemplateName name;
    const char* text;
};

const BuiltinEntry kBuiltins[] = {
    {"gen", TemplateName::Gen, kGen},
    {"reflect", TemplateName::Reflect, kReflect},
    {"action", TemplateName::Action, kAction},
    {"filter", TemplateName::Filter, kFilter},
    {"judge_qa", TemplateName::Judge, kJudgeQa},
    {"judge_temporal", TemplateName::Judge, kJudgeTemporal},
    {"judge_update", TemplateName::Judge, kJudgeUpdate},
    {"judge_preference", TemplateName::Judge, kJudgePreference},
    {"judge_unanswerable", TemplateName::Judge, kJudgeUnanswerable},
    {"classify", TemplateName::Classify, kClassify},
    {"topic_summarize", TemplateName::TopicSummarize, kTopicSummarize},
};

bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

bool ident_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}

} // namespace

TemplateName template_name_from_key(const std::string& key) {
    for (const BuiltinEntry& e : kBuiltins) {
        if (key == e.key) return e.name;
    }
    throw TemplateError("unknown template key: " + key);
}

std::vector<std::string> placeholders(const std::string& text) {
    std::vector<std::string> names;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '{') continue;
        std::size_t j = i + 1;
        if (j >= text.size() || !ident_start(text[j])) continue;
        while (j < text.size() && ident_char(text[j])) ++j;
        if (j < text.size() && text[j] == '}') {
            std::string name = text.substr(i + 1, j - i - 1);
            if (seen.insert(name).second) names.push_back(name);
            i = j;
        }
    }
    return names;
}

std::string fill(const PromptTemplate& tmpl, const Bindings& bindings) {
    std::set<std::string> used;
    std::string out;
    out.reserve(tmpl.text.size());
    for (std::size_t i = 0; i < tmpl.text.size(); ++i) {
        char c = tmpl.text[i];
        if (c == '{' && i + 1 < tmpl.text.size() && ident_start(tmpl.text[i + 1])) {
            std::size_t j = i + 1;
            while (j < tmpl.text.size() && ident_char(tmpl.text[j])) ++j;
            if (j < tmpl.text.size() && tmpl.text[j] == '}') {
                std::string name = tmpl.text.substr(i + 1, j - i - 1);
                auto it = bindings.find(name);
                if (it == bindings.end()) {
                    throw TemplateError("template '" + tmpl.key +
                                        "' has no binding for placeholder {" + name + "}");
                }
                out += it->second;
                used.insert(name);
                i = j;
                continue;
            }
        }
        out += c;
    }
    for (const auto& [name, value] : bindings) {
        if (!used.count(name)) {
            throw TemplateError("binding '" + name + "' does not appear in template '" +
                                tmpl.key + "'");
        }
    }
    return out;
}

std::string bindings_fingerprint(const std::string& key, const Bindings& bindings) {
    std::uint64_t h = fnv1a64(key);
    h = fnv1a64("\x1f", h);
    for (const auto& [name, value] : bindings) { // std::map: sorted by name
        h = fnv1a64(name, h);
        h = fnv1a64("\x1e", h);
        h = fnv1a64(value, h);
        h = fnv1a64("\x1d", h);
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

TemplateCatalog TemplateCatalog::builtin() {
    TemplateCatalog cat;
    for (const BuiltinEntry& e : kBuiltins) {
        cat.templates_[e.key] = PromptTemplate{e.name, e.key, e.text};
    }
    return cat;
}

TemplateCatalog TemplateCatalog::with_overrides(const std::filesystem::path& dir) {
    TemplateCatalog cat = builtin();
    for (auto& [key, tmpl] : cat.templates_) {
        std::filesystem::path file = dir / (key + ".txt");
        if (!std::filesystem::exists(file)) continue;
        std::ifstream in(file, std::ios::binary);
        if (!in) throw TemplateError("cannot read template file: " + file.string());
        std::ostringstream buf;
        buf << in.rdbuf();
        std::string text = buf.str();
        while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
        tmpl.text = text;
    }
    return cat;
}

const PromptTemplate& TemplateCatalog::get(const std::string& key) const {
    auto it = templates_.find(key);
    if (it == templates_.end()) throw TemplateError("unknown template key: " + key);
    return it->second;
}

const PromptTemplate& TemplateCatalog::judge_for(Category c, bool abstention) const {
    if (abstention) return get("judge_unanswerable");
    switch (c) {
        case Category::TemporalReasoning: return get("judge_temporal");
        case Category::KnowledgeUpdate: return get("judge_update");
        case Category::SinglePreference: return get("judge_preference");
        default: return get("judge_qa");
    }
}

std::vector<std::string> TemplateCatalog::keys() const {
    std::vector<std::string> out;
    for (const auto& [key, tmpl] : templates_) out.push_back(key);
    return out;
}

} // namespace metamem
