#include "metamem/prompts.hpp"

#include "metamem/errors.hpp"
#include "metamem/retrieval.hpp"

namespace metamem {

ChatProvider& Pipeline::actor_provider() const {
    if (!actor) throw ConfigError("actor provider not configured");
    return *actor;
}

ChatProvider& Pipeline::judge_provider() const {
    if (!judge) throw ConfigError("judge provider not configured");
    return *judge;
}

ChatProvider& Pipeline::classifier_provider() const {
    if (!classifier) throw ConfigError("classifier provider not configured");
    return *classifier;
}

const TemplateCatalog& Pipeline::catalog() const {
    if (!templates) throw ConfigError("template catalog not configured");
    return *templates;
}

CompletionRequest make_request(const TemplateCatalog& catalog, const std::string& key,
                               const Bindings& bindings) {
    const PromptTemplate& tmpl = catalog.get(key);
    CompletionRequest req;
    req.user = fill(tmpl, bindings);
    req.template_key = key;
    req.fingerprint = bindings_fingerprint(key, bindings);
    return req;
}

std::string query_text(const std::string& question,
                       const std::optional<std::string>& question_date) {
    if (question_date && !question_date->empty()) {
        return "[" + format_timestamp(*question_date) + "] " + question;
    }
    return question;
}

std::vector<const MemoryUnit*> select_memory_units(const Pipeline& pipe,
                                                   const EvalInstance& inst) {
    std::vector<const MemoryUnit*> all;
    all.reserve(inst.memory.units.size());
    for (const MemoryUnit& u : inst.memory.units) all.push_back(&u);

    const std::size_t k = pipe.retrieve_topk > 0 ? static_cast<std::size_t>(pipe.retrieve_topk) : 0;
    if (!pipe.embedder || k == 0 || all.size() <= k) return all;

    // Gather vectors in unit order, batch-embedding the ones without a
    // stored embedding, so index tie-breaks follow memory-set order.
    std::vector<std::vector<double>> vecs(all.size());
    std::vector<std::string> missing_texts;
    std::vector<std::size_t> missing_pos;
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (all[i]->embedding) {
            vecs[i] = *all[i]->embedding;
        } else {
            missing_texts.push_back(all[i]->text);
            missing_pos.push_back(i);
        }
    }
    if (!missing_texts.empty()) {
        auto embedded = pipe.embedder->embed(missing_texts);
        for (std::size_t i = 0; i < missing_pos.size(); ++i) {
            vecs[missing_pos[i]] = std::move(embedded[i]);
        }
    }
    VectorIndex index(pipe.embedder->dim());
    for (std::size_t i = 0; i < all.size(); ++i) {
        index.add(all[i]->id, std::move(vecs[i]));
    }
    const std::string query = query_text(inst.question, inst.question_date);
    auto qvec = pipe.embedder->embed({query}).front();
    auto ranked = index.top_k(qvec, k);

    std::vector<const MemoryUnit*> out;
    out.reserve(ranked.size());
    for (const ScoredId& s : ranked) {
        for (const MemoryUnit* u : all) {
            if (u->id == s.id) {
                out.push_back(u);
                break;
            }
        }
    }
    return out;
}

std::string render_memory_units(std::span<const MemoryUnit* const> units) {
    std::string out;
    for (std::size_t i = 0; i < units.size(); ++i) {
        const MemoryUnit& u = *units[i];
        if (i) out += "\n\n";
        out += '[' + std::to_string(i + 1) + ']';
        if (u.timestamp && !u.timestamp->empty()) out += ' ' + format_timestamp(*u.timestamp);
        if (!u.topic.empty()) out += " | " + u.topic;
        out += '\n' + u.text;
    }
    return out.empty() ? "(no memories)" : out;
}

std::string render_memory_units(const MemorySet& mem) {
    std::vector<const MemoryUnit*> ptrs;
    ptrs.reserve(mem.units.size());
    for (const MemoryUnit& u : mem.units) ptrs.push_back(&u);
    return render_memory_units(ptrs);
}

std::string render_experiences_block(const MetaMemoryState& state) {
    const std::string rendered = render_meta_memory(state);
    if (rendered.empty()) return "";
    return "\n\nExperiences learned from earlier tasks about how to use memories well:\n" +
           rendered + "\nApply these experiences when reading the memories below.";
}

std::string render_sessions(std::span<const Session> sessions) {
    std::string out;
    for (std::size_t i = 0; i < sessions.size(); ++i) {
        const Session& s = sessions[i];
        if (i) out += "\n\n";
        out += "Session " + s.id;
        for (const Turn& t : s.turns) {
            if (t.timestamp && !t.timestamp->empty()) {
                out += " (" + format_timestamp(*t.timestamp) + ")";
                break;
            }
        }
        out += ':';
        for (const Turn& t : s.turns) {
            out += '\n' + to_string(t.role) + ": " + t.text;
        }
    }
    return out.empty() ? "(no sessions)" : out;
}

std::vector<std::string> turn_chunks(std::span<const Session> sessions) {
    std::vector<std::string> chunks;
    for (const Session& s : sessions) {
        for (const Turn& t : s.turns) {
            std::string chunk;
            if (t.timestamp && !t.timestamp->empty()) {
                chunk += format_timestamp(*t.timestamp) + " ";
            }
            chunk += to_string(t.role) + ": " + t.text;
            chunks.push_back(std::move(chunk));
        }
    }
    return chunks;
}

} // namespace metamem
