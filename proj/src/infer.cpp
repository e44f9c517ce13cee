#include "metamem/infer.hpp"

#include "metamem/errors.hpp"
#include "metamem/prompts.hpp"
#include "metamem/retrieval.hpp"

namespace metamem {

InferMode infer_mode_from_string(const std::string& s) {
    if (s == "memory") return InferMode::Memory;
    if (s == "full-text" || s == "full_text") return InferMode::FullText;
    if (s == "rag") return InferMode::Rag;
    throw ConfigError("unknown inference mode: " + s);
}

namespace {

// RAG baseline: every dialogue turn is a chunk, timestamp concatenated
// before embedding, retrieved top-k against the dated question.
std::string render_rag_chunks(const Pipeline& pipe, const EvalInstance& inst) {
    if (!pipe.embedder) throw ConfigError("rag mode requires an embedding provider");
    const auto chunks = turn_chunks(inst.sessions);
    if (chunks.empty()) return "(no sessions)";

    const std::size_t k = pipe.retrieve_topk > 0 ? static_cast<std::size_t>(pipe.retrieve_topk)
                                                 : chunks.size();
    std::vector<std::size_t> picked;
    if (chunks.size() <= k) {
        for (std::size_t i = 0; i < chunks.size(); ++i) picked.push_back(i);
    } else {
        VectorIndex index(pipe.embedder->dim());
        const auto vecs = pipe.embedder->embed(chunks);
        for (std::size_t i = 0; i < chunks.size(); ++i) {
            index.add("c" + std::to_string(i), vecs[i]);
        }
        const auto qvec = pipe.embedder->embed({query_text(inst.question, inst.question_date)})
                              .front();
        for (const ScoredId& s : index.top_k(qvec, k)) {
            picked.push_back(static_cast<std::size_t>(std::stoul(s.id.substr(1))));
        }
    }
    std::string out;
    for (std::size_t i = 0; i < picked.size(); ++i) {
        if (i) out += '\n';
        out += '[' + std::to_string(i + 1) + "] " + chunks[picked[i]];
    }
    return out;
}

CompletionRequest build_request(const Pipeline& pipe, const EvalInstance& inst,
                                const MetaMemoryState& state, const InferOptions& opts) {
    std::string memory_block;
    switch (opts.mode) {
        case InferMode::Memory:
            memory_block = render_memory_units(select_memory_units(pipe, inst));
            break;
        case InferMode::FullText:
            memory_block = render_sessions(inst.sessions);
            break;
        case InferMode::Rag:
            memory_block = render_rag_chunks(pipe, inst);
            break;
    }
    CompletionRequest req =
        make_request(pipe.catalog(), "gen",
                     {{"question", query_text(inst.question, inst.question_date)},
                      {"memory", memory_block},
                      {"experiences_block", render_experiences_block(state)}});
    req.temperature = opts.temperature;
    req.top_p = opts.top_p;
    req.max_tokens = opts.max_tokens;
    req.n_samples = 1;
    return req;
}

} // namespace

std::string build_answer_prompt(const Pipeline& pipe, const EvalInstance& inst,
                                const MetaMemoryState& state, const InferOptions& opts) {
    return build_request(pipe, inst, state, opts).user;
}

std::string answer(const Pipeline& pipe, const EvalInstance& inst, const MetaMemoryState& state,
                   const InferOptions& opts) {
    const CompletionRequest req = build_request(pipe, inst, state, opts);
    return pipe.actor_provider().complete(req).front();
}

std::string answer(const Pipeline& pipe, const std::string& question, const MemorySet& memory,
                   const MetaMemoryState& state, const InferOptions& opts) {
    EvalInstance inst;
    inst.id = "adhoc";
    inst.question = question;
    inst.answer = "-";
    inst.memory = memory;
    return answer(pipe, inst, state, opts);
}

} // namespace metamem
