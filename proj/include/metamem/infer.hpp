#pragma once

#include <string>

#include "metamem/pipeline.hpp"
#include "metamem/types.hpp"

namespace metamem {

// Memory renders the retrieved memory set; FullText renders the raw
// sessions instead; Rag renders per-turn chunks retrieved top-k. All three
// compose with the meta-memory experiences block.
enum class InferMode { Memory, FullText, Rag };

InferMode infer_mode_from_string(const std::string& s);

struct InferOptions {
    InferMode mode = InferMode::Memory;
    double temperature = 0.0;
    double top_p = 0.8;
    int max_tokens = 2000;
};

// Meta-memory-augmented answer generation: retrieve, render memories and
// experiences, fill the Gen template, return the single greedy response.
// An empty meta-memory state produces a prompt byte-identical to the
// no-meta-memory baseline.
std::string answer(const Pipeline& pipe, const EvalInstance& inst, const MetaMemoryState& state,
                   const InferOptions& opts = {});

std::string answer(const Pipeline& pipe, const std::string& question, const MemorySet& memory,
                   const MetaMemoryState& state, const InferOptions& opts = {});

// The exact prompt answer() sends, exposed for baseline-equivalence checks.
std::string build_answer_prompt(const Pipeline& pipe, const EvalInstance& inst,
                                const MetaMemoryState& state, const InferOptions& opts = {});

} // namespace metamem
