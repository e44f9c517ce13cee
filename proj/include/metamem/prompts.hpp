#pragma once

#include <span>
#include <string>
#include <vector>

#include "metamem/pipeline.hpp"
#include "metamem/types.hpp"

namespace metamem {

// Retrieval query text: the raw question with the question date prefixed
// when present, so temporal instances stay date-grounded.
std::string query_text(const std::string& question,
                       const std::optional<std::string>& question_date);

// Selects the memory units rendered into a prompt. Retrieval kicks in only
// when an embedder is configured, topk > 0 and the set is larger than topk;
// otherwise the full set is passed through in order. Units without stored
// embeddings are embedded on the fly.
std::vector<const MemoryUnit*> select_memory_units(const Pipeline& pipe,
                                                   const EvalInstance& inst);

// Numbered block, one unit per entry, timestamps and topic on the header
// line. Each unit's text appears exactly once.
std::string render_memory_units(std::span<const MemoryUnit* const> units);
std::string render_memory_units(const MemorySet& mem);

// Experiences section for the Gen prompt. Empty state renders as the empty
// string so the prompt collapses to the no-meta-memory baseline form.
std::string render_experiences_block(const MetaMemoryState& state);

// Raw-session rendering for the full-text inference mode.
std::string render_sessions(std::span<const Session> sessions);

// One chunk per dialogue turn, timestamp concatenated ahead of the text.
std::vector<std::string> turn_chunks(std::span<const Session> sessions);

} // namespace metamem
