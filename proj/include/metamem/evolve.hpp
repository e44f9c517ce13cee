#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "metamem/checkpoint.hpp"
#include "metamem/pipeline.hpp"
#include "metamem/types.hpp"

namespace metamem {

struct TrainConfig {
    int k_samples = 5;
    int batch_size = 50;
    int epochs = 5;
    double sample_temperature = 0.7;
    double sample_top_p = 0.95;
    int sample_max_tokens = 4000;
    std::int64_t seed = 42;
};

void validate(const TrainConfig& cfg);

// A contiguous slice of the (shuffled) training order, processed against a
// frozen meta-memory state.
struct TrainingBatch {
    std::vector<const EvalInstance*> instances;
    int step = 0; // pre-state step t
    std::string batch_id;
};

// --- per-instance stages -----------------------------------------------------

// k sampled trajectories, verdicts unset. Every prompt in a batch renders
// the same frozen pre-state.
std::vector<Trajectory> sample_responses(const Pipeline& pipe, const EvalInstance& inst,
                                         const MetaMemoryState& state, const TrainConfig& cfg,
                                         std::optional<std::int64_t> request_seed = {});

// Fills the category-specific judge template and parses the reply for a
// final standalone yes/no token; anything unparseable scores 0 with a
// warning rather than crashing.
Trajectory judge_response(const Pipeline& pipe, const EvalInstance& inst, Trajectory traj);

// Correct and incorrect trajectories are both reflected; the prompt
// branches on the verdict. A provider failure records an empty reflection,
// which excludes the trajectory from action proposal.
Trajectory reflect(const Pipeline& pipe, const EvalInstance& inst, Trajectory traj,
                   const TrainConfig& cfg);

// One action-proposal call per instance; the reply may contain several
// edits as a JSON array. Out-of-range indices are dropped with a warning.
std::vector<UpdateAction> propose_action(const Pipeline& pipe, const EvalInstance& inst,
                                         const std::vector<Trajectory>& trajectories,
                                         const MetaMemoryState& state, const TrainConfig& cfg);

// --- per-batch stages ---------------------------------------------------------

// LLM conflict resolution over the whole proposed set, then mechanical
// sanitization so exec is total. An unparseable filter reply falls back to
// sanitizing the proposals alone. chunk_size > 0 filters the proposals in
// chunks of that size (prompt-length fallback for large batches).
ActionSet filter_actions(const Pipeline& pipe, const ActionSet& proposed,
                         const MetaMemoryState& state, int chunk_size = 0,
                         const TrainConfig& cfg = {});

// Mechanical well-formedness rules: drops malformed and out-of-range
// actions, dedups DELs, keeps the first MOD per index, and lets DEL
// dominate MOD on index collision. ADD order and duplicates are preserved.
ActionSet sanitize_actions(const ActionSet& raw, std::size_t state_size);

// Deterministic application: MODs by ascending index, then DELs by
// descending index, then ADDs in proposal order with fresh ids. All
// indices refer to the pre-state. The input must be sanitized; a
// violation here is a sanitizer bug and aborts.
MetaMemoryState exec_actions(const ActionSet& actions, const MetaMemoryState& state);

// sample -> judge -> reflect -> propose per instance against the frozen
// pre-state; aggregate, filter, exec once at the batch boundary.
std::pair<MetaMemoryState, BatchRecord> run_batch(const Pipeline& pipe,
                                                  const TrainingBatch& batch,
                                                  const MetaMemoryState& state,
                                                  const TrainConfig& cfg,
                                                  int filter_chunk = 0);

struct TrainingOptions {
    std::filesystem::path checkpoint_dir; // empty disables persistence
    std::string config_hash;
    int filter_chunk = 0;
    const Dataset* validation = nullptr; // optional per-step validation scoring
};

struct TrainingResult {
    Checkpoint final_checkpoint;
    std::vector<std::filesystem::path> checkpoint_paths;
};

// Shuffles the instance order once per epoch with the seeded RNG, runs
// epochs x ceil(N / batch_size) steps, persists a checkpoint after every
// batch.
TrainingResult run_training(const Pipeline& pipe, const Dataset& data, const TrainConfig& cfg,
                            const TrainingOptions& opts = {});

// --- parsing helpers (exposed for tests) ---------------------------------------

// First balanced top-level JSON array in free text, string- and
// escape-aware. Returns nullopt when no balanced array exists.
std::optional<std::string> extract_json_array(const std::string& text);

// Parses an LLM action reply: JSON array of {action, index, content}
// objects (1-based indices), validating each element and dropping
// out-of-range indices with a warning. Returns empty on a missing array.
std::vector<UpdateAction> parse_action_reply(const std::string& reply, std::size_t state_size,
                                             const std::string& default_provenance,
                                             bool* parsed_ok = nullptr);

// Lenient verdict parse: the last standalone yes/no token wins; anything
// else is 0 with parsed_ok=false.
int parse_verdict(const std::string& judge_reply, bool* parsed_ok = nullptr);

// Experiences rendering used by the Action/Filter prompts, where an empty
// list must still be visible.
std::string render_experiences_or_empty(const MetaMemoryState& state);

} // namespace metamem
