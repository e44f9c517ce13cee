#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "metamem/types.hpp"

namespace metamem {

inline constexpr int kCheckpointSchemaVersion = 1;

// Per-batch record. Carries the kept actions so the whole run can be
// replayed from the empty state.
struct BatchRecord {
    int step = 0; // step index after applying this batch (1-based)
    std::string batch_id;
    int proposed = 0; // |O_t|
    int kept = 0;     // |kept_actions|
    int add_count = 0;
    int del_count = 0;
    int mod_count = 0;
    double mean_verdict = 0.0;
    int instances_failed = 0;
    std::vector<UpdateAction> kept_actions;

    bool operator==(const BatchRecord&) const = default;
};

struct Checkpoint {
    MetaMemoryState state;
    std::string config_hash;
    std::vector<BatchRecord> batch_log; // length equals state.step

    bool operator==(const Checkpoint&) const = default;
};

void to_json(nlohmann::json& j, const BatchRecord& r);
void from_json(const nlohmann::json& j, BatchRecord& r);
void to_json(nlohmann::json& j, const Checkpoint& c);
void from_json(const nlohmann::json& j, Checkpoint& c);

// Canonical serialized form (sorted keys, two-space indent, trailing
// newline). Re-saving a loaded checkpoint is byte-stable.
std::string checkpoint_to_string(const Checkpoint& c);

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);

// Throws CheckpointError on schema-version mismatch, batch_log length not
// matching state.step, duplicate unit ids, or other invariant violations.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Folds every recorded kept-action set over the empty state via
// exec_actions. The result must equal c.state verbatim.
MetaMemoryState replay_batch_log(const Checkpoint& c);
bool verify_replay(const Checkpoint& c);

} // namespace metamem
