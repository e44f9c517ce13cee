#include "metamem/checkpoint.hpp"

#include <fstream>

#include "metamem/errors.hpp"
#include "metamem/evolve.hpp"

namespace metamem {

void to_json(nlohmann::json& j, const BatchRecord& r) {
    j = {{"step", r.step},
         {"batch_id", r.batch_id},
         {"proposed", r.proposed},
         {"kept", r.kept},
         {"counts", {{"add", r.add_count}, {"del", r.del_count}, {"mod", r.mod_count}}},
         {"mean_verdict", r.mean_verdict},
         {"instances_failed", r.instances_failed},
         {"actions", r.kept_actions}};
}

void from_json(const nlohmann::json& j, BatchRecord& r) {
    r.step = j.at("step").get<int>();
    r.batch_id = j.at("batch_id").get<std::string>();
    r.proposed = j.at("proposed").get<int>();
    r.kept = j.at("kept").get<int>();
    const auto& counts = j.at("counts");
    r.add_count = counts.at("add").get<int>();
    r.del_count = counts.at("del").get<int>();
    r.mod_count = counts.at("mod").get<int>();
    r.mean_verdict = j.at("mean_verdict").get<double>();
    r.instances_failed = j.value("instances_failed", 0);
    r.kept_actions = j.at("actions").get<std::vector<UpdateAction>>();
}

void to_json(nlohmann::json& j, const Checkpoint& c) {
    j = {{"schema_version", kCheckpointSchemaVersion},
         {"config_hash", c.config_hash},
         {"state", c.state},
         {"batch_log", c.batch_log}};
}

void from_json(const nlohmann::json& j, Checkpoint& c) {
    const int version = j.at("schema_version").get<int>();
    if (version != kCheckpointSchemaVersion) {
        throw CheckpointError("unsupported checkpoint schema_version " +
                              std::to_string(version));
    }
    c.config_hash = j.at("config_hash").get<std::string>();
    c.state = j.at("state").get<MetaMemoryState>();
    c.batch_log = j.at("batch_log").get<std::vector<BatchRecord>>();
}

std::string checkpoint_to_string(const Checkpoint& c) {
    nlohmann::json j = c;
    return j.dump(2) + "\n";
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path.string());
    out << checkpoint_to_string(c);
    if (!out) throw CheckpointError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("malformed checkpoint " + path.string() + ": " + e.what());
    }
    Checkpoint c;
    try {
        c = j.get<Checkpoint>();
    } catch (const CheckpointError&) {
        throw;
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("malformed checkpoint " + path.string() + ": " + e.what());
    }
    validate(c.state);
    if (c.batch_log.size() != static_cast<std::size_t>(c.state.step)) {
        throw CheckpointError("batch_log length " + std::to_string(c.batch_log.size()) +
                              " does not match state step " + std::to_string(c.state.step));
    }
    for (const BatchRecord& r : c.batch_log) {
        for (const UpdateAction& a : r.kept_actions) {
            if (!action_well_formed(a)) {
                throw CheckpointError("malformed recorded action in batch " + r.batch_id);
            }
        }
    }
    return c;
}

MetaMemoryState replay_batch_log(const Checkpoint& c) {
    MetaMemoryState state;
    for (const BatchRecord& r : c.batch_log) {
        ActionSet set;
        set.step = state.step;
        set.actions = r.kept_actions;
        state = exec_actions(set, state);
    }
    return state;
}

bool verify_replay(const Checkpoint& c) {
    try {
        return replay_batch_log(c) == c.state;
    } catch (const std::exception&) {
        return false;
    }
}

} // namespace metamem
