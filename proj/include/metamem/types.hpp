#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace metamem {

// ---------------------------------------------------------------------------
// Meta-memory: the evolving list of knowledge-utilization experiences.
// ---------------------------------------------------------------------------

// One experience entry. Ids are assigned monotonically per run and never
// reused after deletion, which makes batch-log replay unambiguous.
struct MetaUnit {
    std::uint64_t id = 0;
    std::string text;
    int created_step = 0;
    int last_modified_step = 0;

    bool operator==(const MetaUnit&) const = default;
};

struct MetaMemoryState {
    std::vector<MetaUnit> units; // order is stable; prompt index j = position
    int step = 0;
    std::uint64_t next_id = 1;

    bool operator==(const MetaMemoryState&) const = default;
};

// Throws CheckpointError on duplicate ids, empty texts or step ordering
// violations.
void validate(const MetaMemoryState& state);

// Numbered one-line-per-unit rendering, "[1] text". Empty state renders as
// the empty string so prompts can omit the experiences block entirely.
std::string render_meta_memory(const MetaMemoryState& state);

// ---------------------------------------------------------------------------
// Factual memory: topic-aggregated summaries retrieved as answer context.
// ---------------------------------------------------------------------------

struct MemoryUnit {
    std::string id;
    std::string topic;
    std::string text;
    std::optional<std::string> timestamp;
    std::optional<std::vector<double>> embedding;

    bool operator==(const MemoryUnit&) const = default;
};

struct MemorySet {
    std::vector<MemoryUnit> units;

    bool operator==(const MemorySet&) const = default;
};

void validate(const MemorySet& mem);

// ---------------------------------------------------------------------------
// Raw interaction sessions (memory-construction input).
// ---------------------------------------------------------------------------

enum class Role { User, Assistant };

Role role_from_string(const std::string& s); // strict
std::string to_string(Role r);

struct Turn {
    Role role = Role::User;
    std::string text;
    std::optional<std::string> timestamp;

    bool operator==(const Turn&) const = default;
};

struct Session {
    std::string id;
    std::vector<Turn> turns;

    bool operator==(const Session&) const = default;
};

// Normalizes a timestamp to the `YYYY/MM/DD (Day) HH:MM` rendering used in
// prompts. Accepts `YYYY-MM-DD[ HH:MM]` and `YYYY/MM/DD[ HH:MM]`; strings
// already in the canonical form (or unparseable ones) pass through as-is.
std::string format_timestamp(const std::string& raw);

// ---------------------------------------------------------------------------
// Evaluation instances.
// ---------------------------------------------------------------------------

enum class Category {
    SingleUser,
    SingleAssistant,
    MultiSession,
    TemporalReasoning,
    KnowledgeUpdate,
    SinglePreference,
    Other,
};

Category category_from_string(const std::string& s); // strict, rejects unknowns
std::string to_string(Category c);

// The canonical reporting order (Single User, Single Assistant, Multi
// Session, Temporal Reasoning, Knowledge Update, Single Preference).
const std::vector<Category>& report_categories();

struct EvalInstance {
    std::string id;
    std::string question;
    std::string answer;
    MemorySet memory;
    Category category = Category::Other;
    std::optional<std::string> question_date;
    bool abstention = false;       // routed to the unanswerable judge
    std::vector<Session> sessions; // raw source sessions, may be empty
};

struct Dataset {
    std::vector<EvalInstance> instances;
};

// ---------------------------------------------------------------------------
// Sampled trajectories.
// ---------------------------------------------------------------------------

struct Trajectory {
    std::string response;
    std::optional<int> verdict;             // 0/1 once judged
    std::optional<std::string> reflection;  // present iff the reflect stage ran
    int sample_index = 0;
};

// ---------------------------------------------------------------------------
// Meta-memory update actions.
// ---------------------------------------------------------------------------

enum class ActionKind { Add, Del, Mod };

ActionKind action_kind_from_string(const std::string& s); // strict
std::string to_string(ActionKind k);

struct UpdateAction {
    ActionKind kind = ActionKind::Add;
    std::optional<int> index;           // 1-based into the pre-state; DEL/MOD only
    std::optional<std::string> content; // ADD/MOD only
    std::string provenance;             // id of the originating instance

    bool operator==(const UpdateAction&) const = default;
};

// Shape invariants: ADD has content and no index, DEL has index and no
// content, MOD has both; contents are non-empty after trimming.
bool action_well_formed(const UpdateAction& a);

// Well-formed and index (when present) within [1, state_size].
bool action_valid(const UpdateAction& a, std::size_t state_size);

struct ActionSet {
    std::vector<UpdateAction> actions;
    int step = 0;
};

// ---------------------------------------------------------------------------
// JSON conversions (nlohmann ADL hooks). Enum parsers are strict: unknown
// variants are rejected.
// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const MetaUnit& u);
void from_json(const nlohmann::json& j, MetaUnit& u);
void to_json(nlohmann::json& j, const MetaMemoryState& s);
void from_json(const nlohmann::json& j, MetaMemoryState& s);
void to_json(nlohmann::json& j, const MemoryUnit& u);
void from_json(const nlohmann::json& j, MemoryUnit& u);
void to_json(nlohmann::json& j, const MemorySet& m);
void from_json(const nlohmann::json& j, MemorySet& m);
void to_json(nlohmann::json& j, const Turn& t);
void from_json(const nlohmann::json& j, Turn& t);
void to_json(nlohmann::json& j, const Session& s);
void from_json(const nlohmann::json& j, Session& s);
void to_json(nlohmann::json& j, const UpdateAction& a);
void from_json(const nlohmann::json& j, UpdateAction& a);
void to_json(nlohmann::json& j, const EvalInstance& e);
void from_json(const nlohmann::json& j, EvalInstance& e);

std::string trim(const std::string& s);

} // namespace metamem
