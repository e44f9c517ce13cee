#include "metamem/types.hpp"

#include <cctype>
#include <sstream>
#include <unordered_set>

#include "metamem/errors.hpp"

namespace metamem {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

// --- meta-memory -----------------------------------------------------------

void validate(const MetaMemoryState& state) {
    std::unordered_set<std::uint64_t> ids;
    for (const MetaUnit& u : state.units) {
        if (!ids.insert(u.id).second) {
            throw CheckpointError("duplicate meta-unit id " + std::to_string(u.id));
        }
        if (trim(u.text).empty()) {
            throw CheckpointError("meta-unit " + std::to_string(u.id) + " has empty text");
        }
        if (u.created_step < 0 || u.last_modified_step < u.created_step) {
            throw CheckpointError("meta-unit " + std::to_string(u.id) + " has inconsistent steps");
        }
        if (u.id >= state.next_id) {
            throw CheckpointError("meta-unit id " + std::to_string(u.id) +
                                  " not below next_id " + std::to_string(state.next_id));
        }
    }
    if (state.step < 0) throw CheckpointError("negative step");
}

std::string render_meta_memory(const MetaMemoryState& state) {
    std::string out;
    for (std::size_t i = 0; i < state.units.size(); ++i) {
        if (i) out += '\n';
        out += '[' + std::to_string(i + 1) + "] " + state.units[i].text;
    }
    return out;
}

// --- memory set -------------------------------------------------------------

void validate(const MemorySet& mem) {
    std::unordered_set<std::string> ids;
    for (const MemoryUnit& u : mem.units) {
        if (!ids.insert(u.id).second) {
            throw DataError("duplicate memory-unit id " + u.id);
        }
        if (trim(u.text).empty()) {
            throw DataError("memory unit " + u.id + " has empty text");
        }
    }
}

// --- enums ------------------------------------------------------------------

Role role_from_string(const std::string& s) {
    if (s == "user") return Role::User;
    if (s == "assistant") return Role::Assistant;
    throw DataError("unknown role: " + s);
}

std::string to_string(Role r) {
    return r == Role::User ? "user" : "assistant";
}

Category category_from_string(const std::string& s) {
    if (s == "single_user") return Category::SingleUser;
    if (s == "single_assistant") return Category::SingleAssistant;
    if (s == "multi_session") return Category::MultiSession;
    if (s == "temporal_reasoning") return Category::TemporalReasoning;
    if (s == "knowledge_update") return Category::KnowledgeUpdate;
    if (s == "single_preference") return Category::SinglePreference;
    if (s == "other") return Category::Other;
    throw DataError("unknown category: " + s);
}

std::string to_string(Category c) {
    switch (c) {
        case Category::SingleUser: return "single_user";
        case Category::SingleAssistant: return "single_assistant";
        case Category::MultiSession: return "multi_session";
        case Category::TemporalReasoning: return "temporal_reasoning";
        case Category::KnowledgeUpdate: return "knowledge_update";
        case Category::SinglePreference: return "single_preference";
        case Category::Other: return "other";
    }
    return "other";
}

const std::vector<Category>& report_categories() {
    static const std::vector<Category> order = {
        Category::SingleUser,        Category::SingleAssistant,
        Category::MultiSession,      Category::TemporalReasoning,
        Category::KnowledgeUpdate,   Category::SinglePreference,
    };
    return order;
}

ActionKind action_kind_from_string(const std::string& s) {
    if (s == "ADD") return ActionKind::Add;
    if (s == "DEL") return ActionKind::Del;
    if (s == "MOD") return ActionKind::Mod;
    throw DataError("unknown action kind: " + s);
}

std::string to_string(ActionKind k) {
    switch (k) {
        case ActionKind::Add: return "ADD";
        case ActionKind::Del: return "DEL";
        case ActionKind::Mod: return "MOD";
    }
    return "ADD";
}

// --- actions ----------------------------------------------------------------

bool action_well_formed(const UpdateAction& a) {
    const bool has_content = a.content && !trim(*a.content).empty();
    switch (a.kind) {
        case ActionKind::Add: return !a.index && has_content;
        case ActionKind::Del: return a.index.has_value() && !a.content;
        case ActionKind::Mod: return a.index.has_value() && has_content;
    }
    return false;
}

bool action_valid(const UpdateAction& a, std::size_t state_size) {
    if (!action_well_formed(a)) return false;
    if (a.index && (*a.index < 1 || static_cast<std::size_t>(*a.index) > state_size)) return false;
    return true;
}

// --- timestamps -------------------------------------------------------------

namespace {

// Sakamoto's method, Gregorian calendar. Returns 0=Sunday .. 6=Saturday.
int day_of_week(int y, int m, int d) {
    static const int t[] = {0, 3, 2, 5, 0, 3, 5, 1, 4, 6, 2, 4};
    if (m < 3) y -= 1;
    return (y + y / 4 - y / 100 + y / 400 + t[m - 1] + d) % 7;
}

const char* kDayNames[] = {"Sun", "Mon", "Tue", "Wed", "Thu", "Fri", "Sat"};

bool parse_int(const std::string& s, std::size_t b, std::size_t n, int& out) {
    if (b + n > s.size()) return false;
    int v = 0;
    for (std::size_t i = b; i < b + n; ++i) {
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
        v = v * 10 + (s[i] - '0');
    }
    out = v;
    return true;
}

} // namespace

std::string format_timestamp(const std::string& raw) {
    const std::string s = trim(raw);
    // Already canonical: "YYYY/MM/DD (Day) ..." passes through.
    if (s.size() >= 16 && s[4] == '/' && s[7] == '/' && s[10] == ' ' && s[11] == '(') {
        return s;
    }
    int y, mo, d;
    if (s.size() < 10 || !parse_int(s, 0, 4, y) || !parse_int(s, 5, 2, mo) ||
        !parse_int(s, 8, 2, d) || (s[4] != '-' && s[4] != '/') || s[7] != s[4] ||
        mo < 1 || mo > 12 || d < 1 || d > 31) {
        return s; // opaque timestamp, keep verbatim
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d/%02d/%02d (%s)", y, mo, d,
                  kDayNames[day_of_week(y, mo, d)]);
    std::string out = buf;
    int hh, mm;
    if (s.size() >= 16 && (s[10] == ' ' || s[10] == 'T') && parse_int(s, 11, 2, hh) &&
        s[13] == ':' && parse_int(s, 14, 2, mm) && hh < 24 && mm < 60) {
        std::snprintf(buf, sizeof(buf), " %02d:%02d", hh, mm);
        out += buf;
    }
    return out;
}

// --- JSON -------------------------------------------------------------------

void to_json(nlohmann::json& j, const MetaUnit& u) {
    j = {{"id", u.id},
         {"text", u.text},
         {"created_step", u.created_step},
         {"last_modified_step", u.last_modified_step}};
}

void from_json(const nlohmann::json& j, MetaUnit& u) {
    u.id = j.at("id").get<std::uint64_t>();
    u.text = j.at("text").get<std::string>();
    u.created_step = j.at("created_step").get<int>();
    u.last_modified_step = j.at("last_modified_step").get<int>();
}

void to_json(nlohmann::json& j, const MetaMemoryState& s) {
    j = {{"step", s.step}, {"next_id", s.next_id}, {"units", s.units}};
}

void from_json(const nlohmann::json& j, MetaMemoryState& s) {
    s.step = j.at("step").get<int>();
    s.next_id = j.at("next_id").get<std::uint64_t>();
    s.units = j.at("units").get<std::vector<MetaUnit>>();
}

void to_json(nlohmann::json& j, const MemoryUnit& u) {
    j = {{"id", u.id}, {"topic", u.topic}, {"text", u.text}};
    if (u.timestamp) j["timestamp"] = *u.timestamp;
    if (u.embedding) j["embedding"] = *u.embedding;
}

void from_json(const nlohmann::json& j, MemoryUnit& u) {
    u.id = j.at("id").get<std::string>();
    u.topic = j.value("topic", std::string{});
    u.text = j.at("text").get<std::string>();
    u.timestamp.reset();
    if (j.contains("timestamp") && !j["timestamp"].is_null()) {
        u.timestamp = j["timestamp"].get<std::string>();
    }
    u.embedding.reset();
    if (j.contains("embedding") && !j["embedding"].is_null()) {
        u.embedding = j["embedding"].get<std::vector<double>>();
    }
}

void to_json(nlohmann::json& j, const MemorySet& m) {
    j = {{"units", m.units}};
}

void from_json(const nlohmann::json& j, MemorySet& m) {
    m.units = j.at("units").get<std::vector<MemoryUnit>>();
    validate(m);
}

void to_json(nlohmann::json& j, const Turn& t) {
    j = {{"role", to_string(t.role)}, {"text", t.text}};
    if (t.timestamp) j["timestamp"] = *t.timestamp;
}

void from_json(const nlohmann::json& j, Turn& t) {
    t.role = role_from_string(j.at("role").get<std::string>());
    t.text = j.at("text").get<std::string>();
    t.timestamp.reset();
    if (j.contains("timestamp") && !j["timestamp"].is_null()) {
        t.timestamp = j["timestamp"].get<std::string>();
    }
}

void to_json(nlohmann::json& j, const Session& s) {
    j = {{"id", s.id}, {"turns", s.turns}};
}

void from_json(const nlohmann::json& j, Session& s) {
    s.id = j.at("id").get<std::string>();
    s.turns = j.at("turns").get<std::vector<Turn>>();
    if (s.turns.empty()) throw DataError("session " + s.id + " has no turns");
}

void to_json(nlohmann::json& j, const UpdateAction& a) {
    j = {{"action", to_string(a.kind)},
         {"index", a.index ? nlohmann::json(*a.index) : nlohmann::json(nullptr)},
         {"content", a.content ? nlohmann::json(*a.content) : nlohmann::json(nullptr)},
         {"provenance", a.provenance}};
}

void from_json(const nlohmann::json& j, UpdateAction& a) {
    a.kind = action_kind_from_string(j.at("action").get<std::string>());
    a.index.reset();
    if (j.contains("index") && !j["index"].is_null()) a.index = j["index"].get<int>();
    a.content.reset();
    if (j.contains("content") && !j["content"].is_null()) {
        a.content = j["content"].get<std::string>();
    }
    a.provenance = j.value("provenance", std::string{});
}

void to_json(nlohmann::json& j, const EvalInstance& e) {
    j = {{"id", e.id},
         {"question", e.question},
         {"answer", e.answer},
         {"category", to_string(e.category)},
         {"abstention", e.abstention},
         {"memory", e.memory}};
    if (e.question_date) j["question_date"] = *e.question_date;
    if (!e.sessions.empty()) j["sessions"] = e.sessions;
}

void from_json(const nlohmann::json& j, EvalInstance& e) {
    e.id = j.at("id").get<std::string>();
    e.question = j.at("question").get<std::string>();
    e.answer = j.at("answer").get<std::string>();
    e.category = category_from_string(j.at("category").get<std::string>());
    e.abstention = j.value("abstention", false);
    e.memory = j.value("memory", MemorySet{});
    e.question_date.reset();
    if (j.contains("question_date") && !j["question_date"].is_null()) {
        e.question_date = j["question_date"].get<std::string>();
    }
    e.sessions.clear();
    if (j.contains("sessions")) e.sessions = j["sessions"].get<std::vector<Session>>();
    if (trim(e.question).empty()) throw DataError("instance " + e.id + " has empty question");
    if (trim(e.answer).empty()) throw DataError("instance " + e.id + " has empty answer");
}

} // namespace metamem
