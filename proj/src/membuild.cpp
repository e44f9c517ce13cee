#include "metamem/membuild.hpp"

#include <fstream>

#include "metamem/errors.hpp"
#include "metamem/prompts.hpp"
#include "metamem/retrieval.hpp"

namespace metamem {

std::string session_embed_text(const Session& s, std::size_t char_budget) {
    std::string text;
    for (const Turn& t : s.turns) {
        if (!text.empty()) text += '\n';
        text += to_string(t.role) + ": " + t.text;
        if (text.size() >= char_budget) break;
    }
    if (text.size() > char_budget) text.resize(char_budget);
    return text;
}

std::vector<TopicGroup> assign_topics(Embedder& embedder, std::span<const Session> sessions,
                                      double threshold, std::size_t char_budget) {
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw std::invalid_argument("topic threshold must be in (0, 1)");
    }
    std::vector<TopicGroup> groups;
    if (sessions.empty()) return groups;

    std::vector<std::string> texts;
    texts.reserve(sessions.size());
    for (const Session& s : sessions) texts.push_back(session_embed_text(s, char_budget));
    const auto vectors = embedder.embed(texts);

    for (std::size_t i = 0; i < sessions.size(); ++i) {
        const std::vector<double>& v = vectors[i];
        TopicGroup* home = nullptr;
        for (TopicGroup& g : groups) {
            if (cosine(v, g.centroid) >= threshold) {
                home = &g;
                break;
            }
        }
        if (home) {
            // Running mean over member vectors.
            const double n = static_cast<double>(home->session_indices.size());
            for (std::size_t d = 0; d < home->centroid.size(); ++d) {
                home->centroid[d] = (home->centroid[d] * n + v[d]) / (n + 1.0);
            }
            home->session_indices.push_back(i);
        } else {
            groups.push_back(TopicGroup{{i}, v});
        }
    }
    return groups;
}

namespace {

std::string group_timestamps(std::span<const Session> sessions, const TopicGroup& group) {
    std::string out;
    for (std::size_t idx : group.session_indices) {
        for (const Turn& t : sessions[idx].turns) {
            if (t.timestamp && !t.timestamp->empty()) {
                if (!out.empty()) out += "; ";
                out += format_timestamp(*t.timestamp);
                break; // first timestamped turn speaks for the session
            }
        }
    }
    return out;
}

} // namespace

MemoryUnit summarize_topic(const Pipeline& pipe, std::span<const Session> sessions,
                           const TopicGroup& group, int ordinal, const MemBuildOptions& opts) {
    if (group.session_indices.empty()) {
        throw std::invalid_argument("cannot summarize an empty topic group");
    }
    std::vector<Session> members;
    members.reserve(group.session_indices.size());
    for (std::size_t idx : group.session_indices) members.push_back(sessions[idx]);

    CompletionRequest req = make_request(pipe.catalog(), "topic_summarize",
                                         {{"sessions", render_sessions(members)}});
    req.temperature = opts.temperature;
    req.top_p = opts.top_p;
    req.max_tokens = opts.max_tokens;

    const std::string reply = trim(pipe.actor_provider().complete(req).front());
    if (reply.empty()) {
        throw ProviderError("topic summarizer returned an empty summary");
    }

    const std::size_t nl = reply.find('\n');
    std::string topic = trim(nl == std::string::npos ? reply : reply.substr(0, nl));
    std::string body = nl == std::string::npos ? std::string{} : trim(reply.substr(nl + 1));
    if (body.empty()) body = topic; // single-line reply doubles as the summary

    const std::string stamps = group_timestamps(sessions, group);
    MemoryUnit unit;
    unit.id = "m" + std::to_string(ordinal);
    unit.topic = topic;
    unit.text = stamps.empty() ? body : stamps + " " + body;
    if (!stamps.empty()) unit.timestamp = stamps;
    return unit;
}

MemorySet build_memory_set(const Pipeline& pipe, std::span<const Session> sessions,
                           const MemBuildOptions& opts) {
    MemorySet out;
    if (sessions.empty()) return out;
    if (!pipe.embedder) throw ConfigError("memory construction requires an embedding provider");

    const auto groups = assign_topics(*pipe.embedder, sessions, opts.threshold, opts.char_budget);
    out.units.reserve(groups.size());
    for (std::size_t g = 0; g < groups.size(); ++g) {
        out.units.push_back(
            summarize_topic(pipe, sessions, groups[g], static_cast<int>(g + 1), opts));
    }

    std::vector<std::string> texts;
    texts.reserve(out.units.size());
    for (const MemoryUnit& u : out.units) texts.push_back(u.text);
    auto vectors = pipe.embedder->embed(texts);
    for (std::size_t i = 0; i < out.units.size(); ++i) {
        out.units[i].embedding = std::move(vectors[i]);
    }
    validate(out);
    return out;
}

std::vector<Session> load_sessions_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open sessions file: " + path.string());
    std::vector<Session> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            out.push_back(nlohmann::json::parse(line).get<Session>());
        } catch (const nlohmann::json::exception& e) {
            throw DataError("sessions file " + path.string() + " line " +
                            std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

void save_sessions_jsonl(std::span<const Session> sessions, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw DataError("cannot write sessions file: " + path.string());
    for (const Session& s : sessions) {
        out << nlohmann::json(s).dump() << "\n";
    }
}

} // namespace metamem
