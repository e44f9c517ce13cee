#include <doctest.h>

#include <filesystem>
#include <set>

#include "metamem/errors.hpp"
#include "metamem/membuild.hpp"

using namespace metamem;

namespace {

Session make_session(const std::string& id, const std::string& text,
                     std::optional<std::string> ts = std::nullopt) {
    Session s;
    s.id = id;
    s.turns.push_back(Turn{Role::User, text, ts});
    s.turns.push_back(Turn{Role::Assistant, "noted", std::nullopt});
    return s;
}

Pipeline make_pipe(ChatProvider* actor, Embedder* embedder, const TemplateCatalog& catalog) {
    Pipeline pipe;
    pipe.actor = actor;
    pipe.embedder = embedder;
    pipe.templates = &catalog;
    return pipe;
}

} // namespace

TEST_CASE("assign_topics greedy clustering") {
    const TemplateCatalog catalog = TemplateCatalog::builtin();

    SUBCASE("one session founds one group") {
        ScriptedEmbedder embedder(2, {}, true);
        const std::vector<Session> sessions = {make_session("s1", "hello")};
        const auto groups = assign_topics(embedder, sessions, 0.8);
        REQUIRE(groups.size() == 1);
        CHECK(groups[0].session_indices == std::vector<std::size_t>{0});
    }

    SUBCASE("identical sessions share a group: self-similarity is 1") {
        ScriptedEmbedder embedder(2, {}, true);
        const std::vector<Session> sessions = {make_session("s1", "same text"),
                                               make_session("s2", "same text")};
        const auto groups = assign_topics(embedder, sessions, 0.8);
        REQUIRE(groups.size() == 1);
        CHECK(groups[0].session_indices.size() == 2);
    }

    SUBCASE("recovers a seeded 3-way partition") {
        // Stub embeddings with known cluster structure: three orthogonal
        // topic axes plus small within-topic jitter.
        std::map<std::string, std::vector<double>> table;
        std::vector<Session> sessions;
        std::vector<int> truth;
        for (int i = 0; i < 10; ++i) {
            const int topic = i % 3;
            const std::string text = "session " + std::to_string(i);
            Session s = make_session("s" + std::to_string(i), text);
            std::vector<double> v(3, 0.0);
            v[topic] = 1.0;
            v[(topic + 1) % 3] = 0.05 * (i % 2); // jitter, cosine stays > 0.99
            table[session_embed_text(s, 4000)] = v;
            sessions.push_back(std::move(s));
            truth.push_back(topic);
        }
        ScriptedEmbedder embedder(3, table);
        const auto groups = assign_topics(embedder, sessions, 0.7);
        REQUIRE(groups.size() == 3);
        for (const TopicGroup& g : groups) {
            const int topic = truth[g.session_indices.front()];
            for (std::size_t idx : g.session_indices) CHECK(truth[idx] == topic);
        }
    }

    SUBCASE("partition property: disjoint and covering") {
        ScriptedEmbedder embedder(4, {}, true);
        std::vector<Session> sessions;
        for (int i = 0; i < 17; ++i) {
            sessions.push_back(make_session("s" + std::to_string(i),
                                            "topic word" + std::to_string(i % 5)));
        }
        const auto groups = assign_topics(embedder, sessions, 0.6);
        std::set<std::size_t> seen;
        std::size_t total = 0;
        for (const TopicGroup& g : groups) {
            for (std::size_t idx : g.session_indices) {
                CHECK(seen.insert(idx).second); // disjoint
                ++total;
            }
        }
        CHECK(total == sessions.size()); // covering
    }

    SUBCASE("threshold bounds are enforced") {
        ScriptedEmbedder embedder(2, {}, true);
        const std::vector<Session> sessions = {make_session("s1", "x")};
        CHECK_THROWS_AS(assign_topics(embedder, sessions, 0.0), std::invalid_argument);
        CHECK_THROWS_AS(assign_topics(embedder, sessions, 1.0), std::invalid_argument);
    }
}

TEST_CASE("summarize_topic extracts label, body and timestamps") {
    const TemplateCatalog catalog = TemplateCatalog::builtin();
    ScriptedEmbedder embedder(2, {}, true);

    SUBCASE("first line is the topic label") {
        ScriptedChatProvider actor(std::vector<std::string>{"Travel\nUser drove 1800 miles total"});
        Pipeline pipe = make_pipe(&actor, &embedder, catalog);
        const std::vector<Session> sessions = {make_session("s1", "road trips")};
        const TopicGroup group{{0}, {}};
        const MemoryUnit unit = summarize_topic(pipe, sessions, group, 1);
        CHECK(unit.topic == "Travel");
        CHECK(unit.text.find("1800 miles") != std::string::npos);
        CHECK(unit.id == "m1");
    }

    SUBCASE("timestamps carry into the unit text verbatim") {
        ScriptedChatProvider actor(std::vector<std::string>{"Trips\nDrove a lot"});
        Pipeline pipe = make_pipe(&actor, &embedder, catalog);
        const std::vector<Session> sessions = {
            make_session("s1", "trip one", "2023-05-23 16:14")};
        const TopicGroup group{{0}, {}};
        const MemoryUnit unit = summarize_topic(pipe, sessions, group, 1);
        CHECK(unit.text.find("2023/05/23 (Tue) 16:14") != std::string::npos);
        CHECK(unit.text.find("Drove a lot") != std::string::npos);
    }

    SUBCASE("single-turn session still summarizes") {
        ScriptedChatProvider actor(std::vector<std::string>{"Note"});
        Pipeline pipe = make_pipe(&actor, &embedder, catalog);
        Session s;
        s.id = "s1";
        s.turns.push_back(Turn{Role::User, "only one turn", std::nullopt});
        const std::vector<Session> sessions = {s};
        const MemoryUnit unit = summarize_topic(pipe, sessions, TopicGroup{{0}, {}}, 1);
        CHECK(unit.topic == "Note");
        CHECK(unit.text == "Note"); // single-line reply doubles as the body
    }

    SUBCASE("empty summaries are never stored") {
        ScriptedChatProvider actor(std::vector<std::string>{"   "});
        Pipeline pipe = make_pipe(&actor, &embedder, catalog);
        const std::vector<Session> sessions = {make_session("s1", "x")};
        CHECK_THROWS_AS(summarize_topic(pipe, sessions, TopicGroup{{0}, {}}, 1), ProviderError);
    }
}

TEST_CASE("build_memory_set composes clustering and summarization") {
    const TemplateCatalog catalog = TemplateCatalog::builtin();

    SUBCASE("empty input yields an empty set") {
        ScriptedEmbedder embedder(2, {}, true);
        ScriptedChatProvider actor(std::vector<std::string>{});
        Pipeline pipe = make_pipe(&actor, &embedder, catalog);
        CHECK(build_memory_set(pipe, std::vector<Session>{}).units.empty());
    }

    SUBCASE("three seeded groups produce three embedded units") {
        std::map<std::string, std::vector<double>> table;
        std::vector<Session> sessions;
        for (int i = 0; i < 6; ++i) {
            Session s = make_session("s" + std::to_string(i), "text " + std::to_string(i));
            std::vector<double> v(3, 0.0);
            v[i % 3] = 1.0;
            table[session_embed_text(s, 4000)] = v;
            sessions.push_back(std::move(s));
        }
        ScriptedEmbedder embedder(3, table, true); // summaries fall back to hashing
        ScriptedChatProvider actor(std::vector<std::string>{
            "Topic A\nsummary a", "Topic B\nsummary b", "Topic C\nsummary c"});
        Pipeline pipe = make_pipe(&actor, &embedder, catalog);

        const MemorySet mem = build_memory_set(pipe, sessions);
        REQUIRE(mem.units.size() == 3);
        for (const MemoryUnit& u : mem.units) {
            REQUIRE(u.embedding.has_value());
            CHECK(u.embedding->size() == 3); // configured dim
            CHECK_FALSE(u.text.empty());
        }
        CHECK(mem.units[0].topic == "Topic A");
    }

    SUBCASE("identical inputs produce identical sets") {
        std::vector<Session> sessions = {make_session("s1", "alpha"), make_session("s2", "beta")};
        auto run = [&] {
            ScriptedEmbedder embedder(4, {}, true);
            ScriptedChatProvider actor(
                std::vector<std::string>{"T1\nsum one", "T2\nsum two"});
            Pipeline pipe = make_pipe(&actor, &embedder, catalog);
            return build_memory_set(pipe, sessions, MemBuildOptions{.threshold = 0.95});
        };
        CHECK(run() == run());
    }
}

TEST_CASE("sessions round-trip through JSONL") {
    const auto dir = std::filesystem::temp_directory_path() / "metamem_tests";
    std::filesystem::create_directories(dir);
    const auto path = dir / "sessions.jsonl";

    std::vector<Session> sessions = {make_session("s1", "hello", "2023-01-02 03:04"),
                                     make_session("s2", "world")};
    save_sessions_jsonl(sessions, path);
    const auto loaded = load_sessions_jsonl(path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded == sessions);
}
