#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "metamem/pipeline.hpp"
#include "metamem/types.hpp"

namespace metamem {

struct MemBuildOptions {
    double threshold = 0.75;        // centroid cosine needed to join a group
    std::size_t char_budget = 4000; // session text truncation before embedding
    double temperature = 0.7;
    double top_p = 0.95;
    int max_tokens = 4000;
};

struct TopicGroup {
    std::vector<std::size_t> session_indices; // into the input span, input order
    std::vector<double> centroid;             // running mean of member vectors
};

// Single-pass greedy clustering: each session joins the first existing
// group whose centroid cosine similarity reaches the threshold, else it
// founds a new group. Every session lands in exactly one group.
std::vector<TopicGroup> assign_topics(Embedder& embedder, std::span<const Session> sessions,
                                      double threshold,
                                      std::size_t char_budget = 4000);

// One summarized MemoryUnit for a topic group. The actor's first line is
// the topic label; source-session timestamps are carried into the unit
// text in the YYYY/MM/DD (Day) HH:MM rendering.
MemoryUnit summarize_topic(const Pipeline& pipe, std::span<const Session> sessions,
                           const TopicGroup& group, int ordinal,
                           const MemBuildOptions& opts = {});

// assign_topics, then one summary per group, then embeddings for every
// produced unit.
MemorySet build_memory_set(const Pipeline& pipe, std::span<const Session> sessions,
                           const MemBuildOptions& opts = {});

// JSON Lines session file, one Session per line. Also the post-filter
// ShareGPT ingestion shape.
std::vector<Session> load_sessions_jsonl(const std::filesystem::path& path);
void save_sessions_jsonl(std::span<const Session> sessions, const std::filesystem::path& path);

// Concatenated session text as embedded during clustering.
std::string session_embed_text(const Session& s, std::size_t char_budget);

} // namespace metamem
