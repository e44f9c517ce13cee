#pragma once

#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "metamem/types.hpp"

namespace metamem {

struct ScoredId {
    std::string id;
    double score = 0.0;
};

// Cosine similarity; any zero-norm operand scores -inf so degenerate
// vectors sort last instead of crashing.
double cosine(std::span<const double> a, std::span<const double> b);

// Exact brute-force index. Memory sets here are hundreds of units, so a
// full scan is both fast enough and trivially testable.
class VectorIndex {
public:
    struct Entry {
        std::string id;
        std::vector<double> vec;
    };

    explicit VectorIndex(int dim);

    int dim() const { return dim_; }
    std::size_t size() const { return entries_.size(); }
    const std::vector<Entry>& entries() const { return entries_; }

    // Upsert: a duplicate id replaces the prior vector in place, keeping
    // the original insertion position.
    void add(const std::string& id, std::vector<double> vec);
    void add(const MemoryUnit& unit); // requires unit.embedding

    // min(k, size) results by descending cosine similarity; ties broken by
    // insertion order, earlier entry first.
    std::vector<ScoredId> top_k(std::span<const double> query, std::size_t k) const;

    void save(const std::filesystem::path& path) const;
    static VectorIndex load(const std::filesystem::path& path);

private:
    int dim_;
    std::vector<Entry> entries_;
};

} // namespace metamem
