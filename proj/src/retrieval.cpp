#include "metamem/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "metamem/errors.hpp"

namespace metamem {

double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine: dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return -std::numeric_limits<double>::infinity();
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

VectorIndex::VectorIndex(int dim) : dim_(dim) {
    if (dim < 1) throw std::invalid_argument("index dimension must be positive");
}

void VectorIndex::add(const std::string& id, std::vector<double> vec) {
    if (static_cast<int>(vec.size()) != dim_) {
        throw std::invalid_argument("vector dimension " + std::to_string(vec.size()) +
                                    " does not match index dimension " + std::to_string(dim_));
    }
    for (double v : vec) {
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite vector component");
    }
    for (Entry& e : entries_) {
        if (e.id == id) {
            e.vec = std::move(vec);
            return;
        }
    }
    entries_.push_back(Entry{id, std::move(vec)});
}

void VectorIndex::add(const MemoryUnit& unit) {
    if (!unit.embedding) {
        throw std::invalid_argument("memory unit " + unit.id + " has no embedding");
    }
    add(unit.id, *unit.embedding);
}

std::vector<ScoredId> VectorIndex::top_k(std::span<const double> query, std::size_t k) const {
    if (static_cast<int>(query.size()) != dim_) {
        throw std::invalid_argument("query dimension mismatch");
    }
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    std::vector<ScoredId> scored;
    scored.reserve(entries_.size());
    for (const Entry& e : entries_) {
        scored.push_back(ScoredId{e.id, cosine(query, e.vec)});
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const ScoredId& a, const ScoredId& b) { return a.score > b.score; });
    if (scored.size() > k) scored.resize(k);
    return scored;
}

void VectorIndex::save(const std::filesystem::path& path) const {
    nlohmann::json entries = nlohmann::json::array();
    for (const Entry& e : entries_) {
        entries.push_back({{"id", e.id}, {"vector", e.vec}});
    }
    nlohmann::json j = {{"dim", dim_}, {"entries", entries}};
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw DataError("cannot write index: " + path.string());
    out << j.dump(2) << "\n";
}

VectorIndex VectorIndex::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open index: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed index " + path.string() + ": " + e.what());
    }
    VectorIndex idx(j.at("dim").get<int>());
    for (const auto& item : j.at("entries")) {
        idx.add(item.at("id").get<std::string>(), item.at("vector").get<std::vector<double>>());
    }
    return idx;
}

} // namespace metamem
