#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "metamem/errors.hpp"
#include "metamem/retrieval.hpp"
#include "metamem/rng.hpp"

using namespace metamem;

namespace {

std::vector<double> random_vec(DetRng& rng, int dim) {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.next_double() * 2.0 - 1.0;
    return v;
}

// Independent oracle: score every entry, stable-sort descending, truncate.
std::vector<ScoredId> brute_force_topk(const VectorIndex& idx, const std::vector<double>& q,
                                       std::size_t k) {
    std::vector<ScoredId> all;
    for (const auto& e : idx.entries()) {
        double dot = 0.0, nq = 0.0, ne = 0.0;
        for (std::size_t i = 0; i < q.size(); ++i) {
            dot += q[i] * e.vec[i];
            nq += q[i] * q[i];
            ne += e.vec[i] * e.vec[i];
        }
        const double score = (nq == 0.0 || ne == 0.0)
                                 ? -std::numeric_limits<double>::infinity()
                                 : dot / (std::sqrt(nq) * std::sqrt(ne));
        all.push_back({e.id, score});
    }
    std::stable_sort(all.begin(), all.end(),
                     [](const ScoredId& a, const ScoredId& b) { return a.score > b.score; });
    if (all.size() > k) all.resize(k);
    return all;
}

} // namespace

TEST_CASE("top_k basics: self-similarity, orthogonality, zero vectors") {
    VectorIndex idx(3);
    idx.add("a", {1.0, 0.0, 0.0});
    idx.add("b", {0.0, 1.0, 0.0});
    idx.add("z", {0.0, 0.0, 0.0}); // zero-norm sorts last

    const auto hits = idx.top_k(std::vector<double>{1.0, 0.0, 0.0}, 3);
    REQUIRE(hits.size() == 3);
    CHECK(hits[0].id == "a");
    CHECK(hits[0].score == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(hits[1].id == "b");
    CHECK(hits[1].score == doctest::Approx(0.0));
    CHECK(hits[2].id == "z");
    CHECK(std::isinf(hits[2].score));
}

TEST_CASE("index upsert replaces in place") {
    VectorIndex idx(2);
    idx.add("a", {1.0, 0.0});
    idx.add("b", {0.0, 1.0});
    idx.add("a", {0.0, 1.0}); // same id: size unchanged, vector updated
    CHECK(idx.size() == 2);
    CHECK(idx.entries()[0].id == "a");
    CHECK(idx.entries()[0].vec == std::vector<double>{0.0, 1.0});
}

TEST_CASE("index rejects malformed input") {
    VectorIndex idx(4);
    CHECK_THROWS_AS(idx.add("a", {1.0, 2.0, 3.0}), std::invalid_argument);
    CHECK_THROWS_AS(idx.add("a", {1.0, 2.0, 3.0, std::nan("")}), std::invalid_argument);
    MemoryUnit no_embedding{"m1", "t", "text", std::nullopt, std::nullopt};
    CHECK_THROWS_AS(idx.add(no_embedding), std::invalid_argument);
    idx.add("a", {1.0, 0.0, 0.0, 0.0});
    CHECK_THROWS_AS(idx.top_k(std::vector<double>{1.0}, 1), std::invalid_argument);
    CHECK_THROWS_AS(idx.top_k(std::vector<double>{1.0, 0.0, 0.0, 0.0}, 0), std::invalid_argument);
}

TEST_CASE("top_k matches the exhaustive oracle on random data") {
    DetRng rng(1234);
    VectorIndex idx(8);
    std::vector<std::vector<double>> vecs;
    for (int i = 0; i < 50; ++i) {
        auto v = random_vec(rng, 8);
        idx.add("v" + std::to_string(i), v);
        vecs.push_back(std::move(v));
    }
    const auto q = random_vec(rng, 8);
    const auto got = idx.top_k(q, 20);
    const auto want = brute_force_topk(idx, q, 20);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].id == want[i].id);
        CHECK(got[i].score == doctest::Approx(want[i].score).epsilon(1e-12));
    }
}

TEST_CASE("top_k properties: permutation, prefix stability, scale invariance") {
    DetRng rng(99);
    VectorIndex idx(4);
    for (int i = 0; i < 30; ++i) {
        idx.add("v" + std::to_string(i), random_vec(rng, 4));
    }
    // Duplicated vectors force tie-breaks.
    idx.add("dup1", idx.entries()[3].vec);
    idx.add("dup2", idx.entries()[3].vec);

    const auto q = random_vec(rng, 4);

    // k = |entries| is a permutation of all ids.
    const auto all = idx.top_k(q, idx.size());
    CHECK(all.size() == idx.size());
    std::vector<std::string> ids;
    for (const auto& s : all) ids.push_back(s.id);
    std::sort(ids.begin(), ids.end());
    CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());

    // top_k is a prefix of top_{k+1}.
    for (std::size_t k = 1; k + 1 <= idx.size(); ++k) {
        const auto smaller = idx.top_k(q, k);
        const auto larger = idx.top_k(q, k + 1);
        for (std::size_t i = 0; i < smaller.size(); ++i) {
            CHECK(smaller[i].id == larger[i].id);
        }
    }

    // Ordering is invariant under positive scaling of the query.
    std::vector<double> scaled = q;
    for (double& x : scaled) x *= 37.5;
    const auto scaled_hits = idx.top_k(scaled, idx.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
        CHECK(all[i].id == scaled_hits[i].id);
    }
}

TEST_CASE("index persists and reloads") {
    VectorIndex idx(3);
    idx.add("a", {1.0, 2.0, 3.0});
    idx.add("b", {-1.0, 0.5, 0.0});
    const auto path = std::filesystem::temp_directory_path() / "metamem_tests" / "index.json";
    std::filesystem::create_directories(path.parent_path());
    idx.save(path);
    const VectorIndex loaded = VectorIndex::load(path);
    CHECK(loaded.dim() == 3);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded.entries()[0].id == "a");
    CHECK(loaded.entries()[1].vec == std::vector<double>{-1.0, 0.5, 0.0});
}
