#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "bamaer/filter.hpp"
#include "support.hpp"

using namespace bamaer;

namespace {

Vec random_progress(Rng& rng, std::size_t n) {
    Vec q = Vec::Zero(Eigen::Index(n));
    for (auto& x : q) x = uniform01(rng);
    return q;
}

Vec random_mastery(Rng& rng, std::size_t n) {
    Vec z = Vec::Zero(Eigen::Index(n));
    for (auto& x : z) x = uniform01(rng);
    return z;
}

// Scores everything, sorts the whole list by (omega, id), keeps the first k.
std::vector<ScoredExercise> brute_force(const ExerciseBank& bank, const Vec& q, std::span<const double> d,
                                        const FilterConfig& cfg) {
    std::vector<ScoredExercise> all;
    for (const auto& ex : bank.exercises()) all.push_back(omega_score(ex, q, d[ex.id()], cfg));
    std::sort(all.begin(), all.end(), [](const ScoredExercise& a, const ScoredExercise& b) {
        return a.omega != b.omega ? a.omega < b.omega : a.id < b.id;
    });
    all.resize(std::min(all.size(), cfg.candidate_size));
    return all;
}

}  // namespace

TEST_CASE("cosine similarity examples") {
    Vec a(3), b(3);
    a << 1, 2, 3;
    CHECK(cosine_similarity(a, a) == doctest::Approx(1.0).epsilon(1e-15));
    a << 1, 0, 0;
    b << 0, 2, 0;
    CHECK(cosine_similarity(a, b) == 0.0);
    std::vector<std::uint8_t> kc{1, 1, 0};
    Vec q(3);
    q << 0.5, 0.0, 0.5;
    CHECK(cosine_similarity(kc, q) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(cosine_similarity(kc, Vec::Zero(3)) == 0.0);
    CHECK(cosine_similarity(Vec::Zero(3), q) == 0.0);
}

TEST_CASE("the byte and vector forms of cosine similarity agree") {
    Rng rng(1);
    auto bank = testing::random_bank(rng, 200, 12);
    for (const auto& ex : bank.exercises()) {
        Vec q = random_progress(rng, 12);
        Vec kc = Vec::Zero(12);
        for (std::size_t i = 0; i < 12; ++i) kc[Eigen::Index(i)] = ex.kc_vector()[i];
        const double c = cosine_similarity(ex.kc_vector(), q);
        CHECK(std::abs(c - cosine_similarity(kc, q)) < 1e-14);
        CHECK(c >= 0.0);
        CHECK(c <= 1.0 + 1e-15);
    }
}

TEST_CASE("omega examples") {
    Exercise ex(0, {0}, 2);
    Vec q(2);
    FilterConfig cfg;
    cfg.delta = 0.9;
    // cos((1,0),(0.6,0.8)) = 0.6 and |0.9 - 0.1| = 0.8
    q << 0.6, 0.8;
    auto s = omega_score(ex, q, 0.1, cfg);
    CHECK(s.cossim == doctest::Approx(0.6).epsilon(1e-14));
    CHECK(s.dist == doctest::Approx(0.8).epsilon(1e-14));
    CHECK(s.omega == doctest::Approx(1.0).epsilon(1e-14));

    q << 0.0, 1.0;
    auto zero = omega_score(ex, q, 0.9, cfg);
    CHECK(zero.omega == 0.0);

    cfg.orientation = SimilarityOrientation::Dissimilarity;
    q << 1.0, 0.0;
    auto dis = omega_score(ex, q, 0.9, cfg);
    CHECK(dis.cossim == 0.0);
    CHECK(dis.omega == 0.0);
}

TEST_CASE("omega is the hypotenuse of its components") {
    Rng rng(4);
    auto bank = testing::random_bank(rng, 500, 15);
    for (auto orientation : {SimilarityOrientation::Literal, SimilarityOrientation::Dissimilarity}) {
        FilterConfig cfg;
        cfg.orientation = orientation;
        for (const auto& ex : bank.exercises()) {
            Vec q = random_progress(rng, 15);
            cfg.delta = uniform01(rng);
            const double d = uniform01(rng);
            auto s = omega_score(ex, q, d, cfg);
            double raw = 0.0, nq = 0.0, nk = 0.0;
            for (std::size_t i = 0; i < 15; ++i) {
                raw += ex.kc_vector()[i] * q[Eigen::Index(i)];
                nq += q[Eigen::Index(i)] * q[Eigen::Index(i)];
                nk += ex.kc_vector()[i];
            }
            double cos = raw / (std::sqrt(nq) * std::sqrt(nk));
            if (orientation == SimilarityOrientation::Dissimilarity) cos = 1.0 - cos;
            const double dist = std::abs(cfg.delta - d);
            CHECK(std::abs(s.cossim - cos) < 1e-12);
            CHECK(s.dist == dist);
            CHECK(std::abs(s.omega - std::sqrt(cos * cos + dist * dist)) < 1e-12);
            CHECK(s.omega >= 0.0);
        }
    }
}

TEST_CASE("omega ignores positive rescaling of the coverage vector") {
    Rng rng(9);
    for (int trial = 0; trial < 200; ++trial) {
        Vec q = random_progress(rng, 10);
        Vec kc = Vec::Zero(10);
        for (auto& x : kc) x = uniform_index(rng, 2) ? 1.0 : 0.0;
        kc[0] = 1.0;
        const double scale = uniform(rng, 0.01, 100.0);
        CHECK(std::abs(cosine_similarity(kc, q) - cosine_similarity(Vec(kc * scale), q)) < 1e-12);
    }
}

TEST_CASE("omega is 1-Lipschitz in delta") {
    Rng rng(13);
    auto bank = testing::random_bank(rng, 300, 8);
    for (const auto& ex : bank.exercises()) {
        Vec q = random_progress(rng, 8);
        const double d = uniform01(rng);
        FilterConfig a, b;
        a.delta = uniform01(rng);
        const double eps = uniform(rng, -0.1, 0.1);
        b.delta = std::clamp(a.delta + eps, 0.0, 1.0);
        const double moved = std::abs(b.delta - a.delta);
        auto sa = omega_score(ex, q, d, a), sb = omega_score(ex, q, d, b);
        CHECK(std::abs(sa.dist - sb.dist) <= moved + 1e-15);
        CHECK(std::abs(sa.omega - sb.omega) <= moved + 1e-15);
    }
}

TEST_CASE("difficulty is one minus the product of concept mastery") {
    Rng rng(2);
    auto bank = testing::random_bank(rng, 100, 9);
    Vec z = random_mastery(rng, 9);
    auto d = exercise_difficulties(bank, z);
    REQUIRE(d.size() == 100);
    for (const auto& ex : bank.exercises()) {
        double p = 1.0;
        for (auto c : ex.concepts()) p *= z[c];
        CHECK(std::abs(d[ex.id()] - (1.0 - p)) < 1e-15);
    }
    CHECK_THROWS_AS(exercise_difficulties(bank, Vec::Zero(4)), ShapeMismatch);
}

TEST_CASE("candidate set size is clamped to the bank") {
    Rng rng(5);
    auto bank = testing::random_bank(rng, 150, 10);
    auto d = exercise_difficulties(bank, random_mastery(rng, 10));
    auto c = candidate_select(bank, random_progress(rng, 10), d, FilterConfig{});
    CHECK(c.size() == 150);
    CHECK_THROWS_AS(candidate_select(ExerciseBank{}, Vec::Zero(0), {}, FilterConfig{}), EmptyBank);
}

TEST_CASE("equal scores are ordered by id") {
    std::vector<Exercise> ex;
    for (ExerciseId i = 0; i < 6; ++i) ex.emplace_back(i, std::vector<ConceptId>{ConceptId(i % 2)}, 2);
    ExerciseBank bank(std::move(ex), 2);
    std::vector<double> d{0.4, 0.4, 0.4, 0.4, 0.4, 0.4};
    Vec q(2);
    q << 0.5, 0.5;
    FilterConfig cfg;
    cfg.candidate_size = 4;
    auto c = candidate_select(bank, q, d, cfg);
    REQUIRE(c.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(c[i].id == i);
}

TEST_CASE("candidate_select matches a full sort on 1,000 exercises") {
    Rng rng(17);
    for (auto orientation : {SimilarityOrientation::Literal, SimilarityOrientation::Dissimilarity}) {
        for (int trial = 0; trial < 20; ++trial) {
            auto bank = testing::random_bank(rng, 1000, 6);
            Vec q = random_progress(rng, 6);
            auto d = exercise_difficulties(bank, random_mastery(rng, 6));
            FilterConfig cfg;
            cfg.orientation = orientation;
            CHECK(candidate_select(bank, q, d, cfg) == brute_force(bank, q, d, cfg));
        }
    }
}

TEST_CASE("candidate_select matches a full sort on 50 banks of 10,000 exercises") {
    Rng rng(23);
    double seconds = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        auto bank = testing::random_bank(rng, 10000, 40);
        Vec q = random_progress(rng, 40);
        if (trial % 10 == 0) q.setZero();
        auto d = exercise_difficulties(bank, random_mastery(rng, 40));
        FilterConfig cfg;
        cfg.delta = uniform01(rng);
        const auto start = std::chrono::steady_clock::now();
        auto got = candidate_select(bank, q, d, cfg);
        seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        auto want = brute_force(bank, q, d, cfg);
        REQUIRE(got.size() == 200);
        CHECK(got == want);
    }
    MESSAGE("candidate_select on 50 x 10,000 exercises: " << seconds << " s");
    CHECK(seconds < 10.0);
}

TEST_CASE("candidates.csv layout") {
    std::vector<ScoredExercise> c{{7, 0.5, 0.3, 0.4}, {2, 1.0, 0.6, 0.8}};
    std::ostringstream out;
    write_candidates(c, out);
    CHECK(out.str() == "rank,exercise_id,omega,cossim,dist\n1,7,0.5,0.3,0.4\n2,2,1,0.6,0.8\n");
}

TEST_CASE("filter config validation and JSON") {
    FilterConfig cfg;
    cfg.delta = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.delta = 0.3;
    cfg.candidate_size = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.candidate_size = 50;
    cfg.orientation = SimilarityOrientation::Dissimilarity;
    auto back = filter_config_from_json(to_json(cfg));
    CHECK(back.delta == 0.3);
    CHECK(back.candidate_size == 50);
    CHECK(back.orientation == SimilarityOrientation::Dissimilarity);
    auto j = to_json(cfg);
    j["orientation"] = "sideways";
    CHECK_THROWS_AS(filter_config_from_json(j), ConfigError);
}
