#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "bamaer/hippo.hpp"
#include "support.hpp"

using namespace bamaer;

namespace {

std::vector<ExerciseId> all_ids(const ExerciseBank& bank) {
    std::vector<ExerciseId> ids;
    for (const auto& ex : bank.exercises()) ids.push_back(ex.id());
    return ids;
}

double exhaustive_best(std::span<const ExerciseId> c, const ExerciseBank& bank) {
    double best = 0.0;
    const std::size_t n = c.size();
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b)
            for (std::size_t d = b + 1; d < n; ++d)
                for (std::size_t e = d + 1; e < n; ++e)
                    for (std::size_t f = e + 1; f < n; ++f) {
                        std::vector<ExerciseId> l{c[a], c[b], c[d], c[e], c[f]};
                        best = std::max(best, list_fitness(l, bank));
                    }
    return best;
}

double random_median(std::span<const ExerciseId> c, const ExerciseBank& bank, std::size_t d, Rng& rng) {
    std::vector<double> f;
    std::vector<ExerciseId> pool(c.begin(), c.end()), pick;
    for (int i = 0; i < 1000; ++i) {
        pick.clear();
        std::sample(pool.begin(), pool.end(), std::back_inserter(pick), d, rng);
        f.push_back(list_fitness(pick, bank));
    }
    std::nth_element(f.begin(), f.begin() + 500, f.end());
    return f[500];
}

// Four clusters of five concepts; each exercise covers 1..3 concepts of one cluster.
ExerciseBank clustered_bank(Rng& rng, std::size_t n) {
    std::vector<Exercise> ex;
    for (std::size_t i = 0; i < n; ++i) {
        const auto cluster = uniform_index(rng, 4);
        std::vector<ConceptId> cs;
        const auto k = 1 + uniform_index(rng, 3);
        for (std::size_t j = 0; j < k; ++j) cs.push_back(ConceptId(cluster * 5 + uniform_index(rng, 5)));
        ex.emplace_back(ExerciseId(i), cs, 20);
    }
    return ExerciseBank(std::move(ex), 20);
}

Objective negated(double (*fn)(std::span<const double>)) {
    return [fn](std::span<const double> x) { return -fn(x); };
}

}  // namespace

TEST_CASE("sine map examples") {
    // sin(pi / 0.7) = -sin(pi * 3 / 7)
    CHECK(sine_map(0.7, 1.0) == doctest::Approx(-std::sin(3.0 * std::numbers::pi / 7.0)).epsilon(1e-15));
    CHECK(sine_map(0.7, 1.0) == doctest::Approx(-0.974928).epsilon(1e-6));
    CHECK(std::abs(sine_map(0.5, 1.0)) < kChaosFloor);
    Rng rng(3);
    auto s = sine_chaotic_stream(0.5, 1.0, 50, rng);
    REQUIRE(s.size() == 50);
    CHECK(std::abs(s[0]) >= kChaosFloor);
}

TEST_CASE("the chaotic stream stays in range and away from zero") {
    Rng rng(7);
    for (double alpha : {0.25, 0.5, 1.0}) {
        for (int trial = 0; trial < 50; ++trial) {
            const double mu0 = uniform(rng, -alpha, alpha);
            for (double v : sine_chaotic_stream(mu0, alpha, 200, rng)) {
                CHECK(std::abs(v) <= alpha);
                CHECK(std::abs(v) >= kChaosFloor);
            }
        }
    }
    auto zero = sine_chaotic_stream(0.0, 1.0, 10, rng);
    for (double v : zero) CHECK(std::isfinite(v));
}

TEST_CASE("chaotic initialization is inside bounds and scores every individual") {
    HoConfig cfg;
    cfg.lower = -2.0;
    cfg.upper = 3.0;
    Rng rng(1);
    int calls = 0;
    auto pop = sine_chaotic_init(cfg, [&](std::span<const double> x) { ++calls; return x[0]; }, rng);
    CHECK(calls == 50);
    CHECK(pop.positions.rows() == 50);
    CHECK(pop.positions.cols() == 5);
    CHECK(pop.positions.minCoeff() >= -2.0);
    CHECK(pop.positions.maxCoeff() <= 3.0);
    CHECK(pop.best_fitness == *std::max_element(pop.fitness.begin(), pop.fitness.end()));
    CHECK(pop.best[0] == pop.best_fitness);
}

TEST_CASE("river moves") {
    Vec x(3), b(3), g = Vec::Zero(3), m(3);
    x << 0.1, 0.5, 0.9;
    b << 0.3, 0.3, 0.3;
    m << 0.2, 0.2, 0.2;
    CHECK(river_move(x, b, g, 1) == x);
    CHECK(river_move(x, b, g, 2) == x);
    CHECK(river_mean_move(x, b, m, g, 2) == x);
    CHECK(river_move(b, b, Vec::Ones(3), 1) == b);
    Vec want(3);
    want << 0.1 + 0.5 * (0.3 - 0.2), 0.5 + 0.5 * (0.3 - 1.0), 0.9 + 0.5 * (0.3 - 1.8);
    CHECK((river_move(x, b, Vec::Constant(3, 0.5), 2) - want).norm() < 1e-15);
}

TEST_CASE("predator positions lie at or below the lower bound") {
    Rng rng(2);
    for (int trial = 0; trial < 1000; ++trial) {
        const double lb = uniform(rng, -5.0, 5.0);
        const double ub = lb + uniform(rng, 0.1, 5.0);
        Vec g(4);
        for (auto& v : g) v = uniform01(rng);
        auto p = predator_position(lb, ub, g);
        CHECK(p.maxCoeff() <= lb);
    }
}

TEST_CASE("defense move with coincident hippo and predator stays finite") {
    Vec levy = Vec::Constant(3, 0.7), pred = Vec::Constant(3, -0.2), phi = Vec::Constant(3, 1.5);
    for (bool fitter : {true, false}) {
        auto v = defense_move(levy, pred, phi, kPredatorDistanceFloor, fitter, 0.0);
        CHECK(v.allFinite());
    }
    auto a = defense_move(levy, pred, phi, 2.0, true, 0.5);
    auto b = defense_move(levy, pred, phi, 2.0, false, 0.5);
    CHECK(a[0] == doctest::Approx(0.7 * -0.2 + 1.5 / 2.0));
    CHECK(b[0] == doctest::Approx(0.7 * -0.2 + 1.5 / 4.5));
}

TEST_CASE("levy steps are finite and heavy tailed") {
    Rng rng(5);
    std::vector<double> s;
    for (int i = 0; i < 20000; ++i) {
        s.push_back(levy_step(rng));
        REQUIRE(std::isfinite(s.back()));
    }
    std::sort(s.begin(), s.end());
    const double median = s[10000];
    CHECK(std::abs(median) < 0.05);
    // a Gaussian with the same interquartile range would essentially never exceed 20 IQRs
    const double iqr = s[15000] - s[5000];
    CHECK(std::max(-s.front(), s.back()) > 20.0 * iqr);
}

TEST_CASE("escape bounds shrink as 1/t") {
    auto b1 = escape_bounds(0.0, 1.0, 1);
    CHECK(b1.lower == 0.0);
    CHECK(b1.upper == 1.0);
    auto b4 = escape_bounds(-2.0, 1.0, 4);
    CHECK(b4.lower == -0.5);
    CHECK(b4.upper == 0.25);
    CHECK_THROWS_AS(escape_bounds(0.0, 1.0, 0), ConfigError);

    Rng rng(11);
    Vec x = Vec::Constant(5, 0.4);
    auto radius = [&](std::size_t t) {
        double r = 0.0;
        const auto local = escape_bounds(0.0, 1.0, t);
        for (int i = 0; i < 1000; ++i) {
            Vec g(5), phi(5);
            for (auto& v : g) v = uniform01(rng);
            for (auto& v : phi) v = uniform(rng, -1.0, 1.0);
            r = std::max(r, (escape_move(x, local, g, phi) - x).cwiseAbs().maxCoeff());
        }
        return r;
    };
    const double r1 = radius(1), r10 = radius(10);
    CHECK(r10 <= 0.1 * r1 * 1.2);
    CHECK(r10 >= 0.1 * r1 * 0.8);
    CHECK(radius(100000) < 1e-4);
}

TEST_CASE("greedy acceptance in the defense phase over 10,000 trials") {
    std::size_t trials = 0;
    for (std::uint64_t seed = 0; trials < 10000; ++seed) {
        HoConfig cfg;
        cfg.population = 10;
        cfg.dimension = 3;
        cfg.seed = seed;
        Rng shape(seed);
        Vec centre(3);
        for (auto& c : centre) c = uniform01(shape);
        auto f = [centre](std::span<const double> x) {
            double s = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) s -= std::abs(x[i] - centre[Eigen::Index(i)]);
            return s;
        };
        HoEngine engine(cfg, f);
        for (int call = 0; call < 20; ++call) {
            const auto before = engine.population();
            engine.defense_phase();
            const auto& after = engine.population();
            for (std::size_t i = 0; i < cfg.population; ++i) {
                CHECK(after.fitness[i] >= before.fitness[i]);
                if (after.fitness[i] == before.fitness[i]) {
                    CHECK(after.positions.row(Eigen::Index(i)) == before.positions.row(Eigen::Index(i)));
                }
                std::vector<double> row(3);
                for (Eigen::Index j = 0; j < 3; ++j) row[std::size_t(j)] = after.positions(Eigen::Index(i), j);
                CHECK(f(row) == after.fitness[i]);
                if (i >= cfg.population / 2) ++trials;
            }
            CHECK(after.positions.minCoeff() >= 0.0);
            CHECK(after.positions.maxCoeff() <= 1.0);
        }
    }
    CHECK(trials >= 10000);
}

TEST_CASE("river-only updates never worsen the best on the sphere") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        HoConfig cfg;
        cfg.lower = -5.12;
        cfg.upper = 5.12;
        cfg.seed = seed;
        HoEngine engine(cfg, negated(sphere));
        double best = engine.population().best_fitness;
        for (int t = 0; t < 50; ++t) {
            engine.river_phase();
            const auto& fit = engine.population().fitness;
            const double now = *std::max_element(fit.begin(), fit.end());
            CHECK(now >= best);
            best = now;
        }
    }
}

TEST_CASE("every phase keeps fitness non-decreasing and positions in bounds") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        HoConfig cfg;
        cfg.lower = -5.12;
        cfg.upper = 5.12;
        cfg.iterations = 60;
        cfg.seed = seed;
        HoEngine engine(cfg, negated(rastrigin));
        std::vector<double> last = engine.population().fitness;
        bool ok = true;
        engine.run([&](const HoEngine& e) {
            const auto& p = e.population();
            ok = ok && p.positions.minCoeff() >= cfg.lower && p.positions.maxCoeff() <= cfg.upper;
            for (std::size_t i = 0; i < cfg.population; ++i) ok = ok && p.fitness[i] >= last[i];
            ok = ok && p.best_fitness == *std::max_element(p.fitness.begin(), p.fitness.end());
            last = p.fitness;
        });
        CHECK(ok);
        const auto& tr = engine.trace();
        REQUIRE(tr.size() == 61);
        CHECK(std::is_sorted(tr.begin(), tr.end()));
        CHECK(engine.evaluations() == 50 + 60 * (25 * 2 + 25 * 2 + 50));
    }
}

TEST_CASE("pair and list fitness") {
    Exercise a(0, {0}, 3), b(1, {1}, 3), c(2, {0, 2}, 3);
    CHECK(pair_fitness(a, a) == 0.0);
    CHECK(pair_fitness(a, b) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK(pair_fitness(b, c) == pair_fitness(c, b));
    CHECK_THROWS_AS(pair_fitness(a, Exercise(3, {0}, 4)), ShapeMismatch);

    Rng rng(4);
    auto bank = testing::random_bank(rng, 50, 10);
    std::vector<ExerciseId> dup(5, 7);
    CHECK(list_fitness(dup, bank) == 0.0);
    std::vector<ExerciseId> two{3, 9};
    CHECK(list_fitness(two, bank) == pair_fitness(bank.at(3), bank.at(9)));
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<ExerciseId> l;
        for (int i = 0; i < 5; ++i) l.push_back(ExerciseId(uniform_index(rng, 50)));
        double want = 0.0;
        for (std::size_t i = 0; i < 5; ++i)
            for (std::size_t j = 0; j < 5; ++j) {
                if (i >= j) continue;
                double s = 0.0;
                for (std::size_t k = 0; k < 10; ++k) {
                    const double diff = double(bank.at(l[i]).kc_vector()[k]) - double(bank.at(l[j]).kc_vector()[k]);
                    s += diff * diff;
                }
                want += std::sqrt(s);
            }
        CHECK(std::abs(list_fitness(l, bank) - want) < 1e-12);
    }
}

TEST_CASE("decoding positions") {
    std::vector<double> low(5, 0.0);
    CHECK(decode_indices(low, 0.0, 1.0, 20) == std::vector<std::size_t>{0, 1, 2, 3, 4});
    std::vector<double> high(5, 1.0);
    CHECK(decode_indices(high, 0.0, 1.0, 20) == std::vector<std::size_t>{19, 0, 1, 2, 3});
    std::vector<double> spread{0.01, 0.26, 0.51, 0.76, 0.99};
    CHECK(decode_indices(spread, 0.0, 1.0, 20) == std::vector<std::size_t>{0, 5, 10, 15, 19});
    std::vector<double> shifted{-1.0, 0.0, 1.0};
    CHECK(decode_indices(shifted, -1.0, 1.0, 4) == std::vector<std::size_t>{0, 2, 3});
    CHECK_THROWS_AS(decode_indices(low, 0.0, 1.0, 4), CandidateSetTooSmall);

    std::vector<ExerciseId> cand{40, 41, 42, 43, 44, 45, 46, 47, 48, 49};
    Rng rng(8);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> p(5);
        for (auto& v : p) v = uniform(rng, -0.2, 1.2);
        auto l = decode_position(p, cand, 0.0, 1.0);
        CHECK(l == decode_position(p, cand, 0.0, 1.0));
        CHECK(std::set<ExerciseId>(l.begin(), l.end()).size() == 5);
        for (auto id : l) CHECK((id >= 40 && id <= 49));
    }
}

TEST_CASE("a candidate set of exactly d exercises forces the list") {
    Rng rng(6);
    auto bank = testing::random_bank(rng, 5, 8);
    auto ids = all_ids(bank);
    HoConfig cfg;
    cfg.iterations = 10;
    auto r = run_er_ho(ids, bank, cfg);
    auto sorted = r.list;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == ids);
    CHECK(r.fitness == doctest::Approx(list_fitness(ids, bank)).epsilon(1e-15));
    std::vector<ExerciseId> four(ids.begin(), ids.begin() + 4);
    CHECK_THROWS_AS(run_er_ho(four, bank, cfg), CandidateSetTooSmall);
}

TEST_CASE("ER-HO returns a well-formed list with a monotone trace") {
    Rng rng(12);
    auto bank = testing::random_bank(rng, 80, 15);
    auto ids = all_ids(bank);
    HoConfig cfg;
    cfg.iterations = 30;
    cfg.seed = 99;
    auto r = run_er_ho(ids, bank, cfg);
    CHECK(r.list.size() == 5);
    CHECK(std::set<ExerciseId>(r.list.begin(), r.list.end()).size() == 5);
    CHECK(r.trace.size() == 31);
    CHECK(std::is_sorted(r.trace.begin(), r.trace.end()));
    CHECK(r.fitness == r.trace.back());
    CHECK(r.fitness == doctest::Approx(list_fitness(r.list, bank)).epsilon(1e-15));
    auto again = run_er_ho(ids, bank, cfg);
    CHECK(again.list == r.list);
    CHECK(again.trace == r.trace);
}

TEST_CASE("ER-HO beats the random-list median on clustered 20-candidate sets") {
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed + 1000);
        auto bank = clustered_bank(rng, 20);
        auto ids = all_ids(bank);
        HoConfig cfg;
        cfg.seed = seed;
        auto r = run_er_ho(ids, bank, cfg);
        wins += r.fitness >= random_median(ids, bank, 5, rng);
    }
    CHECK(wins == 20);
}

TEST_CASE("ER-HO is within 5% of the exhaustive optimum on 12 candidates") {
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed + 500);
        auto bank = testing::random_bank(rng, 12, 12, 4);
        auto ids = all_ids(bank);
        HoConfig cfg;
        cfg.seed = seed;
        const double opt = exhaustive_best(ids, bank);
        const double got = run_er_ho(ids, bank, cfg).fitness;
        CHECK(got <= opt + 1e-12);
        hits += got >= 0.95 * opt;
    }
    MESSAGE("within 5% of optimum: " << hits << "/20");
    CHECK(hits >= 18);
}

TEST_CASE("ER-HO beats the random-list median on 200 candidates") {
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed + 2000);
        auto bank = testing::random_bank(rng, 200, 30);
        auto ids = all_ids(bank);
        HoConfig cfg;
        cfg.seed = seed;
        wins += run_er_ho(ids, bank, cfg).fitness > random_median(ids, bank, 5, rng);
    }
    CHECK(wins == 20);
}

TEST_CASE("sphere improves by 100x and beats random search") {
    std::vector<double> ratio;
    int beats = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        HoConfig cfg;
        cfg.lower = -5.12;
        cfg.upper = 5.12;
        cfg.seed = seed;
        auto r = run_benchmark(sphere, cfg);
        CHECK(r.trace.size() == 201);
        CHECK(std::is_sorted(r.trace.rbegin(), r.trace.rend()));
        ratio.push_back(r.initial_best / std::max(r.final_best, 1e-300));
        beats += r.final_best < r.random_search_best;
    }
    std::sort(ratio.begin(), ratio.end());
    const double median = 0.5 * (ratio[9] + ratio[10]);
    MESSAGE("median initial/final on sphere: " << median);
    CHECK(median >= 100.0);
    CHECK(beats == 20);
}

TEST_CASE("benchmark function examples") {
    std::vector<double> zero(5, 0.0), one(3, 1.0);
    CHECK(sphere(zero) == 0.0);
    CHECK(sphere(one) == 3.0);
    CHECK(rastrigin(zero) == 0.0);
    CHECK(rastrigin(one) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(random_search(sphere, 5, -1.0, 1.0, 100, 1) == random_search(sphere, 5, -1.0, 1.0, 100, 1));
}

TEST_CASE("ho_trace.csv layout and config") {
    std::vector<double> tr{1.0, 2.5};
    std::ostringstream out;
    write_ho_trace(tr, out);
    CHECK(out.str() == "iteration,best_fitness\n0,1\n1,2.5\n");

    HoConfig cfg;
    cfg.population = 1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.population = 50;
    cfg.chaos_alpha = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.chaos_alpha = 1.0;
    cfg.upper = cfg.lower;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.upper = 2.0;
    cfg.seed = 77;
    auto back = ho_config_from_json(to_json(cfg));
    CHECK(back.upper == 2.0);
    CHECK(back.seed == 77);
    CHECK(back.population == 50);
}
