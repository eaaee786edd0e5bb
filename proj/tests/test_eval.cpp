#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "bamaer/eval.hpp"
#include "support.hpp"

using namespace bamaer;

namespace {

ExerciseBank bank_of(const std::vector<std::vector<ConceptId>>& sets, std::size_t nk) {
    std::vector<Exercise> ex;
    for (std::size_t i = 0; i < sets.size(); ++i) ex.emplace_back(ExerciseId(i), sets[i], nk);
    return ExerciseBank(std::move(ex), nk);
}

SynthConfig small_synth() {
    SynthConfig cfg;
    cfg.concepts = 12;
    cfg.exercises = 40;
    cfg.students = 20;
    cfg.steps = 30;
    cfg.clusters = 3;
    return cfg;
}

}  // namespace

TEST_CASE("accuracy examples") {
    std::vector<double> d{0.4, 0.4, 0.9, 0.5, 0.1, 0.3};
    std::vector<ExerciseId> same{0, 1};
    CHECK(accuracy_metric(same, d, 0.4, 0.2) == 1.0);
    std::vector<ExerciseId> far{2, 4};
    CHECK(accuracy_metric(far, d, 0.5, 0.2) == 0.0);
    std::vector<ExerciseId> five{0, 1, 2, 3, 4};
    CHECK(accuracy_metric(five, d, 0.4, 0.2) == doctest::Approx(0.6));
    CHECK_THROWS_AS(accuracy_metric({}, d, 0.4, 0.2), EmptyList);
}

TEST_CASE("novelty examples") {
    auto bank = bank_of({{0}, {1}, {2, 3}, {0, 1}}, 4);
    std::vector<ExerciseId> list{0, 1, 2};
    CHECK(novelty_metric(list, bank, {}, Vec::Constant(4, 0.1), 0.6) == 1.0);

    std::vector<InteractionRecord> solved{{0, 1, 1}, {1, 1, 2}, {2, 1, 3}};
    CHECK(novelty_metric(list, bank, solved, Vec::Constant(4, 0.99), 0.6) == 0.0);

    // concepts 0 and 1 solved and mastered; 2 and 3 never seen
    std::vector<InteractionRecord> half{{3, 1, 1}, {2, 0, 2}};
    std::vector<ExerciseId> l2{3, 2};
    CHECK(novelty_metric(l2, bank, half, Vec::Constant(4, 0.99), 0.6) == 0.5);
    CHECK_THROWS_AS(novelty_metric({}, bank, half, Vec::Zero(4), 0.6), EmptyList);
    CHECK_THROWS_AS(novelty_metric(l2, bank, half, Vec::Zero(3), 0.6), ShapeMismatch);
}

TEST_CASE("diversity examples") {
    auto bank = bank_of({{0, 1}, {0, 1}, {0, 1}, {0, 1}, {0, 1}, {2}, {3}, {4}, {5}, {6}}, 7);
    std::vector<ExerciseId> same{0, 1, 2, 3, 4};
    CHECK(diversity_metric(same, bank) == 0.0);
    std::vector<ExerciseId> disjoint{0, 5, 6, 7, 8};
    CHECK(diversity_metric(disjoint, bank) == 1.0);
    std::vector<ExerciseId> single{5};
    CHECK(diversity_metric(single, bank) == 0.0);
    CHECK_THROWS_AS(diversity_metric({}, bank), EmptyList);
}

TEST_CASE("diversity matches a double-loop Jaccard oracle") {
    Rng rng(3);
    auto bank = testing::random_bank(rng, 60, 8, 4);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<ExerciseId> l;
        for (int i = 0; i < 5; ++i) l.push_back(ExerciseId(uniform_index(rng, 60)));
        double sum = 0.0;
        int pairs = 0;
        for (std::size_t i = 0; i < 5; ++i) {
            for (std::size_t j = i + 1; j < 5; ++j) {
                std::set<ConceptId> a(bank.at(l[i]).concepts().begin(), bank.at(l[i]).concepts().end());
                std::set<ConceptId> b(bank.at(l[j]).concepts().begin(), bank.at(l[j]).concepts().end());
                std::size_t inter = 0;
                for (auto c : a) inter += b.count(c);
                sum += double(inter) / double(a.size() + b.size() - inter);
                ++pairs;
            }
        }
        CHECK(std::abs(diversity_metric(l, bank) - (1.0 - sum / pairs)) < 1e-14);
    }
}

TEST_CASE("metrics are permutation invariant and bounded") {
    Rng rng(5);
    auto bank = testing::random_bank(rng, 50, 10);
    std::vector<double> d(50);
    for (auto& v : d) v = uniform01(rng);
    Vec z(10);
    for (auto& v : z) v = uniform01(rng);
    auto h = testing::random_history(rng, 0, bank, 30);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<ExerciseId> l;
        for (int i = 0; i < 5; ++i) l.push_back(ExerciseId(uniform_index(rng, 50)));
        const double a = accuracy_metric(l, d, 0.4, 0.2);
        const double n = novelty_metric(l, bank, h.records, z, 0.6);
        const double v = diversity_metric(l, bank);
        for (double m : {a, n, v}) {
            CHECK(m >= 0.0);
            CHECK(m <= 1.0);
        }
        std::shuffle(l.begin(), l.end(), rng);
        CHECK(accuracy_metric(l, d, 0.4, 0.2) == a);
        CHECK(novelty_metric(l, bank, h.records, z, 0.6) == n);
        CHECK(std::abs(diversity_metric(l, bank) - v) < 1e-14);
    }
}

TEST_CASE("replacing a duplicate with a disjoint exercise raises diversity") {
    Rng rng(7);
    // concepts 0..9 for the random part, 10 is reserved for the replacement
    std::vector<std::vector<ConceptId>> sets;
    for (int i = 0; i < 40; ++i) {
        std::vector<ConceptId> cs;
        const auto k = 1 + uniform_index(rng, 3);
        for (std::size_t j = 0; j < k; ++j) cs.push_back(ConceptId(uniform_index(rng, 10)));
        sets.push_back(cs);
    }
    sets.push_back({10});
    auto bank = bank_of(sets, 11);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<ExerciseId> l;
        for (int i = 0; i < 4; ++i) l.push_back(ExerciseId(uniform_index(rng, 40)));
        l.push_back(l[uniform_index(rng, 4)]);
        const double before = diversity_metric(l, bank);
        l.back() = 40;
        CHECK(diversity_metric(l, bank) > before);
    }
}

TEST_CASE("novelty does not increase as the threshold decreases") {
    Rng rng(9);
    auto bank = testing::random_bank(rng, 40, 8);
    for (int trial = 0; trial < 100; ++trial) {
        Vec z(8);
        for (auto& v : z) v = uniform01(rng);
        auto h = testing::random_history(rng, 0, bank, 20);
        std::vector<ExerciseId> l;
        for (int i = 0; i < 5; ++i) l.push_back(ExerciseId(uniform_index(rng, 40)));
        double prev = 2.0;
        for (double th = 1.0; th >= -1e-12; th -= 0.05) {
            const double n = novelty_metric(l, bank, h.records, z, std::max(th, 0.0));
            CHECK(n <= prev);
            prev = n;
        }
    }
}

TEST_CASE("synthetic students with full mastery and no learning answer everything correctly") {
    auto cfg = small_synth();
    cfg.learning_increment = 0.0;
    cfg.initial_mastery = 1.0;
    auto s = synth_generate(cfg, 1);
    for (const auto& h : s.corpus.histories)
        for (const auto& r : h.records) CHECK(r.response == 1);
    cfg.initial_mastery = 0.0;
    s = synth_generate(cfg, 1);
    for (const auto& h : s.corpus.histories)
        for (const auto& r : h.records) CHECK(r.response == 0);
}

TEST_CASE("synthetic corpus shape") {
    SynthConfig cfg;
    auto s = synth_generate(cfg, 42);
    const auto& c = s.corpus;
    CHECK(c.bank.n_concepts() == 50);
    CHECK(c.bank.n_exercises() == 500);
    REQUIRE(c.histories.size() == 200);
    std::size_t truth_rows = 0;
    for (const auto& h : c.histories) {
        CHECK(h.records.size() == 100);
        for (const auto& r : h.records) truth_rows += c.bank.at(r.exercise_id).concepts().size();
    }
    CHECK(s.truth.size() == truth_rows);
    for (const auto& ex : c.bank.exercises()) {
        CHECK(ex.concepts().size() >= 2);
        CHECK(ex.concepts().size() <= 3);
        // all concepts of one exercise fall in the same group of five
        CHECK(ex.concepts().front() / 5 == ex.concepts().back() / 5);
    }
    for (const auto& t : s.truth) {
        CHECK(t.mastery >= 0.0);
        CHECK(t.mastery <= 1.0);
    }
}

TEST_CASE("empirical correctness matches the generator probability within 3 sigma") {
    SynthConfig cfg;
    auto s = synth_generate(cfg, 8);
    std::map<std::pair<StudentId, std::uint64_t>, double> p;
    for (const auto& t : s.truth) {
        auto [it, fresh] = p.try_emplace({t.student_id, t.step}, 1.0);
        it->second *= t.mastery;
    }
    double expected = 0.0, variance = 0.0, observed = 0.0;
    std::size_t draws = 0;
    for (const auto& h : s.corpus.histories) {
        for (const auto& r : h.records) {
            const double pr = p.at({h.student_id, r.step});
            expected += pr;
            variance += pr * (1.0 - pr);
            observed += r.response;
            ++draws;
        }
    }
    CHECK(draws >= 10000);
    MESSAGE("observed " << observed << " expected " << expected << " sd " << std::sqrt(variance));
    CHECK(std::abs(observed - expected) <= 3.0 * std::sqrt(variance));
}

TEST_CASE("mastery rises by the learning increment on practice") {
    auto cfg = small_synth();
    cfg.initial_mastery = 0.2;
    cfg.learning_increment = 0.05;
    auto s = synth_generate(cfg, 3);
    std::map<std::pair<StudentId, ConceptId>, int> practiced;
    for (const auto& t : s.truth) {
        auto& n = practiced[{t.student_id, t.concept_id}];
        CHECK(t.mastery == doctest::Approx(std::min(1.0, 0.2 + 0.05 * n)).epsilon(1e-12));
        ++n;
    }
}

TEST_CASE("the generator is seed deterministic") {
    auto cfg = small_synth();
    auto a = synth_generate(cfg, 11), b = synth_generate(cfg, 11), c = synth_generate(cfg, 12);
    CHECK(a.corpus.bank == b.corpus.bank);
    CHECK(a.corpus.histories == b.corpus.histories);
    CHECK(a.truth == b.truth);
    CHECK(a.corpus.histories != c.corpus.histories);
}

TEST_CASE("synth files round trip") {
    auto cfg = small_synth();
    auto s = synth_generate(cfg, 4);
    const auto dir = testing::scratch_dir("synth");
    save_synth(s, dir);
    auto bank = load_bank(dir / "bank.csv", cfg.concepts);
    CHECK(bank == s.corpus.bank);
    CHECK(load_histories(dir / "log.csv", bank) == s.corpus.histories);
    std::ifstream in(dir / "truth.csv");
    CHECK(parse_truth(in) == s.truth);
}

TEST_CASE("synth config validation") {
    SynthConfig cfg;
    cfg.students = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = SynthConfig{};
    cfg.min_concepts_per_exercise = 4;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = SynthConfig{};
    cfg.clusters = 51;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = SynthConfig{};
    cfg.initial_mastery = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = SynthConfig{};
    cfg.initial_mastery = 0.3;
    cfg.steps = 7;
    auto back = synth_config_from_json(to_json(cfg));
    CHECK(back.initial_mastery == 0.3);
    CHECK(back.steps == 7);
    CHECK(synth_config_from_json(to_json(SynthConfig{})).initial_mastery == std::nullopt);
}

TEST_CASE("reports") {
    Rng rng(6);
    std::vector<MetricRow> rows;
    for (StudentId s = 0; s < 50; ++s) rows.push_back({49 - s, uniform01(rng), uniform01(rng), uniform01(rng)});
    auto sorted = rows;
    std::sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) { return a.student_id < b.student_id; });

    for (auto format : {ReportFormat::Csv, ReportFormat::Json}) {
        std::ostringstream out;
        emit_report(rows, out, format);
        std::istringstream in(out.str());
        CHECK(parse_report(in, format) == sorted);
    }

    std::ostringstream csv;
    emit_report(rows, csv, ReportFormat::Csv);
    const auto text = csv.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 51);

    std::ostringstream empty;
    emit_report({}, empty, ReportFormat::Csv);
    CHECK(empty.str() == "student_id,accuracy,novelty,diversity\n");
    std::istringstream back(empty.str());
    CHECK(parse_report(back, ReportFormat::Csv).empty());

    CHECK(parse_report_format("json") == ReportFormat::Json);
    CHECK_THROWS_AS(parse_report_format("xml"), ConfigError);

    const auto dir = testing::scratch_dir("report");
    emit_report(rows, dir / "r.json", ReportFormat::Json);
    std::ifstream f(dir / "r.json");
    CHECK(parse_report(f, ReportFormat::Json).size() == 50);
}

TEST_CASE("metric config") {
    MetricConfig cfg;
    cfg.mastery_threshold = 1.2;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.mastery_threshold = 0.5;
    cfg.accuracy_tolerance = 0.1;
    auto back = metric_config_from_json(to_json(cfg));
    CHECK(back.mastery_threshold == 0.5);
    CHECK(back.accuracy_tolerance == 0.1);
}
