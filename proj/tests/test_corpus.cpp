#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "bamaer/corpus.hpp"
#include "support.hpp"

using namespace bamaer;

namespace {

CorpusError::Kind bank_error(const std::string& text) {
    std::istringstream in(text);
    try {
        parse_bank(in);
    } catch (const CorpusError& e) {
        return e.kind();
    }
    FAIL("no error for: " << text);
    return CorpusError::Kind::MalformedRow;
}

CorpusError::Kind log_error(const std::string& text, const ExerciseBank& bank) {
    std::istringstream in(text);
    try {
        parse_histories(in, bank);
    } catch (const CorpusError& e) {
        return e.kind();
    }
    FAIL("no error for: " << text);
    return CorpusError::Kind::MalformedRow;
}

ExerciseBank small_bank() {
    std::istringstream in("exercise_id,concept_ids\n0,0\n1,1;2\n2,3\n");
    return parse_bank(in);
}

}  // namespace

TEST_CASE("bank rows encode coverage vectors") {
    std::istringstream in("exercise_id,concept_ids\n0,1;3\n");
    auto bank = parse_bank(in, 4);
    REQUIRE(bank.n_exercises() == 1);
    CHECK(bank.at(0).kc_vector() == std::vector<std::uint8_t>{0, 1, 0, 1});
    CHECK(bank.at(0).concepts() == std::vector<ConceptId>{1, 3});
}

TEST_CASE("concept count is inferred from the largest id unless overridden") {
    std::istringstream a("exercise_id,concept_ids\n0,2\n1,0;5\n");
    CHECK(parse_bank(a).n_concepts() == 6);
    std::istringstream b("exercise_id,concept_ids\n0,2\n1,0;5\n");
    CHECK(parse_bank(b, 9).n_concepts() == 9);
    std::istringstream c("exercise_id,concept_ids\n0,7\n");
    CHECK_THROWS_AS(parse_bank(c, 4), CorpusError);
}

TEST_CASE("bank errors") {
    CHECK(bank_error("exercise_id,concept_ids\n5,\n") == CorpusError::Kind::EmptyConceptList);
    CHECK(bank_error("exercise_id,concept_ids\n0,1\n0,2\n") == CorpusError::Kind::DuplicateId);
    CHECK(bank_error("exercise_id,concept_ids\n0,x\n") == CorpusError::Kind::MalformedRow);
    CHECK(bank_error("exercise_id,concept_ids\n-1,2\n") == CorpusError::Kind::MalformedRow);
    CHECK(bank_error("exercise_id,concept_ids\n0,1,2\n") == CorpusError::Kind::MalformedRow);
    CHECK(bank_error("id,concepts\n0,1\n") == CorpusError::Kind::MalformedRow);
    CHECK(bank_error("exercise_id,concept_ids\n0,1\n2,1\n") == CorpusError::Kind::MalformedRow);
}

TEST_CASE("a bank at the scale of a 26,688-exercise dataset reports that count") {
    std::ostringstream text;
    text << "exercise_id,concept_ids\n";
    for (int i = 0; i < 26688; ++i) text << i << ',' << i % 123 << '\n';
    std::istringstream in(text.str());
    auto bank = parse_bank(in);
    CHECK(bank.n_exercises() == 26688);
    CHECK(bank.n_concepts() == 123);
}

TEST_CASE("every coverage vector has at least one concept") {
    Rng rng(11);
    auto bank = testing::random_bank(rng, 300, 20);
    for (const auto& ex : bank.exercises()) {
        int sum = 0;
        for (auto b : ex.kc_vector()) sum += b;
        CHECK(sum >= 1);
        CHECK(std::size_t(sum) == ex.concepts().size());
        CHECK(std::is_sorted(ex.concepts().begin(), ex.concepts().end()));
    }
}

TEST_CASE("log rows group by student and sort by step") {
    auto bank = small_bank();
    std::istringstream in("student_id,exercise_id,response,step\n7,0,1,1\n7,1,0,2\n7,2,1,3\n");
    auto hs = parse_histories(in, bank);
    REQUIRE(hs.size() == 1);
    CHECK(hs[0].student_id == 7);
    REQUIRE(hs[0].records.size() == 3);
    CHECK(hs[0].records[1] == InteractionRecord{1, 0, 2});
}

TEST_CASE("log errors") {
    auto bank = small_bank();
    const std::string h = "student_id,exercise_id,response,step\n";
    CHECK(log_error(h + "1,0,2,1\n", bank) == CorpusError::Kind::NonBinaryResponse);
    CHECK(log_error(h + "1,9,1,1\n", bank) == CorpusError::Kind::UnknownExercise);
    CHECK(log_error(h + "1,0,1,4\n1,1,0,4\n", bank) == CorpusError::Kind::DuplicateStep);
    CHECK(log_error(h + "1,0,1,0\n", bank) == CorpusError::Kind::MalformedRow);
    CHECK(log_error(h + "1,0,1\n", bank) == CorpusError::Kind::MalformedRow);
}

TEST_CASE("corpus errors are validation errors") {
    try {
        std::istringstream in("exercise_id,concept_ids\n0,\n");
        parse_bank(in);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.error_class() == ErrorClass::Validation);
    }
    try {
        load_bank("/nonexistent/dir/bank.csv");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.error_class() == ErrorClass::Io);
    }
}

TEST_CASE("shuffled log rows parse to the same histories as sorted rows") {
    Rng rng(5);
    Corpus c = testing::random_corpus(rng, 30, 15);
    std::ostringstream out;
    write_histories(c.histories, out);
    std::istringstream sorted_in(out.str());
    auto sorted = parse_histories(sorted_in, c.bank);

    std::vector<std::string> lines;
    std::istringstream split(out.str());
    std::string header, line;
    std::getline(split, header);
    while (std::getline(split, line)) lines.push_back(line);
    std::shuffle(lines.begin(), lines.end(), rng);
    std::string shuffled = header + "\n";
    for (const auto& l : lines) shuffled += l + "\n";
    std::istringstream shuffled_in(shuffled);
    CHECK(parse_histories(shuffled_in, c.bank) == sorted);
    CHECK(sorted == c.histories);
}

TEST_CASE("histories have binary responses and strictly increasing steps") {
    Rng rng(8);
    Corpus c = testing::random_corpus(rng, 20, 30);
    std::ostringstream out;
    write_histories(c.histories, out);
    std::istringstream in(out.str());
    for (const auto& h : parse_histories(in, c.bank)) {
        for (std::size_t i = 0; i < h.records.size(); ++i) {
            CHECK(h.records[i].response <= 1);
            if (i) CHECK(h.records[i].step > h.records[i - 1].step);
        }
    }
}

TEST_CASE("round trips") {
    const auto dir = testing::scratch_dir("corpus");

    SUBCASE("empty history list") {
        auto bank = small_bank();
        save_histories({}, dir / "empty.csv");
        CHECK(load_histories(dir / "empty.csv", bank).empty());
    }
    SUBCASE("random 100-student corpus") {
        Rng rng(21);
        Corpus c = testing::random_corpus(rng, 100, 40, 60, 15);
        save_bank(c.bank, dir / "bank.csv");
        save_histories(c.histories, dir / "log.csv");
        auto bank = load_bank(dir / "bank.csv", c.bank.n_concepts());
        CHECK(bank == c.bank);
        CHECK(load_histories(dir / "log.csv", bank) == c.histories);
    }
    SUBCASE("493 concepts are preserved") {
        std::vector<Exercise> ex;
        for (ExerciseId i = 0; i < 600; ++i) ex.emplace_back(i, std::vector<ConceptId>{ConceptId(i % 493)}, 493);
        ExerciseBank bank(std::move(ex), 493);
        save_bank(bank, dir / "big.csv");
        auto back = load_bank(dir / "big.csv");
        CHECK(back.n_concepts() == 493);
        CHECK(back == bank);
    }
}

TEST_CASE("find_student looks up by id") {
    Rng rng(2);
    Corpus c = testing::random_corpus(rng, 5, 3);
    REQUIRE(c.find_student(3) != nullptr);
    CHECK(c.find_student(3)->student_id == 3);
    CHECK(c.find_student(99) == nullptr);
}
