#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bamaer/error.hpp"

namespace bamaer {

using ConceptId = std::uint32_t;
using ExerciseId = std::uint32_t;
using StudentId = std::uint64_t;

class CorpusError : public Error {
public:
    enum class Kind {
        MalformedRow,
        EmptyConceptList,
        DuplicateId,
        UnknownConcept,
        UnknownExercise,
        NonBinaryResponse,
        DuplicateStep,
    };

    CorpusError(Kind kind, const std::string& what);
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

/// One exercise and the concepts it covers, both as a binary coverage vector
/// and as the ascending list of covered concept ids.
class Exercise {
public:
    Exercise(ExerciseId id, std::vector<ConceptId> concepts, std::size_t n_concepts);

    ExerciseId id() const noexcept { return id_; }
    const std::vector<std::uint8_t>& kc_vector() const noexcept { return kc_; }
    const std::vector<ConceptId>& concepts() const noexcept { return concepts_; }
    bool covers(ConceptId c) const { return c < kc_.size() && kc_[c] != 0; }

    friend bool operator==(const Exercise&, const Exercise&) = default;

private:
    ExerciseId id_;
    std::vector<std::uint8_t> kc_;
    std::vector<ConceptId> concepts_;
};

class ExerciseBank {
public:
    ExerciseBank() = default;
    /// Exercises must carry ids 0..n-1 in order and share the coverage length.
    ExerciseBank(std::vector<Exercise> exercises, std::size_t n_concepts);

    std::size_t n_exercises() const noexcept { return exercises_.size(); }
    std::size_t n_concepts() const noexcept { return n_concepts_; }
    const Exercise& at(ExerciseId id) const;
    const std::vector<Exercise>& exercises() const noexcept { return exercises_; }
    bool contains(ExerciseId id) const noexcept { return id < exercises_.size(); }

    friend bool operator==(const ExerciseBank&, const ExerciseBank&) = default;

private:
    std::vector<Exercise> exercises_;
    std::size_t n_concepts_ = 0;
};

struct InteractionRecord {
    ExerciseId exercise_id = 0;
    std::uint8_t response = 0;
    std::uint64_t step = 0;

    friend bool operator==(const InteractionRecord&, const InteractionRecord&) = default;
};

struct StudentHistory {
    StudentId student_id = 0;
    std::vector<InteractionRecord> records;

    friend bool operator==(const StudentHistory&, const StudentHistory&) = default;
};

struct Corpus {
    ExerciseBank bank;
    std::vector<StudentHistory> histories;

    const StudentHistory* find_student(StudentId id) const;
};

// bank.csv: exercise_id,concept_ids   (concept ids ';'-separated, ascending)
ExerciseBank load_bank(const std::filesystem::path& path, std::optional<std::size_t> n_concepts = std::nullopt);
ExerciseBank parse_bank(std::istream& in, std::optional<std::size_t> n_concepts = std::nullopt);
void save_bank(const ExerciseBank& bank, const std::filesystem::path& path);
void write_bank(const ExerciseBank& bank, std::ostream& out);

// log.csv: student_id,exercise_id,response,step
// Output is grouped by student (ascending id) and sorted by step.
std::vector<StudentHistory> load_histories(const std::filesystem::path& path, const ExerciseBank& bank);
std::vector<StudentHistory> parse_histories(std::istream& in, const ExerciseBank& bank);
void save_histories(std::span<const StudentHistory> histories, const std::filesystem::path& path);
void write_histories(std::span<const StudentHistory> histories, std::ostream& out);

}  // namespace bamaer
