#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "bamaer/corpus.hpp"
#include "bamaer/tensor.hpp"
#include <json.hpp>

namespace bamaer {

class EmptyBank : public Error {
public:
    EmptyBank() : Error(ErrorClass::Validation, "exercise bank is empty") {}
};

enum class SimilarityOrientation {
    Literal,        // raw cosine similarity inside the score
    Dissimilarity,  // 1 - cosine similarity
};

struct FilterConfig {
    double delta = 0.4;  // expected difficulty
    std::size_t candidate_size = 200;
    SimilarityOrientation orientation = SimilarityOrientation::Literal;

    void validate() const;
};

nlohmann::json to_json(const FilterConfig& cfg);
FilterConfig filter_config_from_json(const nlohmann::json& j);

struct ScoredExercise {
    ExerciseId id = 0;
    double omega = 0.0;
    double cossim = 0.0;  // component as used in omega (after orientation)
    double dist = 0.0;

    friend bool operator==(const ScoredExercise&, const ScoredExercise&) = default;
};

/// Cosine similarity; 0 when either vector is zero.
double cosine_similarity(const Vec& a, const Vec& b);
double cosine_similarity(std::span<const std::uint8_t> kc, const Vec& q);

ScoredExercise omega_score(const Exercise& exercise, const Vec& progress, double difficulty, const FilterConfig& cfg);

/// D_i = 1 - product of mastery over each exercise's concepts.
std::vector<double> exercise_difficulties(const ExerciseBank& bank, const Vec& mastery);

std::vector<ScoredExercise> score_exercises(const ExerciseBank& bank, const Vec& progress,
                                            std::span<const double> difficulties, const FilterConfig& cfg);

/// The min(candidate_size, N_e) lowest (omega, id) pairs, ascending.
std::vector<ScoredExercise> candidate_select(const ExerciseBank& bank, const Vec& progress,
                                             std::span<const double> difficulties, const FilterConfig& cfg);

// candidates.csv: rank,exercise_id,omega,cossim,dist (rank from 1)
void write_candidates(std::span<const ScoredExercise> candidates, std::ostream& out);
void save_candidates(std::span<const ScoredExercise> candidates, const std::filesystem::path& path);

}  // namespace bamaer
