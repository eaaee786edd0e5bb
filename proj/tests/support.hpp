#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "bamaer/corpus.hpp"
#include "bamaer/rng.hpp"

namespace testing {

using namespace bamaer;

// Exercises with 1..max_per concepts drawn uniformly.
inline ExerciseBank random_bank(Rng& rng, std::size_t n_exercises, std::size_t n_concepts, std::size_t max_per = 3) {
    std::vector<Exercise> ex;
    for (std::size_t i = 0; i < n_exercises; ++i) {
        std::vector<ConceptId> cs;
        const auto k = 1 + uniform_index(rng, max_per);
        for (std::size_t j = 0; j < k; ++j) cs.push_back(ConceptId(uniform_index(rng, n_concepts)));
        ex.emplace_back(ExerciseId(i), cs, n_concepts);
    }
    return ExerciseBank(std::move(ex), n_concepts);
}

inline StudentHistory random_history(Rng& rng, StudentId id, const ExerciseBank& bank, std::size_t steps) {
    StudentHistory h{id, {}};
    for (std::size_t t = 0; t < steps; ++t) {
        h.records.push_back({ExerciseId(uniform_index(rng, bank.n_exercises())),
                             std::uint8_t(uniform_index(rng, 2)), t + 1});
    }
    return h;
}

inline Corpus random_corpus(Rng& rng, std::size_t students, std::size_t steps, std::size_t n_exercises = 12,
                            std::size_t n_concepts = 6) {
    Corpus c;
    c.bank = random_bank(rng, n_exercises, n_concepts);
    for (std::size_t s = 0; s < students; ++s) c.histories.push_back(random_history(rng, s, c.bank, steps));
    return c;
}

// Fresh directory under the system temp dir, removed first if present.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("bamaer-test-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testing
