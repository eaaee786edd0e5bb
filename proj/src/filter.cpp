#include "bamaer/filter.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "bamaer/format.hpp"

namespace bamaer {

void FilterConfig::validate() const {
    if (!(delta >= 0.0 && delta <= 1.0)) throw ConfigError("filter: delta must be in [0,1]");
    if (candidate_size == 0) throw ConfigError("filter: candidate_size must be positive");
}

namespace {

const char* orientation_name(SimilarityOrientation o) {
    return o == SimilarityOrientation::Literal ? "literal" : "dissimilarity";
}

}  // namespace

nlohmann::json to_json(const FilterConfig& c) {
    return {{"delta", c.delta}, {"candidate_size", c.candidate_size}, {"orientation", orientation_name(c.orientation)}};
}

FilterConfig filter_config_from_json(const nlohmann::json& j) {
    FilterConfig c;
    c.delta = j.at("delta");
    c.candidate_size = j.at("candidate_size");
    const std::string o = j.at("orientation");
    if (o == "literal") c.orientation = SimilarityOrientation::Literal;
    else if (o == "dissimilarity") c.orientation = SimilarityOrientation::Dissimilarity;
    else throw ConfigError("filter: orientation must be \"literal\" or \"dissimilarity\", got \"" + o + "\"");
    return c;
}

double cosine_similarity(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw ShapeMismatch("cosine_similarity");
    const double na = a.norm(), nb = b.norm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

double cosine_similarity(std::span<const std::uint8_t> kc, const Vec& q) {
    if (Eigen::Index(kc.size()) != q.size()) throw ShapeMismatch("cosine_similarity");
    double dot = 0.0, nk = 0.0;
    for (std::size_t i = 0; i < kc.size(); ++i) {
        if (kc[i]) {
            dot += q[Eigen::Index(i)];
            nk += 1.0;
        }
    }
    const double nq = q.norm();
    if (nk == 0.0 || nq == 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(nk) * nq), -1.0, 1.0);
}

ScoredExercise omega_score(const Exercise& exercise, const Vec& progress, double difficulty, const FilterConfig& cfg) {
    double cs = cosine_similarity(exercise.kc_vector(), progress);
    if (cfg.orientation == SimilarityOrientation::Dissimilarity) cs = 1.0 - cs;
    const double dist = std::abs(cfg.delta - difficulty);
    return {exercise.id(), std::hypot(cs, dist), cs, dist};
}

std::vector<double> exercise_difficulties(const ExerciseBank& bank, const Vec& mastery) {
    if (mastery.size() != Eigen::Index(bank.n_concepts())) throw ShapeMismatch("mastery vector length");
    std::vector<double> out;
    out.reserve(bank.n_exercises());
    for (const auto& ex : bank.exercises()) {
        double r = 1.0;
        for (ConceptId c : ex.concepts()) r *= mastery[Eigen::Index(c)];
        out.push_back(1.0 - r);
    }
    return out;
}

std::vector<ScoredExercise> score_exercises(const ExerciseBank& bank, const Vec& progress,
                                            std::span<const double> difficulties, const FilterConfig& cfg) {
    if (difficulties.size() != bank.n_exercises()) throw ShapeMismatch("one difficulty per exercise expected");
    if (progress.size() != Eigen::Index(bank.n_concepts())) throw ShapeMismatch("progress vector length");
    std::vector<ScoredExercise> out;
    out.reserve(bank.n_exercises());
    for (const auto& ex : bank.exercises()) out.push_back(omega_score(ex, progress, difficulties[ex.id()], cfg));
    return out;
}

std::vector<ScoredExercise> candidate_select(const ExerciseBank& bank, const Vec& progress,
                                             std::span<const double> difficulties, const FilterConfig& cfg) {
    if (bank.n_exercises() == 0) throw EmptyBank();
    auto scored = score_exercises(bank, progress, difficulties, cfg);
    const auto k = std::min(cfg.candidate_size, scored.size());
    auto less = [](const ScoredExercise& a, const ScoredExercise& b) {
        return a.omega != b.omega ? a.omega < b.omega : a.id < b.id;
    };
    std::partial_sort(scored.begin(), scored.begin() + std::ptrdiff_t(k), scored.end(), less);
    scored.resize(k);
    return scored;
}

void write_candidates(std::span<const ScoredExercise> candidates, std::ostream& out) {
    out << "rank,exercise_id,omega,cossim,dist\n";
    std::size_t rank = 1;
    for (const auto& c : candidates) {
        out << rank++ << ',' << c.id << ',' << format_double(c.omega) << ',' << format_double(c.cossim) << ','
            << format_double(c.dist) << '\n';
    }
}

void save_candidates(std::span<const ScoredExercise> candidates, const std::filesystem::path& path) {
    auto out = open_output(path);
    write_candidates(candidates, out);
    finish_output(out, path);
}

}  // namespace bamaer
