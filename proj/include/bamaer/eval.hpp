#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "bamaer/corpus.hpp"
#include "bamaer/tensor.hpp"
#include <json.hpp>

namespace bamaer {

class EmptyList : public Error {
public:
    EmptyList() : Error(ErrorClass::Validation, "recommendation list is empty") {}
};

struct MetricConfig {
    double accuracy_tolerance = 0.2;  // |D - delta| window counted as accurate
    double mastery_threshold = 0.6;   // z below this counts as not mastered

    void validate() const;
};

nlohmann::json to_json(const MetricConfig& cfg);
MetricConfig metric_config_from_json(const nlohmann::json& j);

/// Fraction of listed exercises whose difficulty (indexed by exercise id) is within tolerance of delta.
double accuracy_metric(std::span<const ExerciseId> list, std::span<const double> difficulty, double delta,
                       double tolerance);

/// Fraction of concept slots (each listed exercise's concepts) that are novel:
/// never answered correctly in `history`, or mastery below threshold.
double novelty_metric(std::span<const ExerciseId> list, const ExerciseBank& bank,
                      std::span<const InteractionRecord> history, const Vec& mastery, double threshold);

/// 1 - mean pairwise Jaccard similarity of concept sets; 0 for a single item.
double diversity_metric(std::span<const ExerciseId> list, const ExerciseBank& bank);

double jaccard(const Exercise& a, const Exercise& b);

// ---------------------------------------------------------------------------
// Synthetic students.

struct SynthConfig {
    std::size_t concepts = 50;
    std::size_t exercises = 500;
    std::size_t students = 200;
    std::size_t steps = 100;
    std::size_t clusters = 10;              // concepts are grouped; an exercise stays inside one group
    std::size_t min_concepts_per_exercise = 2;  // size drawn uniformly in [min, max], capped by the group
    std::size_t max_concepts_per_exercise = 3;
    double ability_gap = 1.0;               // two populations at +gap and -gap
    double ability_sd = 0.5;
    double difficulty_mean = -1.0;          // per-concept difficulty ~ N(mean, sd)
    double difficulty_sd = 0.5;
    double learning_increment = 0.03;       // added to each practiced concept's mastery
    double mastery_floor = 0.0;
    std::optional<double> initial_mastery;  // overrides the ability/difficulty model when set
    double focus_probability = 0.8;         // chance the next exercise covers the current focus concept
    std::size_t focus_dwell = 5;            // steps before the focus concept advances

    void validate() const;
};

nlohmann::json to_json(const SynthConfig& cfg);
SynthConfig synth_config_from_json(const nlohmann::json& j);

/// Latent mastery of the practiced concepts just before a response.
struct TruthRow {
    StudentId student_id = 0;
    std::uint64_t step = 0;
    ConceptId concept_id = 0;
    double mastery = 0.0;

    friend bool operator==(const TruthRow&, const TruthRow&) = default;
};

struct SynthCorpus {
    Corpus corpus;
    std::vector<TruthRow> truth;
};

/// Each student holds per-concept mastery in [floor, 1]; a response is correct
/// with probability equal to the product of mastery over the exercise's
/// concepts, after which each practiced concept gains learning_increment.
SynthCorpus synth_generate(const SynthConfig& cfg, std::uint64_t seed);

/// Writes bank.csv, log.csv and truth.csv into `dir`.
void save_synth(const SynthCorpus& synth, const std::filesystem::path& dir);

// truth.csv: student_id,step,concept_id,mastery
void write_truth(std::span<const TruthRow> rows, std::ostream& out);
std::vector<TruthRow> parse_truth(std::istream& in);

// ---------------------------------------------------------------------------
// Reports.

struct MetricRow {
    StudentId student_id = 0;
    double accuracy = 0.0;
    double novelty = 0.0;
    double diversity = 0.0;

    friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

enum class ReportFormat { Csv, Json };

ReportFormat parse_report_format(const std::string& name);

/// Rows are written in ascending student id order.
void emit_report(std::span<const MetricRow> rows, std::ostream& out, ReportFormat format);
void emit_report(std::span<const MetricRow> rows, const std::filesystem::path& path, ReportFormat format);
std::vector<MetricRow> parse_report(std::istream& in, ReportFormat format);

}  // namespace bamaer
