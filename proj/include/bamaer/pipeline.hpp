#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bamaer/eval.hpp"
#include "bamaer/filter.hpp"
#include "bamaer/hippo.hpp"
#include "bamaer/mastery.hpp"
#include "bamaer/progress.hpp"

namespace bamaer {

struct PathConfig {
    std::string out = "out";
    std::string bank;  // empty: <out>/synth/bank.csv
    std::string log;   // empty: <out>/synth/log.csv
    std::string progress_checkpoint;  // empty: <out>/progress/model.ckpt
    std::string mastery_checkpoint;   // empty: <out>/mastery/model.ckpt
};

struct EvaluateConfig {
    std::vector<StudentId> students;  // explicit list; empty means sample
    std::size_t sample = 50;          // students drawn when no list is given (all if fewer)
    std::vector<std::size_t> list_lengths{2, 5, 10, 15, 20};
    std::vector<std::size_t> populations{10, 20, 30, 40, 50, 60, 70, 80};
    std::string format = "csv";
};

struct BenchConfig {
    std::size_t runs = 20;
    std::size_t dimension = 5;
    double bound = 5.12;  // search box [-bound, bound]^d
};

/// Everything a subcommand needs. Sub-seeds derive from `seed` by label
/// ("synth", "progress", "mastery", "ho", "eval") unless `ho_seed` is set.
struct RunConfig {
    std::uint64_t seed = 42;
    std::optional<std::uint64_t> ho_seed;
    PathConfig paths;
    SynthConfig synth;
    ProgressModelConfig progress;
    MasteryModelConfig mastery;
    FilterConfig filter;
    HoConfig ho;
    MetricConfig metrics;
    EvaluateConfig evaluate;
    BenchConfig bench;

    void validate() const;

    std::filesystem::path out_dir() const { return paths.out; }
    std::filesystem::path bank_path() const;
    std::filesystem::path log_path() const;
    std::filesystem::path progress_checkpoint_path() const;
    std::filesystem::path mastery_checkpoint_path() const;
    std::uint64_t sub_seed(const char* label) const;
    std::uint64_t effective_ho_seed() const;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Overlays `j` onto the defaults. Unknown keys and type mismatches are ConfigErrors.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

Corpus load_corpus(const RunConfig& cfg);

// ---------------------------------------------------------------------------
// Training with resumable checkpoints.

struct TrainOutcome {
    std::vector<double> loss;         // every epoch so far, including resumed ones
    std::vector<double> holdout_auc;  // mastery only
    std::size_t epochs_done = 0;
};

/// Trains `epochs` more epochs (starting fresh unless `resume_from` is given),
/// then writes the checkpoint and loss_trace.csv next to it.
TrainOutcome train_progress_checkpoint(const Corpus& corpus, const ProgressModelConfig& cfg, std::uint64_t seed,
                                       const std::filesystem::path& checkpoint,
                                       const std::optional<std::filesystem::path>& resume_from);
TrainOutcome train_mastery_checkpoint(const Corpus& corpus, const MasteryModelConfig& cfg, std::uint64_t seed,
                                      const std::filesystem::path& checkpoint,
                                      const std::optional<std::filesystem::path>& resume_from);

// ---------------------------------------------------------------------------
// Recommendation.

struct Recommendation {
    StudentId student_id = 0;
    Vec progress;                     // Q
    Vec mastery;                      // Z
    std::vector<double> difficulty;   // D per exercise
    std::vector<ScoredExercise> candidates;
    ErHoResult ho;
};

/// progress -> mastery -> filter -> ER-HO for one student. The optimizer seed
/// is derived from ho.seed and the student id.
Recommendation recommend(const Corpus& corpus, const ProgressModel& progress, const MasteryModel& mastery,
                         const StudentHistory& student, const FilterConfig& filter, const HoConfig& ho);

/// Reruns ER-HO over an existing candidate set with different settings, using
/// the same per-student seed derivation as recommend().
ErHoResult optimize_list(const Recommendation& rec, const ExerciseBank& bank, const HoConfig& ho);

MetricRow score_recommendation(const Recommendation& rec, const Corpus& corpus, const StudentHistory& student,
                               const FilterConfig& filter, const MetricConfig& metrics);

/// The explicit list if non-empty (each must exist), otherwise a seeded sample
/// of up to `sample` students, returned in ascending id order.
std::vector<const StudentHistory*> select_students(const Corpus& corpus, std::span<const StudentId> explicit_ids,
                                                   std::size_t sample, std::uint64_t seed);

class UnknownStudent : public Error {
public:
    explicit UnknownStudent(StudentId id) : Error(ErrorClass::Validation, "unknown student " + std::to_string(id)) {}
};

void save_recommendation(std::span<const ExerciseId> list, const std::filesystem::path& path);

}  // namespace bamaer
