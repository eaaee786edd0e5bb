#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bamaer/checkpoint.hpp"
#include "bamaer/corpus.hpp"
#include "bamaer/numeric.hpp"
#include "bamaer/optim.hpp"
#include "bamaer/progress.hpp"
#include "bamaer/rng.hpp"

namespace bamaer {

inline constexpr const char* kMasteryKind = "mastery-v1";
inline constexpr const char* kMemStateKind = "memstate-v1";

struct MasteryModelConfig {
    std::size_t embed_dim = 16;     // d; value dimension of the memory equals d
    std::size_t memory_slots = 20;
    std::size_t hidden = 32;        // width of the tanh layer
    std::size_t window = 50;        // attention context length
    double learning_rate = 1e-4;
    std::size_t batch_size = 24;    // student windows per update
    std::size_t epochs = 20;
    double lambda_init = 1.0;
    double gate_init = 0.0;         // raw update weight; sigmoid(0) = 0.5
    double init_scale = 0.1;
    double holdout_fraction = 0.2;  // students kept out of training for the AUC trace

    void validate() const;
};

nlohmann::json to_json(const MasteryModelConfig& cfg);
MasteryModelConfig mastery_config_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Building blocks. The model's step function is composed from these.

struct EmbeddedPair {
    Vec u;  // softmax(k || lambda e): exercise side, no response information
    Vec g;  // softmax((k + r) || lambda (e + r)): interaction side
};

EmbeddedPair embed_pair(const Vec& concept_emb, const Vec& exercise, const Vec& response, double lambda);

/// Causal self-attention (each position sees itself and the past) with
/// learned query/key/value projections; rows of `sequence` are items.
Mat context_encode(const Mat& sequence, const Mat& w_query, const Mat& w_key, const Mat& w_value);

/// Retrieves s_t for every position: queries/keys from the encoded exercise
/// sequence, values from the encoded interaction sequence, strictly earlier
/// positions only. Row 0 is the zero vector.
Mat knowledge_state(const Mat& encoded_exercises, const Mat& encoded_interactions, const Mat& w_query,
                    const Mat& w_key, const Mat& w_value);

/// softmax(M^k u) over memory slots.
Vec correlation_weights(const Mat& memory_keys, const Vec& u);

/// gate * (w s^T) + (1 - gate) * previous, with w over slots and s over value dims.
Mat memory_update(const Mat& previous, const Vec& weights, const Vec& state, double gate);

/// w^T M: slot-weighted sum of memory rows.
Vec memory_read(const Vec& weights, const Mat& memory);

struct MasteryHead {
    DenseLayer state;   // (m || s) -> hidden, tanh
    DenseLayer output;  // hidden -> N_k, sigmoid
};

/// Z = sigmoid(output(tanh(state(m || s)))).
Vec predict_mastery(const MasteryHead& head, const Vec& read, const Vec& state);

struct ExerciseAssessment {
    double proficiency = 0.0;  // R
    double difficulty = 1.0;   // D = 1 - R
};

/// R = product of z over the exercise's concepts.
ExerciseAssessment exercise_proficiency(const Vec& mastery, const Exercise& exercise);
ExerciseAssessment exercise_proficiency(const Vec& mastery, std::span<const ConceptId> concepts);

/// Binary cross-entropy of the product-of-sigmoids prediction for a set of
/// concepts against `label`, computed in log space. If `d_logits` is given,
/// scale * dLoss/dlogit_c is added for each concept.
double product_bce(const Vec& logits, std::span<const ConceptId> concepts, int label, Vec* d_logits = nullptr,
                   double scale = 1.0);

// ---------------------------------------------------------------------------

/// Per-window attention context: projected keys/values for the positions seen
/// so far in the current window. Rows beyond `count` are unused.
struct WindowBuffer {
    Mat enc_u_keys, enc_u_values;
    Mat enc_g_keys, enc_g_values;
    Mat state_keys, state_values;
    std::size_t count = 0;

    WindowBuffer() = default;
    WindowBuffer(std::size_t window, std::size_t dim);
    std::size_t capacity() const { return std::size_t(enc_u_keys.rows()); }
};

struct StepCache {
    ExerciseId exercise = 0;
    int response = 0;
    Vec concept_emb, exercise_emb, response_emb;
    Vec u, g;
    Vec enc_u_query, enc_u_weights, u_hat;
    Vec enc_g_query, enc_g_weights, g_hat;
    Vec state_query, state_weights, state;
    Vec slot_weights;
    Mat memory_prev;
    Vec read;
    Vec head_in, theta, logits;
};

struct WindowTrace {
    WindowBuffer buffer;
    std::vector<StepCache> steps;
};

class MasteryModel {
public:
    MasteryModel(const MasteryModelConfig& cfg, std::size_t n_concepts, std::size_t n_exercises);

    void initialize(Rng& rng);

    const MasteryModelConfig& config() const noexcept { return cfg_; }
    std::size_t n_concepts() const noexcept { return n_concepts_; }
    std::size_t n_exercises() const noexcept { return n_exercises_; }
    double gate() const;

    Mat empty_memory() const;

    /// Advances one interaction: updates `buffer` and `memory` in place and
    /// returns the mastery logits for this step. Z at this step depends on the
    /// current exercise and on earlier responses, never on `response` itself.
    Vec step(WindowBuffer& buffer, Mat& memory, const ExerciseBank& bank, ExerciseId exercise, int response,
             StepCache* cache = nullptr) const;

    /// Runs one attention window (at most config().window records) starting
    /// from `memory`, which is updated in place.
    WindowTrace forward_window(std::span<const InteractionRecord> records, const ExerciseBank& bank, Mat& memory) const;

    /// Backpropagates per-step logit gradients through a window. The starting
    /// memory is treated as a constant.
    void backward_window(const WindowTrace& trace, const ExerciseBank& bank, std::span<const Vec> d_logits);

    /// Z after every step of a full history (windows of config().window with memory carried).
    std::vector<Vec> mastery_trace(std::span<const InteractionRecord> history, const ExerciseBank& bank) const;
    /// Z after the last step of the history.
    Vec final_mastery(std::span<const InteractionRecord> history, const ExerciseBank& bank) const;

    ParameterList parameters();

    Checkpoint to_checkpoint(std::uint64_t seed) const;
    static MasteryModel from_checkpoint(const Checkpoint& ckpt);

    Parameter concept_embedding;   // N_k x d
    Parameter exercise_embedding;  // N_e x d
    Parameter response_embedding;  // 2 x d
    Parameter lambda;              // 1 x 1
    Parameter enc_u_query, enc_u_key, enc_u_value;  // d x 2d
    Parameter enc_g_query, enc_g_key, enc_g_value;  // d x 2d
    Parameter state_query, state_key, state_value;  // d x d
    Parameter memory_keys;         // slots x 2d
    Parameter gate_raw;            // 1 x 1
    MasteryHead head;

private:
    Vec concept_vector(const ExerciseBank& bank, ExerciseId exercise) const;

    MasteryModelConfig cfg_;
    std::size_t n_concepts_;
    std::size_t n_exercises_;
};

/// Stateful per-student evaluation: one interaction at a time, attention
/// context reset every config().window steps, memory carried throughout.
class MasterySession {
public:
    MasterySession(const MasteryModel& model, const ExerciseBank& bank);

    /// Feeds one interaction and returns Z for that step.
    Vec observe(ExerciseId exercise, int response);

    const Mat& memory() const noexcept { return memory_; }
    void reset_memory();
    std::size_t steps() const noexcept { return steps_; }
    /// Z from the most recent step.
    const Vec& mastery() const;

    Checkpoint snapshot() const;
    void restore(const Checkpoint& ckpt);

private:
    const MasteryModel& model_;
    const ExerciseBank& bank_;
    WindowBuffer buffer_;
    Mat memory_;
    Vec last_;
    std::size_t steps_ = 0;
};

// ---------------------------------------------------------------------------
// Training.

/// Area under the ROC curve (ties count one half). Returns 0.5 when one class is absent.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Held-out next-response AUC: at each step, R of the next exercise under Z.
double next_response_auc(const MasteryModel& model, const Corpus& corpus, std::span<const std::size_t> students);

class MasteryTrainer {
public:
    MasteryTrainer(MasteryModel& model, const Corpus& corpus, std::uint64_t seed);

    /// One pass over the training students; returns mean BCE per predicted step.
    double run_epoch();
    double holdout_auc() const;

    const std::vector<std::size_t>& train_students() const noexcept { return train_; }
    const std::vector<std::size_t>& holdout_students() const noexcept { return holdout_; }
    std::size_t epochs_done() const noexcept { return epoch_; }
    void set_epochs_done(std::size_t e) { epoch_ = e; }
    Adam& optimizer() noexcept { return adam_; }

private:
    MasteryModel& model_;
    const Corpus& corpus_;
    ParameterList params_;
    Adam adam_;
    std::uint64_t seed_;
    std::vector<std::size_t> train_, holdout_;
    std::size_t epoch_ = 0;
};

struct MasteryTrainResult {
    MasteryModel model;
    std::vector<double> epoch_loss;
    std::vector<double> holdout_auc;
};

MasteryTrainResult train_mastery(const Corpus& corpus, const MasteryModelConfig& cfg, std::uint64_t seed);

}  // namespace bamaer
