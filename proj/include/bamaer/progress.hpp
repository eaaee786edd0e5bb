#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "bamaer/checkpoint.hpp"
#include "bamaer/corpus.hpp"
#include "bamaer/numeric.hpp"
#include "bamaer/optim.hpp"
#include "bamaer/rng.hpp"

namespace bamaer {

inline constexpr const char* kProgressKind = "progress-v1";
// One concept channel and one interaction channel.
inline constexpr std::size_t kProgressChannels = 2;

struct ProgressModelConfig {
    std::size_t embed_dim = 16;   // d, also the feature axis length v
    std::size_t window = 20;      // l
    std::size_t hidden = 32;      // r
    std::size_t layers = 1;
    std::size_t neg_samples = 1;  // per step
    double learning_rate = 1e-4;
    std::size_t batch_size = 256;
    std::size_t epochs = 5;
    double init_scale = 0.1;

    void validate() const;
};

class DivergedLoss : public NumericError {
public:
    explicit DivergedLoss(const std::string& where) : NumericError("non-finite loss during " + where) {}
};

class EmptyCorpus : public Error {
public:
    explicit EmptyCorpus(const std::string& what) : Error(ErrorClass::Validation, "empty corpus: " + what) {}
};

class EmptyHistory : public Error {
public:
    EmptyHistory() : Error(ErrorClass::Validation, "empty history") {}
};

// ---------------------------------------------------------------------------
// Concept weighting and the progress vector.

struct ConceptStats {
    std::vector<std::uint32_t> occurrences;  // nu_i
    std::vector<std::uint32_t> correct;      // alpha_i
};

/// Counts, per concept, how often it appeared in the history and how often
/// those appearances were answered correctly.
ConceptStats concept_stats(std::span<const InteractionRecord> history, const ExerciseBank& bank);

/// w_i = 1 - alpha_i / nu_i, or 1 for concepts never seen.
Vec concept_weights(const ConceptStats& stats);

/// q_i = o_i * w_i.
Vec learning_progress(const Vec& scores, const Vec& weights);

// ---------------------------------------------------------------------------
// Encoder building blocks.

enum class MixAxis { Sequence, Feature, Channel };

/// Two dense layers with GELU between, applied independently to every
/// 1-D slice of a tensor taken along `axis`.
struct MixBranch {
    struct Cache {
        std::vector<Mat> inputs;  // per slice block: axis_len x batch
        std::vector<Mat> pre;     // hidden pre-activations
        std::vector<Mat> act;     // gelu(pre)
        std::vector<Mat> cdf;     // Phi(pre)
    };

    MixAxis axis = MixAxis::Sequence;
    DenseLayer expand;
    DenseLayer project;

    MixBranch() = default;
    MixBranch(const std::string& name, MixAxis axis, std::size_t axis_len, std::size_t hidden);

    Tensor3 forward(const Tensor3& x, Cache* cache = nullptr) const;
    /// Accumulates parameter grads; returns dL/dx.
    Tensor3 backward(const Cache& cache, const Tensor3& dy);

    void append_parameters(ParameterList& out);
};

std::size_t axis_length(const Tensor3& x, MixAxis axis);

/// Y = y_p + y_f + y_c (all branches already aligned to (m, l, v)).
Tensor3 fuse(const Tensor3& y_seq, const Tensor3& y_feat, const Tensor3& y_chan);

/// Row-wise layer norm over the feature axis, then the three mixing branches, summed.
struct MixerLayer {
    struct Cache {
        Tensor3 normalized;
        std::vector<LayerNormCache> rows;
        MixBranch::Cache seq, feat, chan;
    };

    Parameter ln_gain, ln_shift;
    MixBranch sequence, feature, channel;

    MixerLayer() = default;
    MixerLayer(const std::string& name, std::size_t m, std::size_t l, std::size_t v, std::size_t hidden);

    Tensor3 forward(const Tensor3& x, Cache* cache = nullptr) const;
    Tensor3 backward(const Cache& cache, const Tensor3& dy);
    void append_parameters(ParameterList& out);
};

// ---------------------------------------------------------------------------
// The model.

/// Token ids for the positions of one window, left-padded to the window length.
struct ProgressWindow {
    std::vector<std::vector<ConceptId>> concepts;  // empty = padding
    std::vector<int> responses;                    // 0/1, or kPadResponse
};

inline constexpr int kPadResponse = 2;

/// The last `window` records ending just before `end` (exclusive), left-padded.
ProgressWindow make_window(std::span<const InteractionRecord> history, std::size_t end, const ExerciseBank& bank,
                           std::size_t window);

class ProgressModel {
public:
    struct Forward {
        Tensor3 input;
        std::vector<Tensor3> layer_inputs;
        std::vector<MixerLayer::Cache> caches;
        Tensor3 output;
        Vec last_state;  // flattened output at the final position (m*v)
        Vec hidden;      // head output (d)
    };

    ProgressModel(const ProgressModelConfig& cfg, std::size_t n_concepts);

    void initialize(Rng& rng);

    const ProgressModelConfig& config() const noexcept { return cfg_; }
    std::size_t n_concepts() const noexcept { return n_concepts_; }

    /// Concept/interaction embeddings stacked into (m, l, v); deterministic.
    Tensor3 build_kc_interaction(const ProgressWindow& window) const;

    Forward forward(const ProgressWindow& window) const;

    /// Per-concept next-step occurrence scores o in (0,1), from the last window.
    Vec predict_next_concept_scores(std::span<const InteractionRecord> history, const ExerciseBank& bank) const;
    /// Raw dot-product scores for the given forward pass.
    Vec scores(const Forward& fwd) const;

    /// Negative-sampled cross-entropy for one prediction step:
    /// -[sum_pos log s(r_i) + sum_neg log(1 - s(r_j))].
    double step_loss(const ProgressWindow& window, std::span<const ConceptId> positives,
                     std::span<const ConceptId> negatives) const;
    /// Same loss; adds scale * gradient into the parameter grad buffers.
    double step_loss_backward(const ProgressWindow& window, std::span<const ConceptId> positives,
                              std::span<const ConceptId> negatives, double scale = 1.0);

    ParameterList parameters();
    void zero_output_head();

    Checkpoint to_checkpoint(std::uint64_t seed) const;
    static ProgressModel from_checkpoint(const Checkpoint& ckpt);

    Parameter concept_embedding;   // (N_k + 1) x d, last row is padding
    Parameter response_embedding;  // 3 x d: incorrect, correct, padding
    std::vector<MixerLayer> layers;
    DenseLayer head;               // (m*v) -> d

private:
    ProgressModelConfig cfg_;
    std::size_t n_concepts_;
};

nlohmann::json to_json(const ProgressModelConfig& cfg);
ProgressModelConfig progress_config_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Training.

struct ProgressExample {
    ProgressWindow window;
    std::vector<ConceptId> targets;
};

std::vector<ProgressExample> progress_examples(const Corpus& corpus, std::size_t window);

class ProgressTrainer {
public:
    ProgressTrainer(ProgressModel& model, const Corpus& corpus, std::uint64_t seed);

    /// One pass over all examples in shuffled order; returns the mean per-step loss.
    double run_epoch();

    std::size_t epochs_done() const noexcept { return epoch_; }
    void set_epochs_done(std::size_t e) { epoch_ = e; }
    Adam& optimizer() noexcept { return adam_; }
    const std::vector<ProgressExample>& examples() const noexcept { return examples_; }

    /// Mean loss over a fixed list of examples with fixed negatives (no update).
    double evaluate(std::span<const ProgressExample> batch, std::span<const std::vector<ConceptId>> negatives) const;

    std::vector<ConceptId> sample_negatives(std::span<const ConceptId> targets, Rng& rng) const;

private:
    ProgressModel& model_;
    std::vector<ProgressExample> examples_;
    ParameterList params_;
    Adam adam_;
    std::uint64_t seed_;
    std::size_t epoch_ = 0;
};

struct ProgressTrainResult {
    ProgressModel model;
    std::vector<double> epoch_loss;
};

ProgressTrainResult train_progress(const Corpus& corpus, const ProgressModelConfig& cfg, std::uint64_t seed);

}  // namespace bamaer
