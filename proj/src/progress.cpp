#include "bamaer/progress.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace bamaer {

void ProgressModelConfig::validate() const {
    if (embed_dim == 0 || window == 0 || hidden == 0 || layers == 0 || batch_size == 0) {
        throw ConfigError("progress: embed_dim, window, hidden, layers and batch_size must be positive");
    }
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("progress: learning_rate must be positive");
    if (!(init_scale > 0.0)) throw ConfigError("progress: init_scale must be positive");
}

nlohmann::json to_json(const ProgressModelConfig& c) {
    return {{"embed_dim", c.embed_dim}, {"window", c.window},         {"hidden", c.hidden},
            {"layers", c.layers},       {"neg_samples", c.neg_samples}, {"learning_rate", c.learning_rate},
            {"batch_size", c.batch_size}, {"epochs", c.epochs},        {"init_scale", c.init_scale}};
}

ProgressModelConfig progress_config_from_json(const nlohmann::json& j) {
    ProgressModelConfig c;
    c.embed_dim = j.at("embed_dim");
    c.window = j.at("window");
    c.hidden = j.at("hidden");
    c.layers = j.at("layers");
    c.neg_samples = j.at("neg_samples");
    c.learning_rate = j.at("learning_rate");
    c.batch_size = j.at("batch_size");
    c.epochs = j.at("epochs");
    c.init_scale = j.at("init_scale");
    return c;
}

// ---------------------------------------------------------------------------

ConceptStats concept_stats(std::span<const InteractionRecord> history, const ExerciseBank& bank) {
    ConceptStats s{std::vector<std::uint32_t>(bank.n_concepts(), 0), std::vector<std::uint32_t>(bank.n_concepts(), 0)};
    for (const auto& rec : history) {
        for (ConceptId c : bank.at(rec.exercise_id).concepts()) {
            ++s.occurrences[c];
            if (rec.response == 1) ++s.correct[c];
        }
    }
    return s;
}

Vec concept_weights(const ConceptStats& stats) {
    const auto n = stats.occurrences.size();
    if (stats.correct.size() != n) throw ShapeMismatch("concept stats");
    Vec w(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const auto nu = stats.occurrences[i];
        const auto alpha = stats.correct[i];
        if (alpha > nu) throw ConfigError("concept stats: correct count exceeds occurrences");
        w[Eigen::Index(i)] = nu == 0 ? 1.0 : 1.0 - double(alpha) / double(nu);
    }
    return w;
}

Vec learning_progress(const Vec& scores, const Vec& weights) {
    if (scores.size() != weights.size()) throw ShapeMismatch("learning_progress");
    return scores.cwiseProduct(weights);
}

// ---------------------------------------------------------------------------

std::size_t axis_length(const Tensor3& x, MixAxis axis) {
    switch (axis) {
        case MixAxis::Sequence: return x.length();
        case MixAxis::Feature: return x.features();
        case MixAxis::Channel: return x.channels();
    }
    return 0;
}

namespace {

std::vector<Mat> gather(const Tensor3& x, MixAxis axis) {
    std::vector<Mat> blocks;
    switch (axis) {
        case MixAxis::Sequence:
            for (std::size_t c = 0; c < x.channels(); ++c) blocks.emplace_back(x.channel(c));
            break;
        case MixAxis::Feature:
            for (std::size_t c = 0; c < x.channels(); ++c) blocks.emplace_back(x.channel(c).transpose());
            break;
        case MixAxis::Channel: blocks.emplace_back(x.channel_major()); break;
    }
    return blocks;
}

void scatter(Tensor3& out, const std::vector<Mat>& blocks, MixAxis axis) {
    switch (axis) {
        case MixAxis::Sequence:
            for (std::size_t c = 0; c < out.channels(); ++c) out.channel(c) = blocks[c];
            break;
        case MixAxis::Feature:
            for (std::size_t c = 0; c < out.channels(); ++c) out.channel(c) = blocks[c].transpose();
            break;
        case MixAxis::Channel: out.channel_major() = blocks[0]; break;
    }
}

void init_dense(DenseLayer& layer, Rng& rng) {
    const double bound = std::sqrt(6.0 / double(layer.in_dim() + layer.out_dim()));
    for (Eigen::Index i = 0; i < layer.weight.value.size(); ++i) layer.weight.value.data()[i] = uniform(rng, -bound, bound);
    layer.bias.value.setZero();
}

}  // namespace

MixBranch::MixBranch(const std::string& name, MixAxis ax, std::size_t axis_len, std::size_t hidden)
    : axis(ax),
      expand(name + ".expand", Eigen::Index(axis_len), Eigen::Index(hidden)),
      project(name + ".project", Eigen::Index(hidden), Eigen::Index(axis_len)) {}

Tensor3 MixBranch::forward(const Tensor3& x, Cache* cache) const {
    if (axis_length(x, axis) != std::size_t(expand.in_dim())) throw ShapeMismatch("mix branch axis length");
    auto blocks = gather(x, axis);
    std::vector<Mat> outs;
    outs.reserve(blocks.size());
    for (const auto& a : blocks) {
        Mat pre = expand.forward_columns(a);
        Mat cdf;
        Mat act = gelu(pre, cdf);
        outs.push_back(project.forward_columns(act));
        if (cache) {
            cache->pre.push_back(std::move(pre));
            cache->act.push_back(std::move(act));
            cache->cdf.push_back(std::move(cdf));
        }
    }
    if (cache) cache->inputs = std::move(blocks);
    Tensor3 y(x.channels(), x.length(), x.features());
    scatter(y, outs, axis);
    return y;
}

Tensor3 MixBranch::backward(const Cache& cache, const Tensor3& dy) {
    auto d_blocks = gather(dy, axis);
    std::vector<Mat> d_inputs;
    d_inputs.reserve(d_blocks.size());
    for (std::size_t b = 0; b < d_blocks.size(); ++b) {
        const Mat& pre = cache.pre[b];
        Mat d_hidden = project.backward_columns(cache.act[b], d_blocks[b]);
        d_inputs.push_back(expand.backward_columns(cache.inputs[b], gelu_backward(pre, cache.cdf[b], d_hidden)));
    }
    Tensor3 dx(dy.channels(), dy.length(), dy.features());
    scatter(dx, d_inputs, axis);
    return dx;
}

void MixBranch::append_parameters(ParameterList& out) {
    expand.append_parameters(out);
    project.append_parameters(out);
}

Tensor3 fuse(const Tensor3& y_seq, const Tensor3& y_feat, const Tensor3& y_chan) {
    if (!y_seq.same_shape(y_feat) || !y_seq.same_shape(y_chan)) throw ShapeMismatch("fuse");
    Tensor3 y = y_seq;
    y += y_feat;
    y += y_chan;
    return y;
}

MixerLayer::MixerLayer(const std::string& name, std::size_t m, std::size_t l, std::size_t v, std::size_t hidden)
    : ln_gain(name + ".ln.gain", Eigen::Index(v), 1),
      ln_shift(name + ".ln.shift", Eigen::Index(v), 1),
      sequence(name + ".seq", MixAxis::Sequence, l, hidden),
      feature(name + ".feat", MixAxis::Feature, v, hidden),
      channel(name + ".chan", MixAxis::Channel, m, hidden) {
    ln_gain.value.setOnes();
}

Tensor3 MixerLayer::forward(const Tensor3& x, Cache* cache) const {
    if (std::size_t(ln_gain.value.rows()) != x.features()) throw ShapeMismatch("mixer layer features");
    Tensor3 normalized(x.channels(), x.length(), x.features());
    std::vector<LayerNormCache> rows(x.channels() * x.length());
    const Vec gain = ln_gain.value.col(0), shift = ln_shift.value.col(0);
    for (std::size_t c = 0; c < x.channels(); ++c) {
        for (std::size_t t = 0; t < x.length(); ++t) {
            Vec row = x.channel(c).row(Eigen::Index(t)).transpose();
            normalized.channel(c).row(Eigen::Index(t)) =
                layer_norm(row, gain, shift, kLayerNormEps, &rows[c * x.length() + t]).transpose();
        }
    }
    Cache local;
    Cache& cc = cache ? *cache : local;
    Tensor3 y = fuse(sequence.forward(normalized, &cc.seq), feature.forward(normalized, &cc.feat),
                     channel.forward(normalized, &cc.chan));
    cc.normalized = std::move(normalized);
    cc.rows = std::move(rows);
    return y;
}

Tensor3 MixerLayer::backward(const Cache& cache, const Tensor3& dy) {
    Tensor3 d_norm = sequence.backward(cache.seq, dy);
    d_norm += feature.backward(cache.feat, dy);
    d_norm += channel.backward(cache.chan, dy);
    Tensor3 dx(dy.channels(), dy.length(), dy.features());
    const Vec gain = ln_gain.value.col(0);
    for (std::size_t c = 0; c < dy.channels(); ++c) {
        for (std::size_t t = 0; t < dy.length(); ++t) {
            Vec drow = d_norm.channel(c).row(Eigen::Index(t)).transpose();
            dx.channel(c).row(Eigen::Index(t)) =
                layer_norm_backward(cache.rows[c * dy.length() + t], gain, drow, ln_gain.grad.col(0), ln_shift.grad.col(0))
                    .transpose();
        }
    }
    return dx;
}

void MixerLayer::append_parameters(ParameterList& out) {
    out.push_back(&ln_gain);
    out.push_back(&ln_shift);
    sequence.append_parameters(out);
    feature.append_parameters(out);
    channel.append_parameters(out);
}

// ---------------------------------------------------------------------------

ProgressWindow make_window(std::span<const InteractionRecord> history, std::size_t end, const ExerciseBank& bank,
                           std::size_t window) {
    end = std::min(end, history.size());
    const std::size_t begin = end > window ? end - window : 0;
    const std::size_t pad = window - (end - begin);
    ProgressWindow w;
    w.concepts.resize(window);
    w.responses.assign(window, kPadResponse);
    for (std::size_t i = begin; i < end; ++i) {
        const auto pos = pad + (i - begin);
        w.concepts[pos] = bank.at(history[i].exercise_id).concepts();
        w.responses[pos] = history[i].response;
    }
    return w;
}

ProgressModel::ProgressModel(const ProgressModelConfig& cfg, std::size_t n_concepts)
    : concept_embedding("concept_embedding", Eigen::Index(n_concepts + 1), Eigen::Index(cfg.embed_dim)),
      response_embedding("response_embedding", 3, Eigen::Index(cfg.embed_dim)),
      head("head", Eigen::Index(kProgressChannels * cfg.embed_dim), Eigen::Index(cfg.embed_dim)),
      cfg_(cfg),
      n_concepts_(n_concepts) {
    cfg_.validate();
    if (n_concepts == 0) throw ConfigError("progress: corpus has no concepts");
    for (std::size_t i = 0; i < cfg.layers; ++i) {
        layers.emplace_back("mixer" + std::to_string(i), kProgressChannels, cfg.window, cfg.embed_dim, cfg.hidden);
    }
}

void ProgressModel::initialize(Rng& rng) {
    for (auto* p : {&concept_embedding, &response_embedding}) {
        for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = normal(rng, 0.0, cfg_.init_scale);
    }
    for (auto& layer : layers) {
        for (auto* branch : {&layer.sequence, &layer.feature, &layer.channel}) {
            init_dense(branch->expand, rng);
            init_dense(branch->project, rng);
        }
    }
    init_dense(head, rng);
}

void ProgressModel::zero_output_head() {
    head.weight.value.setZero();
    head.bias.value.setZero();
}

ParameterList ProgressModel::parameters() {
    ParameterList out{&concept_embedding, &response_embedding};
    for (auto& layer : layers) layer.append_parameters(out);
    head.append_parameters(out);
    return out;
}

Tensor3 ProgressModel::build_kc_interaction(const ProgressWindow& window) const {
    const auto l = cfg_.window, d = cfg_.embed_dim;
    if (window.concepts.size() != l || window.responses.size() != l) throw ShapeMismatch("progress window length");
    Tensor3 x(kProgressChannels, l, d);
    for (std::size_t t = 0; t < l; ++t) {
        auto row = x.channel(0).row(Eigen::Index(t));
        const auto& cs = window.concepts[t];
        if (cs.empty()) {
            row = concept_embedding.value.row(Eigen::Index(n_concepts_));
        } else {
            row.setZero();
            for (ConceptId c : cs) {
                if (c >= n_concepts_) throw CorpusError(CorpusError::Kind::UnknownConcept, std::to_string(c));
                row += concept_embedding.value.row(Eigen::Index(c));
            }
            row /= double(cs.size());
        }
        const int resp = window.responses[t];
        if (resp < 0 || resp > kPadResponse) throw ConfigError("progress window: bad response token");
        x.channel(1).row(Eigen::Index(t)) = response_embedding.value.row(resp);
    }
    return x;
}

ProgressModel::Forward ProgressModel::forward(const ProgressWindow& window) const {
    Forward f;
    f.input = build_kc_interaction(window);
    Tensor3 x = f.input;
    f.caches.resize(layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
        f.layer_inputs.push_back(x);
        x = layers[i].forward(x, &f.caches[i]);
    }
    f.output = std::move(x);
    const auto d = cfg_.embed_dim, last = cfg_.window - 1;
    f.last_state.resize(Eigen::Index(kProgressChannels * d));
    for (std::size_t c = 0; c < kProgressChannels; ++c) {
        f.last_state.segment(Eigen::Index(c * d), Eigen::Index(d)) = f.output.channel(c).row(Eigen::Index(last)).transpose();
    }
    f.hidden = head.forward(f.last_state);
    return f;
}

Vec ProgressModel::scores(const Forward& fwd) const {
    return concept_embedding.value.topRows(Eigen::Index(n_concepts_)) * fwd.hidden;
}

Vec ProgressModel::predict_next_concept_scores(std::span<const InteractionRecord> history, const ExerciseBank& bank) const {
    if (history.empty()) throw EmptyHistory();
    return sigmoid(scores(forward(make_window(history, history.size(), bank, cfg_.window))));
}

double ProgressModel::step_loss(const ProgressWindow& window, std::span<const ConceptId> positives,
                                std::span<const ConceptId> negatives) const {
    const auto f = forward(window);
    double loss = 0.0;
    for (ConceptId c : positives) loss -= log_sigmoid(concept_embedding.value.row(c).dot(f.hidden));
    for (ConceptId c : negatives) loss -= log_sigmoid(-concept_embedding.value.row(c).dot(f.hidden));
    return loss;
}

double ProgressModel::step_loss_backward(const ProgressWindow& window, std::span<const ConceptId> positives,
                                         std::span<const ConceptId> negatives, double scale) {
    const auto f = forward(window);
    const auto d = Eigen::Index(cfg_.embed_dim);
    double loss = 0.0;
    Vec d_hidden = Vec::Zero(d);
    auto accumulate = [&](ConceptId c, bool positive) {
        if (c >= n_concepts_) throw CorpusError(CorpusError::Kind::UnknownConcept, std::to_string(c));
        const double s = concept_embedding.value.row(c).dot(f.hidden);
        loss -= positive ? log_sigmoid(s) : log_sigmoid(-s);
        // d/ds of -log sigmoid(s) is sigmoid(s) - 1; of -log(1 - sigmoid(s)) is sigmoid(s)
        const double ds = scale * (positive ? sigmoid(s) - 1.0 : sigmoid(s));
        d_hidden += ds * concept_embedding.value.row(c).transpose();
        concept_embedding.grad.row(c) += ds * f.hidden.transpose();
    };
    for (ConceptId c : positives) accumulate(c, true);
    for (ConceptId c : negatives) accumulate(c, false);

    Vec d_last = head.backward(f.last_state, d_hidden);
    Tensor3 dy(kProgressChannels, cfg_.window, cfg_.embed_dim);
    for (std::size_t c = 0; c < kProgressChannels; ++c) {
        dy.channel(c).row(Eigen::Index(cfg_.window - 1)) = d_last.segment(Eigen::Index(c) * d, d).transpose();
    }
    for (std::size_t i = layers.size(); i-- > 0;) dy = layers[i].backward(f.caches[i], dy);

    for (std::size_t t = 0; t < cfg_.window; ++t) {
        auto d_concept = dy.channel(0).row(Eigen::Index(t));
        const auto& cs = window.concepts[t];
        if (cs.empty()) {
            concept_embedding.grad.row(Eigen::Index(n_concepts_)) += d_concept;
        } else {
            for (ConceptId c : cs) concept_embedding.grad.row(c) += d_concept / double(cs.size());
        }
        response_embedding.grad.row(window.responses[t]) += dy.channel(1).row(Eigen::Index(t));
    }
    return loss;
}

Checkpoint ProgressModel::to_checkpoint(std::uint64_t seed) const {
    Checkpoint ckpt;
    ckpt.kind = kProgressKind;
    ckpt.seed = seed;
    ckpt.meta["config"] = to_json(cfg_);
    ckpt.meta["n_concepts"] = n_concepts_;
    store_parameters(ckpt, const_cast<ProgressModel*>(this)->parameters());
    return ckpt;
}

ProgressModel ProgressModel::from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.kind != kProgressKind) throw IoFailure("expected a " + std::string(kProgressKind) + " checkpoint, got " + ckpt.kind);
    ProgressModel model(progress_config_from_json(ckpt.meta.at("config")), ckpt.meta.at("n_concepts").get<std::size_t>());
    restore_parameters(ckpt, model.parameters());
    return model;
}

// ---------------------------------------------------------------------------

std::vector<ProgressExample> progress_examples(const Corpus& corpus, std::size_t window) {
    std::vector<ProgressExample> out;
    for (const auto& h : corpus.histories) {
        for (std::size_t end = 1; end < h.records.size(); ++end) {
            out.push_back({make_window(h.records, end, corpus.bank, window), corpus.bank.at(h.records[end].exercise_id).concepts()});
        }
    }
    return out;
}

ProgressTrainer::ProgressTrainer(ProgressModel& model, const Corpus& corpus, std::uint64_t seed)
    : model_(model),
      examples_(progress_examples(corpus, model.config().window)),
      params_(model.parameters()),
      adam_(params_, AdamConfig{model.config().learning_rate}),
      seed_(seed) {
    if (examples_.empty()) throw EmptyCorpus("progress training needs a student with at least 2 interactions");
}

std::vector<ConceptId> ProgressTrainer::sample_negatives(std::span<const ConceptId> targets, Rng& rng) const {
    std::vector<ConceptId> out;
    const auto n = model_.n_concepts();
    if (targets.size() >= n) return out;
    for (std::size_t k = 0; k < model_.config().neg_samples; ++k) {
        while (true) {
            auto c = ConceptId(uniform_index(rng, n));
            if (std::find(targets.begin(), targets.end(), c) == targets.end()) {
                out.push_back(c);
                break;
            }
        }
    }
    return out;
}

double ProgressTrainer::run_epoch() {
    Rng rng(derive_seed(seed_, std::uint64_t(epoch_)));
    std::vector<std::size_t> order(examples_.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    const auto batch = model_.config().batch_size;
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
        const auto stop = std::min(order.size(), start + batch);
        zero_grads(params_);
        const double scale = 1.0 / double(stop - start);
        for (std::size_t i = start; i < stop; ++i) {
            const auto& ex = examples_[order[i]];
            auto negatives = sample_negatives(ex.targets, rng);
            total += model_.step_loss_backward(ex.window, ex.targets, negatives, scale);
        }
        if (!std::isfinite(total)) throw DivergedLoss("progress epoch " + std::to_string(epoch_ + 1));
        adam_.step();
    }
    ++epoch_;
    return total / double(order.size());
}

double ProgressTrainer::evaluate(std::span<const ProgressExample> batch,
                                 std::span<const std::vector<ConceptId>> negatives) const {
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) total += model_.step_loss(batch[i].window, batch[i].targets, negatives[i]);
    return batch.empty() ? 0.0 : total / double(batch.size());
}

ProgressTrainResult train_progress(const Corpus& corpus, const ProgressModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ProgressTrainResult result{ProgressModel(cfg, corpus.bank.n_concepts()), {}};
    Rng init_rng(derive_seed(seed, "init"));
    result.model.initialize(init_rng);
    ProgressTrainer trainer(result.model, corpus, seed);
    for (std::size_t e = 0; e < cfg.epochs; ++e) result.epoch_loss.push_back(trainer.run_epoch());
    return result;
}

}  // namespace bamaer
