#include "bamaer/mastery.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace bamaer {

void MasteryModelConfig::validate() const {
    if (embed_dim == 0 || memory_slots == 0 || hidden == 0 || window == 0 || batch_size == 0) {
        throw ConfigError("mastery: embed_dim, memory_slots, hidden, window and batch_size must be positive");
    }
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("mastery: learning_rate must be positive");
    if (!(init_scale > 0.0)) throw ConfigError("mastery: init_scale must be positive");
    if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) throw ConfigError("mastery: holdout_fraction must be in [0,1)");
    if (!std::isfinite(lambda_init) || !std::isfinite(gate_init)) throw ConfigError("mastery: non-finite initial value");
}

nlohmann::json to_json(const MasteryModelConfig& c) {
    return {{"embed_dim", c.embed_dim},   {"memory_slots", c.memory_slots},   {"hidden", c.hidden},
            {"window", c.window},         {"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
            {"epochs", c.epochs},         {"lambda_init", c.lambda_init},     {"gate_init", c.gate_init},
            {"init_scale", c.init_scale}, {"holdout_fraction", c.holdout_fraction}};
}

MasteryModelConfig mastery_config_from_json(const nlohmann::json& j) {
    MasteryModelConfig c;
    c.embed_dim = j.at("embed_dim");
    c.memory_slots = j.at("memory_slots");
    c.hidden = j.at("hidden");
    c.window = j.at("window");
    c.learning_rate = j.at("learning_rate");
    c.batch_size = j.at("batch_size");
    c.epochs = j.at("epochs");
    c.lambda_init = j.at("lambda_init");
    c.gate_init = j.at("gate_init");
    c.init_scale = j.at("init_scale");
    c.holdout_fraction = j.at("holdout_fraction");
    return c;
}

// ---------------------------------------------------------------------------

namespace {

Vec concat(const Vec& a, const Vec& b) {
    Vec out(a.size() + b.size());
    out << a, b;
    return out;
}

}  // namespace

EmbeddedPair embed_pair(const Vec& concept_emb, const Vec& exercise, const Vec& response, double lambda) {
    if (concept_emb.size() != exercise.size() || concept_emb.size() != response.size()) throw ShapeMismatch("embed_pair");
    return {softmax(concat(concept_emb, lambda * exercise)),
            softmax(concat(concept_emb + response, lambda * (exercise + response)))};
}

Mat context_encode(const Mat& sequence, const Mat& w_query, const Mat& w_key, const Mat& w_value) {
    if (sequence.rows() == 0) throw ShapeMismatch("context_encode: empty sequence");
    if (w_query.cols() != sequence.cols()) throw ShapeMismatch("context_encode projection width");
    Mat q = sequence * w_query.transpose(), k = sequence * w_key.transpose(), v = sequence * w_value.transpose();
    return scaled_dot_attention(q, k, v, AttentionMask::Causal).output;
}

Mat knowledge_state(const Mat& encoded_exercises, const Mat& encoded_interactions, const Mat& w_query,
                    const Mat& w_key, const Mat& w_value) {
    if (encoded_exercises.rows() != encoded_interactions.rows()) throw ShapeMismatch("knowledge_state sequence lengths");
    Mat q = encoded_exercises * w_query.transpose(), k = encoded_exercises * w_key.transpose();
    Mat v = encoded_interactions * w_value.transpose();
    return scaled_dot_attention(q, k, v, AttentionMask::StrictlyPast).output;
}

Vec correlation_weights(const Mat& memory_keys, const Vec& u) {
    if (memory_keys.cols() != u.size()) throw ShapeMismatch("correlation_weights");
    return softmax(memory_keys * u);
}

Mat memory_update(const Mat& previous, const Vec& weights, const Vec& state, double gate) {
    if (previous.rows() != weights.size() || previous.cols() != state.size()) throw ShapeMismatch("memory_update");
    return gate * (weights * state.transpose()) + (1.0 - gate) * previous;
}

Vec memory_read(const Vec& weights, const Mat& memory) {
    if (memory.rows() != weights.size()) throw ShapeMismatch("memory_read");
    return memory.transpose() * weights;
}

Vec predict_mastery(const MasteryHead& head, const Vec& read, const Vec& state) {
    return sigmoid(head.output.forward(tanh(head.state.forward(concat(read, state)))));
}

ExerciseAssessment exercise_proficiency(const Vec& mastery, std::span<const ConceptId> concepts) {
    if (concepts.empty()) throw CorpusError(CorpusError::Kind::EmptyConceptList, "exercise_proficiency");
    double r = 1.0;
    for (ConceptId c : concepts) {
        if (Eigen::Index(c) >= mastery.size()) throw ShapeMismatch("exercise_proficiency concept index");
        r *= mastery[Eigen::Index(c)];
    }
    return {r, 1.0 - r};
}

ExerciseAssessment exercise_proficiency(const Vec& mastery, const Exercise& exercise) {
    return exercise_proficiency(mastery, std::span<const ConceptId>(exercise.concepts()));
}

double product_bce(const Vec& logits, std::span<const ConceptId> concepts, int label, Vec* d_logits, double scale) {
    double log_r = 0.0;
    for (ConceptId c : concepts) log_r += log_sigmoid(logits[Eigen::Index(c)]);
    // 1 - R = -expm1(log R); floored so a saturated prediction stays finite.
    const double one_minus_r = std::max(-std::expm1(log_r), 1e-300);
    const double loss = label == 1 ? -log_r : -std::log(one_minus_r);
    if (d_logits) {
        const double d_log_r = label == 1 ? -1.0 : std::exp(log_r) / one_minus_r;
        for (ConceptId c : concepts) {
            const auto i = Eigen::Index(c);
            (*d_logits)[i] += scale * d_log_r * (1.0 - sigmoid(logits[i]));
        }
    }
    return loss;
}

// ---------------------------------------------------------------------------

WindowBuffer::WindowBuffer(std::size_t window, std::size_t dim) {
    const auto w = Eigen::Index(window), d = Eigen::Index(dim);
    for (Mat* m : {&enc_u_keys, &enc_u_values, &enc_g_keys, &enc_g_values, &state_keys, &state_values}) {
        *m = Mat::Zero(w, d);
    }
}

MasteryModel::MasteryModel(const MasteryModelConfig& cfg, std::size_t n_concepts, std::size_t n_exercises)
    : concept_embedding("concept_embedding", Eigen::Index(n_concepts), Eigen::Index(cfg.embed_dim)),
      exercise_embedding("exercise_embedding", Eigen::Index(n_exercises), Eigen::Index(cfg.embed_dim)),
      response_embedding("response_embedding", 2, Eigen::Index(cfg.embed_dim)),
      lambda("lambda", 1, 1),
      enc_u_query("enc_u.query", Eigen::Index(cfg.embed_dim), Eigen::Index(2 * cfg.embed_dim)),
      enc_u_key("enc_u.key", Eigen::Index(cfg.embed_dim), Eigen::Index(2 * cfg.embed_dim)),
      enc_u_value("enc_u.value", Eigen::Index(cfg.embed_dim), Eigen::Index(2 * cfg.embed_dim)),
      enc_g_query("enc_g.query", Eigen::Index(cfg.embed_dim), Eigen::Index(2 * cfg.embed_dim)),
      enc_g_key("enc_g.key", Eigen::Index(cfg.embed_dim), Eigen::Index(2 * cfg.embed_dim)),
      enc_g_value("enc_g.value", Eigen::Index(cfg.embed_dim), Eigen::Index(2 * cfg.embed_dim)),
      state_query("state.query", Eigen::Index(cfg.embed_dim), Eigen::Index(cfg.embed_dim)),
      state_key("state.key", Eigen::Index(cfg.embed_dim), Eigen::Index(cfg.embed_dim)),
      state_value("state.value", Eigen::Index(cfg.embed_dim), Eigen::Index(cfg.embed_dim)),
      memory_keys("memory_keys", Eigen::Index(cfg.memory_slots), Eigen::Index(2 * cfg.embed_dim)),
      gate_raw("gate", 1, 1),
      head{DenseLayer("head.state", Eigen::Index(2 * cfg.embed_dim), Eigen::Index(cfg.hidden)),
           DenseLayer("head.output", Eigen::Index(cfg.hidden), Eigen::Index(n_concepts))},
      cfg_(cfg),
      n_concepts_(n_concepts),
      n_exercises_(n_exercises) {
    cfg_.validate();
    if (n_concepts == 0 || n_exercises == 0) throw ConfigError("mastery: corpus has no concepts or exercises");
    lambda.scalar() = cfg.lambda_init;
    gate_raw.scalar() = cfg.gate_init;
}

void MasteryModel::initialize(Rng& rng) {
    for (auto* p : {&concept_embedding, &exercise_embedding, &response_embedding, &memory_keys}) {
        for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = normal(rng, 0.0, cfg_.init_scale);
    }
    auto glorot = [&](Mat& w) {
        const double bound = std::sqrt(6.0 / double(w.rows() + w.cols()));
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = uniform(rng, -bound, bound);
    };
    for (auto* p : {&enc_u_query, &enc_u_key, &enc_u_value, &enc_g_query, &enc_g_key, &enc_g_value, &state_query,
                    &state_key, &state_value}) {
        glorot(p->value);
    }
    glorot(head.state.weight.value);
    glorot(head.output.weight.value);
    head.state.bias.value.setZero();
    head.output.bias.value.setZero();
    lambda.scalar() = cfg_.lambda_init;
    gate_raw.scalar() = cfg_.gate_init;
}

double MasteryModel::gate() const { return sigmoid(gate_raw.scalar()); }

Mat MasteryModel::empty_memory() const { return Mat::Zero(Eigen::Index(cfg_.memory_slots), Eigen::Index(cfg_.embed_dim)); }

Vec MasteryModel::concept_vector(const ExerciseBank& bank, ExerciseId exercise) const {
    const auto& concepts = bank.at(exercise).concepts();
    Vec k = Vec::Zero(Eigen::Index(cfg_.embed_dim));
    for (ConceptId c : concepts) k += concept_embedding.value.row(c).transpose();
    return k / double(concepts.size());
}

ParameterList MasteryModel::parameters() {
    ParameterList out{&concept_embedding, &exercise_embedding, &response_embedding, &lambda,
                      &enc_u_query,       &enc_u_key,          &enc_u_value,        &enc_g_query,
                      &enc_g_key,         &enc_g_value,        &state_query,        &state_key,
                      &state_value,       &memory_keys,        &gate_raw};
    head.state.append_parameters(out);
    head.output.append_parameters(out);
    return out;
}

Vec MasteryModel::step(WindowBuffer& buffer, Mat& memory, const ExerciseBank& bank, ExerciseId exercise, int response,
                       StepCache* cache) const {
    if (buffer.count >= buffer.capacity()) throw ShapeMismatch("mastery window buffer is full");
    if (exercise >= n_exercises_) throw CorpusError(CorpusError::Kind::UnknownExercise, std::to_string(exercise));
    if (response != 0 && response != 1) throw CorpusError(CorpusError::Kind::NonBinaryResponse, std::to_string(response));
    const auto p = Eigen::Index(buffer.count);
    const auto count_inclusive = buffer.count + 1;

    Vec k = concept_vector(bank, exercise);
    Vec e = exercise_embedding.value.row(exercise).transpose();
    Vec r = response_embedding.value.row(response).transpose();
    auto pair = embed_pair(k, e, r, lambda.scalar());

    Vec u_query = enc_u_query.value * pair.u;
    buffer.enc_u_keys.row(p) = (enc_u_key.value * pair.u).transpose();
    buffer.enc_u_values.row(p) = (enc_u_value.value * pair.u).transpose();
    Vec u_weights = Vec::Zero(buffer.enc_u_keys.rows());
    Vec u_hat = attend_row(u_query, buffer.enc_u_keys, buffer.enc_u_values, count_inclusive, u_weights);

    Vec g_query = enc_g_query.value * pair.g;
    buffer.enc_g_keys.row(p) = (enc_g_key.value * pair.g).transpose();
    buffer.enc_g_values.row(p) = (enc_g_value.value * pair.g).transpose();
    Vec g_weights = Vec::Zero(buffer.enc_g_keys.rows());
    Vec g_hat = attend_row(g_query, buffer.enc_g_keys, buffer.enc_g_values, count_inclusive, g_weights);

    Vec s_query = state_query.value * u_hat;
    buffer.state_keys.row(p) = (state_key.value * u_hat).transpose();
    buffer.state_values.row(p) = (state_value.value * g_hat).transpose();
    Vec s_weights = Vec::Zero(buffer.state_keys.rows());
    Vec s = attend_row(s_query, buffer.state_keys, buffer.state_values, buffer.count, s_weights);

    Vec w = correlation_weights(memory_keys.value, pair.u);
    Mat previous = memory;
    memory = memory_update(previous, w, s, gate());
    Vec m = memory_read(w, memory);

    Vec head_in = concat(m, s);
    Vec theta = tanh(head.state.forward(head_in));
    Vec logits = head.output.forward(theta);
    ++buffer.count;

    if (cache) {
        cache->exercise = exercise;
        cache->response = response;
        cache->concept_emb = std::move(k);
        cache->exercise_emb = std::move(e);
        cache->response_emb = std::move(r);
        cache->u = std::move(pair.u);
        cache->g = std::move(pair.g);
        cache->enc_u_query = std::move(u_query);
        cache->enc_u_weights = std::move(u_weights);
        cache->u_hat = std::move(u_hat);
        cache->enc_g_query = std::move(g_query);
        cache->enc_g_weights = std::move(g_weights);
        cache->g_hat = std::move(g_hat);
        cache->state_query = std::move(s_query);
        cache->state_weights = std::move(s_weights);
        cache->state = std::move(s);
        cache->slot_weights = std::move(w);
        cache->memory_prev = std::move(previous);
        cache->read = std::move(m);
        cache->head_in = std::move(head_in);
        cache->theta = std::move(theta);
        cache->logits = logits;
    }
    return logits;
}

WindowTrace MasteryModel::forward_window(std::span<const InteractionRecord> records, const ExerciseBank& bank,
                                         Mat& memory) const {
    if (records.size() > cfg_.window) throw ShapeMismatch("window longer than configured attention window");
    WindowTrace trace{WindowBuffer(cfg_.window, cfg_.embed_dim), std::vector<StepCache>(records.size())};
    for (std::size_t i = 0; i < records.size(); ++i) {
        step(trace.buffer, memory, bank, records[i].exercise_id, records[i].response, &trace.steps[i]);
    }
    return trace;
}

void MasteryModel::backward_window(const WindowTrace& trace, const ExerciseBank& bank, std::span<const Vec> d_logits) {
    const auto n = trace.steps.size();
    if (d_logits.size() != n) throw ShapeMismatch("backward_window gradient count");
    const auto d = Eigen::Index(cfg_.embed_dim);
    const auto& buf = trace.buffer;
    const double gate_value = gate();
    const double lam = lambda.scalar();

    Mat d_state_keys = Mat::Zero(buf.state_keys.rows(), d), d_state_values = Mat::Zero(buf.state_values.rows(), d);
    Mat d_u_keys = Mat::Zero(buf.enc_u_keys.rows(), d), d_u_values = Mat::Zero(buf.enc_u_values.rows(), d);
    Mat d_g_keys = Mat::Zero(buf.enc_g_keys.rows(), d), d_g_values = Mat::Zero(buf.enc_g_values.rows(), d);
    Mat d_memory_carry = Mat::Zero(Eigen::Index(cfg_.memory_slots), d);
    double d_gate = 0.0;

    for (std::size_t idx = n; idx-- > 0;) {
        const auto& c = trace.steps[idx];
        const auto p = Eigen::Index(idx);

        // Head.
        Vec d_theta = head.output.backward(c.theta, d_logits[idx]);
        Vec d_pre = d_theta.cwiseProduct((1.0 - c.theta.array().square()).matrix());
        Vec d_head_in = head.state.backward(c.head_in, d_pre);
        Vec d_read = d_head_in.head(d);
        Vec d_s = d_head_in.tail(d);

        // Memory read and write.
        const Mat memory = memory_update(c.memory_prev, c.slot_weights, c.state, gate_value);
        Mat d_memory = d_memory_carry + c.slot_weights * d_read.transpose();
        Vec d_w = memory * d_read;
        d_w += gate_value * (d_memory * c.state);
        d_s += gate_value * (d_memory.transpose() * c.slot_weights);
        d_gate += (d_memory.cwiseProduct(c.slot_weights * c.state.transpose() - c.memory_prev)).sum();
        d_memory_carry = (1.0 - gate_value) * d_memory;

        // Correlation weights.
        Vec d_w_logits = softmax_backward(c.slot_weights, d_w);
        memory_keys.grad.noalias() += d_w_logits * c.u.transpose();
        Vec d_u = memory_keys.value.transpose() * d_w_logits;

        // Knowledge-state retrieval over strictly earlier positions.
        Vec d_s_query = attend_row_backward(c.state_query, buf.state_keys, buf.state_values, idx, c.state_weights, d_s,
                                            d_state_keys, d_state_values);
        state_query.grad.noalias() += d_s_query * c.u_hat.transpose();
        Vec d_u_hat = state_query.value.transpose() * d_s_query;
        // Later rows have all contributed to this position's key/value by now.
        Vec d_sk = d_state_keys.row(p).transpose(), d_sv = d_state_values.row(p).transpose();
        state_key.grad.noalias() += d_sk * c.u_hat.transpose();
        d_u_hat += state_key.value.transpose() * d_sk;
        state_value.grad.noalias() += d_sv * c.g_hat.transpose();
        Vec d_g_hat = state_value.value.transpose() * d_sv;

        // Context encoders (causal, inclusive).
        Vec d_uq = attend_row_backward(c.enc_u_query, buf.enc_u_keys, buf.enc_u_values, idx + 1, c.enc_u_weights,
                                       d_u_hat, d_u_keys, d_u_values);
        Vec d_uk = d_u_keys.row(p).transpose(), d_uv = d_u_values.row(p).transpose();
        enc_u_query.grad.noalias() += d_uq * c.u.transpose();
        enc_u_key.grad.noalias() += d_uk * c.u.transpose();
        enc_u_value.grad.noalias() += d_uv * c.u.transpose();
        d_u += enc_u_query.value.transpose() * d_uq + enc_u_key.value.transpose() * d_uk +
               enc_u_value.value.transpose() * d_uv;

        Vec d_gq = attend_row_backward(c.enc_g_query, buf.enc_g_keys, buf.enc_g_values, idx + 1, c.enc_g_weights,
                                       d_g_hat, d_g_keys, d_g_values);
        Vec d_gk = d_g_keys.row(p).transpose(), d_gv = d_g_values.row(p).transpose();
        enc_g_query.grad.noalias() += d_gq * c.g.transpose();
        enc_g_key.grad.noalias() += d_gk * c.g.transpose();
        enc_g_value.grad.noalias() += d_gv * c.g.transpose();
        Vec d_g = enc_g_query.value.transpose() * d_gq + enc_g_key.value.transpose() * d_gk +
                  enc_g_value.value.transpose() * d_gv;

        // Pair embedding.
        Vec d_au = softmax_backward(c.u, d_u);
        Vec d_ag = softmax_backward(c.g, d_g);
        Vec d_k = d_au.head(d) + d_ag.head(d);
        Vec d_e = lam * (d_au.tail(d) + d_ag.tail(d));
        Vec d_r = d_ag.head(d) + lam * d_ag.tail(d);
        lambda.scalar_grad() += c.exercise_emb.dot(d_au.tail(d)) + (c.exercise_emb + c.response_emb).dot(d_ag.tail(d));

        const auto& concepts = bank.at(c.exercise).concepts();
        for (ConceptId cid : concepts) concept_embedding.grad.row(cid) += d_k.transpose() / double(concepts.size());
        exercise_embedding.grad.row(c.exercise) += d_e.transpose();
        response_embedding.grad.row(c.response) += d_r.transpose();
    }
    gate_raw.scalar_grad() += d_gate * gate_value * (1.0 - gate_value);
}

std::vector<Vec> MasteryModel::mastery_trace(std::span<const InteractionRecord> history, const ExerciseBank& bank) const {
    std::vector<Vec> out;
    out.reserve(history.size());
    Mat memory = empty_memory();
    for (std::size_t start = 0; start < history.size(); start += cfg_.window) {
        const auto len = std::min(cfg_.window, history.size() - start);
        auto trace = forward_window(history.subspan(start, len), bank, memory);
        for (const auto& s : trace.steps) out.push_back(sigmoid(s.logits));
    }
    return out;
}

Vec MasteryModel::final_mastery(std::span<const InteractionRecord> history, const ExerciseBank& bank) const {
    if (history.empty()) throw EmptyHistory();
    MasterySession session(*this, bank);
    for (const auto& r : history) session.observe(r.exercise_id, r.response);
    return session.mastery();
}

Checkpoint MasteryModel::to_checkpoint(std::uint64_t seed) const {
    Checkpoint ckpt;
    ckpt.kind = kMasteryKind;
    ckpt.seed = seed;
    ckpt.meta["config"] = to_json(cfg_);
    ckpt.meta["n_concepts"] = n_concepts_;
    ckpt.meta["n_exercises"] = n_exercises_;
    store_parameters(ckpt, const_cast<MasteryModel*>(this)->parameters());
    return ckpt;
}

MasteryModel MasteryModel::from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.kind != kMasteryKind) throw IoFailure("expected a " + std::string(kMasteryKind) + " checkpoint, got " + ckpt.kind);
    MasteryModel model(mastery_config_from_json(ckpt.meta.at("config")), ckpt.meta.at("n_concepts").get<std::size_t>(),
                       ckpt.meta.at("n_exercises").get<std::size_t>());
    restore_parameters(ckpt, model.parameters());
    return model;
}

// ---------------------------------------------------------------------------

MasterySession::MasterySession(const MasteryModel& model, const ExerciseBank& bank)
    : model_(model),
      bank_(bank),
      buffer_(model.config().window, model.config().embed_dim),
      memory_(model.empty_memory()) {}

Vec MasterySession::observe(ExerciseId exercise, int response) {
    if (buffer_.count == buffer_.capacity()) buffer_ = WindowBuffer(model_.config().window, model_.config().embed_dim);
    last_ = sigmoid(model_.step(buffer_, memory_, bank_, exercise, response));
    ++steps_;
    return last_;
}

void MasterySession::reset_memory() { memory_ = model_.empty_memory(); }

const Vec& MasterySession::mastery() const {
    if (steps_ == 0) throw EmptyHistory();
    return last_;
}

Checkpoint MasterySession::snapshot() const {
    Checkpoint ckpt;
    ckpt.kind = kMemStateKind;
    ckpt.meta["steps"] = steps_;
    ckpt.meta["window_count"] = buffer_.count;
    ckpt.tensors.push_back(to_tensor("memory", memory_));
    ckpt.tensors.push_back(to_tensor("enc_u.keys", buffer_.enc_u_keys));
    ckpt.tensors.push_back(to_tensor("enc_u.values", buffer_.enc_u_values));
    ckpt.tensors.push_back(to_tensor("enc_g.keys", buffer_.enc_g_keys));
    ckpt.tensors.push_back(to_tensor("enc_g.values", buffer_.enc_g_values));
    ckpt.tensors.push_back(to_tensor("state.keys", buffer_.state_keys));
    ckpt.tensors.push_back(to_tensor("state.values", buffer_.state_values));
    ckpt.tensors.push_back(to_tensor("last", steps_ ? Mat(last_) : Mat(0, 1)));
    return ckpt;
}

void MasterySession::restore(const Checkpoint& ckpt) {
    if (ckpt.kind != kMemStateKind) throw IoFailure("expected a " + std::string(kMemStateKind) + " snapshot, got " + ckpt.kind);
    Mat memory = to_matrix(ckpt.find("memory"));
    if (memory.rows() != memory_.rows() || memory.cols() != memory_.cols()) throw ShapeMismatch("memory snapshot");
    WindowBuffer buffer(model_.config().window, model_.config().embed_dim);
    auto load = [&](const char* name, Mat& target) {
        Mat m = to_matrix(ckpt.find(name));
        if (m.rows() != target.rows() || m.cols() != target.cols()) throw ShapeMismatch(std::string("snapshot ") + name);
        target = std::move(m);
    };
    load("enc_u.keys", buffer.enc_u_keys);
    load("enc_u.values", buffer.enc_u_values);
    load("enc_g.keys", buffer.enc_g_keys);
    load("enc_g.values", buffer.enc_g_values);
    load("state.keys", buffer.state_keys);
    load("state.values", buffer.state_values);
    buffer.count = ckpt.meta.at("window_count").get<std::size_t>();
    if (buffer.count > buffer.capacity()) throw ShapeMismatch("snapshot window count");
    memory_ = std::move(memory);
    buffer_ = std::move(buffer);
    steps_ = ckpt.meta.at("steps").get<std::size_t>();
    Mat last = to_matrix(ckpt.find("last"));
    last_ = steps_ ? Vec(last.col(0)) : Vec();
}

// ---------------------------------------------------------------------------

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw ShapeMismatch("roc_auc");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Mann-Whitney U with average ranks for ties.
    double rank_sum_pos = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * double(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] == 1) {
                rank_sum_pos += avg_rank;
                ++n_pos;
            }
        }
        i = j;
    }
    const std::size_t n_neg = scores.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) return 0.5;
    return (rank_sum_pos - double(n_pos) * double(n_pos + 1) / 2.0) / (double(n_pos) * double(n_neg));
}

double next_response_auc(const MasteryModel& model, const Corpus& corpus, std::span<const std::size_t> students) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (auto s : students) {
        const auto& records = corpus.histories[s].records;
        auto trace = model.mastery_trace(records, corpus.bank);
        for (std::size_t t = 0; t + 1 < records.size(); ++t) {
            scores.push_back(exercise_proficiency(trace[t], corpus.bank.at(records[t + 1].exercise_id)).proficiency);
            labels.push_back(records[t + 1].response);
        }
    }
    return roc_auc(scores, labels);
}

MasteryTrainer::MasteryTrainer(MasteryModel& model, const Corpus& corpus, std::uint64_t seed)
    : model_(model),
      corpus_(corpus),
      params_(model.parameters()),
      adam_(params_, AdamConfig{model.config().learning_rate}),
      seed_(seed) {
    std::vector<std::size_t> usable;
    for (std::size_t i = 0; i < corpus.histories.size(); ++i) {
        if (corpus.histories[i].records.size() >= 2) usable.push_back(i);
    }
    if (usable.empty()) throw EmptyCorpus("mastery training needs a student with at least 2 interactions");
    Rng rng(derive_seed(seed, "split"));
    std::shuffle(usable.begin(), usable.end(), rng);
    auto n_holdout = std::size_t(std::ceil(model.config().holdout_fraction * double(usable.size())));
    n_holdout = std::min(n_holdout, usable.size() - 1);
    holdout_.assign(usable.begin(), usable.begin() + std::ptrdiff_t(n_holdout));
    train_.assign(usable.begin() + std::ptrdiff_t(n_holdout), usable.end());
    std::sort(holdout_.begin(), holdout_.end());
    std::sort(train_.begin(), train_.end());
}

double MasteryTrainer::run_epoch() {
    Rng rng(derive_seed(seed_, std::uint64_t(epoch_)));
    std::vector<std::size_t> order = train_;
    std::shuffle(order.begin(), order.end(), rng);
    const auto window = model_.config().window;
    const auto batch = model_.config().batch_size;

    double total = 0.0;
    std::size_t n_targets = 0;
    // Each update consumes up to `batch` student windows; a student's windows are
    // visited in order with its memory carried between them.
    struct Cursor {
        std::size_t student;
        std::size_t start;
        Mat memory;
    };
    std::vector<Cursor> active;
    std::size_t next_student = 0;
    while (true) {
        while (active.size() < batch && next_student < order.size()) {
            active.push_back({order[next_student++], 0, model_.empty_memory()});
        }
        if (active.empty()) break;

        zero_grads(params_);
        std::vector<std::pair<WindowTrace, std::vector<Vec>>> work;
        std::size_t batch_targets = 0;
        for (auto& cur : active) {
            const auto& records = corpus_.histories[cur.student].records;
            const auto len = std::min(window, records.size() - cur.start);
            auto trace = model_.forward_window(std::span(records).subspan(cur.start, len), corpus_.bank, cur.memory);
            std::vector<Vec> d_logits(len, Vec::Zero(Eigen::Index(model_.n_concepts())));
            for (std::size_t i = 0; i < len; ++i) {
                if (cur.start + i + 1 < records.size()) ++batch_targets;
            }
            work.emplace_back(std::move(trace), std::move(d_logits));
        }
        const double scale = batch_targets ? 1.0 / double(batch_targets) : 0.0;
        for (std::size_t a = 0; a < active.size(); ++a) {
            auto& cur = active[a];
            auto& [trace, d_logits] = work[a];
            const auto& records = corpus_.histories[cur.student].records;
            for (std::size_t i = 0; i < trace.steps.size(); ++i) {
                const auto next = cur.start + i + 1;
                if (next >= records.size()) continue;
                const auto& target = corpus_.bank.at(records[next].exercise_id).concepts();
                total += product_bce(trace.steps[i].logits, target, records[next].response, &d_logits[i], scale);
                ++n_targets;
            }
            model_.backward_window(trace, corpus_.bank, d_logits);
            cur.start += trace.steps.size();
        }
        if (!std::isfinite(total)) throw DivergedLoss("mastery epoch " + std::to_string(epoch_ + 1));
        if (batch_targets) adam_.step();
        std::erase_if(active, [&](const Cursor& c) { return c.start >= corpus_.histories[c.student].records.size(); });
    }
    ++epoch_;
    return n_targets ? total / double(n_targets) : 0.0;
}

double MasteryTrainer::holdout_auc() const {
    return holdout_.empty() ? 0.5 : next_response_auc(model_, corpus_, holdout_);
}

MasteryTrainResult train_mastery(const Corpus& corpus, const MasteryModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    MasteryTrainResult result{MasteryModel(cfg, corpus.bank.n_concepts(), corpus.bank.n_exercises()), {}, {}};
    Rng init_rng(derive_seed(seed, "init"));
    result.model.initialize(init_rng);
    MasteryTrainer trainer(result.model, corpus, seed);
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        result.epoch_loss.push_back(trainer.run_epoch());
        result.holdout_auc.push_back(trainer.holdout_auc());
    }
    return result;
}

}  // namespace bamaer
