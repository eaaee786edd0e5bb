#include "bamaer/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "bamaer/format.hpp"

namespace bamaer {

void RunConfig::validate() const {
    if (paths.out.empty()) throw ConfigError("paths.out must not be empty");
    synth.validate();
    progress.validate();
    mastery.validate();
    filter.validate();
    ho.validate();
    metrics.validate();
    if (evaluate.list_lengths.empty() || evaluate.populations.empty()) throw ConfigError("evaluate: sweep grids must not be empty");
    for (auto l : evaluate.list_lengths) {
        if (l == 0) throw ConfigError("evaluate: list lengths must be positive");
    }
    for (auto p : evaluate.populations) {
        if (p < 2) throw ConfigError("evaluate: populations must be at least 2");
    }
    parse_report_format(evaluate.format);
    if (bench.runs == 0 || bench.dimension == 0 || !(bench.bound > 0.0)) throw ConfigError("bench: runs, dimension and bound must be positive");
}

std::filesystem::path RunConfig::bank_path() const {
    return paths.bank.empty() ? out_dir() / "synth" / "bank.csv" : std::filesystem::path(paths.bank);
}

std::filesystem::path RunConfig::log_path() const {
    return paths.log.empty() ? out_dir() / "synth" / "log.csv" : std::filesystem::path(paths.log);
}

std::filesystem::path RunConfig::progress_checkpoint_path() const {
    return paths.progress_checkpoint.empty() ? out_dir() / "progress" / "model.ckpt"
                                             : std::filesystem::path(paths.progress_checkpoint);
}

std::filesystem::path RunConfig::mastery_checkpoint_path() const {
    return paths.mastery_checkpoint.empty() ? out_dir() / "mastery" / "model.ckpt"
                                            : std::filesystem::path(paths.mastery_checkpoint);
}

std::uint64_t RunConfig::sub_seed(const char* label) const { return derive_seed(seed, label); }

std::uint64_t RunConfig::effective_ho_seed() const { return ho_seed ? *ho_seed : sub_seed("ho"); }

nlohmann::json to_json(const RunConfig& c) {
    nlohmann::json ho = to_json(c.ho);
    ho["seed"] = c.ho_seed ? nlohmann::json(*c.ho_seed) : nlohmann::json(nullptr);
    return {{"seed", c.seed},
            {"paths",
             {{"out", c.paths.out},
              {"bank", c.paths.bank},
              {"log", c.paths.log},
              {"progress_checkpoint", c.paths.progress_checkpoint},
              {"mastery_checkpoint", c.paths.mastery_checkpoint}}},
            {"synth", to_json(c.synth)},
            {"progress", to_json(c.progress)},
            {"mastery", to_json(c.mastery)},
            {"filter", to_json(c.filter)},
            {"ho", ho},
            {"metrics", to_json(c.metrics)},
            {"evaluate",
             {{"students", c.evaluate.students},
              {"sample", c.evaluate.sample},
              {"list_lengths", c.evaluate.list_lengths},
              {"populations", c.evaluate.populations},
              {"format", c.evaluate.format}}},
            {"bench", {{"runs", c.bench.runs}, {"dimension", c.bench.dimension}, {"bound", c.bench.bound}}}};
}

namespace {

const char* type_name(const nlohmann::json& j) { return j.type_name(); }

bool compatible(const nlohmann::json& def, const nlohmann::json& v) {
    if (def.is_null()) return v.is_null() || v.is_number_unsigned() || v.is_number_float();
    if (def.is_number_unsigned()) return v.is_number_unsigned();
    if (def.is_number_float()) return v.is_number();
    if (def.is_string()) return v.is_string();
    if (def.is_boolean()) return v.is_boolean();
    if (def.is_array()) return v.is_array();
    return false;
}

void overlay(nlohmann::json& base, const nlohmann::json& user, const std::string& where) {
    if (!user.is_object()) throw ConfigError((where.empty() ? "config" : where) + " must be an object");
    for (const auto& [key, value] : user.items()) {
        const std::string name = where.empty() ? key : where + "." + key;
        if (!base.contains(key)) throw ConfigError("unknown key '" + name + "'");
        auto& slot = base[key];
        if (slot.is_object()) {
            overlay(slot, value, name);
        } else if (compatible(slot, value)) {
            slot = value;
        } else {
            throw ConfigError("'" + name + "' has type " + type_name(value) + ", expected " +
                              (slot.is_null() ? std::string("number or null") : std::string(type_name(slot))));
        }
    }
}

}  // namespace

RunConfig run_config_from_json(const nlohmann::json& j) {
    nlohmann::json merged = to_json(RunConfig{});
    overlay(merged, j, "");
    RunConfig c;
    try {
        c.seed = merged.at("seed");
        const auto& p = merged.at("paths");
        c.paths = {p.at("out"), p.at("bank"), p.at("log"), p.at("progress_checkpoint"), p.at("mastery_checkpoint")};
        c.synth = synth_config_from_json(merged.at("synth"));
        c.progress = progress_config_from_json(merged.at("progress"));
        c.mastery = mastery_config_from_json(merged.at("mastery"));
        c.filter = filter_config_from_json(merged.at("filter"));
        auto ho = merged.at("ho");
        if (!ho.at("seed").is_null()) c.ho_seed = ho.at("seed").get<std::uint64_t>();
        ho["seed"] = 0;
        c.ho = ho_config_from_json(ho);
        c.metrics = metric_config_from_json(merged.at("metrics"));
        const auto& e = merged.at("evaluate");
        c.evaluate.students = e.at("students").get<std::vector<StudentId>>();
        c.evaluate.sample = e.at("sample");
        c.evaluate.list_lengths = e.at("list_lengths").get<std::vector<std::size_t>>();
        c.evaluate.populations = e.at("populations").get<std::vector<std::size_t>>();
        c.evaluate.format = e.at("format");
        const auto& b = merged.at("bench");
        c.bench = {b.at("runs"), b.at("dimension"), b.at("bound")};
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError(ex.what());
    }
    c.validate();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError(path.string() + ": " + ex.what());
    }
    return run_config_from_json(j);
}

Corpus load_corpus(const RunConfig& cfg) {
    Corpus c;
    c.bank = load_bank(cfg.bank_path());
    c.histories = load_histories(cfg.log_path(), c.bank);
    return c;
}

// ---------------------------------------------------------------------------

namespace {

void store_optimizer(Checkpoint& ckpt, Adam& adam, const ParameterList& params) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        ckpt.tensors.push_back(to_tensor("adam.m." + params[i]->name, adam.first_moments()[i]));
        ckpt.tensors.push_back(to_tensor("adam.v." + params[i]->name, adam.second_moments()[i]));
    }
    ckpt.meta["adam_steps"] = adam.steps();
}

void restore_optimizer(const Checkpoint& ckpt, Adam& adam, const ParameterList& params) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        Mat m = to_matrix(ckpt.find("adam.m." + params[i]->name));
        Mat v = to_matrix(ckpt.find("adam.v." + params[i]->name));
        if (m.rows() != params[i]->value.rows() || m.cols() != params[i]->value.cols() || v.rows() != m.rows() ||
            v.cols() != m.cols()) {
            throw ShapeMismatch("optimizer state for " + params[i]->name);
        }
        adam.first_moments()[i] = std::move(m);
        adam.second_moments()[i] = std::move(v);
    }
    adam.set_steps(ckpt.meta.at("adam_steps").get<std::uint64_t>());
}

void write_loss_trace(const std::filesystem::path& path, const TrainOutcome& out, bool with_auc) {
    auto f = open_output(path);
    f << (with_auc ? "epoch,loss,holdout_auc\n" : "epoch,loss\n");
    for (std::size_t e = 0; e < out.loss.size(); ++e) {
        f << e + 1 << ',' << format_double(out.loss[e]);
        if (with_auc) f << ',' << format_double(out.holdout_auc[e]);
        f << '\n';
    }
    finish_output(f, path);
}

std::vector<double> meta_vector(const Checkpoint& ckpt, const char* key) {
    return ckpt.meta.contains(key) ? ckpt.meta.at(key).get<std::vector<double>>() : std::vector<double>{};
}

}  // namespace

TrainOutcome train_progress_checkpoint(const Corpus& corpus, const ProgressModelConfig& cfg, std::uint64_t seed,
                                       const std::filesystem::path& checkpoint,
                                       const std::optional<std::filesystem::path>& resume_from) {
    TrainOutcome out;
    std::optional<Checkpoint> prior;
    if (resume_from) prior = load_checkpoint(*resume_from);
    ProgressModel model = prior ? ProgressModel::from_checkpoint(*prior) : ProgressModel(cfg, corpus.bank.n_concepts());
    if (model.n_concepts() != corpus.bank.n_concepts()) throw ConfigError("checkpoint concept count does not match the bank");
    if (prior) {
        seed = prior->seed;
    } else {
        Rng init(derive_seed(seed, "init"));
        model.initialize(init);
    }
    ProgressTrainer trainer(model, corpus, seed);
    auto params = model.parameters();
    if (prior) {
        restore_optimizer(*prior, trainer.optimizer(), params);
        trainer.set_epochs_done(prior->meta.at("epochs_done").get<std::size_t>());
        out.loss = meta_vector(*prior, "loss_trace");
    }
    for (std::size_t e = 0; e < cfg.epochs; ++e) out.loss.push_back(trainer.run_epoch());
    out.epochs_done = trainer.epochs_done();

    Checkpoint ckpt = model.to_checkpoint(seed);
    ckpt.meta["epochs_done"] = out.epochs_done;
    ckpt.meta["loss_trace"] = out.loss;
    store_optimizer(ckpt, trainer.optimizer(), params);
    auto dir = checkpoint.parent_path();
    if (!dir.empty()) std::filesystem::create_directories(dir);
    save_checkpoint(ckpt, checkpoint);
    write_loss_trace(dir / "loss_trace.csv", out, false);
    return out;
}

TrainOutcome train_mastery_checkpoint(const Corpus& corpus, const MasteryModelConfig& cfg, std::uint64_t seed,
                                      const std::filesystem::path& checkpoint,
                                      const std::optional<std::filesystem::path>& resume_from) {
    TrainOutcome out;
    std::optional<Checkpoint> prior;
    if (resume_from) prior = load_checkpoint(*resume_from);
    MasteryModel model = prior ? MasteryModel::from_checkpoint(*prior)
                               : MasteryModel(cfg, corpus.bank.n_concepts(), corpus.bank.n_exercises());
    if (model.n_concepts() != corpus.bank.n_concepts() || model.n_exercises() != corpus.bank.n_exercises()) {
        throw ConfigError("checkpoint shape does not match the bank");
    }
    if (prior) {
        seed = prior->seed;
    } else {
        Rng init(derive_seed(seed, "init"));
        model.initialize(init);
    }
    MasteryTrainer trainer(model, corpus, seed);
    auto params = model.parameters();
    if (prior) {
        restore_optimizer(*prior, trainer.optimizer(), params);
        trainer.set_epochs_done(prior->meta.at("epochs_done").get<std::size_t>());
        out.loss = meta_vector(*prior, "loss_trace");
        out.holdout_auc = meta_vector(*prior, "holdout_auc");
    }
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        out.loss.push_back(trainer.run_epoch());
        out.holdout_auc.push_back(trainer.holdout_auc());
    }
    out.epochs_done = trainer.epochs_done();

    Checkpoint ckpt = model.to_checkpoint(seed);
    ckpt.meta["epochs_done"] = out.epochs_done;
    ckpt.meta["loss_trace"] = out.loss;
    ckpt.meta["holdout_auc"] = out.holdout_auc;
    store_optimizer(ckpt, trainer.optimizer(), params);
    auto dir = checkpoint.parent_path();
    if (!dir.empty()) std::filesystem::create_directories(dir);
    save_checkpoint(ckpt, checkpoint);
    write_loss_trace(dir / "loss_trace.csv", out, true);
    return out;
}

// ---------------------------------------------------------------------------

Recommendation recommend(const Corpus& corpus, const ProgressModel& progress, const MasteryModel& mastery,
                         const StudentHistory& student, const FilterConfig& filter, const HoConfig& ho) {
    const auto& bank = corpus.bank;
    if (progress.n_concepts() != bank.n_concepts() || mastery.n_concepts() != bank.n_concepts() ||
        mastery.n_exercises() != bank.n_exercises()) {
        throw ConfigError("model checkpoints do not match the exercise bank");
    }
    if (student.records.empty()) throw EmptyHistory();
    Recommendation rec;
    rec.student_id = student.student_id;
    const Vec scores = progress.predict_next_concept_scores(student.records, bank);
    rec.progress = learning_progress(scores, concept_weights(concept_stats(student.records, bank)));
    rec.mastery = mastery.final_mastery(student.records, bank);
    rec.difficulty = exercise_difficulties(bank, rec.mastery);
    rec.candidates = candidate_select(bank, rec.progress, rec.difficulty, filter);
    rec.ho = optimize_list(rec, bank, ho);
    return rec;
}

ErHoResult optimize_list(const Recommendation& rec, const ExerciseBank& bank, const HoConfig& ho) {
    std::vector<ExerciseId> ids;
    ids.reserve(rec.candidates.size());
    for (const auto& c : rec.candidates) ids.push_back(c.id);
    HoConfig cfg = ho;
    cfg.seed = derive_seed(ho.seed, std::uint64_t(rec.student_id));
    return run_er_ho(ids, bank, cfg);
}

MetricRow score_recommendation(const Recommendation& rec, const Corpus& corpus, const StudentHistory& student,
                               const FilterConfig& filter, const MetricConfig& metrics) {
    const auto& list = rec.ho.list;
    return {student.student_id, accuracy_metric(list, rec.difficulty, filter.delta, metrics.accuracy_tolerance),
            novelty_metric(list, corpus.bank, student.records, rec.mastery, metrics.mastery_threshold),
            diversity_metric(list, corpus.bank)};
}

std::vector<const StudentHistory*> select_students(const Corpus& corpus, std::span<const StudentId> explicit_ids,
                                                   std::size_t sample, std::uint64_t seed) {
    std::vector<const StudentHistory*> out;
    if (!explicit_ids.empty()) {
        std::vector<StudentId> ids(explicit_ids.begin(), explicit_ids.end());
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        for (auto id : ids) {
            const auto* h = corpus.find_student(id);
            if (!h) throw UnknownStudent(id);
            out.push_back(h);
        }
        return out;
    }
    std::vector<std::size_t> idx(corpus.histories.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (sample < idx.size()) {
        Rng rng(seed);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(sample);
        std::sort(idx.begin(), idx.end());
    }
    for (auto i : idx) out.push_back(&corpus.histories[i]);
    return out;
}

void save_recommendation(std::span<const ExerciseId> list, const std::filesystem::path& path) {
    auto out = open_output(path);
    out << "rank,exercise_id\n";
    for (std::size_t i = 0; i < list.size(); ++i) out << i + 1 << ',' << list[i] << '\n';
    finish_output(out, path);
}

}  // namespace bamaer
