// bamaer: synth, train-progress, train-mastery, recommend, evaluate, bench-ho.
//
// Exit codes: 0 ok, 2 config or validation, 3 numeric failure, 4 I/O.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "bamaer/format.hpp"
#include "bamaer/pipeline.hpp"

namespace fs = std::filesystem;
using namespace bamaer;

namespace {

struct Options {
    std::string config;
    std::uint64_t seed = 0;
    std::string out;
    bool print_config = false;

    std::size_t window = 0, neg_samples = 0, epochs = 0;
    double lr = 0.0;
    std::string resume;

    std::size_t ho_n = 0, ho_t = 0;
    std::uint64_t ho_seed = 0;

    StudentId student = 0;
    std::vector<StudentId> students;
    std::size_t sample = 0;
    std::string sweep = "none";
    std::string format;

    const CLI::App* parsed = nullptr;
    bool has(const std::string& name) const {
        const auto* opt = parsed->get_option_no_throw("--" + name);
        return opt && opt->count() > 0;
    }
};

void add_common(CLI::App* cmd, Options& o) {
    cmd->add_option("--config", o.config, "JSON run configuration");
    cmd->add_option("--seed", o.seed, "global seed");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_flag("--print-config", o.print_config, "print the effective configuration and exit");
}

void add_training(CLI::App* cmd, Options& o, bool progress) {
    cmd->add_option("--window", o.window, "window length");
    cmd->add_option("--epochs", o.epochs, "epochs to run");
    cmd->add_option("--lr", o.lr, "Adam learning rate");
    cmd->add_option("--resume", o.resume, "checkpoint to continue from");
    if (progress) cmd->add_option("--neg-samples", o.neg_samples, "negatives per step");
}

void add_ho(CLI::App* cmd, Options& o) {
    cmd->add_option("--ho-n", o.ho_n, "population size");
    cmd->add_option("--ho-t", o.ho_t, "iterations");
    cmd->add_option("--ho-seed", o.ho_seed, "optimizer seed");
}

RunConfig build_config(const Options& o, const std::string& command) {
    RunConfig cfg = o.config.empty() ? RunConfig{} : load_run_config(o.config);
    if (o.has("seed")) cfg.seed = o.seed;
    if (o.has("out")) cfg.paths.out = o.out;
    if (command == "train-progress") {
        if (o.has("window")) cfg.progress.window = o.window;
        if (o.has("epochs")) cfg.progress.epochs = o.epochs;
        if (o.has("lr")) cfg.progress.learning_rate = o.lr;
        if (o.has("neg-samples")) cfg.progress.neg_samples = o.neg_samples;
    }
    if (command == "train-mastery") {
        if (o.has("window")) cfg.mastery.window = o.window;
        if (o.has("epochs")) cfg.mastery.epochs = o.epochs;
        if (o.has("lr")) cfg.mastery.learning_rate = o.lr;
    }
    if (o.has("ho-n")) cfg.ho.population = o.ho_n;
    if (o.has("ho-t")) cfg.ho.iterations = o.ho_t;
    if (o.has("ho-seed")) cfg.ho_seed = o.ho_seed;
    if (o.has("students")) cfg.evaluate.students = o.students;
    if (o.has("sample")) cfg.evaluate.sample = o.sample;
    if (o.has("format")) cfg.evaluate.format = o.format;
    cfg.validate();
    return cfg;
}

HoConfig seeded_ho(const RunConfig& cfg) {
    HoConfig ho = cfg.ho;
    ho.seed = cfg.effective_ho_seed();
    return ho;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------------------

void cmd_synth(const RunConfig& cfg) {
    const auto synth = synth_generate(cfg.synth, cfg.sub_seed("synth"));
    const fs::path dir = cfg.out_dir() / "synth";
    save_synth(synth, dir);
    std::cout << "wrote " << synth.corpus.histories.size() << " students, " << synth.corpus.bank.n_exercises()
              << " exercises to " << dir.string() << '\n';
}

void print_outcome(const TrainOutcome& out, const fs::path& ckpt) {
    for (std::size_t e = 0; e < out.loss.size(); ++e) {
        std::cout << "epoch " << e + 1 << " loss " << format_double(out.loss[e]);
        if (e < out.holdout_auc.size()) std::cout << " holdout_auc " << format_double(out.holdout_auc[e]);
        std::cout << '\n';
    }
    std::cout << "checkpoint " << ckpt.string() << '\n';
}

void cmd_train(const RunConfig& cfg, const Options& o, bool progress) {
    const Corpus corpus = load_corpus(cfg);
    std::optional<fs::path> resume;
    if (!o.resume.empty()) resume = o.resume;
    if (progress) {
        const auto ckpt = cfg.progress_checkpoint_path();
        print_outcome(train_progress_checkpoint(corpus, cfg.progress, cfg.sub_seed("progress"), ckpt, resume), ckpt);
    } else {
        const auto ckpt = cfg.mastery_checkpoint_path();
        print_outcome(train_mastery_checkpoint(corpus, cfg.mastery, cfg.sub_seed("mastery"), ckpt, resume), ckpt);
    }
}

struct Models {
    ProgressModel progress;
    MasteryModel mastery;
};

Models load_models(const RunConfig& cfg) {
    return {ProgressModel::from_checkpoint(load_checkpoint(cfg.progress_checkpoint_path())),
            MasteryModel::from_checkpoint(load_checkpoint(cfg.mastery_checkpoint_path()))};
}

void cmd_recommend(const RunConfig& cfg, StudentId id) {
    const Corpus corpus = load_corpus(cfg);
    const Models models = load_models(cfg);
    const auto* student = corpus.find_student(id);
    if (!student) throw UnknownStudent(id);
    const auto rec = recommend(corpus, models.progress, models.mastery, *student, cfg.filter, seeded_ho(cfg));
    const fs::path dir = cfg.out_dir() / "recommend" / ("student-" + std::to_string(id));
    save_recommendation(rec.ho.list, dir / "recommendation.csv");
    save_candidates(rec.candidates, dir / "candidates.csv");
    save_ho_trace(rec.ho.trace, dir / "ho_trace.csv");
    std::cout << "student " << id << ':';
    for (auto e : rec.ho.list) std::cout << ' ' << e;
    std::cout << "\nfitness " << format_double(rec.ho.fitness) << '\n';
}

struct SweepPoint {
    std::string axis;
    std::size_t value;
    std::vector<MetricRow> rows;
};

std::vector<MetricRow> score_all(const std::vector<Recommendation>& recs, const Corpus& corpus, const RunConfig& cfg,
                                 const HoConfig* rerun) {
    std::vector<MetricRow> rows;
    rows.reserve(recs.size());
    for (const auto& base : recs) {
        const auto& student = *corpus.find_student(base.student_id);
        if (!rerun) {
            rows.push_back(score_recommendation(base, corpus, student, cfg.filter, cfg.metrics));
            continue;
        }
        Recommendation rec = base;
        rec.ho = optimize_list(base, corpus.bank, *rerun);
        rows.push_back(score_recommendation(rec, corpus, student, cfg.filter, cfg.metrics));
    }
    return rows;
}

double mean_of(const std::vector<MetricRow>& rows, double MetricRow::*field) {
    double s = 0.0;
    for (const auto& r : rows) s += r.*field;
    return rows.empty() ? 0.0 : s / double(rows.size());
}

bool non_increasing(const std::vector<double>& v) {
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[i - 1]) return false;
    }
    return true;
}

void write_sweep_summary(const std::vector<SweepPoint>& points, const fs::path& dir) {
    const fs::path csv = dir / "summary.csv";
    auto out = open_output(csv);
    out << "axis,value,students,mean_accuracy,mean_novelty,mean_diversity\n";
    nlohmann::json trends = nlohmann::json::object();
    std::map<std::string, std::array<std::vector<double>, 3>> series;
    for (const auto& p : points) {
        const double a = mean_of(p.rows, &MetricRow::accuracy);
        const double n = mean_of(p.rows, &MetricRow::novelty);
        const double d = mean_of(p.rows, &MetricRow::diversity);
        out << p.axis << ',' << p.value << ',' << p.rows.size() << ',' << format_double(a) << ',' << format_double(n)
            << ',' << format_double(d) << '\n';
        series[p.axis][0].push_back(a);
        series[p.axis][1].push_back(n);
        series[p.axis][2].push_back(d);
    }
    finish_output(out, csv);
    for (const auto& [axis, s] : series) {
        trends[axis] = {{"mean_accuracy", s[0]},
                        {"mean_novelty", s[1]},
                        {"mean_diversity", s[2]},
                        {"accuracy_non_increasing", non_increasing(s[0])},
                        {"diversity_non_increasing", non_increasing(s[2])}};
        std::cout << "trend " << axis << ": accuracy " << (non_increasing(s[0]) ? "non-increasing" : "not monotone")
                  << ", diversity " << (non_increasing(s[2]) ? "non-increasing" : "not monotone") << '\n';
    }
    const fs::path json = dir / "trends.json";
    auto jout = open_output(json);
    jout << trends.dump(2) << '\n';
    finish_output(jout, json);
}

void cmd_evaluate(const RunConfig& cfg, const std::string& sweep) {
    const Corpus corpus = load_corpus(cfg);
    const Models models = load_models(cfg);
    const auto format = parse_report_format(cfg.evaluate.format);
    const std::string ext = format == ReportFormat::Csv ? ".csv" : ".json";
    const HoConfig ho = seeded_ho(cfg);

    std::vector<Recommendation> recs;
    for (const auto* s : select_students(corpus, cfg.evaluate.students, cfg.evaluate.sample, cfg.sub_seed("eval"))) {
        if (s->records.empty()) {
            std::cerr << "skipping student " << s->student_id << ": empty history\n";
            continue;
        }
        recs.push_back(recommend(corpus, models.progress, models.mastery, *s, cfg.filter, ho));
    }
    const fs::path dir = cfg.out_dir() / "evaluate";
    const auto rows = score_all(recs, corpus, cfg, nullptr);
    emit_report(rows, dir / ("report" + ext), format);
    std::cout << "report " << (dir / ("report" + ext)).string() << " (" << rows.size() << " students)\n";

    std::vector<SweepPoint> points;
    if (sweep == "length" || sweep == "both") {
        for (auto len : cfg.evaluate.list_lengths) {
            HoConfig h = ho;
            h.dimension = len;
            points.push_back({"length", len, score_all(recs, corpus, cfg, &h)});
        }
    }
    if (sweep == "population" || sweep == "both") {
        for (auto pop : cfg.evaluate.populations) {
            HoConfig h = ho;
            h.population = pop;
            points.push_back({"population", pop, score_all(recs, corpus, cfg, &h)});
        }
    }
    if (points.empty()) return;
    const fs::path sdir = dir / "sweep";
    for (const auto& p : points) {
        emit_report(p.rows, sdir / (p.axis + "-" + std::to_string(p.value) + ext), format);
    }
    write_sweep_summary(points, sdir);
}

void write_bench_trace(const std::vector<double>& trace, const fs::path& path) {
    auto out = open_output(path);
    out << "iteration,best_value\n";
    for (std::size_t t = 0; t < trace.size(); ++t) out << t << ',' << format_double(trace[t]) << '\n';
    finish_output(out, path);
}

void cmd_bench(const RunConfig& cfg) {
    const fs::path dir = cfg.out_dir() / "bench";
    const std::vector<std::pair<std::string, double (*)(std::span<const double>)>> functions{{"sphere", sphere},
                                                                                            {"rastrigin", rastrigin}};
    const fs::path csv = dir / "summary.csv";
    auto out = open_output(csv);
    out << "function,run,seed,initial_best,final_best,random_search_best,evaluations\n";
    nlohmann::json summary = nlohmann::json::object();
    const std::uint64_t base = cfg.effective_ho_seed();
    for (const auto& [name, fn] : functions) {
        std::vector<double> init, fin, rnd;
        for (std::size_t r = 0; r < cfg.bench.runs; ++r) {
            HoConfig h = cfg.ho;
            h.dimension = cfg.bench.dimension;
            h.lower = -cfg.bench.bound;
            h.upper = cfg.bench.bound;
            h.seed = derive_seed(base, std::uint64_t(r));
            const BenchRun run = run_benchmark(fn, h);
            write_bench_trace(run.trace, dir / name / ("trace-" + std::to_string(r) + ".csv"));
            out << name << ',' << r << ',' << h.seed << ',' << format_double(run.initial_best) << ','
                << format_double(run.final_best) << ',' << format_double(run.random_search_best) << ','
                << run.evaluations << '\n';
            init.push_back(run.initial_best);
            fin.push_back(run.final_best);
            rnd.push_back(run.random_search_best);
        }
        const double mi = median(init), mf = median(fin), mr = median(rnd);
        summary[name] = {{"runs", cfg.bench.runs},
                         {"median_initial_best", mi},
                         {"median_final_best", mf},
                         {"median_random_search_best", mr},
                         {"final_over_initial", mf / mi},
                         {"beats_random_search", mf < mr}};
        std::cout << name << ": median initial " << format_double(mi) << ", final " << format_double(mf)
                  << ", random search " << format_double(mr) << '\n';
    }
    finish_output(out, csv);
    const fs::path json = dir / "summary.json";
    auto jout = open_output(json);
    jout << summary.dump(2) << '\n';
    finish_output(jout, json);
}

int exit_code(ErrorClass c) {
    switch (c) {
        case ErrorClass::Validation: return 2;
        case ErrorClass::Numeric: return 3;
        case ErrorClass::Io: return 4;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Exercise recommendation toolkit"};
    app.require_subcommand(1);
    Options o;

    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    add_common(synth, o);

    auto* tp = app.add_subcommand("train-progress", "train the learning-progress model");
    add_common(tp, o);
    add_training(tp, o, true);

    auto* tm = app.add_subcommand("train-mastery", "train the mastery model");
    add_common(tm, o);
    add_training(tm, o, false);

    auto* rec = app.add_subcommand("recommend", "recommend exercises for one student");
    add_common(rec, o);
    add_ho(rec, o);
    rec->add_option("--student", o.student, "student id")->required();

    auto* ev = app.add_subcommand("evaluate", "score recommendations and run sweeps");
    add_common(ev, o);
    add_ho(ev, o);
    ev->add_option("--students", o.students, "student ids")->delimiter(',');
    ev->add_option("--sample", o.sample, "students sampled when no list is given");
    ev->add_option("--sweep", o.sweep, "none, length, population or both")
        ->check(CLI::IsMember({"none", "length", "population", "both"}));
    ev->add_option("--format", o.format, "csv or json");

    auto* bench = app.add_subcommand("bench-ho", "benchmark the optimizer on sphere and Rastrigin");
    add_common(bench, o);
    add_ho(bench, o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    o.parsed = app.get_subcommands().front();
    const std::string command = o.parsed->get_name();
    try {
        const RunConfig cfg = build_config(o, command);
        if (o.print_config) {
            std::cout << to_json(cfg).dump(2) << '\n';
            return 0;
        }
        if (command == "synth") cmd_synth(cfg);
        else if (command == "train-progress") cmd_train(cfg, o, true);
        else if (command == "train-mastery") cmd_train(cfg, o, false);
        else if (command == "recommend") cmd_recommend(cfg, o.student);
        else if (command == "evaluate") cmd_evaluate(cfg, o.sweep);
        else if (command == "bench-ho") cmd_bench(cfg);
        return 0;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e.error_class());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
