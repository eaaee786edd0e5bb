#include "bamaer/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <string>

#include "bamaer/format.hpp"
#include "bamaer/numeric.hpp"
#include "bamaer/rng.hpp"

namespace bamaer {

void MetricConfig::validate() const {
    if (!(accuracy_tolerance >= 0.0)) throw ConfigError("eval: accuracy_tolerance must be non-negative");
    if (!(mastery_threshold >= 0.0 && mastery_threshold <= 1.0)) throw ConfigError("eval: mastery_threshold must be in [0,1]");
}

nlohmann::json to_json(const MetricConfig& c) {
    return {{"accuracy_tolerance", c.accuracy_tolerance}, {"mastery_threshold", c.mastery_threshold}};
}

MetricConfig metric_config_from_json(const nlohmann::json& j) {
    MetricConfig c;
    c.accuracy_tolerance = j.at("accuracy_tolerance");
    c.mastery_threshold = j.at("mastery_threshold");
    return c;
}

double accuracy_metric(std::span<const ExerciseId> list, std::span<const double> difficulty, double delta,
                       double tolerance) {
    if (list.empty()) throw EmptyList();
    std::size_t hits = 0;
    for (auto id : list) {
        if (id >= difficulty.size()) throw CorpusError(CorpusError::Kind::UnknownExercise, std::to_string(id));
        if (std::abs(difficulty[id] - delta) <= tolerance) ++hits;
    }
    return double(hits) / double(list.size());
}

double novelty_metric(std::span<const ExerciseId> list, const ExerciseBank& bank,
                      std::span<const InteractionRecord> history, const Vec& mastery, double threshold) {
    if (list.empty()) throw EmptyList();
    if (mastery.size() != Eigen::Index(bank.n_concepts())) throw ShapeMismatch("mastery vector length");
    std::vector<bool> solved(bank.n_concepts(), false);
    for (const auto& r : history) {
        if (r.response == 1) {
            for (ConceptId c : bank.at(r.exercise_id).concepts()) solved[c] = true;
        }
    }
    std::size_t slots = 0, novel = 0;
    for (auto id : list) {
        for (ConceptId c : bank.at(id).concepts()) {
            ++slots;
            if (!solved[c] || mastery[Eigen::Index(c)] < threshold) ++novel;
        }
    }
    return double(novel) / double(slots);
}

double jaccard(const Exercise& a, const Exercise& b) {
    const auto& x = a.concepts();
    const auto& y = b.concepts();
    std::size_t inter = 0, i = 0, j = 0;
    while (i < x.size() && j < y.size()) {
        if (x[i] == y[j]) {
            ++inter;
            ++i;
            ++j;
        } else if (x[i] < y[j]) {
            ++i;
        } else {
            ++j;
        }
    }
    const std::size_t uni = x.size() + y.size() - inter;
    return uni == 0 ? 1.0 : double(inter) / double(uni);
}

double diversity_metric(std::span<const ExerciseId> list, const ExerciseBank& bank) {
    if (list.empty()) throw EmptyList();
    if (list.size() == 1) return 0.0;
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < list.size(); ++i) {
        for (std::size_t j = i + 1; j < list.size(); ++j) {
            total += jaccard(bank.at(list[i]), bank.at(list[j]));
            ++pairs;
        }
    }
    return 1.0 - total / double(pairs);
}

// ---------------------------------------------------------------------------

void SynthConfig::validate() const {
    if (concepts == 0 || exercises == 0 || students == 0 || steps == 0) {
        throw ConfigError("synth: concepts, exercises, students and steps must be positive");
    }
    if (clusters == 0 || clusters > concepts) throw ConfigError("synth: clusters must be in [1, concepts]");
    if (min_concepts_per_exercise == 0 || min_concepts_per_exercise > max_concepts_per_exercise) {
        throw ConfigError("synth: need 1 <= min_concepts_per_exercise <= max_concepts_per_exercise");
    }
    if (!(mastery_floor >= 0.0 && mastery_floor <= 1.0)) throw ConfigError("synth: mastery_floor must be in [0,1]");
    if (initial_mastery && !(*initial_mastery >= 0.0 && *initial_mastery <= 1.0)) {
        throw ConfigError("synth: initial_mastery must be in [0,1]");
    }
    if (!(learning_increment >= 0.0)) throw ConfigError("synth: learning_increment must be non-negative");
    if (!(focus_probability >= 0.0 && focus_probability <= 1.0)) throw ConfigError("synth: focus_probability must be in [0,1]");
    if (focus_dwell == 0) throw ConfigError("synth: focus_dwell must be positive");
    if (!(ability_sd >= 0.0) || !(difficulty_sd >= 0.0)) throw ConfigError("synth: standard deviations must be non-negative");
}

nlohmann::json to_json(const SynthConfig& c) {
    nlohmann::json j = {{"concepts", c.concepts},
                        {"exercises", c.exercises},
                        {"students", c.students},
                        {"steps", c.steps},
                        {"clusters", c.clusters},
                        {"min_concepts_per_exercise", c.min_concepts_per_exercise},
                        {"max_concepts_per_exercise", c.max_concepts_per_exercise},
                        {"ability_gap", c.ability_gap},
                        {"ability_sd", c.ability_sd},
                        {"difficulty_mean", c.difficulty_mean},
                        {"difficulty_sd", c.difficulty_sd},
                        {"learning_increment", c.learning_increment},
                        {"mastery_floor", c.mastery_floor},
                        {"initial_mastery", nullptr},
                        {"focus_probability", c.focus_probability},
                        {"focus_dwell", c.focus_dwell}};
    if (c.initial_mastery) j["initial_mastery"] = *c.initial_mastery;
    return j;
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
    SynthConfig c;
    c.concepts = j.at("concepts");
    c.exercises = j.at("exercises");
    c.students = j.at("students");
    c.steps = j.at("steps");
    c.clusters = j.at("clusters");
    c.min_concepts_per_exercise = j.at("min_concepts_per_exercise");
    c.max_concepts_per_exercise = j.at("max_concepts_per_exercise");
    c.ability_gap = j.at("ability_gap");
    c.ability_sd = j.at("ability_sd");
    c.difficulty_mean = j.at("difficulty_mean");
    c.difficulty_sd = j.at("difficulty_sd");
    c.learning_increment = j.at("learning_increment");
    c.mastery_floor = j.at("mastery_floor");
    if (!j.at("initial_mastery").is_null()) c.initial_mastery = j.at("initial_mastery").get<double>();
    c.focus_probability = j.at("focus_probability");
    c.focus_dwell = j.at("focus_dwell");
    return c;
}

SynthCorpus synth_generate(const SynthConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    const std::size_t nk = cfg.concepts;

    // contiguous concept groups
    std::vector<std::vector<ConceptId>> groups(cfg.clusters);
    for (ConceptId c = 0; c < nk; ++c) groups[c * cfg.clusters / nk].push_back(c);

    std::vector<Exercise> exercises;
    std::vector<std::vector<ExerciseId>> covering(nk);
    for (std::size_t i = 0; i < cfg.exercises; ++i) {
        const auto primary = ConceptId(i % nk);
        const auto& group = groups[primary * cfg.clusters / nk];
        std::vector<ConceptId> others;
        for (ConceptId c : group) {
            if (c != primary) others.push_back(c);
        }
        const std::size_t span = cfg.max_concepts_per_exercise - cfg.min_concepts_per_exercise + 1;
        const std::size_t k = std::min(cfg.min_concepts_per_exercise + uniform_index(rng, span), group.size());
        std::vector<ConceptId> cs{primary};
        std::sample(others.begin(), others.end(), std::back_inserter(cs), k - 1, rng);
        exercises.emplace_back(ExerciseId(i), cs, nk);
        for (ConceptId c : exercises.back().concepts()) covering[c].push_back(ExerciseId(i));
    }

    std::vector<double> difficulty(nk);
    for (auto& b : difficulty) b = normal(rng, cfg.difficulty_mean, cfg.difficulty_sd);

    SynthCorpus out;
    out.corpus.bank = ExerciseBank(std::move(exercises), nk);
    const auto& bank = out.corpus.bank;
    out.truth.reserve(cfg.students * cfg.steps * 2);

    std::vector<double> mastery(nk);
    for (std::size_t s = 0; s < cfg.students; ++s) {
        const double ability = (s % 2 == 0 ? cfg.ability_gap : -cfg.ability_gap) + normal(rng, 0.0, cfg.ability_sd);
        for (std::size_t c = 0; c < nk; ++c) {
            const double m = cfg.initial_mastery ? *cfg.initial_mastery : sigmoid(ability - difficulty[c]);
            mastery[c] = std::clamp(m, cfg.mastery_floor, 1.0);
        }
        auto focus = ConceptId(uniform_index(rng, nk));
        StudentHistory h{StudentId(s), {}};
        h.records.reserve(cfg.steps);
        for (std::size_t t = 0; t < cfg.steps; ++t) {
            if (t > 0 && t % cfg.focus_dwell == 0) focus = ConceptId((focus + 1) % nk);
            ExerciseId ex;
            if (!covering[focus].empty() && uniform01(rng) < cfg.focus_probability) {
                ex = covering[focus][uniform_index(rng, covering[focus].size())];
            } else {
                ex = ExerciseId(uniform_index(rng, bank.n_exercises()));
            }
            const auto step = std::uint64_t(t + 1);
            double p = 1.0;
            for (ConceptId c : bank.at(ex).concepts()) {
                p *= mastery[c];
                out.truth.push_back({h.student_id, step, c, mastery[c]});
            }
            const bool correct = uniform01(rng) < p;
            h.records.push_back({ex, std::uint8_t(correct ? 1 : 0), step});
            for (ConceptId c : bank.at(ex).concepts()) mastery[c] = std::min(1.0, mastery[c] + cfg.learning_increment);
        }
        out.corpus.histories.push_back(std::move(h));
    }
    return out;
}

void write_truth(std::span<const TruthRow> rows, std::ostream& out) {
    out << "student_id,step,concept_id,mastery\n";
    for (const auto& r : rows) {
        out << r.student_id << ',' << r.step << ',' << r.concept_id << ',' << format_double(r.mastery) << '\n';
    }
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t pos; (pos = line.find(',', start)) != std::string_view::npos; start = pos + 1) {
        out.push_back(line.substr(start, pos - start));
    }
    out.push_back(line.substr(start));
    return out;
}

template <class T>
T parse_field(std::string_view f, const char* what) {
    T value{};
    auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), value);
    if (f.empty() || ec != std::errc{} || ptr != f.data() + f.size()) {
        throw CorpusError(CorpusError::Kind::MalformedRow, std::string("bad ") + what + " '" + std::string(f) + "'");
    }
    return value;
}

bool read_line(std::istream& in, std::string& line) {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

void require_header(std::istream& in, std::string_view header) {
    std::string line;
    if (!read_line(in, line) || line != header) {
        throw CorpusError(CorpusError::Kind::MalformedRow, "expected header '" + std::string(header) + "'");
    }
}

}  // namespace

std::vector<TruthRow> parse_truth(std::istream& in) {
    require_header(in, "student_id,step,concept_id,mastery");
    std::vector<TruthRow> rows;
    std::string line;
    while (read_line(in, line)) {
        if (line.empty()) continue;
        auto f = split_fields(line);
        if (f.size() != 4) throw CorpusError(CorpusError::Kind::MalformedRow, "truth row needs 4 fields");
        rows.push_back({parse_field<StudentId>(f[0], "student_id"), parse_field<std::uint64_t>(f[1], "step"),
                        parse_field<ConceptId>(f[2], "concept_id"), parse_field<double>(f[3], "mastery")});
    }
    return rows;
}

void save_synth(const SynthCorpus& synth, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoFailure("cannot create " + dir.string());
    save_bank(synth.corpus.bank, dir / "bank.csv");
    save_histories(synth.corpus.histories, dir / "log.csv");
    const auto path = dir / "truth.csv";
    auto out = open_output(path);
    write_truth(synth.truth, out);
    finish_output(out, path);
}

// ---------------------------------------------------------------------------

ReportFormat parse_report_format(const std::string& name) {
    if (name == "csv") return ReportFormat::Csv;
    if (name == "json") return ReportFormat::Json;
    throw ConfigError("report format must be csv or json, got '" + name + "'");
}

void emit_report(std::span<const MetricRow> rows, std::ostream& out, ReportFormat format) {
    std::vector<MetricRow> sorted(rows.begin(), rows.end());
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const MetricRow& a, const MetricRow& b) { return a.student_id < b.student_id; });
    if (format == ReportFormat::Csv) {
        out << "student_id,accuracy,novelty,diversity\n";
        for (const auto& r : sorted) {
            out << r.student_id << ',' << format_double(r.accuracy) << ',' << format_double(r.novelty) << ','
                << format_double(r.diversity) << '\n';
        }
        return;
    }
    auto arr = nlohmann::json::array();
    for (const auto& r : sorted) {
        arr.push_back({{"student_id", r.student_id},
                       {"accuracy", r.accuracy},
                       {"novelty", r.novelty},
                       {"diversity", r.diversity}});
    }
    out << arr.dump(2) << '\n';
}

void emit_report(std::span<const MetricRow> rows, const std::filesystem::path& path, ReportFormat format) {
    auto out = open_output(path);
    emit_report(rows, out, format);
    finish_output(out, path);
}

std::vector<MetricRow> parse_report(std::istream& in, ReportFormat format) {
    std::vector<MetricRow> rows;
    if (format == ReportFormat::Json) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw CorpusError(CorpusError::Kind::MalformedRow, std::string("report json: ") + e.what());
        }
        for (const auto& r : j) {
            rows.push_back({r.at("student_id").get<StudentId>(), r.at("accuracy").get<double>(),
                            r.at("novelty").get<double>(), r.at("diversity").get<double>()});
        }
        return rows;
    }
    require_header(in, "student_id,accuracy,novelty,diversity");
    std::string line;
    while (read_line(in, line)) {
        if (line.empty()) continue;
        auto f = split_fields(line);
        if (f.size() != 4) throw CorpusError(CorpusError::Kind::MalformedRow, "report row needs 4 fields");
        rows.push_back({parse_field<StudentId>(f[0], "student_id"), parse_field<double>(f[1], "accuracy"),
                        parse_field<double>(f[2], "novelty"), parse_field<double>(f[3], "diversity")});
    }
    return rows;
}

}  // namespace bamaer
