#include "bamaer/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace bamaer {

namespace {

std::string kind_name(CorpusError::Kind kind) {
    switch (kind) {
        case CorpusError::Kind::MalformedRow: return "malformed row";
        case CorpusError::Kind::EmptyConceptList: return "empty concept list";
        case CorpusError::Kind::DuplicateId: return "duplicate id";
        case CorpusError::Kind::UnknownConcept: return "unknown concept";
        case CorpusError::Kind::UnknownExercise: return "unknown exercise";
        case CorpusError::Kind::NonBinaryResponse: return "non-binary response";
        case CorpusError::Kind::DuplicateStep: return "duplicate step";
    }
    return "corpus error";
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::uint64_t parse_uint(std::string_view field, std::size_t line_no) {
    std::uint64_t value = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (field.empty() || ec != std::errc{} || ptr != field.data() + field.size()) {
        throw CorpusError(CorpusError::Kind::MalformedRow,
                          "line " + std::to_string(line_no) + ": bad integer '" + std::string(field) + "'");
    }
    return value;
}

bool next_line(std::istream& in, std::string& line) {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

void expect_header(std::istream& in, std::string_view header) {
    std::string line;
    if (!next_line(in, line) || line != header) {
        throw CorpusError(CorpusError::Kind::MalformedRow,
                          "expected header '" + std::string(header) + "', got '" + line + "'");
    }
}

}  // namespace

CorpusError::CorpusError(Kind kind, const std::string& what)
    : Error(ErrorClass::Validation, kind_name(kind) + ": " + what), kind_(kind) {}

Exercise::Exercise(ExerciseId id, std::vector<ConceptId> concepts, std::size_t n_concepts)
    : id_(id), kc_(n_concepts, 0) {
    if (concepts.empty()) {
        throw CorpusError(CorpusError::Kind::EmptyConceptList, "exercise " + std::to_string(id));
    }
    std::sort(concepts.begin(), concepts.end());
    concepts.erase(std::unique(concepts.begin(), concepts.end()), concepts.end());
    for (ConceptId c : concepts) {
        if (c >= n_concepts) {
            throw CorpusError(CorpusError::Kind::UnknownConcept,
                              "exercise " + std::to_string(id) + " references concept " + std::to_string(c) +
                                  " but n_concepts=" + std::to_string(n_concepts));
        }
        kc_[c] = 1;
    }
    concepts_ = std::move(concepts);
}

ExerciseBank::ExerciseBank(std::vector<Exercise> exercises, std::size_t n_concepts)
    : exercises_(std::move(exercises)), n_concepts_(n_concepts) {
    for (std::size_t i = 0; i < exercises_.size(); ++i) {
        if (exercises_[i].id() != i) {
            throw CorpusError(CorpusError::Kind::MalformedRow, "exercise ids must be dense and ordered");
        }
        if (exercises_[i].kc_vector().size() != n_concepts_) {
            throw CorpusError(CorpusError::Kind::MalformedRow, "inconsistent coverage vector length");
        }
    }
}

const Exercise& ExerciseBank::at(ExerciseId id) const {
    if (id >= exercises_.size()) {
        throw CorpusError(CorpusError::Kind::UnknownExercise, std::to_string(id));
    }
    return exercises_[id];
}

const StudentHistory* Corpus::find_student(StudentId id) const {
    auto it = std::lower_bound(histories.begin(), histories.end(), id,
                               [](const StudentHistory& h, StudentId v) { return h.student_id < v; });
    if (it == histories.end() || it->student_id != id) return nullptr;
    return &*it;
}

ExerciseBank parse_bank(std::istream& in, std::optional<std::size_t> n_concepts) {
    expect_header(in, "exercise_id,concept_ids");
    std::map<ExerciseId, std::vector<ConceptId>> rows;
    ConceptId max_concept = 0;
    std::string line;
    std::size_t line_no = 1;
    while (next_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split(line, ',');
        if (fields.size() != 2) {
            throw CorpusError(CorpusError::Kind::MalformedRow, "line " + std::to_string(line_no) + ": expected 2 fields");
        }
        auto id = static_cast<ExerciseId>(parse_uint(fields[0], line_no));
        std::vector<ConceptId> concepts;
        if (!fields[1].empty()) {
            for (auto tok : split(fields[1], ';')) {
                auto c = static_cast<ConceptId>(parse_uint(tok, line_no));
                max_concept = std::max(max_concept, c);
                concepts.push_back(c);
            }
        }
        if (concepts.empty()) {
            throw CorpusError(CorpusError::Kind::EmptyConceptList, "line " + std::to_string(line_no));
        }
        if (!rows.emplace(id, std::move(concepts)).second) {
            throw CorpusError(CorpusError::Kind::DuplicateId, "exercise " + std::to_string(id));
        }
    }
    std::size_t nk = n_concepts.value_or(rows.empty() ? 0 : std::size_t{max_concept} + 1);
    std::vector<Exercise> exercises;
    exercises.reserve(rows.size());
    for (auto& [id, concepts] : rows) {
        if (id != exercises.size()) {
            throw CorpusError(CorpusError::Kind::MalformedRow,
                              "exercise ids are not dense: missing " + std::to_string(exercises.size()));
        }
        exercises.emplace_back(id, std::move(concepts), nk);
    }
    return ExerciseBank(std::move(exercises), nk);
}

ExerciseBank load_bank(const std::filesystem::path& path, std::optional<std::size_t> n_concepts) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open " + path.string());
    return parse_bank(in, n_concepts);
}

void write_bank(const ExerciseBank& bank, std::ostream& out) {
    out << "exercise_id,concept_ids\n";
    for (const auto& ex : bank.exercises()) {
        out << ex.id() << ',';
        for (std::size_t i = 0; i < ex.concepts().size(); ++i) {
            if (i) out << ';';
            out << ex.concepts()[i];
        }
        out << '\n';
    }
}

void save_bank(const ExerciseBank& bank, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoFailure("cannot write " + path.string());
    write_bank(bank, out);
    if (!out) throw IoFailure("write failed for " + path.string());
}

std::vector<StudentHistory> parse_histories(std::istream& in, const ExerciseBank& bank) {
    expect_header(in, "student_id,exercise_id,response,step");
    std::map<StudentId, std::vector<InteractionRecord>> grouped;
    std::string line;
    std::size_t line_no = 1;
    while (next_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split(line, ',');
        if (fields.size() != 4) {
            throw CorpusError(CorpusError::Kind::MalformedRow, "line " + std::to_string(line_no) + ": expected 4 fields");
        }
        StudentId student = parse_uint(fields[0], line_no);
        auto exercise = parse_uint(fields[1], line_no);
        auto response = parse_uint(fields[2], line_no);
        auto step = parse_uint(fields[3], line_no);
        if (exercise >= bank.n_exercises()) {
            throw CorpusError(CorpusError::Kind::UnknownExercise,
                              "line " + std::to_string(line_no) + ": exercise " + std::to_string(exercise));
        }
        if (response > 1) {
            throw CorpusError(CorpusError::Kind::NonBinaryResponse,
                              "line " + std::to_string(line_no) + ": response " + std::to_string(response));
        }
        if (step == 0) {
            throw CorpusError(CorpusError::Kind::MalformedRow, "line " + std::to_string(line_no) + ": steps start at 1");
        }
        grouped[student].push_back(
            {static_cast<ExerciseId>(exercise), static_cast<std::uint8_t>(response), step});
    }
    std::vector<StudentHistory> out;
    out.reserve(grouped.size());
    for (auto& [student, records] : grouped) {
        std::stable_sort(records.begin(), records.end(),
                         [](const InteractionRecord& a, const InteractionRecord& b) { return a.step < b.step; });
        for (std::size_t i = 1; i < records.size(); ++i) {
            if (records[i].step == records[i - 1].step) {
                throw CorpusError(CorpusError::Kind::DuplicateStep,
                                  "student " + std::to_string(student) + " step " + std::to_string(records[i].step));
            }
        }
        out.push_back({student, std::move(records)});
    }
    return out;
}

std::vector<StudentHistory> load_histories(const std::filesystem::path& path, const ExerciseBank& bank) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open " + path.string());
    return parse_histories(in, bank);
}

void write_histories(std::span<const StudentHistory> histories, std::ostream& out) {
    out << "student_id,exercise_id,response,step\n";
    for (const auto& h : histories) {
        for (const auto& r : h.records) {
            out << h.student_id << ',' << r.exercise_id << ',' << unsigned{r.response} << ',' << r.step << '\n';
        }
    }
}

void save_histories(std::span<const StudentHistory> histories, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoFailure("cannot write " + path.string());
    write_histories(histories, out);
    if (!out) throw IoFailure("write failed for " + path.string());
}

}  // namespace bamaer
