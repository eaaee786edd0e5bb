#include "bamaer/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace bamaer {

namespace {

static_assert(sizeof(double) == 8);

void put_le(std::ostream& out, double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    out.write(buf, 8);
}

double get_le(std::istream& in) {
    unsigned char buf[8];
    if (!in.read(reinterpret_cast<char*>(buf), 8)) throw IoFailure("truncated checkpoint payload");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t(buf[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

}  // namespace

const NamedTensor& Checkpoint::find(const std::string& name) const {
    for (const auto& t : tensors) {
        if (t.name == name) return t;
    }
    throw IoFailure("checkpoint has no tensor '" + name + "'");
}

bool Checkpoint::has(const std::string& name) const {
    for (const auto& t : tensors) {
        if (t.name == name) return true;
    }
    return false;
}

void write_checkpoint(const Checkpoint& ckpt, std::ostream& out) {
    nlohmann::json header;
    header["version"] = kCheckpointVersion;
    header["kind"] = ckpt.kind;
    header["seed"] = ckpt.seed;
    header["meta"] = ckpt.meta;
    auto& registry = header["tensors"] = nlohmann::json::array();
    for (const auto& t : ckpt.tensors) {
        std::size_t n = 1;
        for (auto s : t.shape) n *= s;
        if (n != t.data.size()) throw ShapeMismatch("tensor '" + t.name + "' data does not match its shape");
        registry.push_back({{"name", t.name}, {"shape", t.shape}});
    }
    out << header.dump() << '\n';
    for (const auto& t : ckpt.tensors) {
        for (double v : t.data) put_le(out, v);
    }
}

Checkpoint read_checkpoint(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw IoFailure("empty checkpoint");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw IoFailure(std::string("bad checkpoint header: ") + e.what());
    }
    if (header.value("version", "") != kCheckpointVersion) throw IoFailure("unsupported checkpoint version");
    Checkpoint ckpt;
    ckpt.kind = header.at("kind").get<std::string>();
    ckpt.seed = header.at("seed").get<std::uint64_t>();
    ckpt.meta = header.value("meta", nlohmann::json::object());
    for (const auto& entry : header.at("tensors")) {
        NamedTensor t;
        t.name = entry.at("name").get<std::string>();
        t.shape = entry.at("shape").get<std::vector<std::size_t>>();
        std::size_t n = 1;
        for (auto s : t.shape) n *= s;
        t.data.resize(n);
        ckpt.tensors.push_back(std::move(t));
    }
    for (auto& t : ckpt.tensors) {
        for (auto& v : t.data) v = get_le(in);
    }
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoFailure("cannot write " + path.string());
    write_checkpoint(ckpt, out);
    if (!out) throw IoFailure("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoFailure("cannot open " + path.string());
    return read_checkpoint(in);
}

NamedTensor to_tensor(const std::string& name, const Mat& m) {
    NamedTensor t{name, {std::size_t(m.rows()), std::size_t(m.cols())}, {}};
    t.data.assign(m.data(), m.data() + m.size());
    return t;
}

Mat to_matrix(const NamedTensor& t) {
    if (t.shape.size() != 2) throw ShapeMismatch("tensor '" + t.name + "' is not rank 2");
    Mat m(Eigen::Index(t.shape[0]), Eigen::Index(t.shape[1]));
    std::memcpy(m.data(), t.data.data(), t.data.size() * sizeof(double));
    return m;
}

void store_parameters(Checkpoint& ckpt, const ParameterList& params, const std::string& prefix) {
    for (const auto* p : params) ckpt.tensors.push_back(to_tensor(prefix + p->name, p->value));
}

void restore_parameters(const Checkpoint& ckpt, const ParameterList& params, const std::string& prefix) {
    for (auto* p : params) {
        Mat m = to_matrix(ckpt.find(prefix + p->name));
        if (m.rows() != p->value.rows() || m.cols() != p->value.cols()) {
            throw ShapeMismatch("checkpoint tensor '" + p->name + "'");
        }
        p->value = std::move(m);
    }
}

}  // namespace bamaer
