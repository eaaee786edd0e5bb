#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "bamaer/numeric.hpp"

namespace bamaer {

inline constexpr const char* kCheckpointVersion = "bamaer-ckpt/1";

struct NamedTensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> data;

    friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

/// Container layout: one line of JSON
///   {"version", "kind", "seed", "meta", "tensors": [{"name","shape"}...]}
/// terminated by '\n', followed by each tensor's values as little-endian
/// IEEE-754 doubles, in header order. Matrices are stored column-major.
struct Checkpoint {
    std::string kind;
    std::uint64_t seed = 0;
    nlohmann::json meta = nlohmann::json::object();
    std::vector<NamedTensor> tensors;

    const NamedTensor& find(const std::string& name) const;
    bool has(const std::string& name) const;
};

void write_checkpoint(const Checkpoint& ckpt, std::ostream& out);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

NamedTensor to_tensor(const std::string& name, const Mat& m);
Mat to_matrix(const NamedTensor& t);

void store_parameters(Checkpoint& ckpt, const ParameterList& params, const std::string& prefix = "");
/// Copies values by name; shape mismatches and missing names are errors.
void restore_parameters(const Checkpoint& ckpt, const ParameterList& params, const std::string& prefix = "");

}  // namespace bamaer
