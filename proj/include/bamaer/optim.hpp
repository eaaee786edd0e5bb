#pragma once

#include <cstdint>
#include <vector>

#include "bamaer/numeric.hpp"

namespace bamaer {

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

class Adam {
public:
    Adam(ParameterList params, AdamConfig cfg);

    /// Applies one update from the current grad buffers (which are left untouched).
    void step();

    std::uint64_t steps() const noexcept { return t_; }
    const AdamConfig& config() const noexcept { return cfg_; }

    // Moment buffers, exposed for checkpointing.
    std::vector<Mat>& first_moments() { return m_; }
    std::vector<Mat>& second_moments() { return v_; }
    void set_steps(std::uint64_t t) { t_ = t; }

private:
    ParameterList params_;
    AdamConfig cfg_;
    std::vector<Mat> m_, v_;
    std::uint64_t t_ = 0;
};

}  // namespace bamaer
