#pragma once

#include <functional>
#include <string>

#include "bamaer/numeric.hpp"

namespace bamaer {

class NonFiniteGradient : public NumericError {
public:
    explicit NonFiniteGradient(const std::string& where) : NumericError("non-finite gradient in " + where) {}
};

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-4;
    // Relative error is |a - n| / max(|a|, |n|, floor); the floor keeps entries
    // whose true gradient is ~0 from turning roundoff into huge ratios.
    double denominator_floor = 1e-6;
    // 0 checks every entry; otherwise an evenly strided subset per parameter.
    std::size_t max_entries_per_parameter = 0;
};

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::size_t entries_checked = 0;
    std::string worst_entry;
    bool passed = true;
};

/// Compares analytic gradients against central differences.
///
/// `loss` evaluates the scalar loss from the current parameter values.
/// `analytic` zeroes and then fills every parameter's grad buffer.
/// Inputs can be checked by wrapping them as Parameters.
GradCheckReport grad_check(const ParameterList& params, const std::function<double()>& loss,
                           const std::function<void()>& analytic, const GradCheckOptions& opts = {});

}  // namespace bamaer
