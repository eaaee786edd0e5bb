#include "bamaer/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace bamaer {

GradCheckReport grad_check(const ParameterList& params, const std::function<double()>& loss,
                           const std::function<void()>& analytic, const GradCheckOptions& opts) {
    GradCheckReport report;
    analytic();
    for (const auto* p : params) {
        if (!p->grad.allFinite()) throw NonFiniteGradient(p->name);
    }
    for (auto* p : params) {
        const Eigen::Index n = p->size();
        Eigen::Index stride = 1;
        if (opts.max_entries_per_parameter > 0 && std::size_t(n) > opts.max_entries_per_parameter) {
            stride = (n + Eigen::Index(opts.max_entries_per_parameter) - 1) / Eigen::Index(opts.max_entries_per_parameter);
        }
        for (Eigen::Index i = 0; i < n; i += stride) {
            double& x = p->value.data()[i];
            const double saved = x;
            x = saved + opts.step;
            const double up = loss();
            x = saved - opts.step;
            const double down = loss();
            x = saved;
            const double numeric = (up - down) / (2.0 * opts.step);
            const double a = p->grad.data()[i];
            if (!std::isfinite(numeric)) throw NonFiniteGradient(p->name + " (numeric)");
            const double denom = std::max({std::abs(a), std::abs(numeric), opts.denominator_floor});
            const double rel = std::abs(a - numeric) / denom;
            ++report.entries_checked;
            if (rel > report.max_relative_error) {
                report.max_relative_error = rel;
                report.worst_entry = p->name + "[" + std::to_string(i) + "] analytic=" + std::to_string(a) +
                                     " numeric=" + std::to_string(numeric);
            }
        }
    }
    report.passed = report.max_relative_error < opts.tolerance;
    return report;
}

}  // namespace bamaer
