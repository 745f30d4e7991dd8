#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace csnake {

struct ValueAndGradient {
    double value = 0.0;
    std::vector<double> gradient;
};

struct GradCheckReport {
    std::size_t parameter_count = 0;
    double max_relative_error = 0.0;
    std::size_t worst_parameter_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

using DifferentiableFn = std::function<ValueAndGradient(std::span<const double>)>;

// Central differences (f(p+e) - f(p-e)) / 2e against the analytic gradient.
// Relative error uses the denominator max(|analytic|, |numeric|, 1e-8).
GradCheckReport finite_difference_check(const DifferentiableFn& fn, std::span<const double> params,
                                        double epsilon = 1e-5);

// Same, restricted to a subset of parameter indices.
GradCheckReport finite_difference_check(const DifferentiableFn& fn, std::span<const double> params,
                                        std::span<const std::size_t> indices, double epsilon = 1e-5);

} // namespace csnake
