#include "circlesnake/gradcheck.hpp"

#include "circlesnake/aligned.hpp"
#include "circlesnake/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace csnake {

namespace {

double checked_value(const DifferentiableFn& fn, std::span<const double> params) {
    const double v = fn(params).value;
    if (!std::isfinite(v)) {
        fail(Error::Kind::Evaluation, "loss is not finite");
    }
    return v;
}

} // namespace

GradCheckReport finite_difference_check(const DifferentiableFn& fn, std::span<const double> params,
                                        double epsilon) {
    std::vector<std::size_t> all(params.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return finite_difference_check(fn, params, all, epsilon);
}

GradCheckReport finite_difference_check(const DifferentiableFn& fn, std::span<const double> params,
                                        std::span<const std::size_t> indices, double epsilon) {
    const ValueAndGradient base = fn(params);
    if (!std::isfinite(base.value)) {
        fail(Error::Kind::Evaluation, "loss is not finite at the base point");
    }
    if (base.gradient.size() != params.size()) {
        fail(Error::Kind::Shape, "analytic gradient has " + std::to_string(base.gradient.size()) +
                                     " entries for " + std::to_string(params.size()) + " parameters");
    }

    GradCheckReport report;
    report.parameter_count = indices.size();
    AlignedVector probe(params.begin(), params.end());
    for (std::size_t i : indices) {
        const double saved = probe[i];
        probe[i] = saved + epsilon;
        const double plus = checked_value(fn, probe);
        probe[i] = saved - epsilon;
        const double minus = checked_value(fn, probe);
        probe[i] = saved;

        const double numeric = (plus - minus) / (2.0 * epsilon);
        const double analytic = base.gradient[i];
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
        const double rel = std::abs(analytic - numeric) / denom;
        if (rel > report.max_relative_error || i == indices.front()) {
            report.max_relative_error = rel;
            report.worst_parameter_index = i;
            report.worst_analytic = analytic;
            report.worst_numeric = numeric;
        }
    }
    return report;
}

} // namespace csnake
