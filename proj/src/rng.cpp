#include "circlesnake/rng.hpp"

#include <cmath>
#include <numbers>

namespace csnake {

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi <= lo) {
        return lo;
    }
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    // Rejection keeps the draw unbiased.
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % span);
    std::uint64_t draw = engine_();
    while (draw >= limit) {
        draw = engine_();
    }
    return lo + static_cast<std::int64_t>(draw % span);
}

double Rng::normal(double mean, double sd) {
    if (has_spare_) {
        has_spare_ = false;
        return mean + sd * spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) {
        u1 = uniform();
    }
    const double u2 = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    spare_ = mag * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return mean + sd * mag * std::cos(2.0 * std::numbers::pi * u2);
}

} // namespace csnake
