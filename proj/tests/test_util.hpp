#pragma once

#include "circlesnake/error.hpp"
#include "circlesnake/gradcheck.hpp"
#include "circlesnake/grid.hpp"
#include "circlesnake/rng.hpp"

#include <doctest.h>

#include <functional>

namespace testutil {

// Throws csnake::Error of the given kind.
inline bool throws_kind(const std::function<void()>& fn, csnake::Error::Kind kind) {
    try {
        fn();
    } catch (const csnake::Error& e) {
        return e.kind() == kind;
    }
    return false;
}

inline csnake::Grid2D random_grid(int w, int h, int c, csnake::Rng& rng, double lo, double hi) {
    csnake::Grid2D g(w, h, c);
    for (double& v : g.values()) {
        v = rng.uniform(lo, hi);
    }
    return g;
}

// Wraps a grid-valued loss (value, d/dgrid) as a function of the flat grid.
inline csnake::DifferentiableFn over_grid(const csnake::Grid2D& shape,
                                         std::function<std::pair<double, csnake::Grid2D>(const csnake::Grid2D&)> f) {
    return [shape, f](std::span<const double> p) {
        csnake::Grid2D g = shape;
        std::copy(p.begin(), p.end(), g.values().begin());
        auto [value, grad] = f(g);
        return csnake::ValueAndGradient{value, std::vector<double>(grad.values().begin(), grad.values().end())};
    };
}

} // namespace testutil

#define CHECK_THROWS_KIND(expr, kind) CHECK(testutil::throws_kind([&] { (void)(expr); }, csnake::Error::Kind::kind))
