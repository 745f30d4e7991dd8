#pragma once

// Brute-force reference implementations. Each one follows the defining
// formula directly, with loops instead of the vectorized or sorted paths the
// library uses, so that agreement is evidence rather than tautology.

#include "circlesnake/contour.hpp"
#include "circlesnake/data_io.hpp"
#include "circlesnake/detection.hpp"
#include "circlesnake/eval.hpp"
#include "circlesnake/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>
#include <vector>

namespace oracle {

using namespace csnake;

// Every cell compared against every other cell within Chebyshev distance 1.
inline std::vector<Peak> peaks(const Grid2D& heat, int top_n, double ct_score) {
    std::vector<Peak> all;
    for (int c = 0; c < heat.channels(); ++c) {
        for (int y = 0; y < heat.height(); ++y) {
            for (int x = 0; x < heat.width(); ++x) {
                bool is_peak = true;
                for (int yy = 0; yy < heat.height(); ++yy) {
                    for (int xx = 0; xx < heat.width(); ++xx) {
                        const bool neighbor = std::max(std::abs(xx - x), std::abs(yy - y)) == 1;
                        if (neighbor && heat.at(xx, yy, c) > heat.at(x, y, c)) {
                            is_peak = false;
                        }
                    }
                }
                if (is_peak && heat.at(x, y, c) >= ct_score) {
                    all.push_back({x, y, c, heat.at(x, y, c)});
                }
            }
        }
    }
    // Selection sort by (score desc, class, y, x).
    std::vector<Peak> out;
    while (!all.empty() && static_cast<int>(out.size()) < top_n) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < all.size(); ++i) {
            const auto key = [](const Peak& p) { return std::make_tuple(-p.score, p.class_id, p.y, p.x); };
            if (key(all[i]) < key(all[best])) {
                best = i;
            }
        }
        out.push_back(all[best]);
        all.erase(all.begin() + static_cast<std::ptrdiff_t>(best));
    }
    return out;
}

// out[i][o] = sum_j sum_d f[(i + j) mod N][d] * k_j[d][o], scalar loops.
inline Matrix circular_conv(const Matrix& f, const CircularKernel& k) {
    const int n = static_cast<int>(f.rows());
    const int r = k.half_width;
    const auto din = f.cols();
    Matrix out = Matrix::Zero(n, k.output_dim());
    for (int i = 0; i < n; ++i) {
        for (int j = -r; j <= r; ++j) {
            const int src = ((i + j) % n + n) % n;
            for (Eigen::Index d = 0; d < din; ++d) {
                for (Eigen::Index o = 0; o < k.output_dim(); ++o) {
                    out(i, o) += f(src, d) * k.weights((j + r) * din + d, o);
                }
            }
        }
    }
    return out;
}

// Linear convolution of the thrice-tiled ring, restricted to the middle copy.
inline Matrix tiled_conv(const Matrix& f, const CircularKernel& k) {
    const auto n = f.rows();
    Matrix tiled(3 * n, f.cols());
    tiled << f, f, f;
    const int r = k.half_width;
    Matrix out = Matrix::Zero(n, k.output_dim());
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int j = -r; j <= r; ++j) {
            out.row(i) += tiled.row(n + i + j) * k.weights.middleRows((j + r) * f.cols(), f.cols());
        }
    }
    return out;
}

struct Window {
    int x = 0;
    int y = 0;
    int count = 0;
};

// Window starts: every multiple of stride that still fits, plus a window
// flush with the far edge.
inline std::vector<int> axis_starts(int extent, int window, int stride) {
    if (extent <= window) {
        return {0};
    }
    std::vector<int> s;
    for (int k = 0; k * stride + window <= extent; ++k) {
        s.push_back(k * stride);
    }
    if (s.back() + window != extent) {
        s.push_back(extent - window);
    }
    return s;
}

inline std::vector<Window> hpf_scan(const std::vector<DetectionCircle>& dets, int w, int h, const HpfConfig& cfg,
                                    double ct) {
    std::vector<Window> out;
    for (int y0 : axis_starts(h, cfg.hpf_height, cfg.stride)) {
        for (int x0 : axis_starts(w, cfg.hpf_width, cfg.stride)) {
            Window win{x0, y0, 0};
            for (const auto& d : dets) {
                if (d.score >= ct && d.center_x >= x0 && d.center_x < x0 + cfg.hpf_width && d.center_y >= y0 &&
                    d.center_y < y0 + cfg.hpf_height) {
                    ++win.count;
                }
            }
            out.push_back(win);
        }
    }
    return out;
}

// Repeatedly take the best remaining candidate and delete everything that
// overlaps it.
inline std::vector<DetectionCircle> merge(const std::vector<PatchDetections>& per_patch, double iou) {
    std::vector<DetectionCircle> pool;
    for (const auto& p : per_patch) {
        for (auto d : p.detections) {
            d.center_x += p.origin.x;
            d.center_y += p.origin.y;
            pool.push_back(d);
        }
    }
    std::vector<DetectionCircle> kept;
    while (!pool.empty()) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < pool.size(); ++i) {
            const auto key = [](const DetectionCircle& d) {
                return std::make_tuple(-d.score, d.center_x, d.center_y, d.radius);
            };
            if (key(pool[i]) < key(pool[best])) {
                best = i;
            }
        }
        const DetectionCircle chosen = pool[best];
        kept.push_back(chosen);
        std::vector<DetectionCircle> rest;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (i != best && circle_iou(as_circle(pool[i]), as_circle(chosen)) < iou) {
                rest.push_back(pool[i]);
            }
        }
        pool = std::move(rest);
    }
    return kept;
}

// Exhaustive search over all feasible selections of at most five windows.
// The best selection is the one whose priority-sorted window sequence is
// lexicographically largest (a longer sequence wins over its own prefix).
inline std::vector<std::size_t> best_five(const std::vector<WindowCount>& w, const HpfConfig& cfg) {
    const std::size_t n = w.size();
    const auto before = [&](std::size_t a, std::size_t b) {
        return std::make_tuple(-w[a].count, w[a].slide, w[a].y, w[a].x) <
               std::make_tuple(-w[b].count, w[b].slide, w[b].y, w[b].x);
    };
    const auto conflict = [&](std::size_t a, std::size_t b) {
        if (!cfg.disjoint || w[a].slide != w[b].slide) {
            return false;
        }
        return std::hypot(w[a].x - w[b].x, w[a].y - w[b].y) < cfg.hpf_width;
    };
    std::vector<std::size_t> best;
    for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
        std::vector<std::size_t> pick;
        for (std::size_t i = 0; i < n; ++i) {
            if (mask & (1u << i)) {
                pick.push_back(i);
            }
        }
        if (pick.size() > 5) {
            continue;
        }
        bool ok = true;
        for (std::size_t a = 0; a < pick.size() && ok; ++a) {
            for (std::size_t b = a + 1; b < pick.size() && ok; ++b) {
                ok = !conflict(pick[a], pick[b]);
            }
        }
        if (!ok) {
            continue;
        }
        std::sort(pick.begin(), pick.end(), before);
        const bool better = std::lexicographical_compare(best.begin(), best.end(), pick.begin(), pick.end(),
                                                         [&](std::size_t a, std::size_t b) { return before(b, a); });
        if (best.empty() || better) {
            best = pick;
        }
    }
    return best;
}

// Exhaustive one-to-one matching. Pairs are keyed by (IoU desc, truth,
// detection); the winner has the lexicographically smallest key sequence,
// with a longer sequence beating its own prefix.
inline std::vector<MatchPair> best_matching(const std::vector<Circle>& truth, const std::vector<Circle>& dets,
                                            double threshold) {
    using Key = std::tuple<double, std::size_t, std::size_t>;
    const auto keys = [](const std::vector<MatchPair>& m) {
        std::vector<Key> k;
        for (const auto& p : m) {
            k.emplace_back(-p.iou, p.truth, p.detection);
        }
        std::sort(k.begin(), k.end());
        return k;
    };
    const auto better = [](const std::vector<Key>& a, const std::vector<Key>& b) {
        for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
            if (a[i] != b[i]) {
                return a[i] < b[i];
            }
        }
        return a.size() > b.size();
    };
    std::vector<MatchPair> best;
    std::vector<MatchPair> current;
    std::vector<bool> used(dets.size(), false);
    const auto recurse = [&](auto&& self, std::size_t t) -> void {
        if (t == truth.size()) {
            if (better(keys(current), keys(best))) {
                best = current;
            }
            return;
        }
        self(self, t + 1);
        for (std::size_t d = 0; d < dets.size(); ++d) {
            const double iou = circle_iou(truth[t], dets[d]);
            if (!used[d] && iou >= threshold) {
                used[d] = true;
                current.push_back({t, d, iou});
                self(self, t + 1);
                current.pop_back();
                used[d] = false;
            }
        }
    };
    recurse(recurse, 0);
    return best;
}

// r straight from the definition, with long double accumulation.
inline double pearson_r(const std::vector<double>& x, const std::vector<double>& y) {
    long double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= x.size();
    my /= y.size();
    long double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

} // namespace oracle
