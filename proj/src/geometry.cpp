#include "circlesnake/geometry.hpp"

#include "circlesnake/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace csnake {

double circle_intersection_area(const Circle& a, const Circle& b) {
    const double d = std::hypot(a.center_x - b.center_x, a.center_y - b.center_y);
    const double r0 = a.radius;
    const double r1 = b.radius;
    if (d >= r0 + r1) {
        return 0.0;
    }
    if (d <= std::abs(r0 - r1)) {
        const double r = std::min(r0, r1);
        return std::numbers::pi * r * r;
    }
    const double c0 = std::clamp((d * d + r0 * r0 - r1 * r1) / (2.0 * d * r0), -1.0, 1.0);
    const double c1 = std::clamp((d * d + r1 * r1 - r0 * r0) / (2.0 * d * r1), -1.0, 1.0);
    const double k = (-d + r0 + r1) * (d + r0 - r1) * (d - r0 + r1) * (d + r0 + r1);
    return r0 * r0 * std::acos(c0) + r1 * r1 * std::acos(c1) - 0.5 * std::sqrt(std::max(0.0, k));
}

double circle_iou(const Circle& a, const Circle& b) {
    const double inter = circle_intersection_area(a, b);
    const double uni = std::numbers::pi * (a.radius * a.radius + b.radius * b.radius) - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

double MatchResult::precision() const {
    const auto reported = true_positives + false_positives;
    return reported == 0 ? (false_negatives == 0 ? 1.0 : 0.0) : static_cast<double>(true_positives) / reported;
}

double MatchResult::recall() const {
    const auto expected = true_positives + false_negatives;
    return expected == 0 ? (false_positives == 0 ? 1.0 : 0.0) : static_cast<double>(true_positives) / expected;
}

double MatchResult::f1() const {
    const double denom = 2.0 * true_positives + false_positives + false_negatives;
    if (denom == 0.0) {
        return 1.0;
    }
    return 2.0 * true_positives / denom;
}

MatchResult match_circles(std::span<const Circle> truth, std::span<const Circle> detections, double iou_threshold) {
    std::vector<MatchPair> candidates;
    for (std::size_t t = 0; t < truth.size(); ++t) {
        for (std::size_t d = 0; d < detections.size(); ++d) {
            const double iou = circle_iou(truth[t], detections[d]);
            if (iou >= iou_threshold && iou > 0.0) {
                candidates.push_back({t, d, iou});
            }
        }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const MatchPair& a, const MatchPair& b) { return a.iou > b.iou; });

    std::vector<bool> truth_used(truth.size(), false);
    std::vector<bool> det_used(detections.size(), false);
    MatchResult result;
    for (const auto& c : candidates) {
        if (truth_used[c.truth] || det_used[c.detection]) {
            continue;
        }
        truth_used[c.truth] = true;
        det_used[c.detection] = true;
        result.pairs.push_back(c);
    }
    result.true_positives = result.pairs.size();
    result.false_positives = detections.size() - result.true_positives;
    result.false_negatives = truth.size() - result.true_positives;
    return result;
}

Circle fit_circle(std::span<const Point> points) {
    if (points.size() < 3) {
        fail(Error::Kind::Geometry, "circle fit needs at least 3 points");
    }
    double mx = 0.0;
    double my = 0.0;
    for (const auto& p : points) {
        mx += p.x;
        my += p.y;
    }
    mx /= static_cast<double>(points.size());
    my /= static_cast<double>(points.size());

    // Algebraic (Kasa) fit: u^2 + v^2 + D u + E v + F = 0.
    Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
    Eigen::Vector3d atb = Eigen::Vector3d::Zero();
    for (const auto& p : points) {
        const double u = p.x - mx;
        const double v = p.y - my;
        const Eigen::Vector3d row(u, v, 1.0);
        ata += row * row.transpose();
        atb += row * (-(u * u + v * v));
    }
    const Eigen::Vector3d sol = ata.ldlt().solve(atb);
    double a = -sol(0) / 2.0;
    double b = -sol(1) / 2.0;
    double r = std::sqrt(std::max(0.0, a * a + b * b - sol(2)));
    if (!std::isfinite(r) || r <= 0.0) {
        fail(Error::Kind::Geometry, "points are degenerate for a circle fit");
    }

    for (int iter = 0; iter < 20; ++iter) {
        Eigen::Matrix3d jtj = Eigen::Matrix3d::Zero();
        Eigen::Vector3d jtr = Eigen::Vector3d::Zero();
        for (const auto& p : points) {
            const double du = p.x - mx - a;
            const double dv = p.y - my - b;
            const double dist = std::hypot(du, dv);
            if (dist == 0.0) {
                continue;
            }
            const Eigen::Vector3d jac(-du / dist, -dv / dist, -1.0);
            const double res = dist - r;
            jtj += jac * jac.transpose();
            jtr += jac * res;
        }
        const Eigen::Vector3d step = jtj.ldlt().solve(-jtr);
        a += step(0);
        b += step(1);
        r += step(2);
        if (step.norm() < 1e-15 * std::max(1.0, r)) {
            break;
        }
    }
    return {a + mx, b + my, r};
}

} // namespace csnake
