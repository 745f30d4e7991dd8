#pragma once

#include "circlesnake/detection.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace csnake {

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

struct Circle {
    double center_x = 0.0;
    double center_y = 0.0;
    double radius = 0.0;

    friend bool operator==(const Circle&, const Circle&) = default;
};

inline Circle as_circle(const DetectionCircle& d) { return {d.center_x, d.center_y, d.radius}; }
inline Circle as_circle(const GroundTruthCircle& g) { return {g.center_x, g.center_y, g.radius}; }

// Exact disk intersection area (lens formula).
double circle_intersection_area(const Circle& a, const Circle& b);
double circle_iou(const Circle& a, const Circle& b);

struct MatchPair {
    std::size_t truth = 0;
    std::size_t detection = 0;
    double iou = 0.0;
};

struct MatchResult {
    std::vector<MatchPair> pairs;
    std::size_t true_positives = 0;
    std::size_t false_positives = 0;
    std::size_t false_negatives = 0;

    double precision() const;
    double recall() const;
    // 1.0 when there is nothing to find and nothing was reported.
    double f1() const;
};

// One-to-one matching, greedy by IoU descending. Pairs below iou_threshold
// never match. Ties resolve by (truth, detection) index.
MatchResult match_circles(std::span<const Circle> truth, std::span<const Circle> detections,
                          double iou_threshold = 0.5);

// Least-squares circle through a ring of points: algebraic fit in centered
// coordinates refined by Gauss-Newton on the geometric residual.
Circle fit_circle(std::span<const Point> points);

} // namespace csnake
