#include "circlesnake/contour.hpp"

#include "circlesnake/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace csnake {

CircleContour sample_circle_vertices(const Circle& circle, int n) {
    if (n < 3) {
        fail(Error::Kind::Geometry, "a contour needs at least 3 vertices");
    }
    if (!(circle.radius > 0.0)) {
        fail(Error::Kind::Geometry, "circle radius must be positive");
    }
    CircleContour contour;
    contour.vertices.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double theta = 2.0 * std::numbers::pi * i / n;
        contour.vertices.push_back(
            {circle.center_x + circle.radius * std::sin(theta), circle.center_y - circle.radius * std::cos(theta)});
    }
    return contour;
}

CircleContour resample_polygon_uniform(const std::vector<Point>& polygon, int n) {
    if (n < 1) {
        fail(Error::Kind::Geometry, "resampling needs n >= 1");
    }
    std::vector<Point> ring = polygon;
    if (ring.size() > 1 && ring.front() == ring.back()) {
        ring.pop_back();
    }
    if (ring.size() < 3) {
        fail(Error::Kind::Geometry, "polygon needs at least 3 distinct points");
    }

    // Positive shoelace sum is clockwise on screen when y points down.
    double twice_area = 0.0;
    for (std::size_t i = 0; i < ring.size(); ++i) {
        const Point& a = ring[i];
        const Point& b = ring[(i + 1) % ring.size()];
        twice_area += a.x * b.y - b.x * a.y;
    }
    if (twice_area < 0.0) {
        std::reverse(ring.begin(), ring.end());
    }

    const auto top = std::min_element(ring.begin(), ring.end(), [](const Point& a, const Point& b) {
        return a.y != b.y ? a.y < b.y : a.x < b.x;
    });
    std::rotate(ring.begin(), top, ring.end());

    const std::size_t m = ring.size();
    std::vector<double> lengths(m);
    double perimeter = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const Point& a = ring[i];
        const Point& b = ring[(i + 1) % m];
        lengths[i] = std::hypot(b.x - a.x, b.y - a.y);
        perimeter += lengths[i];
    }
    if (!(perimeter > 0.0) || !std::isfinite(perimeter)) {
        fail(Error::Kind::Geometry, "polygon has zero perimeter");
    }

    CircleContour out;
    out.vertices.reserve(static_cast<std::size_t>(n));
    std::size_t edge = 0;
    double edge_start = 0.0;
    for (int k = 0; k < n; ++k) {
        const double s = perimeter * k / n;
        while (edge + 1 < m && edge_start + lengths[edge] < s) {
            edge_start += lengths[edge];
            ++edge;
        }
        const Point& a = ring[edge];
        const Point& b = ring[(edge + 1) % m];
        const double t = lengths[edge] > 0.0 ? std::clamp((s - edge_start) / lengths[edge], 0.0, 1.0) : 0.0;
        out.vertices.push_back({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)});
    }
    return out;
}

Matrix circular_unfold(const Matrix& features, int half_width) {
    const Eigen::Index n = features.rows();
    const Eigen::Index d = features.cols();
    const int taps = 2 * half_width + 1;
    Matrix out(n, taps * d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int j = -half_width; j <= half_width; ++j) {
            const Eigen::Index src = ((i + j) % n + n) % n;
            out.block(i, (j + half_width) * d, 1, d) = features.row(src);
        }
    }
    return out;
}

Matrix circular_fold(const Matrix& unfolded, int half_width, Eigen::Index dim) {
    const Eigen::Index n = unfolded.rows();
    Matrix out = Matrix::Zero(n, dim);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (int j = -half_width; j <= half_width; ++j) {
            const Eigen::Index dst = ((i + j) % n + n) % n;
            out.row(dst) += unfolded.block(i, (j + half_width) * dim, 1, dim);
        }
    }
    return out;
}

namespace {

void check_kernel(const VertexFeatures& features, const CircularKernel& kernel) {
    if (kernel.half_width < 0 || kernel.weights.rows() % kernel.taps() != 0) {
        fail(Error::Kind::Shape, "kernel weights do not split into 2r+1 taps");
    }
    if (features.values.cols() != kernel.input_dim()) {
        fail(Error::Kind::Shape, "feature dim " + std::to_string(features.values.cols()) +
                                     " != kernel input dim " + std::to_string(kernel.input_dim()));
    }
    if (features.values.rows() == 0) {
        fail(Error::Kind::Shape, "circular convolution on an empty ring");
    }
}

} // namespace

VertexFeatures circular_conv(const VertexFeatures& features, const CircularKernel& kernel) {
    check_kernel(features, kernel);
    VertexFeatures out;
    out.values.noalias() = circular_unfold(features.values, kernel.half_width) * kernel.weights;
    out.clamped = features.clamped;
    return out;
}

CircularConvGrad circular_conv_backward(const VertexFeatures& features, const CircularKernel& kernel,
                                        const Matrix& grad_out) {
    check_kernel(features, kernel);
    if (grad_out.rows() != features.values.rows() || grad_out.cols() != kernel.output_dim()) {
        fail(Error::Kind::Shape, "circular conv output gradient has the wrong shape");
    }
    const Matrix unfolded = circular_unfold(features.values, kernel.half_width);
    CircularConvGrad g;
    g.kernel.noalias() = unfolded.transpose() * grad_out;
    const Matrix grad_unfolded = grad_out * kernel.weights.transpose();
    g.features = circular_fold(grad_unfolded, kernel.half_width, features.values.cols());
    return g;
}

namespace {

struct MapCoord {
    double value;
    bool clamped;
};

MapCoord to_map(double v, int stride, int extent) {
    const double m = v / stride;
    if (m < 0.0) {
        return {0.0, true};
    }
    if (m > extent - 1) {
        return {static_cast<double>(extent - 1), true};
    }
    if (!std::isfinite(m)) {
        fail(Error::Kind::CoordinateRange, "non-finite vertex coordinate");
    }
    return {m, false};
}

} // namespace

VertexFeatures gather_vertex_features(const CircleContour& contour, const Grid2D& maps, const Point& center,
                                      int map_stride) {
    if (maps.empty() || map_stride < 1) {
        fail(Error::Kind::Shape, "feature gathering needs a non-empty map and stride >= 1");
    }
    const auto n = static_cast<Eigen::Index>(contour.size());
    const int cm = maps.channels();
    VertexFeatures out;
    out.values.resize(n, cm + 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Point& p = contour.vertices[static_cast<std::size_t>(i)];
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
            fail(Error::Kind::CoordinateRange, "non-finite vertex coordinate");
        }
        const MapCoord mx = to_map(p.x, map_stride, maps.width());
        const MapCoord my = to_map(p.y, map_stride, maps.height());
        if (mx.clamped || my.clamped) {
            ++out.clamped;
        }
        const BilinearTaps t = bilinear_taps(maps.width(), maps.height(), mx.value, my.value);
        for (int c = 0; c < cm; ++c) {
            out.values(i, c) = t.w00() * maps.at(t.x0, t.y0, c) + t.w10() * maps.at(t.x1, t.y0, c) +
                               t.w01() * maps.at(t.x0, t.y1, c) + t.w11() * maps.at(t.x1, t.y1, c);
        }
        out.values(i, cm) = p.x - center.x;
        out.values(i, cm + 1) = p.y - center.y;
    }
    return out;
}

Matrix gather_vertex_features_backward(const CircleContour& contour, const Grid2D& maps, int map_stride,
                                       const Matrix& grad_features, Grid2D& grad_maps) {
    const auto n = static_cast<Eigen::Index>(contour.size());
    const int cm = maps.channels();
    if (grad_features.rows() != n || grad_features.cols() != cm + 2 || !grad_maps.same_shape(maps)) {
        fail(Error::Kind::Shape, "feature gradient shape mismatch");
    }
    Matrix grad_vertices = Matrix::Zero(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Point& p = contour.vertices[static_cast<std::size_t>(i)];
        const MapCoord mx = to_map(p.x, map_stride, maps.width());
        const MapCoord my = to_map(p.y, map_stride, maps.height());
        const BilinearTaps t = bilinear_taps(maps.width(), maps.height(), mx.value, my.value);
        double dx = 0.0;
        double dy = 0.0;
        for (int c = 0; c < cm; ++c) {
            const double g = grad_features(i, c);
            if (g == 0.0) {
                continue;
            }
            const double v00 = maps.at(t.x0, t.y0, c);
            const double v10 = maps.at(t.x1, t.y0, c);
            const double v01 = maps.at(t.x0, t.y1, c);
            const double v11 = maps.at(t.x1, t.y1, c);
            grad_maps.at(t.x0, t.y0, c) += g * t.w00();
            grad_maps.at(t.x1, t.y0, c) += g * t.w10();
            grad_maps.at(t.x0, t.y1, c) += g * t.w01();
            grad_maps.at(t.x1, t.y1, c) += g * t.w11();
            dx += g * ((1 - t.fy) * (v10 - v00) + t.fy * (v11 - v01));
            dy += g * ((1 - t.fx) * (v01 - v00) + t.fx * (v11 - v10));
        }
        grad_vertices(i, 0) = (mx.clamped ? 0.0 : dx / map_stride) + grad_features(i, cm);
        grad_vertices(i, 1) = (my.clamped ? 0.0 : dy / map_stride) + grad_features(i, cm + 1);
    }
    return grad_vertices;
}

ContourLoss contour_loss(const CircleContour& deformed, const CircleContour& truth) {
    if (deformed.size() != truth.size() || deformed.size() == 0) {
        fail(Error::Kind::Shape, "contour loss needs equal, non-zero vertex counts (" +
                                     std::to_string(deformed.size()) + " vs " + std::to_string(truth.size()) + ")");
    }
    const auto n = static_cast<Eigen::Index>(deformed.size());
    const double inv_n = 1.0 / static_cast<double>(n);
    ContourLoss out;
    out.gradient.resize(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Point& a = deformed.vertices[static_cast<std::size_t>(i)];
        const Point& b = truth.vertices[static_cast<std::size_t>(i)];
        const double dx = a.x - b.x;
        const double dy = a.y - b.y;
        out.value += inv_n * (std::abs(dx) + std::abs(dy));
        out.gradient(i, 0) = inv_n * ((dx > 0) - (dx < 0));
        out.gradient(i, 1) = inv_n * ((dy > 0) - (dy < 0));
    }
    return out;
}

} // namespace csnake
