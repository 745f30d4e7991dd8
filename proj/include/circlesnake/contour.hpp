#pragma once

// Contour representation and the ring operators that act on it.

#include "circlesnake/detection.hpp"
#include "circlesnake/geometry.hpp"
#include "circlesnake/grid.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <vector>

namespace csnake {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kDefaultContourVertices = 128;

// Ordered ring, clockwise in image coordinates (y down). Vertex 0 is the
// top-most point when the contour is constructed.
struct CircleContour {
    std::vector<Point> vertices;

    std::size_t size() const noexcept { return vertices.size(); }
};

CircleContour sample_circle_vertices(const Circle& circle, int n = kDefaultContourVertices);

// Arc-length resampling of a closed polygon (a repeated closing point is
// ignored). Output starts at the top-most vertex (ties: left-most) and runs
// clockwise regardless of the input orientation.
CircleContour resample_polygon_uniform(const std::vector<Point>& polygon, int n = kDefaultContourVertices);

struct VertexFeatures {
    Matrix values;
    // Vertices that fell outside the map and were clamped to its border.
    std::size_t clamped = 0;
};

// Taps k_{-r..r}; tap j's D_in x D_out block occupies rows
// [(j + r) * D_in, (j + r + 1) * D_in) of `weights`.
struct CircularKernel {
    int half_width = 4;
    Matrix weights;

    int taps() const noexcept { return 2 * half_width + 1; }
    Eigen::Index input_dim() const noexcept { return weights.rows() / taps(); }
    Eigen::Index output_dim() const noexcept { return weights.cols(); }
};

// out_i = sum_{j=-r}^{r} f_{(i+j) mod N} k_j
VertexFeatures circular_conv(const VertexFeatures& features, const CircularKernel& kernel);

// Ring im2col: row i holds f_{i-r}, ..., f_{i+r} concatenated.
Matrix circular_unfold(const Matrix& features, int half_width);
// Adjoint of circular_unfold: folds a gradient on the unfolded matrix back
// onto the ring.
Matrix circular_fold(const Matrix& unfolded, int half_width, Eigen::Index dim);

struct CircularConvGrad {
    Matrix features;
    Matrix kernel;
};

CircularConvGrad circular_conv_backward(const VertexFeatures& features, const CircularKernel& kernel,
                                        const Matrix& grad_out);

// Row i = bilinear map samples at (x_i / stride, y_i / stride) followed by
// (x_i - cx, y_i - cy). Out-of-range samples clamp to the border.
VertexFeatures gather_vertex_features(const CircleContour& contour, const Grid2D& maps, const Point& center,
                                      int map_stride = 1);

// Backprop of gather_vertex_features: accumulates into the map gradient and
// returns d loss / d vertex as an N x 2 matrix.
Matrix gather_vertex_features_backward(const CircleContour& contour, const Grid2D& maps, int map_stride,
                                       const Matrix& grad_features, Grid2D& grad_maps);

struct ContourLoss {
    double value = 0.0;
    Matrix gradient; // N x 2, d loss / d deformed vertex
};

// Mean over index-aligned vertices of |dx| + |dy|.
ContourLoss contour_loss(const CircleContour& deformed, const CircleContour& truth);

} // namespace csnake
