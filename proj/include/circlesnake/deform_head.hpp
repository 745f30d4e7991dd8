#pragma once

// Circular-convolution deformation head and the iterative contour
// deformation loop built on it.

#include "circlesnake/contour.hpp"
#include "circlesnake/params.hpp"
#include "circlesnake/rng.hpp"

#include <span>
#include <vector>

namespace csnake {

struct HeadConfig {
    int input_dim = 18; // feature-map channels + 2 offset columns
    int width = 16;
    int blocks = 8;
    int half_width = 4; // kernel size 9
    int fusion_dim = 32;
    int hidden1 = 32;
    int hidden2 = 16;

    friend bool operator==(const HeadConfig&, const HeadConfig&) = default;
};

struct HeadCache {
    std::vector<Matrix> block_inputs;
    std::vector<Matrix> block_normed; // standardized pre-activations
    Matrix stacked;                   // N x (blocks * width)
    std::vector<Eigen::Index> pool_argmax;
    Matrix fused;                     // N x (blocks * width + fusion_dim)
    Matrix hidden1;
    Matrix hidden2;
};

// Eight CirConv-Norm-ReLU blocks (residual after the first), a fusion stage
// (1x1 conv, global max pool broadcast back to every vertex) and three 1x1
// prediction layers emitting (dx, dy) per vertex. Normalization uses
// per-channel statistics frozen by calibrate().
class DeformationHead {
public:
    DeformationHead() : DeformationHead(HeadConfig{}) {}
    explicit DeformationHead(const HeadConfig& config);

    const HeadConfig& config() const noexcept { return config_; }
    const ParamLayout& layout() const noexcept { return layout_; }
    const ParamLayout& buffer_layout() const noexcept { return buffer_layout_; }

    AlignedVector& parameters() noexcept { return params_; }
    const AlignedVector& parameters() const noexcept { return params_; }
    AlignedVector& buffers() noexcept { return buffers_; }
    const AlignedVector& buffers() const noexcept { return buffers_; }

    // Weights uniform in +-1/sqrt(fan_in), biases zero, identity normalization.
    void initialize(Rng& rng);

    // Freezes per-block standardization from a set of input feature matrices.
    void calibrate(std::span<const Matrix> inputs);

    Matrix forward(const Matrix& input, HeadCache* cache = nullptr) const;

    // Accumulates into grad_params; returns d loss / d input.
    Matrix backward(const HeadCache& cache, const Matrix& grad_out, std::span<double> grad_params) const;

private:
    Matrix block_preactivation(int block, const Matrix& input) const;

    HeadConfig config_;
    ParamLayout layout_;
    ParamLayout buffer_layout_;
    AlignedVector params_;
    AlignedVector buffers_;
    std::vector<std::size_t> conv_w_, conv_b_, norm_shift_, norm_scale_;
    std::size_t fuse_w_ = 0, fuse_b_ = 0, p1_w_ = 0, p1_b_ = 0, p2_w_ = 0, p2_b_ = 0, p3_w_ = 0, p3_b_ = 0;
};

struct DeformResult {
    CircleContour contour;
    std::vector<CircleContour> stages;
    int forward_passes = 0;
    std::size_t clamped = 0;
};

// Per iteration: gather features, run the head, add (dx, dy) to every vertex.
DeformResult deform_contour(const CircleContour& contour, const Grid2D& maps, const DeformationHead& head,
                            int iterations, const Point& center, int map_stride = 1);

// Forward pass with everything needed for backprop.
struct SnakeTrace {
    std::vector<CircleContour> inputs;
    std::vector<HeadCache> caches;
    std::vector<CircleContour> outputs;
};

SnakeTrace snake_forward(const CircleContour& contour, const Grid2D& maps, const DeformationHead& head,
                         int iterations, const Point& center, int map_stride = 1);

// stage_grads[t] is d loss / d outputs[t] (N x 2). Accumulates into
// grad_params and grad_maps.
void snake_backward(const SnakeTrace& trace, const Grid2D& maps, const DeformationHead& head, int map_stride,
                    const std::vector<Matrix>& stage_grads, std::span<double> grad_params, Grid2D& grad_maps);

} // namespace csnake
