#pragma once

// Toy stride-R convolutional backbone with center-heatmap, offset and
// radius heads. Gradients are hand-derived.

#include "circlesnake/contour.hpp"
#include "circlesnake/grid.hpp"
#include "circlesnake/params.hpp"
#include "circlesnake/rng.hpp"

#include <span>
#include <vector>

namespace csnake {

struct BackboneConfig {
    int input_width = 64;
    int input_height = 64;
    int in_channels = 3;
    int classes = 1;
    int downsample = 4;
    // One 3x3 conv + ReLU per entry. Layers 1..log2(downsample) have stride 2.
    std::vector<int> widths{16, 32, 32, 32, 32};
    int kernel = 3;
    // Initial heatmap probability, sets the heatmap head bias.
    double heatmap_prior = 0.1;

    GridSpec grid_spec() const { return {input_width, input_height, downsample, classes}; }
    void validate() const;

    friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

inline constexpr double kHeatmapClamp = 1e-7;

struct BackboneOutput {
    Grid2D heatmap;  // grid W/R x H/R x C, values in [1e-7, 1-1e-7]
    Grid2D offsets;  // 2 channels, down-sampled cell units
    Grid2D radius;   // 1 channel, down-sampled cell units
    Grid2D features; // first-layer activations at input resolution
};

struct BackboneCache {
    std::vector<Matrix> columns; // im2col of each conv layer's input
    std::vector<Matrix> outputs; // post-ReLU activation per layer
    Matrix heat_sigmoid;         // unclamped sigmoid
};

struct BackboneGrads {
    Grid2D heatmap;
    Grid2D offsets;
    Grid2D radius;
    Grid2D features; // may be empty when no contour loss flows back
};

class ToyBackbone {
public:
    ToyBackbone() : ToyBackbone(BackboneConfig{}) {}
    explicit ToyBackbone(BackboneConfig config);

    const BackboneConfig& config() const noexcept { return config_; }
    const ParamLayout& layout() const noexcept { return layout_; }
    AlignedVector& parameters() noexcept { return params_; }
    const AlignedVector& parameters() const noexcept { return params_; }

    int feature_channels() const noexcept { return config_.widths.front(); }
    static constexpr int feature_stride() noexcept { return 1; }

    // Uniform +-1/sqrt(fan_in) weights, zero biases, heatmap bias at the prior.
    void initialize(Rng& rng);

    BackboneOutput forward(const Grid2D& image, BackboneCache* cache = nullptr) const;
    void backward(const BackboneCache& cache, const BackboneGrads& grads, std::span<double> grad_params) const;

private:
    struct ConvLayer {
        int in = 0;
        int out = 0;
        int stride = 1;
        int in_w = 0, in_h = 0, out_w = 0, out_h = 0;
        std::size_t weight = 0;
        std::size_t bias = 0;
    };

    Matrix im2col(const Matrix& input, const ConvLayer& layer) const;
    Matrix col2im(const Matrix& columns, const ConvLayer& layer) const;

    BackboneConfig config_;
    ParamLayout layout_;
    AlignedVector params_;
    std::vector<ConvLayer> layers_;
    std::size_t heat_w_ = 0, heat_b_ = 0, off_w_ = 0, off_b_ = 0, rad_w_ = 0, rad_b_ = 0;
};

} // namespace csnake
