#pragma once

#include "circlesnake/aligned.hpp"

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

namespace csnake {

// Dense (y, x, c) row-major grid of doubles. Used for images, prediction
// maps and feature maps alike.
class Grid2D {
public:
    Grid2D() = default;
    Grid2D(int width, int height, int channels, double fill = 0.0);
    Grid2D(int width, int height, int channels, std::vector<double> data);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    int channels() const noexcept { return channels_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::size_t index(int x, int y, int c = 0) const noexcept {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    double& at(int x, int y, int c = 0) noexcept { return data_[index(x, y, c)]; }
    double at(int x, int y, int c = 0) const noexcept { return data_[index(x, y, c)]; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    bool same_shape(const Grid2D& other) const noexcept {
        return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
    }

    bool all_finite() const noexcept;
    void fill(double value);

    friend bool operator==(const Grid2D&, const Grid2D&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    AlignedVector data_;
};

// Input geometry and the output grid it implies.
struct GridSpec {
    int input_width = 0;
    int input_height = 0;
    int downsample = 4;
    int classes = 1;

    int grid_width() const noexcept { return input_width / downsample; }
    int grid_height() const noexcept { return input_height / downsample; }

    // Throws Error(Shape) when dimensions are not divisible by the factor.
    void validate() const;
};

// Bilinear interpolation of one channel. Coordinates are in cell units and
// must satisfy 0 <= x <= width-1, 0 <= y <= height-1.
double bilinear_sample(const Grid2D& grid, double x, double y, int channel);

// The four corner cells and weights of a bilinear lookup, for backprop.
struct BilinearTaps {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    double fx = 0.0, fy = 0.0;

    double w00() const noexcept { return (1 - fx) * (1 - fy); }
    double w10() const noexcept { return fx * (1 - fy); }
    double w01() const noexcept { return (1 - fx) * fy; }
    double w11() const noexcept { return fx * fy; }
};

BilinearTaps bilinear_taps(int width, int height, double x, double y);

// Binary container: "CSGRID01", u32 width, height, channels, then doubles
// (little-endian IEEE-754) in storage order.
void write_grid(std::ostream& out, const Grid2D& grid);
Grid2D read_grid(std::istream& in);

} // namespace csnake
