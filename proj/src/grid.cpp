#include "circlesnake/grid.hpp"

#include "circlesnake/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

namespace csnake {

namespace {

constexpr char kGridMagic[8] = {'C', 'S', 'G', 'R', 'I', 'D', '0', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) {
        b[i] = static_cast<unsigned char>(v >> (8 * i));
    }
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        fail(Error::Kind::Io, "truncated grid header");
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    }
    return v;
}

std::size_t checked_size(int width, int height, int channels) {
    if (width < 0 || height < 0 || channels < 0) {
        fail(Error::Kind::Shape, "grid dimensions must be non-negative");
    }
    return static_cast<std::size_t>(width) * height * channels;
}

} // namespace

Grid2D::Grid2D(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels), data_(checked_size(width, height, channels), fill) {}

Grid2D::Grid2D(int width, int height, int channels, std::vector<double> data)
    : width_(width), height_(height), channels_(channels), data_(data.begin(), data.end()) {
    if (data_.size() != checked_size(width, height, channels)) {
        fail(Error::Kind::Shape, "grid data length " + std::to_string(data_.size()) + " != " +
                                     std::to_string(width) + "x" + std::to_string(height) + "x" +
                                     std::to_string(channels));
    }
}

bool Grid2D::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Grid2D::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void GridSpec::validate() const {
    if (downsample < 1 || classes < 1) {
        fail(Error::Kind::Shape, "grid spec needs downsample >= 1 and classes >= 1");
    }
    if (input_width <= 0 || input_height <= 0) {
        fail(Error::Kind::Shape, "grid spec needs positive input dimensions");
    }
    if (input_width % downsample != 0 || input_height % downsample != 0) {
        fail(Error::Kind::Shape, "input " + std::to_string(input_width) + "x" + std::to_string(input_height) +
                                     " not divisible by downsample " + std::to_string(downsample));
    }
}

BilinearTaps bilinear_taps(int width, int height, double x, double y) {
    if (!(x >= 0.0 && x <= width - 1) || !(y >= 0.0 && y <= height - 1)) {
        fail(Error::Kind::CoordinateRange, "bilinear query (" + std::to_string(x) + ", " + std::to_string(y) +
                                               ") outside [0," + std::to_string(width - 1) + "]x[0," +
                                               std::to_string(height - 1) + "]");
    }
    BilinearTaps t;
    t.x0 = std::min(static_cast<int>(std::floor(x)), width - 1);
    t.y0 = std::min(static_cast<int>(std::floor(y)), height - 1);
    t.x1 = std::min(t.x0 + 1, width - 1);
    t.y1 = std::min(t.y0 + 1, height - 1);
    t.fx = x - t.x0;
    t.fy = y - t.y0;
    return t;
}

double bilinear_sample(const Grid2D& grid, double x, double y, int channel) {
    if (channel < 0 || channel >= grid.channels()) {
        fail(Error::Kind::Shape, "channel " + std::to_string(channel) + " out of range");
    }
    const BilinearTaps t = bilinear_taps(grid.width(), grid.height(), x, y);
    return t.w00() * grid.at(t.x0, t.y0, channel) + t.w10() * grid.at(t.x1, t.y0, channel) +
           t.w01() * grid.at(t.x0, t.y1, channel) + t.w11() * grid.at(t.x1, t.y1, channel);
}

void write_grid(std::ostream& out, const Grid2D& grid) {
    out.write(kGridMagic, sizeof kGridMagic);
    write_u32(out, static_cast<std::uint32_t>(grid.width()));
    write_u32(out, static_cast<std::uint32_t>(grid.height()));
    write_u32(out, static_cast<std::uint32_t>(grid.channels()));
    for (double v : grid.values()) {
        auto bits = std::bit_cast<std::uint64_t>(v);
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) {
            b[i] = static_cast<unsigned char>(bits >> (8 * i));
        }
        out.write(reinterpret_cast<const char*>(b), 8);
    }
}

Grid2D read_grid(std::istream& in) {
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kGridMagic, 8) != 0) {
        fail(Error::Kind::Io, "not a grid container");
    }
    const int w = static_cast<int>(read_u32(in));
    const int h = static_cast<int>(read_u32(in));
    const int c = static_cast<int>(read_u32(in));
    std::vector<double> data(checked_size(w, h, c));
    for (double& v : data) {
        unsigned char b[8];
        if (!in.read(reinterpret_cast<char*>(b), 8)) {
            fail(Error::Kind::Io, "truncated grid payload");
        }
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) {
            bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        }
        v = std::bit_cast<double>(bits);
    }
    return Grid2D(w, h, c, std::move(data));
}

} // namespace csnake
