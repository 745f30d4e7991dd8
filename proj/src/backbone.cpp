#include "circlesnake/backbone.hpp"

#include "circlesnake/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

namespace csnake {

void BackboneConfig::validate() const {
    grid_spec().validate();
    if (in_channels < 1 || classes < 1 || kernel < 1 || kernel % 2 == 0 || widths.empty()) {
        fail(Error::Kind::Usage, "invalid backbone configuration");
    }
    if (!std::has_single_bit(static_cast<unsigned>(downsample))) {
        fail(Error::Kind::Usage, "backbone downsample must be a power of two");
    }
    const int halvings = std::countr_zero(static_cast<unsigned>(downsample));
    if (static_cast<int>(widths.size()) < halvings + 1) {
        fail(Error::Kind::Usage, "backbone needs more layers than stride-2 stages");
    }
    if (std::any_of(widths.begin(), widths.end(), [](int w) { return w < 1; })) {
        fail(Error::Kind::Usage, "backbone widths must be positive");
    }
    if (!(heatmap_prior > 0.0 && heatmap_prior < 1.0)) {
        fail(Error::Kind::Usage, "heatmap prior must lie in (0,1)");
    }
}

ToyBackbone::ToyBackbone(BackboneConfig config) : config_(std::move(config)) {
    config_.validate();
    const int halvings = std::countr_zero(static_cast<unsigned>(config_.downsample));
    const int k = config_.kernel;
    int in = config_.in_channels;
    int w = config_.input_width;
    int h = config_.input_height;
    for (std::size_t i = 0; i < config_.widths.size(); ++i) {
        ConvLayer layer;
        layer.in = in;
        layer.out = config_.widths[i];
        layer.stride = (i >= 1 && static_cast<int>(i) <= halvings) ? 2 : 1;
        layer.in_w = w;
        layer.in_h = h;
        const int pad = k / 2;
        layer.out_w = (w + 2 * pad - k) / layer.stride + 1;
        layer.out_h = (h + 2 * pad - k) / layer.stride + 1;
        const auto tag = "conv" + std::to_string(i);
        layer.weight = layout_.add(tag + ".weight", k * k * in, layer.out);
        layer.bias = layout_.add(tag + ".bias", 1, layer.out);
        layers_.push_back(layer);
        in = layer.out;
        w = layer.out_w;
        h = layer.out_h;
    }
    heat_w_ = layout_.add("heatmap.weight", in, config_.classes);
    heat_b_ = layout_.add("heatmap.bias", 1, config_.classes);
    off_w_ = layout_.add("offset.weight", in, 2);
    off_b_ = layout_.add("offset.bias", 1, 2);
    rad_w_ = layout_.add("radius.weight", in, 1);
    rad_b_ = layout_.add("radius.bias", 1, 1);
    params_.assign(layout_.total(), 0.0);
}

void ToyBackbone::initialize(Rng& rng) {
    std::span<double> p(params_);
    for (std::size_t t = 0; t < layout_.tensors().size(); ++t) {
        auto view = layout_.view(p, t);
        const bool is_bias = layout_[t].name.ends_with(".bias");
        if (is_bias) {
            view.setZero();
            continue;
        }
        const double bound = 1.0 / std::sqrt(static_cast<double>(layout_[t].rows));
        for (Eigen::Index i = 0; i < view.size(); ++i) {
            view.data()[i] = rng.uniform(-bound, bound);
        }
    }
    layout_.view(p, heat_b_).setConstant(-std::log((1.0 - config_.heatmap_prior) / config_.heatmap_prior));
}

Matrix ToyBackbone::im2col(const Matrix& input, const ConvLayer& layer) const {
    const int k = config_.kernel;
    const int pad = k / 2;
    Matrix cols = Matrix::Zero(static_cast<Eigen::Index>(layer.out_h) * layer.out_w, k * k * layer.in);
    for (int oy = 0; oy < layer.out_h; ++oy) {
        for (int ox = 0; ox < layer.out_w; ++ox) {
            const Eigen::Index row = static_cast<Eigen::Index>(oy) * layer.out_w + ox;
            for (int ky = 0; ky < k; ++ky) {
                const int iy = oy * layer.stride + ky - pad;
                if (iy < 0 || iy >= layer.in_h) {
                    continue;
                }
                for (int kx = 0; kx < k; ++kx) {
                    const int ix = ox * layer.stride + kx - pad;
                    if (ix < 0 || ix >= layer.in_w) {
                        continue;
                    }
                    cols.block(row, (ky * k + kx) * layer.in, 1, layer.in) =
                        input.row(static_cast<Eigen::Index>(iy) * layer.in_w + ix);
                }
            }
        }
    }
    return cols;
}

Matrix ToyBackbone::col2im(const Matrix& columns, const ConvLayer& layer) const {
    const int k = config_.kernel;
    const int pad = k / 2;
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(layer.in_h) * layer.in_w, layer.in);
    for (int oy = 0; oy < layer.out_h; ++oy) {
        for (int ox = 0; ox < layer.out_w; ++ox) {
            const Eigen::Index row = static_cast<Eigen::Index>(oy) * layer.out_w + ox;
            for (int ky = 0; ky < k; ++ky) {
                const int iy = oy * layer.stride + ky - pad;
                if (iy < 0 || iy >= layer.in_h) {
                    continue;
                }
                for (int kx = 0; kx < k; ++kx) {
                    const int ix = ox * layer.stride + kx - pad;
                    if (ix < 0 || ix >= layer.in_w) {
                        continue;
                    }
                    out.row(static_cast<Eigen::Index>(iy) * layer.in_w + ix) +=
                        columns.block(row, (ky * k + kx) * layer.in, 1, layer.in);
                }
            }
        }
    }
    return out;
}

namespace {

Grid2D to_grid(const Matrix& m, int width, int height) {
    return Grid2D(width, height, static_cast<int>(m.cols()), std::vector<double>(m.data(), m.data() + m.size()));
}

Matrix from_grid(const Grid2D& g) {
    return ConstMatrixMap(g.values().data(), static_cast<Eigen::Index>(g.width()) * g.height(), g.channels());
}

} // namespace

BackboneOutput ToyBackbone::forward(const Grid2D& image, BackboneCache* cache) const {
    if (image.width() != config_.input_width || image.height() != config_.input_height ||
        image.channels() != config_.in_channels) {
        fail(Error::Kind::Shape, "image " + std::to_string(image.width()) + "x" + std::to_string(image.height()) +
                                     "x" + std::to_string(image.channels()) + " does not match the backbone input " +
                                     std::to_string(config_.input_width) + "x" +
                                     std::to_string(config_.input_height) + "x" +
                                     std::to_string(config_.in_channels));
    }
    std::span<const double> p(params_);
    Matrix act = from_grid(image);
    BackboneOutput out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const ConvLayer& layer = layers_[i];
        Matrix cols = im2col(act, layer);
        Matrix pre = cols * layout_.view(p, layer.weight);
        pre.rowwise() += layout_.view(p, layer.bias).row(0);
        act = pre.cwiseMax(0.0);
        if (i == 0) {
            out.features = to_grid(act, layer.out_w, layer.out_h);
        }
        if (cache) {
            cache->columns.push_back(std::move(cols));
            cache->outputs.push_back(act);
        }
    }
    const ConvLayer& last = layers_.back();

    Matrix logits = act * layout_.view(p, heat_w_);
    logits.rowwise() += layout_.view(p, heat_b_).row(0);
    Matrix sig = (1.0 + (-logits.array()).exp()).inverse().matrix();
    out.heatmap = to_grid(sig.cwiseMax(kHeatmapClamp).cwiseMin(1.0 - kHeatmapClamp), last.out_w, last.out_h);

    Matrix off = act * layout_.view(p, off_w_);
    off.rowwise() += layout_.view(p, off_b_).row(0);
    out.offsets = to_grid(off, last.out_w, last.out_h);

    Matrix rad = act * layout_.view(p, rad_w_);
    rad.rowwise() += layout_.view(p, rad_b_).row(0);
    out.radius = to_grid(rad, last.out_w, last.out_h);

    if (cache) {
        cache->heat_sigmoid = std::move(sig);
    }
    return out;
}

void ToyBackbone::backward(const BackboneCache& cache, const BackboneGrads& grads, std::span<double> grad_params) const {
    if (grad_params.size() != params_.size()) {
        fail(Error::Kind::Shape, "backbone gradient buffer has the wrong size");
    }
    std::span<const double> p(params_);
    const Matrix& top = cache.outputs.back();

    Matrix g_logits = from_grid(grads.heatmap);
    const auto s = cache.heat_sigmoid.array();
    const auto inside = (s > kHeatmapClamp) && (s < 1.0 - kHeatmapClamp);
    g_logits = inside.select(g_logits.array() * s * (1.0 - s), 0.0).matrix();
    const Matrix g_off = from_grid(grads.offsets);
    const Matrix g_rad = from_grid(grads.radius);

    layout_.view(grad_params, heat_w_).noalias() += top.transpose() * g_logits;
    layout_.view(grad_params, heat_b_).row(0) += g_logits.colwise().sum();
    layout_.view(grad_params, off_w_).noalias() += top.transpose() * g_off;
    layout_.view(grad_params, off_b_).row(0) += g_off.colwise().sum();
    layout_.view(grad_params, rad_w_).noalias() += top.transpose() * g_rad;
    layout_.view(grad_params, rad_b_).row(0) += g_rad.colwise().sum();

    Matrix g_act = g_logits * layout_.view(p, heat_w_).transpose();
    g_act.noalias() += g_off * layout_.view(p, off_w_).transpose();
    g_act.noalias() += g_rad * layout_.view(p, rad_w_).transpose();

    for (std::size_t i = layers_.size(); i-- > 0;) {
        const ConvLayer& layer = layers_[i];
        if (i == 0 && !grads.features.empty()) {
            g_act += from_grid(grads.features);
        }
        Matrix g_pre = (cache.outputs[i].array() > 0.0).select(g_act, 0.0);
        layout_.view(grad_params, layer.weight).noalias() += cache.columns[i].transpose() * g_pre;
        layout_.view(grad_params, layer.bias).row(0) += g_pre.colwise().sum();
        if (i > 0) {
            g_act = col2im(g_pre * layout_.view(p, layer.weight).transpose(), layer);
        }
    }
}

} // namespace csnake
