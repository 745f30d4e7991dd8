#include "circlesnake/deform_head.hpp"

#include "circlesnake/error.hpp"

#include <cmath>
#include <string>

namespace csnake {

namespace {

Matrix relu(const Matrix& m) { return m.cwiseMax(0.0); }

void mask_relu(Matrix& grad, const Matrix& activation) {
    grad = (activation.array() > 0.0).select(grad, 0.0);
}

void uniform_fill(MatrixMap m, double bound, Rng& rng) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = rng.uniform(-bound, bound);
    }
}

} // namespace

DeformationHead::DeformationHead(const HeadConfig& config) : config_(config) {
    if (config.input_dim < 1 || config.width < 1 || config.blocks < 1 || config.half_width < 0 ||
        config.fusion_dim < 1 || config.hidden1 < 1 || config.hidden2 < 1) {
        fail(Error::Kind::Usage, "invalid deformation head configuration");
    }
    const int taps = 2 * config.half_width + 1;
    for (int b = 0; b < config.blocks; ++b) {
        const int in = b == 0 ? config.input_dim : config.width;
        const auto tag = "block" + std::to_string(b);
        conv_w_.push_back(layout_.add(tag + ".conv.weight", taps * in, config.width));
        conv_b_.push_back(layout_.add(tag + ".conv.bias", 1, config.width));
        norm_shift_.push_back(buffer_layout_.add(tag + ".norm.mean", 1, config.width));
        norm_scale_.push_back(buffer_layout_.add(tag + ".norm.scale", 1, config.width));
    }
    const int stacked = config.blocks * config.width;
    fuse_w_ = layout_.add("fusion.weight", stacked, config.fusion_dim);
    fuse_b_ = layout_.add("fusion.bias", 1, config.fusion_dim);
    p1_w_ = layout_.add("predict1.weight", stacked + config.fusion_dim, config.hidden1);
    p1_b_ = layout_.add("predict1.bias", 1, config.hidden1);
    p2_w_ = layout_.add("predict2.weight", config.hidden1, config.hidden2);
    p2_b_ = layout_.add("predict2.bias", 1, config.hidden2);
    p3_w_ = layout_.add("predict3.weight", config.hidden2, 2);
    p3_b_ = layout_.add("predict3.bias", 1, 2);
    params_.assign(layout_.total(), 0.0);
    buffers_.assign(buffer_layout_.total(), 0.0);
    for (std::size_t s : norm_scale_) {
        buffer_layout_.view(std::span<double>(buffers_), s).setOnes();
    }
}

void DeformationHead::initialize(Rng& rng) {
    std::span<double> p(params_);
    for (std::size_t w : conv_w_) {
        uniform_fill(layout_.view(p, w), 1.0 / std::sqrt(static_cast<double>(layout_[w].rows)), rng);
    }
    for (std::size_t w : {fuse_w_, p1_w_, p2_w_, p3_w_}) {
        uniform_fill(layout_.view(p, w), 1.0 / std::sqrt(static_cast<double>(layout_[w].rows)), rng);
    }
    for (std::size_t b : conv_b_) {
        layout_.view(p, b).setZero();
    }
    for (std::size_t b : {fuse_b_, p1_b_, p2_b_, p3_b_}) {
        layout_.view(p, b).setZero();
    }
    std::span<double> buf(buffers_);
    for (int b = 0; b < config_.blocks; ++b) {
        buffer_layout_.view(buf, norm_shift_[b]).setZero();
        buffer_layout_.view(buf, norm_scale_[b]).setOnes();
    }
}

Matrix DeformationHead::block_preactivation(int block, const Matrix& input) const {
    std::span<const double> p(params_);
    std::span<const double> buf(buffers_);
    Matrix pre = circular_unfold(input, config_.half_width) * layout_.view(p, conv_w_[block]);
    pre.rowwise() += layout_.view(p, conv_b_[block]).row(0);
    pre.rowwise() -= buffer_layout_.view(buf, norm_shift_[block]).row(0);
    pre.array().rowwise() *= buffer_layout_.view(buf, norm_scale_[block]).row(0).array();
    return pre;
}

void DeformationHead::calibrate(std::span<const Matrix> inputs) {
    if (inputs.empty()) {
        return;
    }
    std::span<double> buf(buffers_);
    std::vector<Matrix> states(inputs.begin(), inputs.end());
    for (int b = 0; b < config_.blocks; ++b) {
        buffer_layout_.view(buf, norm_shift_[b]).setZero();
        buffer_layout_.view(buf, norm_scale_[b]).setOnes();
        std::vector<Matrix> pres;
        Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(config_.width);
        Eigen::RowVectorXd sq = Eigen::RowVectorXd::Zero(config_.width);
        double count = 0.0;
        for (const Matrix& s : states) {
            pres.push_back(block_preactivation(b, s));
            sum += pres.back().colwise().sum();
            sq += pres.back().array().square().matrix().colwise().sum();
            count += static_cast<double>(s.rows());
        }
        const Eigen::RowVectorXd mean = sum / count;
        const Eigen::RowVectorXd var = (sq / count).array() - mean.array().square();
        buffer_layout_.view(buf, norm_shift_[b]).row(0) = mean;
        buffer_layout_.view(buf, norm_scale_[b]).row(0) = (var.array().max(0.0) + 1e-5).rsqrt().matrix();
        for (std::size_t i = 0; i < states.size(); ++i) {
            Matrix act = relu(block_preactivation(b, states[i]));
            states[i] = b == 0 ? act : Matrix(act + states[i]);
        }
    }
}

Matrix DeformationHead::forward(const Matrix& input, HeadCache* cache) const {
    if (input.cols() != config_.input_dim) {
        fail(Error::Kind::Shape, "head expects " + std::to_string(config_.input_dim) + " input features, got " +
                                     std::to_string(input.cols()));
    }
    const Eigen::Index n = input.rows();
    const int w = config_.width;
    std::span<const double> p(params_);

    Matrix stacked(n, config_.blocks * w);
    Matrix state = input;
    for (int b = 0; b < config_.blocks; ++b) {
        Matrix normed = block_preactivation(b, state);
        Matrix act = relu(normed);
        if (cache) {
            cache->block_inputs.push_back(state);
            cache->block_normed.push_back(normed);
        }
        state = b == 0 ? act : Matrix(act + state);
        stacked.middleCols(b * w, w) = state;
    }

    Matrix fz = stacked * layout_.view(p, fuse_w_);
    fz.rowwise() += layout_.view(p, fuse_b_).row(0);
    std::vector<Eigen::Index> argmax(static_cast<std::size_t>(config_.fusion_dim), 0);
    Eigen::RowVectorXd pooled(config_.fusion_dim);
    for (int c = 0; c < config_.fusion_dim; ++c) {
        pooled(c) = fz.col(c).maxCoeff(&argmax[static_cast<std::size_t>(c)]);
    }
    Matrix fused(n, stacked.cols() + config_.fusion_dim);
    fused.leftCols(stacked.cols()) = stacked;
    fused.rightCols(config_.fusion_dim).rowwise() = pooled;

    Matrix h1 = fused * layout_.view(p, p1_w_);
    h1.rowwise() += layout_.view(p, p1_b_).row(0);
    h1 = relu(h1);
    Matrix h2 = h1 * layout_.view(p, p2_w_);
    h2.rowwise() += layout_.view(p, p2_b_).row(0);
    h2 = relu(h2);
    Matrix out = h2 * layout_.view(p, p3_w_);
    out.rowwise() += layout_.view(p, p3_b_).row(0);

    if (cache) {
        cache->stacked = std::move(stacked);
        cache->pool_argmax = std::move(argmax);
        cache->fused = std::move(fused);
        cache->hidden1 = std::move(h1);
        cache->hidden2 = std::move(h2);
    }
    return out;
}

Matrix DeformationHead::backward(const HeadCache& cache, const Matrix& grad_out, std::span<double> grad_params) const {
    if (grad_params.size() != params_.size()) {
        fail(Error::Kind::Shape, "head gradient buffer has the wrong size");
    }
    std::span<const double> p(params_);
    std::span<const double> buf(buffers_);
    const int w = config_.width;
    const Eigen::Index stacked_cols = cache.stacked.cols();

    layout_.view(grad_params, p3_w_).noalias() += cache.hidden2.transpose() * grad_out;
    layout_.view(grad_params, p3_b_).row(0) += grad_out.colwise().sum();
    Matrix g2 = grad_out * layout_.view(p, p3_w_).transpose();
    mask_relu(g2, cache.hidden2);

    layout_.view(grad_params, p2_w_).noalias() += cache.hidden1.transpose() * g2;
    layout_.view(grad_params, p2_b_).row(0) += g2.colwise().sum();
    Matrix g1 = g2 * layout_.view(p, p2_w_).transpose();
    mask_relu(g1, cache.hidden1);

    layout_.view(grad_params, p1_w_).noalias() += cache.fused.transpose() * g1;
    layout_.view(grad_params, p1_b_).row(0) += g1.colwise().sum();
    const Matrix g_fused = g1 * layout_.view(p, p1_w_).transpose();

    Matrix g_stacked = g_fused.leftCols(stacked_cols);
    const Eigen::RowVectorXd g_pooled = g_fused.rightCols(config_.fusion_dim).colwise().sum();
    Matrix g_fz = Matrix::Zero(cache.stacked.rows(), config_.fusion_dim);
    for (int c = 0; c < config_.fusion_dim; ++c) {
        g_fz(cache.pool_argmax[static_cast<std::size_t>(c)], c) = g_pooled(c);
    }
    layout_.view(grad_params, fuse_w_).noalias() += cache.stacked.transpose() * g_fz;
    layout_.view(grad_params, fuse_b_).row(0) += g_pooled;
    g_stacked.noalias() += g_fz * layout_.view(p, fuse_w_).transpose();

    Matrix carry = Matrix::Zero(cache.stacked.rows(), w);
    Matrix g_input;
    for (int b = config_.blocks - 1; b >= 0; --b) {
        Matrix g_state = g_stacked.middleCols(b * w, w) + carry;
        Matrix g_pre = g_state;
        mask_relu(g_pre, cache.block_normed[static_cast<std::size_t>(b)]);
        g_pre.array().rowwise() *= buffer_layout_.view(buf, norm_scale_[b]).row(0).array();

        const Matrix& in = cache.block_inputs[static_cast<std::size_t>(b)];
        const Matrix unfolded = circular_unfold(in, config_.half_width);
        layout_.view(grad_params, conv_w_[b]).noalias() += unfolded.transpose() * g_pre;
        layout_.view(grad_params, conv_b_[b]).row(0) += g_pre.colwise().sum();
        Matrix g_in = circular_fold(g_pre * layout_.view(p, conv_w_[b]).transpose(), config_.half_width, in.cols());
        if (b > 0) {
            carry = g_in + g_state; // residual path
        } else {
            g_input = std::move(g_in);
        }
    }
    return g_input;
}

SnakeTrace snake_forward(const CircleContour& contour, const Grid2D& maps, const DeformationHead& head,
                         int iterations, const Point& center, int map_stride) {
    if (iterations < 1) {
        fail(Error::Kind::Usage, "deformation needs at least one iteration");
    }
    SnakeTrace trace;
    CircleContour current = contour;
    for (int it = 0; it < iterations; ++it) {
        const VertexFeatures features = gather_vertex_features(current, maps, center, map_stride);
        HeadCache cache;
        const Matrix offsets = head.forward(features.values, &cache);
        CircleContour next = current;
        for (std::size_t i = 0; i < next.size(); ++i) {
            next.vertices[i].x += offsets(static_cast<Eigen::Index>(i), 0);
            next.vertices[i].y += offsets(static_cast<Eigen::Index>(i), 1);
        }
        trace.inputs.push_back(std::move(current));
        trace.caches.push_back(std::move(cache));
        trace.outputs.push_back(next);
        current = std::move(next);
    }
    return trace;
}

void snake_backward(const SnakeTrace& trace, const Grid2D& maps, const DeformationHead& head, int map_stride,
                    const std::vector<Matrix>& stage_grads, std::span<double> grad_params, Grid2D& grad_maps) {
    if (stage_grads.size() != trace.outputs.size()) {
        fail(Error::Kind::Shape, "one gradient per deformation stage is required");
    }
    Matrix carry = Matrix::Zero(stage_grads.front().rows(), 2);
    for (std::size_t t = trace.outputs.size(); t-- > 0;) {
        const Matrix g_out = stage_grads[t] + carry;
        const Matrix g_features = head.backward(trace.caches[t], g_out, grad_params);
        const Matrix g_vertices =
            gather_vertex_features_backward(trace.inputs[t], maps, map_stride, g_features, grad_maps);
        carry = g_out + g_vertices;
    }
}

DeformResult deform_contour(const CircleContour& contour, const Grid2D& maps, const DeformationHead& head,
                            int iterations, const Point& center, int map_stride) {
    if (iterations < 1) {
        fail(Error::Kind::Usage, "deformation needs at least one iteration");
    }
    DeformResult result;
    CircleContour current = contour;
    for (int it = 0; it < iterations; ++it) {
        const VertexFeatures features = gather_vertex_features(current, maps, center, map_stride);
        result.clamped += features.clamped;
        const Matrix offsets = head.forward(features.values);
        ++result.forward_passes;
        for (std::size_t i = 0; i < current.size(); ++i) {
            current.vertices[i].x += offsets(static_cast<Eigen::Index>(i), 0);
            current.vertices[i].y += offsets(static_cast<Eigen::Index>(i), 1);
        }
        result.stages.push_back(current);
    }
    result.contour = std::move(current);
    return result;
}

} // namespace csnake
