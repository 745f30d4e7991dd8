#include "circlesnake/model.hpp"

#include "circlesnake/config_io.hpp"
#include "circlesnake/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>

namespace csnake {

namespace {

HeadConfig aligned_head(const ModelConfig& cfg) {
    HeadConfig h = cfg.head;
    h.input_dim = cfg.backbone.widths.front() + 2;
    return h;
}

std::vector<Circle> truth_circles(const LabeledImage& sample, std::size_t limit) {
    std::vector<Circle> out;
    for (std::size_t i = 0; i < sample.truth.size() && i < limit; ++i) {
        out.push_back(as_circle(sample.truth[i]));
    }
    return out;
}

} // namespace

CircleSnakeModel::CircleSnakeModel(const ModelConfig& cfg)
    : config(cfg), backbone(cfg.backbone), head(aligned_head(cfg)) {
    config.head = head.config();
    if (cfg.contour_vertices < 3 || cfg.deform_iterations < 1) {
        fail(Error::Kind::Usage, "model needs >= 3 contour vertices and >= 1 deformation iteration");
    }
}

void CircleSnakeModel::initialize(std::uint64_t seed) {
    Rng rng(seed);
    backbone.initialize(rng);
    head.initialize(rng);
}

void calibrate_model(CircleSnakeModel& model, std::span<const LabeledImage> samples) {
    std::vector<Matrix> inputs;
    for (const auto& sample : samples) {
        const BackboneOutput out = model.backbone.forward(sample.image);
        for (const Circle& c : truth_circles(sample, sample.truth.size())) {
            const CircleContour contour = sample_circle_vertices(c, model.config.contour_vertices);
            inputs.push_back(gather_vertex_features(contour, out.features, {c.center_x, c.center_y},
                                                    ToyBackbone::feature_stride())
                                 .values);
        }
    }
    model.head.calibrate(inputs);
}

StepLoss sample_loss(const CircleSnakeModel& model, const LabeledImage& sample, std::span<const Circle> init_circles,
                     const TrainConfig& cfg, std::span<double> grad_backbone, std::span<double> grad_head) {
    const GridSpec spec = model.grid_spec();
    BackboneCache cache;
    const BackboneOutput out = model.backbone.forward(sample.image, &cache);

    StepLoss loss;
    const int n_objects = std::max<int>(1, static_cast<int>(sample.truth.size()));
    const Grid2D target = render_center_heatmap(sample.truth, spec, model.config.targets);
    LossResult focal = focal_loss(out.heatmap, target, model.config.targets, n_objects);
    loss.focal = focal.value;

    BackboneGrads grads;
    grads.heatmap = std::move(focal.gradient);
    grads.offsets = Grid2D(out.offsets.width(), out.offsets.height(), 2, 0.0);
    grads.radius = Grid2D(out.radius.width(), out.radius.height(), 1, 0.0);
    if (!sample.truth.empty()) {
        LossResult off = offset_loss(out.offsets, sample.truth, spec);
        LossResult rad = radius_loss(out.radius, sample.truth, spec);
        loss.offset = off.value;
        loss.radius = rad.value;
        for (std::size_t i = 0; i < grads.offsets.size(); ++i) {
            grads.offsets.values()[i] = cfg.weights.lambda_off * off.gradient.values()[i];
        }
        for (std::size_t i = 0; i < grads.radius.size(); ++i) {
            grads.radius.values()[i] = cfg.weights.lambda_radius * rad.gradient.values()[i];
        }
    }

    const std::size_t snakes = std::min(init_circles.size(), sample.truth.size());
    if (snakes > 0 && cfg.contour_weight > 0.0) {
        grads.features = Grid2D(out.features.width(), out.features.height(), out.features.channels(), 0.0);
        const double scale = cfg.contour_weight / static_cast<double>(snakes);
        for (std::size_t k = 0; k < snakes; ++k) {
            const Circle& init = init_circles[k];
            const CircleContour start = sample_circle_vertices(init, model.config.contour_vertices);
            const CircleContour gt = sample_circle_vertices(as_circle(sample.truth[k]), model.config.contour_vertices);
            const SnakeTrace trace = snake_forward(start, out.features, model.head, model.config.deform_iterations,
                                                   {init.center_x, init.center_y}, ToyBackbone::feature_stride());
            std::vector<Matrix> stage_grads;
            for (const auto& stage : trace.outputs) {
                ContourLoss cl = contour_loss(stage, gt);
                loss.contour += cl.value / static_cast<double>(snakes);
                stage_grads.push_back(cl.gradient * scale);
            }
            snake_backward(trace, out.features, model.head, ToyBackbone::feature_stride(), stage_grads, grad_head,
                           grads.features);
        }
    }

    loss.total = detection_loss(loss.focal, loss.radius, loss.offset, cfg.weights) + cfg.contour_weight * loss.contour;
    model.backbone.backward(cache, grads, grad_backbone);
    return loss;
}

std::vector<double> flatten_parameters(const CircleSnakeModel& model) {
    std::vector<double> flat(model.backbone.parameters().begin(), model.backbone.parameters().end());
    flat.insert(flat.end(), model.head.parameters().begin(), model.head.parameters().end());
    return flat;
}

void assign_parameters(CircleSnakeModel& model, std::span<const double> flat) {
    auto& b = model.backbone.parameters();
    auto& h = model.head.parameters();
    if (flat.size() != b.size() + h.size()) {
        fail(Error::Kind::Shape, "flat parameter vector has the wrong length");
    }
    std::copy(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(b.size()), b.begin());
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(b.size()), flat.end(), h.begin());
}

DifferentiableFn model_objective(const CircleSnakeModel& model, const LabeledImage& sample,
                                 std::vector<Circle> init_circles, const TrainConfig& cfg) {
    return [model = CircleSnakeModel(model), &sample, init_circles = std::move(init_circles),
            cfg](std::span<const double> params) mutable {
        assign_parameters(model, params);
        const std::size_t nb = model.backbone.parameters().size();
        ValueAndGradient vg;
        vg.gradient.assign(params.size(), 0.0);
        std::span<double> g(vg.gradient);
        vg.value = sample_loss(model, sample, init_circles, cfg, g.first(nb), g.subspan(nb)).total;
        return vg;
    };
}

TrainResult train(CircleSnakeModel& model, std::span<const LabeledImage> dataset, const TrainConfig& cfg,
                  const StepCallback& on_step) {
    if (dataset.empty()) {
        fail(Error::Kind::Training, "training needs a non-empty dataset");
    }
    if (cfg.batch_size < 1 || !(cfg.learning_rate > 0.0)) {
        fail(Error::Kind::Training, "training needs batch_size >= 1 and a positive learning rate");
    }
    Rng rng(cfg.seed);
    TrainResult result;
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t cursor = order.size();

    auto& pb = model.backbone.parameters();
    auto& ph = model.head.parameters();
    AlignedVector gb(pb.size()), gh(ph.size());
    AlignedVector vb(pb.size(), 0.0), vh(ph.size(), 0.0);

    for (std::size_t step = 0; step < cfg.steps; ++step) {
        std::fill(gb.begin(), gb.end(), 0.0);
        std::fill(gh.begin(), gh.end(), 0.0);
        StepLoss sum;
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            if (cursor == order.size()) {
                for (std::size_t i = order.size(); i > 1; --i) {
                    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
                }
                cursor = 0;
            }
            const LabeledImage& sample = dataset[order[cursor++]];
            std::vector<Circle> inits;
            const std::size_t limit = std::min<std::size_t>(sample.truth.size(), static_cast<std::size_t>(std::max(0, cfg.max_snake_objects)));
            for (std::size_t k = 0; k < limit; ++k) {
                Circle c = as_circle(sample.truth[k]);
                c.center_x += rng.uniform(-cfg.init_center_jitter, cfg.init_center_jitter);
                c.center_y += rng.uniform(-cfg.init_center_jitter, cfg.init_center_jitter);
                c.radius *= 1.0 + rng.uniform(-cfg.init_radius_jitter, cfg.init_radius_jitter);
                c.radius = std::max(c.radius, 1.0);
                inits.push_back(c);
            }
            StepLoss l;
            try {
                l = sample_loss(model, sample, inits, cfg, gb, gh);
            } catch (const TrainingError&) {
                throw;
            } catch (const Error& e) {
                throw TrainingError(step, e.what());
            }
            sum.total += l.total;
            sum.focal += l.focal;
            sum.radius += l.radius;
            sum.offset += l.offset;
            sum.contour += l.contour;
        }
        const double inv_b = 1.0 / static_cast<double>(cfg.batch_size);
        StepLoss mean{sum.total * inv_b, sum.focal * inv_b, sum.radius * inv_b, sum.offset * inv_b, sum.contour * inv_b};
        if (!std::isfinite(mean.total)) {
            throw TrainingError(step, "loss is not finite");
        }

        double norm_sq = 0.0;
        for (double& g : gb) {
            g *= inv_b;
            norm_sq += g * g;
        }
        for (double& g : gh) {
            g *= inv_b;
            norm_sq += g * g;
        }
        if (!std::isfinite(norm_sq)) {
            throw TrainingError(step, "gradient is not finite");
        }
        double clip = 1.0;
        if (cfg.grad_clip > 0.0 && norm_sq > cfg.grad_clip * cfg.grad_clip) {
            clip = cfg.grad_clip / std::sqrt(norm_sq);
        }
        const auto update = [&](AlignedVector& p, const AlignedVector& g, AlignedVector& v) {
            for (std::size_t i = 0; i < p.size(); ++i) {
                v[i] = cfg.momentum * v[i] + clip * g[i];
                p[i] -= cfg.learning_rate * v[i];
            }
        };
        update(pb, gb, vb);
        update(ph, gh, vh);

        result.trace.push_back(mean);
        if (on_step) {
            on_step(step, mean);
        }
    }
    return result;
}

Inference infer(const CircleSnakeModel& model, const Grid2D& image, double ct_score, int top_n) {
    const GridSpec spec = model.grid_spec();
    Inference result;
    result.maps = model.backbone.forward(image);
    const auto peaks = extract_peaks(result.maps.heatmap, top_n, ct_score);
    result.detections = decode_circles(peaks, result.maps.offsets, result.maps.radius, spec);
    for (const auto& det : result.detections) {
        const CircleContour start = sample_circle_vertices(as_circle(det), model.config.contour_vertices);
        result.contours.push_back(deform_contour(start, result.maps.features, model.head,
                                                 model.config.deform_iterations, {det.center_x, det.center_y},
                                                 ToyBackbone::feature_stride())
                                      .contour);
    }
    return result;
}

EvalSummary evaluate(const CircleSnakeModel& model, std::span<const LabeledImage> samples, double ct_score,
                     double iou_threshold) {
    EvalSummary s;
    double l1 = 0.0;
    double l1_init = 0.0;
    for (const auto& sample : samples) {
        const Inference inf = infer(model, sample.image, ct_score);
        std::vector<Circle> truth;
        for (const auto& t : sample.truth) {
            truth.push_back(as_circle(t));
        }
        std::vector<Circle> dets;
        for (const auto& d : inf.detections) {
            dets.push_back(as_circle(d));
        }
        const MatchResult m = match_circles(truth, dets, iou_threshold);
        s.true_positives += m.true_positives;
        s.false_positives += m.false_positives;
        s.false_negatives += m.false_negatives;
        for (const auto& pair : m.pairs) {
            const CircleContour gt = sample_circle_vertices(truth[pair.truth], model.config.contour_vertices);
            l1 += contour_loss(inf.contours[pair.detection], gt).value;
            l1_init += contour_loss(sample_circle_vertices(dets[pair.detection], model.config.contour_vertices), gt).value;
            ++s.matched;
        }
    }
    MatchResult total;
    total.true_positives = s.true_positives;
    total.false_positives = s.false_positives;
    total.false_negatives = s.false_negatives;
    s.precision = total.precision();
    s.recall = total.recall();
    s.f1 = total.f1();
    if (s.matched > 0) {
        s.mean_contour_l1 = l1 / static_cast<double>(s.matched);
        s.mean_initial_contour_l1 = l1_init / static_cast<double>(s.matched);
    }
    return s;
}

namespace {

constexpr char kCheckpointMagic[8] = {'C', 'S', 'N', 'K', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

void put_le(std::ostream& out, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) {
        out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
}

std::uint64_t get_le(std::istream& in, int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
        const int c = in.get();
        if (c == std::char_traits<char>::eof()) {
            fail(Error::Kind::Io, "truncated checkpoint");
        }
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return v;
}

Json tensor_manifest(const ParamLayout& layout, const std::string& group, std::size_t base) {
    Json list = Json::array();
    for (const auto& t : layout.tensors()) {
        list.push_back({{"name", t.name}, {"group", group}, {"shape", {t.rows, t.cols}}, {"offset", base + t.offset}});
    }
    return list;
}

} // namespace

void save_checkpoint(std::ostream& out, const CircleSnakeModel& model) {
    const std::size_t nb = model.backbone.parameters().size();
    const std::size_t nh = model.head.parameters().size();
    const std::size_t nbuf = model.head.buffers().size();
    Json tensors = tensor_manifest(model.backbone.layout(), "backbone", 0);
    for (auto& t : tensor_manifest(model.head.layout(), "head", nb)) {
        tensors.push_back(t);
    }
    for (auto& t : tensor_manifest(model.head.buffer_layout(), "head_buffers", nb + nh)) {
        tensors.push_back(t);
    }
    const Json manifest = {{"format", "circlesnake-checkpoint"},
                           {"version", kCheckpointVersion},
                           {"model", to_json(model.config)},
                           {"tensors", tensors},
                           {"value_count", nb + nh + nbuf}};
    const std::string text = manifest.dump();

    out.write(kCheckpointMagic, 8);
    put_le(out, kCheckpointVersion, 4);
    put_le(out, text.size(), 8);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    put_le(out, nb + nh + nbuf, 8);
    for (const auto* vec : {&model.backbone.parameters(), &model.head.parameters(), &model.head.buffers()}) {
        for (double v : *vec) {
            put_le(out, std::bit_cast<std::uint64_t>(v), 8);
        }
    }
    if (!out) {
        fail(Error::Kind::Io, "failed to write checkpoint");
    }
}

CircleSnakeModel load_checkpoint(std::istream& in) {
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
        fail(Error::Kind::Io, "not a checkpoint file");
    }
    const auto version = get_le(in, 4);
    if (version != kCheckpointVersion) {
        fail(Error::Kind::Io, "unsupported checkpoint version " + std::to_string(version));
    }
    const auto len = get_le(in, 8);
    std::string text(len, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(len))) {
        fail(Error::Kind::Io, "truncated checkpoint manifest");
    }
    Json manifest;
    try {
        manifest = Json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(Error::Kind::Io, std::string("corrupt checkpoint manifest: ") + e.what());
    }
    CircleSnakeModel model(model_config_from_json(json_require<Json>(manifest, "model", ""), "/model"));
    const auto count = get_le(in, 8);
    auto& pb = model.backbone.parameters();
    auto& ph = model.head.parameters();
    auto& buf = model.head.buffers();
    if (count != pb.size() + ph.size() + buf.size()) {
        fail(Error::Kind::Io, "checkpoint value count does not match its model configuration");
    }
    for (auto* vec : {&pb, &ph, &buf}) {
        for (double& v : *vec) {
            v = std::bit_cast<double>(get_le(in, 8));
        }
    }
    return model;
}

void save_checkpoint(const std::string& path, const CircleSnakeModel& model) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        fail(Error::Kind::Io, "cannot open " + path + " for writing");
    }
    save_checkpoint(out, model);
}

CircleSnakeModel load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(Error::Kind::Io, "cannot open " + path);
    }
    return load_checkpoint(in);
}

} // namespace csnake
