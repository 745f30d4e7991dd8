#include "circlesnake/config_io.hpp"

namespace csnake {

Json to_json(const ModelConfig& cfg) {
    Json targets = {{"alpha", cfg.targets.alpha},
                    {"beta", cfg.targets.beta},
                    {"min_sigma", cfg.targets.min_sigma},
                    {"radius_divisor", cfg.targets.radius_divisor}};
    targets["fixed_sigma"] = cfg.targets.fixed_sigma ? Json(*cfg.targets.fixed_sigma) : Json(nullptr);
    return {
        {"backbone",
         {{"input_width", cfg.backbone.input_width},
          {"input_height", cfg.backbone.input_height},
          {"in_channels", cfg.backbone.in_channels},
          {"classes", cfg.backbone.classes},
          {"downsample", cfg.backbone.downsample},
          {"widths", cfg.backbone.widths},
          {"kernel", cfg.backbone.kernel},
          {"heatmap_prior", cfg.backbone.heatmap_prior}}},
        {"head",
         {{"input_dim", cfg.head.input_dim},
          {"width", cfg.head.width},
          {"blocks", cfg.head.blocks},
          {"half_width", cfg.head.half_width},
          {"fusion_dim", cfg.head.fusion_dim},
          {"hidden1", cfg.head.hidden1},
          {"hidden2", cfg.head.hidden2}}},
        {"targets", targets},
        {"contour_vertices", cfg.contour_vertices},
        {"deform_iterations", cfg.deform_iterations},
    };
}

ModelConfig model_config_from_json(const Json& j, const std::string& path) {
    ModelConfig cfg;
    const ModelConfig d;
    const Json empty = Json::object();
    const Json& b = j.contains("backbone") ? j.at("backbone") : empty;
    const std::string bp = path + "/backbone";
    cfg.backbone.input_width = json_optional(b, "input_width", d.backbone.input_width, bp);
    cfg.backbone.input_height = json_optional(b, "input_height", d.backbone.input_height, bp);
    cfg.backbone.in_channels = json_optional(b, "in_channels", d.backbone.in_channels, bp);
    cfg.backbone.classes = json_optional(b, "classes", d.backbone.classes, bp);
    cfg.backbone.downsample = json_optional(b, "downsample", d.backbone.downsample, bp);
    cfg.backbone.widths = json_optional(b, "widths", d.backbone.widths, bp);
    cfg.backbone.kernel = json_optional(b, "kernel", d.backbone.kernel, bp);
    cfg.backbone.heatmap_prior = json_optional(b, "heatmap_prior", d.backbone.heatmap_prior, bp);

    const Json& h = j.contains("head") ? j.at("head") : empty;
    const std::string hp = path + "/head";
    cfg.head.width = json_optional(h, "width", d.head.width, hp);
    cfg.head.blocks = json_optional(h, "blocks", d.head.blocks, hp);
    cfg.head.half_width = json_optional(h, "half_width", d.head.half_width, hp);
    cfg.head.fusion_dim = json_optional(h, "fusion_dim", d.head.fusion_dim, hp);
    cfg.head.hidden1 = json_optional(h, "hidden1", d.head.hidden1, hp);
    cfg.head.hidden2 = json_optional(h, "hidden2", d.head.hidden2, hp);
    // The head consumes the backbone's first-layer features plus 2 offsets.
    cfg.head.input_dim = cfg.backbone.widths.empty() ? d.head.input_dim : cfg.backbone.widths.front() + 2;
    if (h.contains("input_dim") && json_require<int>(h, "input_dim", hp) != cfg.head.input_dim) {
        fail(Error::Kind::Schema, "field " + hp + "/input_dim must equal backbone widths[0] + 2");
    }

    const Json& t = j.contains("targets") ? j.at("targets") : empty;
    const std::string tp = path + "/targets";
    cfg.targets.alpha = json_optional(t, "alpha", d.targets.alpha, tp);
    cfg.targets.beta = json_optional(t, "beta", d.targets.beta, tp);
    cfg.targets.min_sigma = json_optional(t, "min_sigma", d.targets.min_sigma, tp);
    cfg.targets.radius_divisor = json_optional(t, "radius_divisor", d.targets.radius_divisor, tp);
    if (t.contains("fixed_sigma") && !t.at("fixed_sigma").is_null()) {
        cfg.targets.fixed_sigma = json_require<double>(t, "fixed_sigma", tp);
    }
    cfg.contour_vertices = json_optional(j, "contour_vertices", d.contour_vertices, path);
    cfg.deform_iterations = json_optional(j, "deform_iterations", d.deform_iterations, path);
    cfg.targets.validate();
    return cfg;
}

Json to_json(const TrainConfig& cfg) {
    return {
        {"learning_rate", cfg.learning_rate},
        {"steps", cfg.steps},
        {"batch_size", cfg.batch_size},
        {"seed", cfg.seed},
        {"lambda_radius", cfg.weights.lambda_radius},
        {"lambda_off", cfg.weights.lambda_off},
        {"contour_weight", cfg.contour_weight},
        {"momentum", cfg.momentum},
        {"grad_clip", cfg.grad_clip},
        {"max_snake_objects", cfg.max_snake_objects},
        {"init_center_jitter", cfg.init_center_jitter},
        {"init_radius_jitter", cfg.init_radius_jitter},
    };
}

TrainConfig train_config_from_json(const Json& j, const std::string& path) {
    TrainConfig cfg;
    const TrainConfig d;
    cfg.learning_rate = json_optional(j, "learning_rate", d.learning_rate, path);
    cfg.steps = json_optional(j, "steps", d.steps, path);
    cfg.batch_size = json_optional(j, "batch_size", d.batch_size, path);
    cfg.seed = json_optional(j, "seed", d.seed, path);
    cfg.weights.lambda_radius = json_optional(j, "lambda_radius", d.weights.lambda_radius, path);
    cfg.weights.lambda_off = json_optional(j, "lambda_off", d.weights.lambda_off, path);
    cfg.contour_weight = json_optional(j, "contour_weight", d.contour_weight, path);
    cfg.momentum = json_optional(j, "momentum", d.momentum, path);
    cfg.grad_clip = json_optional(j, "grad_clip", d.grad_clip, path);
    cfg.max_snake_objects = json_optional(j, "max_snake_objects", d.max_snake_objects, path);
    cfg.init_center_jitter = json_optional(j, "init_center_jitter", d.init_center_jitter, path);
    cfg.init_radius_jitter = json_optional(j, "init_radius_jitter", d.init_radius_jitter, path);
    if (!(cfg.learning_rate > 0.0)) {
        fail(Error::Kind::Schema, "field " + path + "/learning_rate must be positive");
    }
    if (cfg.batch_size < 1) {
        fail(Error::Kind::Schema, "field " + path + "/batch_size must be >= 1");
    }
    return cfg;
}

} // namespace csnake
