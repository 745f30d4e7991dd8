#pragma once

// The toy CircleSnake model: shared backbone, detection heads and the
// contour deformation head, with joint SGD training and inference.

#include "circlesnake/backbone.hpp"
#include "circlesnake/deform_head.hpp"
#include "circlesnake/detection.hpp"
#include "circlesnake/geometry.hpp"
#include "circlesnake/gradcheck.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace csnake {

struct ModelConfig {
    BackboneConfig backbone;
    HeadConfig head;
    GaussianTargetConfig targets;
    int contour_vertices = kDefaultContourVertices;
    int deform_iterations = 3;

    friend bool operator==(const ModelConfig& a, const ModelConfig& b) {
        return a.backbone == b.backbone && a.head == b.head && a.contour_vertices == b.contour_vertices &&
               a.deform_iterations == b.deform_iterations && a.targets.alpha == b.targets.alpha &&
               a.targets.beta == b.targets.beta && a.targets.min_sigma == b.targets.min_sigma &&
               a.targets.radius_divisor == b.targets.radius_divisor && a.targets.fixed_sigma == b.targets.fixed_sigma;
    }
};

struct CircleSnakeModel {
    ModelConfig config;
    ToyBackbone backbone;
    DeformationHead head;

    CircleSnakeModel() : CircleSnakeModel(ModelConfig{}) {}
    explicit CircleSnakeModel(const ModelConfig& cfg);

    GridSpec grid_spec() const { return config.backbone.grid_spec(); }
    void initialize(std::uint64_t seed);
};

struct LabeledImage {
    Grid2D image;
    std::vector<GroundTruthCircle> truth;
};

// Freezes the deformation head's normalization using truth-initialized
// contours on the given samples.
void calibrate_model(CircleSnakeModel& model, std::span<const LabeledImage> samples);

struct TrainConfig {
    double learning_rate = 0.05;
    std::size_t steps = 2000;
    std::size_t batch_size = 8;
    std::uint64_t seed = 7;
    DetectionLossWeights weights;
    double contour_weight = 1.0;
    // Heavy-ball momentum; 0 is plain SGD.
    double momentum = 0.0;
    // Global gradient-norm clip; 0 disables.
    double grad_clip = 0.0;
    int max_snake_objects = 4;
    // Training contours start from truth circles jittered by up to this many
    // pixels in each center coordinate and this fraction of the radius.
    double init_center_jitter = 2.0;
    double init_radius_jitter = 0.2;
};

struct StepLoss {
    double total = 0.0;
    double focal = 0.0;
    double radius = 0.0;
    double offset = 0.0;
    double contour = 0.0;
};

// Loss of one sample with the snake started from `init_circles` (one per
// truth object used). Gradients accumulate into the two spans.
StepLoss sample_loss(const CircleSnakeModel& model, const LabeledImage& sample, std::span<const Circle> init_circles,
                     const TrainConfig& cfg, std::span<double> grad_backbone, std::span<double> grad_head);

// The whole model's parameters as one vector: backbone then head.
std::vector<double> flatten_parameters(const CircleSnakeModel& model);
void assign_parameters(CircleSnakeModel& model, std::span<const double> flat);

// sample_loss wrapped as a function of the flattened parameters.
DifferentiableFn model_objective(const CircleSnakeModel& model, const LabeledImage& sample,
                                 std::vector<Circle> init_circles, const TrainConfig& cfg);

struct TrainResult {
    std::vector<StepLoss> trace;
};

using StepCallback = std::function<void(std::size_t step, const StepLoss&)>;

TrainResult train(CircleSnakeModel& model, std::span<const LabeledImage> dataset, const TrainConfig& cfg,
                  const StepCallback& on_step = {});

struct Inference {
    std::vector<DetectionCircle> detections;
    std::vector<CircleContour> contours;
    BackboneOutput maps;
};

Inference infer(const CircleSnakeModel& model, const Grid2D& image, double ct_score, int top_n = 100);

struct EvalSummary {
    std::size_t true_positives = 0;
    std::size_t false_positives = 0;
    std::size_t false_negatives = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    // Mean |dx|+|dy| between deformed and truth contours over matched pairs.
    double mean_contour_l1 = 0.0;
    double mean_initial_contour_l1 = 0.0;
    std::size_t matched = 0;
};

EvalSummary evaluate(const CircleSnakeModel& model, std::span<const LabeledImage> samples, double ct_score,
                     double iou_threshold = 0.5);

// Versioned binary checkpoint; layout documented in docs/formats.md.
void save_checkpoint(std::ostream& out, const CircleSnakeModel& model);
CircleSnakeModel load_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const CircleSnakeModel& model);
CircleSnakeModel load_checkpoint(const std::string& path);

} // namespace csnake
