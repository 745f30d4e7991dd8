#pragma once

// Synthetic stained-tissue patches with planted circular cells.

#include "circlesnake/detection.hpp"
#include "circlesnake/grid.hpp"
#include "circlesnake/json_util.hpp"
#include "circlesnake/model.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace csnake {

struct SynthConfig {
    int patch_size = 64;
    int min_cells = 1;
    int max_cells = 4;
    double min_radius = 5.0;
    double max_radius = 9.0;
    double cell_intensity = 0.6;       // 1 = darkest stain
    double background_luminance = 0.85;
    double texture_noise_sd = 0.03;
    std::uint64_t seed = 1;

    void validate() const;
};

// Named scenarios: "default", "darker-background", "dispersed-many-blocks",
// "lighter-stain". Throws Error(Usage) for an unknown name.
SynthConfig synth_preset(const std::string& name);

Json to_json(const SynthConfig& cfg);
// Fields patch_size, cell_count_range, radius_range and seed are required.
SynthConfig synth_config_from_json(const Json& j, const std::string& path = "");

struct SynthSample {
    Grid2D image; // patch_size x patch_size x 3, values in [0,1]
    std::vector<GroundTruthCircle> truth;
    SynthConfig config;

    LabeledImage labeled() const { return {image, truth}; }
};

SynthSample generate_sample(const SynthConfig& cfg);

// Sample i uses seed derive_seed(cfg.seed, i).
std::vector<SynthSample> generate_dataset(const SynthConfig& cfg, std::size_t count);
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

// Anti-aliased coverage of the planted disks at each pixel, in [0,1].
Grid2D cell_coverage(const std::vector<GroundTruthCircle>& truth, int width, int height);

// Adds luminance_delta to background pixels and darkens cells by
// intensity_delta (negative = lighter stain), weighted by coverage, then
// clamps to [0,1]. Truth is untouched; the config echo is updated.
SynthSample stain_shift(const SynthSample& sample, double luminance_delta, double intensity_delta);

struct ShiftPoint {
    double luminance_delta = 0.0;
    double intensity_delta = 0.0;
};

struct ShiftResult {
    ShiftPoint shift;
    EvalSummary summary;
};

std::vector<ShiftResult> shift_study(const CircleSnakeModel& model, std::span<const ShiftPoint> shifts,
                                     std::span<const SynthSample> test_set, double ct_score,
                                     double iou_threshold = 0.5);

} // namespace csnake
