#pragma once

// Circle proposal localization: target rendering, detection losses, peak
// extraction and circle decoding on a down-sampled grid.

#include "circlesnake/grid.hpp"

#include <optional>
#include <vector>

namespace csnake {

struct GroundTruthCircle {
    double center_x = 0.0;
    double center_y = 0.0;
    double radius = 0.0;
    int class_id = 0;

    friend bool operator==(const GroundTruthCircle&, const GroundTruthCircle&) = default;
};

struct DetectionCircle {
    double center_x = 0.0;
    double center_y = 0.0;
    double radius = 0.0;
    double score = 0.0;
    int class_id = 0;

    friend bool operator==(const DetectionCircle&, const DetectionCircle&) = default;
};

struct GaussianTargetConfig {
    double alpha = 2.0;
    double beta = 4.0;
    // sigma = max(min_sigma, r_down / radius_divisor) unless fixed_sigma is set.
    double min_sigma = 1.0;
    double radius_divisor = 3.0;
    std::optional<double> fixed_sigma;

    double sigma_for(double radius_down) const;
    void validate() const;
};

struct DetectionLossWeights {
    double lambda_radius = 0.1;
    double lambda_off = 1.0;
};

struct LossResult {
    double value = 0.0;
    Grid2D gradient;
};

// Grid cell that holds an object's center, p~ = floor(p / R).
struct TruthCell {
    int x = 0;
    int y = 0;
};

TruthCell truth_cell(const GroundTruthCircle& circle, const GridSpec& spec);

Grid2D render_center_heatmap(const std::vector<GroundTruthCircle>& circles, const GridSpec& spec,
                             const GaussianTargetConfig& cfg);

// Dense targets for all three heads: heatmap, sub-cell offset remainder
// (2 channels) and radius in down-sampled units (1 channel). Offset and
// radius maps are zero away from truth cells.
struct DetectionTargets {
    Grid2D heatmap;
    Grid2D offsets;
    Grid2D radii;
};

DetectionTargets render_targets(const std::vector<GroundTruthCircle>& circles, const GridSpec& spec,
                                const GaussianTargetConfig& cfg);

// Penalty-reduced focal loss over every cell; gradient is d loss / d pred.
LossResult focal_loss(const Grid2D& pred, const Grid2D& target, const GaussianTargetConfig& cfg, int num_objects);

LossResult offset_loss(const Grid2D& pred_offsets, const std::vector<GroundTruthCircle>& circles,
                       const GridSpec& spec);

LossResult radius_loss(const Grid2D& pred_radius, const std::vector<GroundTruthCircle>& circles,
                       const GridSpec& spec);

double detection_loss(double focal, double radius, double offset, const DetectionLossWeights& weights);

struct Peak {
    int x = 0;
    int y = 0;
    int class_id = 0;
    double score = 0.0;

    friend bool operator==(const Peak&, const Peak&) = default;
};

// Cells whose value is >= all existing 8-neighbours in their class channel,
// ordered by score descending with ties on (class, y, x), truncated to top_n
// and filtered by score >= ct_score.
std::vector<Peak> extract_peaks(const Grid2D& heatmap, int top_n, double ct_score);

// Center = (cell + offset) * R, radius = radius_map(cell) * R. Radius is read
// at the raw peak cell. Non-positive radii are dropped.
std::vector<DetectionCircle> decode_circles(const std::vector<Peak>& peaks, const Grid2D& offset_map,
                                            const Grid2D& radius_map, const GridSpec& spec);

} // namespace csnake
