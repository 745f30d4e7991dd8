#include "circlesnake/detection.hpp"

#include "circlesnake/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace csnake {

double GaussianTargetConfig::sigma_for(double radius_down) const {
    if (fixed_sigma) {
        return *fixed_sigma;
    }
    return std::max(min_sigma, radius_down / radius_divisor);
}

void GaussianTargetConfig::validate() const {
    if (!(alpha > 0.0) || !(beta > 0.0)) {
        fail(Error::Kind::Usage, "focal exponents alpha and beta must be positive");
    }
    if (fixed_sigma ? !(*fixed_sigma > 0.0) : !(min_sigma > 0.0 && radius_divisor > 0.0)) {
        fail(Error::Kind::Usage, "sigma policy must yield a positive sigma");
    }
}

TruthCell truth_cell(const GroundTruthCircle& circle, const GridSpec& spec) {
    const double gx = circle.center_x / spec.downsample;
    const double gy = circle.center_y / spec.downsample;
    if (!std::isfinite(gx) || !std::isfinite(gy) || circle.center_x < 0 || circle.center_y < 0) {
        fail(Error::Kind::Annotation, "circle center (" + std::to_string(circle.center_x) + ", " +
                                          std::to_string(circle.center_y) + ") outside the image");
    }
    TruthCell cell{static_cast<int>(std::floor(gx)), static_cast<int>(std::floor(gy))};
    if (cell.x >= spec.grid_width() || cell.y >= spec.grid_height()) {
        fail(Error::Kind::Annotation, "circle center (" + std::to_string(circle.center_x) + ", " +
                                          std::to_string(circle.center_y) + ") falls outside the " +
                                          std::to_string(spec.grid_width()) + "x" +
                                          std::to_string(spec.grid_height()) + " grid");
    }
    if (circle.class_id < 0 || circle.class_id >= spec.classes) {
        fail(Error::Kind::Annotation, "class " + std::to_string(circle.class_id) + " outside the grid classes");
    }
    if (!(circle.radius > 0.0)) {
        fail(Error::Kind::Annotation, "circle radius must be positive");
    }
    return cell;
}

Grid2D render_center_heatmap(const std::vector<GroundTruthCircle>& circles, const GridSpec& spec,
                             const GaussianTargetConfig& cfg) {
    spec.validate();
    const int gw = spec.grid_width();
    const int gh = spec.grid_height();
    Grid2D heat(gw, gh, spec.classes, 0.0);
    for (const auto& circle : circles) {
        const TruthCell cell = truth_cell(circle, spec);
        const double sigma = cfg.sigma_for(circle.radius / spec.downsample);
        const double denom = 2.0 * sigma * sigma;
        for (int y = 0; y < gh; ++y) {
            for (int x = 0; x < gw; ++x) {
                const double dx = x - cell.x;
                const double dy = y - cell.y;
                const double v = std::exp(-(dx * dx + dy * dy) / denom);
                double& dst = heat.at(x, y, circle.class_id);
                dst = std::max(dst, v);
            }
        }
    }
    return heat;
}

DetectionTargets render_targets(const std::vector<GroundTruthCircle>& circles, const GridSpec& spec,
                                const GaussianTargetConfig& cfg) {
    DetectionTargets t;
    t.heatmap = render_center_heatmap(circles, spec, cfg);
    t.offsets = Grid2D(spec.grid_width(), spec.grid_height(), 2, 0.0);
    t.radii = Grid2D(spec.grid_width(), spec.grid_height(), 1, 0.0);
    for (const auto& circle : circles) {
        const TruthCell cell = truth_cell(circle, spec);
        t.offsets.at(cell.x, cell.y, 0) = circle.center_x / spec.downsample - cell.x;
        t.offsets.at(cell.x, cell.y, 1) = circle.center_y / spec.downsample - cell.y;
        t.radii.at(cell.x, cell.y, 0) = circle.radius / spec.downsample;
    }
    return t;
}

LossResult focal_loss(const Grid2D& pred, const Grid2D& target, const GaussianTargetConfig& cfg, int num_objects) {
    if (!pred.same_shape(target)) {
        fail(Error::Kind::Shape, "focal loss prediction and target shapes differ");
    }
    if (num_objects < 1) {
        fail(Error::Kind::Domain, "focal loss needs num_objects >= 1");
    }
    const double a = cfg.alpha;
    const double b = cfg.beta;
    const double inv_n = 1.0 / num_objects;

    LossResult out{0.0, Grid2D(pred.width(), pred.height(), pred.channels(), 0.0)};
    auto p_vals = pred.values();
    auto y_vals = target.values();
    auto g_vals = out.gradient.values();
    double sum = 0.0;
    for (std::size_t i = 0; i < p_vals.size(); ++i) {
        const double p = p_vals[i];
        if (!(p > 0.0 && p < 1.0)) {
            fail(Error::Kind::Domain, "focal loss prediction " + std::to_string(p) + " not in (0,1)");
        }
        const double y = y_vals[i];
        if (y == 1.0) {
            const double q = 1.0 - p;
            const double log_p = std::log(p);
            sum += std::pow(q, a) * log_p;
            g_vals[i] = -inv_n * (-a * std::pow(q, a - 1.0) * log_p + std::pow(q, a) / p);
        } else {
            const double w = std::pow(1.0 - y, b);
            const double log_q = std::log1p(-p);
            sum += w * std::pow(p, a) * log_q;
            g_vals[i] = -inv_n * w * (a * std::pow(p, a - 1.0) * log_q - std::pow(p, a) / (1.0 - p));
        }
    }
    out.value = -inv_n * sum;
    return out;
}

namespace {

double sign(double v) { return (v > 0.0) - (v < 0.0); }

void require_circles(const std::vector<GroundTruthCircle>& circles, const char* what) {
    if (circles.empty()) {
        fail(Error::Kind::Domain, std::string(what) + " needs at least one circle");
    }
}

void require_map(const Grid2D& map, const GridSpec& spec, int channels, const char* what) {
    if (map.width() != spec.grid_width() || map.height() != spec.grid_height() || map.channels() != channels) {
        fail(Error::Kind::Shape, std::string(what) + " map shape does not match the grid spec");
    }
}

} // namespace

LossResult offset_loss(const Grid2D& pred_offsets, const std::vector<GroundTruthCircle>& circles,
                       const GridSpec& spec) {
    require_circles(circles, "offset loss");
    require_map(pred_offsets, spec, 2, "offset");
    const double inv_n = 1.0 / static_cast<double>(circles.size());
    LossResult out{0.0, Grid2D(pred_offsets.width(), pred_offsets.height(), 2, 0.0)};
    for (const auto& circle : circles) {
        const TruthCell cell = truth_cell(circle, spec);
        const double target[2] = {circle.center_x / spec.downsample - cell.x,
                                  circle.center_y / spec.downsample - cell.y};
        for (int c = 0; c < 2; ++c) {
            const double diff = pred_offsets.at(cell.x, cell.y, c) - target[c];
            out.value += inv_n * std::abs(diff);
            out.gradient.at(cell.x, cell.y, c) += inv_n * sign(diff);
        }
    }
    return out;
}

LossResult radius_loss(const Grid2D& pred_radius, const std::vector<GroundTruthCircle>& circles,
                       const GridSpec& spec) {
    require_circles(circles, "radius loss");
    require_map(pred_radius, spec, 1, "radius");
    const double inv_n = 1.0 / static_cast<double>(circles.size());
    LossResult out{0.0, Grid2D(pred_radius.width(), pred_radius.height(), 1, 0.0)};
    for (const auto& circle : circles) {
        const TruthCell cell = truth_cell(circle, spec);
        const double diff = pred_radius.at(cell.x, cell.y, 0) - circle.radius / spec.downsample;
        out.value += inv_n * std::abs(diff);
        out.gradient.at(cell.x, cell.y, 0) += inv_n * sign(diff);
    }
    return out;
}

double detection_loss(double focal, double radius, double offset, const DetectionLossWeights& weights) {
    return focal + weights.lambda_radius * radius + weights.lambda_off * offset;
}

std::vector<Peak> extract_peaks(const Grid2D& heatmap, int top_n, double ct_score) {
    if (top_n < 1) {
        fail(Error::Kind::Usage, "top_n must be >= 1");
    }
    const int w = heatmap.width();
    const int h = heatmap.height();
    std::vector<Peak> peaks;
    for (int c = 0; c < heatmap.channels(); ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double v = heatmap.at(x, y, c);
                if (v < ct_score) {
                    continue;
                }
                bool is_peak = true;
                for (int dy = -1; dy <= 1 && is_peak; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = x + dx;
                        const int ny = y + dy;
                        if ((dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= w || ny >= h) {
                            continue;
                        }
                        if (heatmap.at(nx, ny, c) > v) {
                            is_peak = false;
                            break;
                        }
                    }
                }
                if (is_peak) {
                    peaks.push_back({x, y, c, v});
                }
            }
        }
    }
    std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        if (a.class_id != b.class_id) {
            return a.class_id < b.class_id;
        }
        if (a.y != b.y) {
            return a.y < b.y;
        }
        return a.x < b.x;
    });
    if (peaks.size() > static_cast<std::size_t>(top_n)) {
        peaks.resize(static_cast<std::size_t>(top_n));
    }
    return peaks;
}

std::vector<DetectionCircle> decode_circles(const std::vector<Peak>& peaks, const Grid2D& offset_map,
                                            const Grid2D& radius_map, const GridSpec& spec) {
    require_map(offset_map, spec, 2, "offset");
    require_map(radius_map, spec, 1, "radius");
    std::vector<DetectionCircle> out;
    out.reserve(peaks.size());
    const double r = spec.downsample;
    for (const Peak& peak : peaks) {
        if (peak.x < 0 || peak.y < 0 || peak.x >= spec.grid_width() || peak.y >= spec.grid_height()) {
            fail(Error::Kind::Shape, "peak outside the prediction grid");
        }
        const double radius = radius_map.at(peak.x, peak.y, 0) * r;
        if (!(radius > 0.0)) {
            continue;
        }
        DetectionCircle det;
        det.center_x = (peak.x + offset_map.at(peak.x, peak.y, 0)) * r;
        det.center_y = (peak.y + offset_map.at(peak.x, peak.y, 1)) * r;
        det.radius = radius;
        det.score = peak.score;
        det.class_id = peak.class_id;
        out.push_back(det);
    }
    return out;
}

} // namespace csnake
