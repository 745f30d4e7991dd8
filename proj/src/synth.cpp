#include "circlesnake/synth.hpp"

#include "circlesnake/error.hpp"
#include "circlesnake/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace csnake {

namespace {

// Background (eosin-like) tint and per-channel stain absorption of cells.
constexpr std::array<double, 3> kBackgroundTint{1.0, 0.88, 0.94};
constexpr std::array<double, 3> kCellAbsorb{0.55, 0.95, 0.7};
constexpr int kPlacementBudget = 10000;

double cell_value(int c, double intensity) { return kBackgroundTint[c] * (1.0 - intensity * kCellAbsorb[c]); }

} // namespace

void SynthConfig::validate() const {
    if (patch_size < 1) {
        fail(Error::Kind::Usage, "patch_size must be positive");
    }
    if (min_cells < 0 || max_cells < min_cells) {
        fail(Error::Kind::Usage, "cell_count_range must be a non-empty range of non-negative counts");
    }
    if (!(min_radius > 0.0) || max_radius < min_radius) {
        fail(Error::Kind::Usage, "radius_range must be a non-empty positive range");
    }
    if (cell_intensity < 0.0 || cell_intensity > 1.0 || background_luminance < 0.0 || background_luminance > 1.0) {
        fail(Error::Kind::Usage, "intensities must lie in [0,1]");
    }
    if (texture_noise_sd < 0.0) {
        fail(Error::Kind::Usage, "texture_noise_sd must be non-negative");
    }
}

SynthConfig synth_preset(const std::string& name) {
    SynthConfig cfg;
    if (name == "default") {
        return cfg;
    }
    if (name == "darker-background") {
        cfg.background_luminance = 0.55;
        return cfg;
    }
    if (name == "dispersed-many-blocks") {
        cfg.min_cells = 4;
        cfg.max_cells = 8;
        cfg.min_radius = 4.0;
        cfg.max_radius = 7.0;
        return cfg;
    }
    if (name == "lighter-stain") {
        cfg.cell_intensity = 0.3;
        return cfg;
    }
    fail(Error::Kind::Usage, "unknown synth preset '" + name + "'");
}

Json to_json(const SynthConfig& cfg) {
    return {{"patch_size", cfg.patch_size},
            {"cell_count_range", {cfg.min_cells, cfg.max_cells}},
            {"radius_range", {cfg.min_radius, cfg.max_radius}},
            {"cell_intensity", cfg.cell_intensity},
            {"background_luminance", cfg.background_luminance},
            {"texture_noise_sd", cfg.texture_noise_sd},
            {"seed", cfg.seed}};
}

SynthConfig synth_config_from_json(const Json& j, const std::string& path) {
    SynthConfig cfg;
    cfg.patch_size = json_require<int>(j, "patch_size", path);
    const auto counts = json_require<std::vector<int>>(j, "cell_count_range", path);
    const auto radii = json_require<std::vector<double>>(j, "radius_range", path);
    if (counts.size() != 2) {
        fail(Error::Kind::Schema, "field " + path + "/cell_count_range must be [min, max]");
    }
    if (radii.size() != 2) {
        fail(Error::Kind::Schema, "field " + path + "/radius_range must be [min, max]");
    }
    cfg.min_cells = counts[0];
    cfg.max_cells = counts[1];
    cfg.min_radius = radii[0];
    cfg.max_radius = radii[1];
    cfg.seed = json_require<std::uint64_t>(j, "seed", path);
    const SynthConfig d;
    cfg.cell_intensity = json_optional(j, "cell_intensity", d.cell_intensity, path);
    cfg.background_luminance = json_optional(j, "background_luminance", d.background_luminance, path);
    cfg.texture_noise_sd = json_optional(j, "texture_noise_sd", d.texture_noise_sd, path);
    try {
        cfg.validate();
    } catch (const Error& e) {
        fail(Error::Kind::Schema, std::string(path.empty() ? "/" : path) + ": " + e.what());
    }
    return cfg;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    // splitmix64 over the pair
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

Grid2D cell_coverage(const std::vector<GroundTruthCircle>& truth, int width, int height) {
    Grid2D cov(width, height, 1, 0.0);
    for (const auto& t : truth) {
        const int x0 = std::max(0, static_cast<int>(std::floor(t.center_x - t.radius - 1)));
        const int x1 = std::min(width - 1, static_cast<int>(std::ceil(t.center_x + t.radius + 1)));
        const int y0 = std::max(0, static_cast<int>(std::floor(t.center_y - t.radius - 1)));
        const int y1 = std::min(height - 1, static_cast<int>(std::ceil(t.center_y + t.radius + 1)));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const double d = std::hypot(x - t.center_x, y - t.center_y);
                const double a = std::clamp(t.radius + 0.5 - d, 0.0, 1.0);
                cov.at(x, y) = std::max(cov.at(x, y), a);
            }
        }
    }
    return cov;
}

SynthSample generate_sample(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    SynthSample sample;
    sample.config = cfg;
    const int n = static_cast<int>(rng.uniform_int(cfg.min_cells, cfg.max_cells));
    const double size = cfg.patch_size;

    int attempts = 0;
    while (static_cast<int>(sample.truth.size()) < n) {
        if (attempts++ >= kPlacementBudget) {
            fail(Error::Kind::Generation, "placed " + std::to_string(sample.truth.size()) + " of " +
                                              std::to_string(n) + " cells in " + std::to_string(kPlacementBudget) +
                                              " attempts; reduce cell_count_range or radius_range");
        }
        const double r = rng.uniform(cfg.min_radius, cfg.max_radius);
        if (2.0 * r > size - 1.0) {
            continue;
        }
        const double cx = rng.uniform(r, size - 1.0 - r);
        const double cy = rng.uniform(r, size - 1.0 - r);
        const bool clear = std::all_of(sample.truth.begin(), sample.truth.end(), [&](const GroundTruthCircle& o) {
            return std::hypot(cx - o.center_x, cy - o.center_y) >= r + o.radius;
        });
        if (clear) {
            sample.truth.push_back({cx, cy, r, 0});
        }
    }

    const Grid2D cov = cell_coverage(sample.truth, cfg.patch_size, cfg.patch_size);
    sample.image = Grid2D(cfg.patch_size, cfg.patch_size, 3, 0.0);
    for (int y = 0; y < cfg.patch_size; ++y) {
        for (int x = 0; x < cfg.patch_size; ++x) {
            const double a = cov.at(x, y);
            for (int c = 0; c < 3; ++c) {
                const double clean =
                    (1.0 - a) * cfg.background_luminance * kBackgroundTint[c] + a * cell_value(c, cfg.cell_intensity);
                const double noisy = cfg.texture_noise_sd > 0.0 ? rng.normal(clean, cfg.texture_noise_sd) : clean;
                sample.image.at(x, y, c) = std::clamp(noisy, 0.0, 1.0);
            }
        }
    }
    return sample;
}

std::vector<SynthSample> generate_dataset(const SynthConfig& cfg, std::size_t count) {
    std::vector<SynthSample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        SynthConfig c = cfg;
        c.seed = derive_seed(cfg.seed, i);
        out.push_back(generate_sample(c));
    }
    return out;
}

SynthSample stain_shift(const SynthSample& sample, double luminance_delta, double intensity_delta) {
    SynthSample out = sample;
    const Grid2D cov = cell_coverage(sample.truth, sample.image.width(), sample.image.height());
    for (int y = 0; y < out.image.height(); ++y) {
        for (int x = 0; x < out.image.width(); ++x) {
            const double a = cov.at(x, y);
            for (int c = 0; c < out.image.channels(); ++c) {
                const int k = std::min(c, 2);
                const double delta =
                    (1.0 - a) * luminance_delta * kBackgroundTint[k] - a * intensity_delta * kBackgroundTint[k] * kCellAbsorb[k];
                out.image.at(x, y, c) = std::clamp(sample.image.at(x, y, c) + delta, 0.0, 1.0);
            }
        }
    }
    out.config.background_luminance = std::clamp(sample.config.background_luminance + luminance_delta, 0.0, 1.0);
    out.config.cell_intensity = std::clamp(sample.config.cell_intensity + intensity_delta, 0.0, 1.0);
    return out;
}

std::vector<ShiftResult> shift_study(const CircleSnakeModel& model, std::span<const ShiftPoint> shifts,
                                     std::span<const SynthSample> test_set, double ct_score, double iou_threshold) {
    std::vector<ShiftResult> out;
    for (const ShiftPoint& s : shifts) {
        std::vector<LabeledImage> shifted;
        shifted.reserve(test_set.size());
        for (const auto& sample : test_set) {
            shifted.push_back(stain_shift(sample, s.luminance_delta, s.intensity_delta).labeled());
        }
        out.push_back({s, evaluate(model, shifted, ct_score, iou_threshold)});
    }
    return out;
}

} // namespace csnake
