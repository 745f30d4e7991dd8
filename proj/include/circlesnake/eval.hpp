#pragma once

// Slide-level counting and correlation statistics: HPF window counts, top-5
// aggregation, Pearson correlation with exact t p-values, an OLS regression
// band with group labels, and the CSV/SVG reports built from them.

#include "circlesnake/detection.hpp"

#include <string>
#include <vector>

namespace csnake {

struct HpfConfig {
    int hpf_width = 1024;
    int hpf_height = 1024;
    int stride = 1024;
    // Top-5 windows must have centers at least hpf_width apart.
    bool disjoint = true;

    void validate() const;
};

struct WindowCount {
    std::size_t slide = 0;
    int x = 0;
    int y = 0;
    int count = 0;

    friend bool operator==(const WindowCount&, const WindowCount&) = default;
};

// Window origins along one axis: multiples of stride, with a final window
// shifted to end on the slide edge. A slide shorter than the window gets a
// single window at 0.
std::vector<int> window_origins(int extent, int window, int stride);

// Row-major windows. A detection counts in a window iff score >= ct_score and
// x0 <= cx < x0 + w, y0 <= cy < y0 + h.
std::vector<WindowCount> hpf_counts(const std::vector<DetectionCircle>& detections, int wsi_width, int wsi_height,
                                    const HpfConfig& cfg, double ct_score);

struct CaseAggregate {
    double top5_mean = 0.0;
    double max = 0.0;
    std::vector<std::size_t> selected; // indices into the window list, in pick order
};

// Greedy selection in priority order (count desc, then slide, y, x) of up to
// five windows; with `disjoint` a window is skipped when its center lies
// closer than hpf_width to an already selected window of the same slide.
CaseAggregate aggregate_case(const std::vector<WindowCount>& windows, const HpfConfig& cfg);

enum class CountMetric { Top5Mean, Max };
const char* metric_name(CountMetric m);

struct CorrelationResult {
    double r = 0.0;
    double p = 1.0;
    std::size_t n = 0;
    double threshold = 0.0;
    CountMetric metric = CountMetric::Top5Mean;
};

// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);
double student_t_cdf(double t, double dof);
// Inverse of student_t_cdf, for probabilities in (0, 1).
double student_t_quantile(double prob, double dof);

CorrelationResult pearson(const std::vector<double>& x, const std::vector<double>& y);

struct SlideDetections {
    std::string slide_id;
    int width = 0;
    int height = 0;
    std::vector<DetectionCircle> detections;
};

struct CaseData {
    std::string case_id;
    std::vector<SlideDetections> slides;
    double human_top5_mean = 0.0;
    double human_max = 0.0;
};

struct CaseCounts {
    std::string case_id;
    double machine_top5_mean = 0.0;
    double machine_max = 0.0;
    double human_top5_mean = 0.0;
    double human_max = 0.0;
};

// Windows of all slides of a case are pooled before aggregation.
CaseCounts case_counts(const CaseData& data, const HpfConfig& cfg, double ct_score);

inline const std::vector<double> kDefaultThresholds{0.3, 0.2, 0.15, 0.1};

struct SweepTable {
    std::vector<double> thresholds;
    // metrics outer (top5_mean, max), thresholds inner
    std::vector<CorrelationResult> cells;
    // counts[t][case] for thresholds[t]
    std::vector<std::vector<CaseCounts>> counts;

    const CorrelationResult& at(CountMetric m, std::size_t threshold_index) const;
};

SweepTable threshold_sweep(const std::vector<CaseData>& cases, const HpfConfig& cfg,
                           const std::vector<double>& thresholds = kDefaultThresholds);

enum class Group { Above, Below, Near };
const char* group_name(Group g);

struct RegressionBand {
    double slope = 0.0;
    double intercept = 0.0;
    double t_critical = 0.0;
    double residual_sd = 0.0;
    double x_mean = 0.0;
    double sxx = 0.0;
    std::size_t n = 0;
    std::vector<double> fitted;
    std::vector<double> half_width;
    std::vector<Group> labels;

    double fitted_at(double x) const;
    double half_width_at(double x) const;
};

// OLS with a pointwise mean-response confidence band. Residuals within the
// band (up to a relative 1e-9 of the data scale) are labeled near.
RegressionBand regression_with_groups(const std::vector<double>& x, const std::vector<double>& y,
                                      double confidence = 0.95);

// ---- reports -------------------------------------------------------------

// Columns: metric,threshold,r,p,n
std::string sweep_csv(const SweepTable& table);
// Columns: case_id,threshold,machine_top5_mean,machine_max,human_top5_mean,human_max
std::string counts_csv(const SweepTable& table);
// Columns: case_id,human,machine,fitted,half_width,group
std::string groups_csv(const std::vector<CaseCounts>& cases, const RegressionBand& band, CountMetric metric);

struct SvgSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

// Scatter with regression line, confidence band and group colors.
std::string regression_svg(const std::vector<double>& x, const std::vector<double>& y, const RegressionBand& band,
                           const std::string& title, const std::string& x_label, const std::string& y_label);
// Line chart with markers, one polyline per series.
std::string line_svg(const std::vector<SvgSeries>& series, const std::string& title, const std::string& x_label,
                     const std::string& y_label);

// Fixed-precision number text shared by all CSV writers.
std::string csv_number(double v);

} // namespace csnake
