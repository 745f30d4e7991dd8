#include "circlesnake/eval.hpp"

#include "circlesnake/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

namespace csnake {

void HpfConfig::validate() const {
    if (hpf_width < 1 || hpf_height < 1 || stride < 1) {
        fail(Error::Kind::Usage, "HPF width, height and stride must be positive");
    }
}

std::vector<int> window_origins(int extent, int window, int stride) {
    std::vector<int> out{0};
    if (extent <= window) {
        return out;
    }
    while (out.back() + stride + window <= extent) {
        out.push_back(out.back() + stride);
    }
    if (out.back() + window < extent) {
        out.push_back(extent - window);
    }
    return out;
}

std::vector<WindowCount> hpf_counts(const std::vector<DetectionCircle>& detections, int wsi_width, int wsi_height,
                                    const HpfConfig& cfg, double ct_score) {
    cfg.validate();
    const auto xs = window_origins(wsi_width, cfg.hpf_width, cfg.stride);
    const auto ys = window_origins(wsi_height, cfg.hpf_height, cfg.stride);
    std::vector<WindowCount> windows;
    windows.reserve(xs.size() * ys.size());
    for (int y : ys) {
        for (int x : xs) {
            windows.push_back({0, x, y, 0});
        }
    }
    // Origins ascend, so the windows holding a coordinate c form the range
    // of origins o with c - w < o <= c.
    const auto range = [](const std::vector<int>& origins, double c, int w) {
        const auto hi = std::upper_bound(origins.begin(), origins.end(), c,
                                         [](double v, int o) { return v < static_cast<double>(o); });
        const auto lo = std::upper_bound(origins.begin(), origins.end(), c - w,
                                         [](double v, int o) { return v < static_cast<double>(o); });
        return std::pair<std::size_t, std::size_t>(lo - origins.begin(), hi - origins.begin());
    };
    for (const auto& d : detections) {
        if (!(d.score >= ct_score)) {
            continue;
        }
        const auto [x0, x1] = range(xs, d.center_x, cfg.hpf_width);
        const auto [y0, y1] = range(ys, d.center_y, cfg.hpf_height);
        for (std::size_t iy = y0; iy < y1; ++iy) {
            for (std::size_t ix = x0; ix < x1; ++ix) {
                ++windows[iy * xs.size() + ix].count;
            }
        }
    }
    return windows;
}

CaseAggregate aggregate_case(const std::vector<WindowCount>& windows, const HpfConfig& cfg) {
    if (windows.empty()) {
        fail(Error::Kind::Aggregation, "a case needs at least one HPF window");
    }
    std::vector<std::size_t> order(windows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const WindowCount& p = windows[a];
        const WindowCount& q = windows[b];
        if (p.count != q.count) {
            return p.count > q.count;
        }
        if (p.slide != q.slide) {
            return p.slide < q.slide;
        }
        if (p.y != q.y) {
            return p.y < q.y;
        }
        if (p.x != q.x) {
            return p.x < q.x;
        }
        return a < b;
    });
    const double min_dist_sq = static_cast<double>(cfg.hpf_width) * cfg.hpf_width;
    CaseAggregate agg;
    agg.max = windows[order.front()].count;
    for (std::size_t idx : order) {
        if (agg.selected.size() == 5) {
            break;
        }
        const WindowCount& w = windows[idx];
        const bool blocked = cfg.disjoint && std::any_of(agg.selected.begin(), agg.selected.end(), [&](std::size_t s) {
                                 const WindowCount& o = windows[s];
                                 const double dx = w.x - o.x;
                                 const double dy = w.y - o.y;
                                 return o.slide == w.slide && dx * dx + dy * dy < min_dist_sq;
                             });
        if (!blocked) {
            agg.selected.push_back(idx);
        }
    }
    double sum = 0.0;
    for (std::size_t s : agg.selected) {
        sum += windows[s].count;
    }
    agg.top5_mean = sum / static_cast<double>(agg.selected.size());
    return agg;
}

const char* metric_name(CountMetric m) { return m == CountMetric::Top5Mean ? "top5_mean" : "max"; }

namespace {

// Continued fraction for the incomplete beta (modified Lentz).
double beta_continued_fraction(double a, double b, double x) {
    constexpr double tiny = 1e-300;
    constexpr double eps = 1e-16;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) {
        d = tiny;
    }
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 10000; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) {
            d = tiny;
        }
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) {
            c = tiny;
        }
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) {
            d = tiny;
        }
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) {
            c = tiny;
        }
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) {
            return h;
        }
    }
    fail(Error::Kind::Domain, "incomplete beta continued fraction did not converge");
}

} // namespace

double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0) || !(x >= 0.0 && x <= 1.0)) {
        fail(Error::Kind::Domain, "incomplete beta needs a, b > 0 and x in [0, 1]");
    }
    if (x == 0.0 || x == 1.0) {
        return x;
    }
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return std::exp(log_front) * beta_continued_fraction(a, b, x) / a;
    }
    return 1.0 - std::exp(log_front) * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double dof) {
    if (!(dof > 0.0)) {
        fail(Error::Kind::Domain, "t distribution needs positive degrees of freedom");
    }
    if (std::isinf(t)) {
        return t > 0 ? 1.0 : 0.0;
    }
    const double tail = 0.5 * incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t));
    return t > 0.0 ? 1.0 - tail : tail;
}

double student_t_quantile(double prob, double dof) {
    if (!(prob > 0.0 && prob < 1.0)) {
        fail(Error::Kind::Domain, "t quantile needs a probability in (0, 1)");
    }
    double lo = -1.0;
    double hi = 1.0;
    while (student_t_cdf(lo, dof) > prob) {
        lo *= 2.0;
    }
    while (student_t_cdf(hi, dof) < prob) {
        hi *= 2.0;
    }
    for (int i = 0; i < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(lo)); ++i) {
        const double mid = 0.5 * (lo + hi);
        (student_t_cdf(mid, dof) < prob ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

CorrelationResult pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 3) {
        fail(Error::Kind::DegenerateInput, "pearson needs two samples of equal length >= 3");
    }
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (!(sxx > 0.0) || !(syy > 0.0)) {
        fail(Error::Kind::DegenerateInput, "pearson is undefined for a sample with zero variance");
    }
    CorrelationResult res;
    res.n = x.size();
    res.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    const double dof = n - 2.0;
    const double one_minus = 1.0 - res.r * res.r;
    if (one_minus <= 0.0) {
        res.p = 0.0;
    } else {
        const double t2 = res.r * res.r * dof / one_minus;
        res.p = incomplete_beta(dof / 2.0, 0.5, dof / (dof + t2));
    }
    return res;
}

CaseCounts case_counts(const CaseData& data, const HpfConfig& cfg, double ct_score) {
    std::vector<WindowCount> windows;
    for (std::size_t s = 0; s < data.slides.size(); ++s) {
        const auto& slide = data.slides[s];
        for (WindowCount w : hpf_counts(slide.detections, slide.width, slide.height, cfg, ct_score)) {
            w.slide = s;
            windows.push_back(w);
        }
    }
    if (windows.empty()) {
        fail(Error::Kind::Aggregation, "case " + data.case_id + " has no slides");
    }
    const CaseAggregate agg = aggregate_case(windows, cfg);
    return {data.case_id, agg.top5_mean, agg.max, data.human_top5_mean, data.human_max};
}

const CorrelationResult& SweepTable::at(CountMetric m, std::size_t threshold_index) const {
    const std::size_t block = m == CountMetric::Top5Mean ? 0 : 1;
    return cells.at(block * thresholds.size() + threshold_index);
}

SweepTable threshold_sweep(const std::vector<CaseData>& cases, const HpfConfig& cfg,
                           const std::vector<double>& thresholds) {
    if (cases.size() < 3) {
        fail(Error::Kind::DegenerateInput, "a threshold sweep needs at least 3 cases");
    }
    SweepTable table;
    table.thresholds = thresholds;
    for (double t : thresholds) {
        std::vector<CaseCounts> row;
        for (const auto& c : cases) {
            row.push_back(case_counts(c, cfg, t));
        }
        table.counts.push_back(std::move(row));
    }
    for (CountMetric m : {CountMetric::Top5Mean, CountMetric::Max}) {
        for (std::size_t t = 0; t < thresholds.size(); ++t) {
            std::vector<double> human, machine;
            for (const auto& c : table.counts[t]) {
                human.push_back(m == CountMetric::Top5Mean ? c.human_top5_mean : c.human_max);
                machine.push_back(m == CountMetric::Top5Mean ? c.machine_top5_mean : c.machine_max);
            }
            CorrelationResult r = pearson(human, machine);
            r.threshold = thresholds[t];
            r.metric = m;
            table.cells.push_back(r);
        }
    }
    return table;
}

const char* group_name(Group g) {
    switch (g) {
    case Group::Above:
        return "above";
    case Group::Below:
        return "below";
    case Group::Near:
        break;
    }
    return "near";
}

double RegressionBand::fitted_at(double x) const { return intercept + slope * x; }

double RegressionBand::half_width_at(double x) const {
    const double dx = x - x_mean;
    return t_critical * residual_sd * std::sqrt(1.0 / static_cast<double>(n) + dx * dx / sxx);
}

RegressionBand regression_with_groups(const std::vector<double>& x, const std::vector<double>& y, double confidence) {
    if (x.size() != y.size() || x.size() < 3) {
        fail(Error::Kind::DegenerateInput, "regression needs two samples of equal length >= 3");
    }
    if (!(confidence > 0.0 && confidence < 1.0)) {
        fail(Error::Kind::Domain, "confidence must lie in (0, 1)");
    }
    RegressionBand band;
    band.n = x.size();
    const double n = static_cast<double>(x.size());
    band.x_mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        band.sxx += (x[i] - band.x_mean) * (x[i] - band.x_mean);
        sxy += (x[i] - band.x_mean) * (y[i] - my);
    }
    if (!(band.sxx > 0.0)) {
        fail(Error::Kind::DegenerateInput, "regression is undefined when x has zero variance");
    }
    band.slope = sxy / band.sxx;
    band.intercept = my - band.slope * band.x_mean;
    double ssr = 0.0;
    double scale = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = y[i] - band.fitted_at(x[i]);
        ssr += e * e;
        scale = std::max(scale, std::abs(y[i]));
    }
    band.residual_sd = std::sqrt(ssr / (n - 2.0));
    band.t_critical = student_t_quantile(0.5 * (1.0 + confidence), n - 2.0);
    const double tol = 1e-9 * scale;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double fit = band.fitted_at(x[i]);
        const double hw = band.half_width_at(x[i]);
        band.fitted.push_back(fit);
        band.half_width.push_back(hw);
        const double e = y[i] - fit;
        band.labels.push_back(e > hw + tol ? Group::Above : (e < -hw - tol ? Group::Below : Group::Near));
    }
    return band;
}

// ---- reports -------------------------------------------------------------

std::string csv_number(double v) {
    if (v == 0.0) {
        v = 0.0;
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string sweep_csv(const SweepTable& table) {
    std::ostringstream out;
    out << "metric,threshold,r,p,n\n";
    for (const auto& c : table.cells) {
        out << metric_name(c.metric) << ',' << csv_number(c.threshold) << ',' << csv_number(c.r) << ','
            << csv_number(c.p) << ',' << c.n << '\n';
    }
    return out.str();
}

std::string counts_csv(const SweepTable& table) {
    std::ostringstream out;
    out << "case_id,threshold,machine_top5_mean,machine_max,human_top5_mean,human_max\n";
    for (std::size_t t = 0; t < table.thresholds.size(); ++t) {
        for (const auto& c : table.counts[t]) {
            out << c.case_id << ',' << csv_number(table.thresholds[t]) << ',' << csv_number(c.machine_top5_mean)
                << ',' << csv_number(c.machine_max) << ',' << csv_number(c.human_top5_mean) << ','
                << csv_number(c.human_max) << '\n';
        }
    }
    return out.str();
}

std::string groups_csv(const std::vector<CaseCounts>& cases, const RegressionBand& band, CountMetric metric) {
    if (cases.size() != band.labels.size()) {
        fail(Error::Kind::Shape, "group report needs one band entry per case");
    }
    std::ostringstream out;
    out << "case_id,human,machine,fitted,half_width,group\n";
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const auto& c = cases[i];
        const double human = metric == CountMetric::Top5Mean ? c.human_top5_mean : c.human_max;
        const double machine = metric == CountMetric::Top5Mean ? c.machine_top5_mean : c.machine_max;
        out << c.case_id << ',' << csv_number(human) << ',' << csv_number(machine) << ','
            << csv_number(band.fitted[i]) << ',' << csv_number(band.half_width[i]) << ','
            << group_name(band.labels[i]) << '\n';
    }
    return out.str();
}

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 480.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 20.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 60.0;

std::string esc(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&':
            out += "&amp;";
            break;
        case '<':
            out += "&lt;";
            break;
        case '>':
            out += "&gt;";
            break;
        case '"':
            out += "&quot;";
            break;
        default:
            out += c;
        }
    }
    return out;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    std::string s(buf);
    return s == "-0.00" ? "0.00" : s;
}

struct Frame {
    double x0, x1, y0, y1;

    double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
    double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

std::pair<double, double> padded(double lo, double hi) {
    if (!(hi > lo)) {
        lo -= 1.0;
        hi += 1.0;
    }
    const double pad = 0.05 * (hi - lo);
    return {lo - pad, hi + pad};
}

void axes(std::ostringstream& out, const Frame& f, const std::string& title, const std::string& xl,
          const std::string& yl) {
    out << "<rect x=\"0\" y=\"0\" width=\"" << num(kWidth) << "\" height=\"" << num(kHeight)
        << "\" fill=\"white\"/>\n";
    out << "<text x=\"" << num(kWidth / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << esc(title)
        << "</text>\n";
    const double bx = kLeft;
    const double by = kHeight - kBottom;
    out << "<line x1=\"" << num(bx) << "\" y1=\"" << num(by) << "\" x2=\"" << num(kWidth - kRight) << "\" y2=\""
        << num(by) << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << num(bx) << "\" y1=\"" << num(by) << "\" x2=\"" << num(bx) << "\" y2=\"" << num(kTop)
        << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
        const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
        out << "<text x=\"" << num(f.px(xv)) << "\" y=\"" << num(by + 18) << "\" text-anchor=\"middle\" "
            << "font-size=\"11\">" << num(xv) << "</text>\n";
        out << "<text x=\"" << num(bx - 6) << "\" y=\"" << num(f.py(yv) + 4) << "\" text-anchor=\"end\" "
            << "font-size=\"11\">" << num(yv) << "</text>\n";
    }
    out << "<text x=\"" << num(kLeft + (kWidth - kLeft - kRight) / 2) << "\" y=\"" << num(kHeight - 16)
        << "\" text-anchor=\"middle\" font-size=\"13\">" << esc(xl) << "</text>\n";
    out << "<text x=\"18\" y=\"" << num(kTop + (kHeight - kTop - kBottom) / 2) << "\" text-anchor=\"middle\" "
        << "font-size=\"13\" transform=\"rotate(-90 18 " << num(kTop + (kHeight - kTop - kBottom) / 2) << ")\">"
        << esc(yl) << "</text>\n";
}

const char* kGroupColor[] = {"#d62728", "#1f77b4", "#7f7f7f"};
const char* kSeriesColor[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

} // namespace

std::string regression_svg(const std::vector<double>& x, const std::vector<double>& y, const RegressionBand& band,
                           const std::string& title, const std::string& x_label, const std::string& y_label) {
    if (x.size() != y.size() || x.size() != band.labels.size() || x.empty()) {
        fail(Error::Kind::Shape, "regression figure needs matching, non-empty point and label lists");
    }
    const auto [xmin, xmax] = std::minmax_element(x.begin(), x.end());
    constexpr int kSteps = 48;
    std::vector<double> grid_x, lo, hi;
    for (int i = 0; i <= kSteps; ++i) {
        const double gx = *xmin + (*xmax - *xmin) * i / kSteps;
        grid_x.push_back(gx);
        lo.push_back(band.fitted_at(gx) - band.half_width_at(gx));
        hi.push_back(band.fitted_at(gx) + band.half_width_at(gx));
    }
    double ylo = *std::min_element(y.begin(), y.end());
    double yhi = *std::max_element(y.begin(), y.end());
    ylo = std::min(ylo, *std::min_element(lo.begin(), lo.end()));
    yhi = std::max(yhi, *std::max_element(hi.begin(), hi.end()));
    const auto [fx0, fx1] = padded(*xmin, *xmax);
    const auto [fy0, fy1] = padded(ylo, yhi);
    const Frame f{fx0, fx1, fy0, fy1};

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kWidth) << "\" height=\"" << num(kHeight)
        << "\" viewBox=\"0 0 " << num(kWidth) << ' ' << num(kHeight) << "\">\n";
    axes(out, f, title, x_label, y_label);
    out << "<polygon fill=\"#1f77b4\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < grid_x.size(); ++i) {
        out << num(f.px(grid_x[i])) << ',' << num(f.py(hi[i])) << ' ';
    }
    for (std::size_t i = grid_x.size(); i-- > 0;) {
        out << num(f.px(grid_x[i])) << ',' << num(f.py(lo[i])) << (i > 0 ? " " : "");
    }
    out << "\"/>\n";
    out << "<line x1=\"" << num(f.px(*xmin)) << "\" y1=\"" << num(f.py(band.fitted_at(*xmin))) << "\" x2=\""
        << num(f.px(*xmax)) << "\" y2=\"" << num(f.py(band.fitted_at(*xmax)))
        << "\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n";
    for (std::size_t i = 0; i < x.size(); ++i) {
        out << "<circle cx=\"" << num(f.px(x[i])) << "\" cy=\"" << num(f.py(y[i])) << "\" r=\"4\" fill=\""
            << kGroupColor[static_cast<int>(band.labels[i])] << "\"><title>" << group_name(band.labels[i])
            << "</title></circle>\n";
    }
    for (int g = 0; g < 3; ++g) {
        const double ly = kTop + 14.0 * g;
        out << "<circle cx=\"" << num(kWidth - kRight - 80) << "\" cy=\"" << num(ly) << "\" r=\"4\" fill=\""
            << kGroupColor[g] << "\"/><text x=\"" << num(kWidth - kRight - 70) << "\" y=\"" << num(ly + 4)
            << "\" font-size=\"11\">" << group_name(static_cast<Group>(g)) << "</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

std::string line_svg(const std::vector<SvgSeries>& series, const std::string& title, const std::string& x_label,
                     const std::string& y_label) {
    double xlo = std::numeric_limits<double>::infinity(), xhi = -xlo, ylo = xlo, yhi = -xlo;
    for (const auto& s : series) {
        if (s.x.size() != s.y.size()) {
            fail(Error::Kind::Shape, "series " + s.label + " has mismatched x and y lengths");
        }
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            xlo = std::min(xlo, s.x[i]);
            xhi = std::max(xhi, s.x[i]);
            ylo = std::min(ylo, s.y[i]);
            yhi = std::max(yhi, s.y[i]);
        }
    }
    if (!std::isfinite(xlo)) {
        fail(Error::Kind::Shape, "line chart needs at least one point");
    }
    const auto [fx0, fx1] = padded(xlo, xhi);
    const auto [fy0, fy1] = padded(ylo, yhi);
    const Frame f{fx0, fx1, fy0, fy1};
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(kWidth) << "\" height=\"" << num(kHeight)
        << "\" viewBox=\"0 0 " << num(kWidth) << ' ' << num(kHeight) << "\">\n";
    axes(out, f, title, x_label, y_label);
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* color = kSeriesColor[k % 6];
        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            out << num(f.px(s.x[i])) << ',' << num(f.py(s.y[i])) << (i + 1 < s.x.size() ? " " : "");
        }
        out << "\"/>\n";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            out << "<circle cx=\"" << num(f.px(s.x[i])) << "\" cy=\"" << num(f.py(s.y[i])) << "\" r=\"3\" fill=\""
                << color << "\"/>\n";
        }
        const double ly = kTop + 14.0 * static_cast<double>(k);
        out << "<line x1=\"" << num(kWidth - kRight - 150) << "\" y1=\"" << num(ly) << "\" x2=\""
            << num(kWidth - kRight - 130) << "\" y2=\"" << num(ly) << "\" stroke=\"" << color
            << "\" stroke-width=\"2\"/><text x=\"" << num(kWidth - kRight - 125) << "\" y=\"" << num(ly + 4)
            << "\" font-size=\"11\">" << esc(s.label) << "</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

} // namespace csnake
