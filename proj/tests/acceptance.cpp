// Acceptance run: one PASS/FAIL line per criterion. Criteria 1-4 run in
// process; 5-8 drive the pipeline script and inspect what it wrote.

#include "instances.hpp"
#include "model_fixtures.hpp"
#include "oracles.hpp"

#include "circlesnake/contour.hpp"
#include "circlesnake/data_io.hpp"
#include "circlesnake/deform_head.hpp"
#include "circlesnake/detection.hpp"
#include "circlesnake/eval.hpp"
#include "circlesnake/gradcheck.hpp"
#include "circlesnake/json_util.hpp"
#include "circlesnake/model.hpp"

#include <CLI11.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

using namespace csnake;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = true;
    std::string detail;
};

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(4);
    s << v;
    return s.str();
}

// Failures inside a criterion (including exceptions) are reported, never fatal.
bool report(int id, const std::string& title, const std::function<Verdict()>& body) {
    Verdict v;
    try {
        v = body();
    } catch (const std::exception& e) {
        v = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << title << " | " << v.detail
              << std::endl;
    return v.pass;
}

std::vector<double> flat(const Matrix& m) { return {m.data(), m.data() + m.size()}; }

Matrix random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = rng.uniform(-1.0, 1.0);
    }
    return m;
}

Grid2D random_grid(int w, int h, int c, Rng& rng, double lo, double hi) {
    Grid2D g(w, h, c);
    for (double& v : g.values()) {
        v = rng.uniform(lo, hi);
    }
    return g;
}

DifferentiableFn over_grid(const Grid2D& shape, std::function<LossResult(const Grid2D&)> f) {
    return [shape, f](std::span<const double> p) {
        Grid2D g = shape;
        std::copy(p.begin(), p.end(), g.values().begin());
        const LossResult r = f(g);
        return ValueAndGradient{r.value, {r.gradient.values().begin(), r.gradient.values().end()}};
    };
}

Verdict gradients() {
    const Stopwatch clock;
    std::vector<std::pair<std::string, GradCheckReport>> reports;
    const auto check = [&](const std::string& name, const DifferentiableFn& fn, std::span<const double> p) {
        reports.emplace_back(name, finite_difference_check(fn, p));
    };

    Rng rng(1001);
    const GridSpec spec{64, 64, 4, 2};
    for (int trial = 0; trial < 3; ++trial) {
        const auto circles = instances::planted_circles(rng, spec, 5);
        const auto targets = render_targets(circles, spec, {});
        const Grid2D heat = random_grid(16, 16, 2, rng, 0.05, 0.95);
        check("focal", over_grid(heat, [&](const Grid2D& g) {
                  return focal_loss(g, targets.heatmap, {}, static_cast<int>(circles.size()));
              }),
              heat.values());
        const Grid2D off = random_grid(16, 16, 2, rng, -0.5, 1.5);
        check("offset", over_grid(off, [&](const Grid2D& g) { return offset_loss(g, circles, spec); }),
              off.values());
        const Grid2D rad = random_grid(16, 16, 1, rng, 0.0, 4.0);
        check("radius", over_grid(rad, [&](const Grid2D& g) { return radius_loss(g, circles, spec); }),
              rad.values());
    }

    const CircularKernel k{4, random_matrix(9 * 3, 2, rng)};
    const VertexFeatures f{random_matrix(16, 3, rng), 0};
    const Matrix w = random_matrix(16, 2, rng);
    check("circular conv kernel",
          [&](std::span<const double> p) {
              const CircularKernel kk{4, Eigen::Map<const Matrix>(p.data(), k.weights.rows(), k.weights.cols())};
              return ValueAndGradient{(circular_conv(f, kk).values.array() * w.array()).sum(),
                                      flat(circular_conv_backward(f, kk, w).kernel)};
          },
          flat(k.weights));
    check("circular conv features",
          [&](std::span<const double> p) {
              const VertexFeatures ff{Eigen::Map<const Matrix>(p.data(), f.values.rows(), f.values.cols()), 0};
              return ValueAndGradient{(circular_conv(ff, k).values.array() * w.array()).sum(),
                                      flat(circular_conv_backward(ff, k, w).features)};
          },
          flat(f.values));

    const auto truth = sample_circle_vertices({20, 20, 6}, 32);
    std::vector<double> pv;
    for (const auto& v : truth.vertices) {
        pv.push_back(v.x + rng.uniform(-2.0, 2.0));
        pv.push_back(v.y + rng.uniform(-2.0, 2.0));
    }
    check("contour",
          [&](std::span<const double> q) {
              CircleContour c;
              for (std::size_t i = 0; i < truth.size(); ++i) {
                  c.vertices.push_back({q[2 * i], q[2 * i + 1]});
              }
              const auto l = contour_loss(c, truth);
              return ValueAndGradient{l.value, flat(l.gradient)};
          },
          pv);

    auto problem = fixture::full_model_problem();
    const auto params = flatten_parameters(problem.model);
    check("full model", model_objective(problem.model, problem.sample, problem.inits, problem.train), params);

    double worst = 0.0;
    std::string worst_name;
    GradCheckReport worst_report;
    std::size_t total = 0;
    for (const auto& [name, r] : reports) {
        total += r.parameter_count;
        if (r.max_relative_error >= worst) {
            worst = r.max_relative_error;
            worst_name = name;
            worst_report = r;
        }
    }
    const double elapsed = clock.seconds();
    return {worst < 1e-4 && elapsed < 60.0,
            std::to_string(total) + " parameters, max relative error " + fmt(worst) + " (" + worst_name + ", analytic " +
                fmt(worst_report.worst_analytic) + " numeric " + fmt(worst_report.worst_numeric) + "), " +
                fmt(elapsed) + " s"};
}

Verdict decode_round_trip() {
    const Stopwatch clock;
    Rng rng(2002);
    std::size_t planted = 0, recovered = 0, extra = 0;
    for (int scene = 0; scene < 100; ++scene) {
        const int side = 64 * static_cast<int>(rng.uniform_int(1, 4));
        const GridSpec spec{side, side, 4, static_cast<int>(rng.uniform_int(1, 3))};
        const auto circles = instances::planted_circles(rng, spec, static_cast<int>(rng.uniform_int(1, 30)));
        const auto t = render_targets(circles, spec, {});
        const auto peaks = extract_peaks(t.heatmap, 100, 0.5);
        const auto decoded = decode_circles(peaks, t.offsets, t.radii, spec);
        planted += circles.size();
        extra += decoded.size() > circles.size() ? decoded.size() - circles.size() : 0;
        for (const auto& k : circles) {
            for (const auto& d : decoded) {
                if (std::abs(d.center_x - k.center_x) < 1e-9 && std::abs(d.center_y - k.center_y) < 1e-9 &&
                    std::abs(d.radius - k.radius) < 1e-9 && d.class_id == k.class_id) {
                    ++recovered;
                    break;
                }
            }
        }
    }
    const double elapsed = clock.seconds();
    return {recovered == planted && extra == 0 && elapsed < 10.0,
            std::to_string(recovered) + "/" + std::to_string(planted) + " circles within 1e-9, " +
                std::to_string(extra) + " spurious, " + fmt(elapsed) + " s"};
}

Verdict oracle_equivalence() {
    constexpr int kInstances = 1000;
    Rng rng(3003);
    std::map<std::string, int> mismatches{
        {"peaks", 0}, {"circular_conv", 0}, {"hpf_counts", 0}, {"merge", 0}, {"top5", 0}};
    for (int i = 0; i < kInstances; ++i) {
        const auto p = instances::peak_case(rng);
        mismatches["peaks"] += extract_peaks(p.heat, p.top_n, p.ct) != oracle::peaks(p.heat, p.top_n, p.ct);

        const auto c = instances::conv_case(rng);
        const Matrix got = circular_conv({c.features, 0}, c.kernel).values;
        bool conv_ok = got == oracle::circular_conv(c.features, c.kernel);
        if (c.features.rows() >= c.kernel.half_width) {
            conv_ok = conv_ok && got == oracle::tiled_conv(c.features, c.kernel);
        }
        mismatches["circular_conv"] += !conv_ok;

        const auto h = instances::hpf_case(rng);
        const auto counts = hpf_counts(h.detections, h.width, h.height, h.cfg, h.ct);
        const auto scan = oracle::hpf_scan(h.detections, h.width, h.height, h.cfg, h.ct);
        bool hpf_ok = counts.size() == scan.size();
        for (std::size_t j = 0; hpf_ok && j < counts.size(); ++j) {
            hpf_ok = counts[j].x == scan[j].x && counts[j].y == scan[j].y && counts[j].count == scan[j].count;
        }
        mismatches["hpf_counts"] += !hpf_ok;

        const auto m = instances::merge_case(rng);
        mismatches["merge"] += merge_detections(m.patches, m.iou) != oracle::merge(m.patches, m.iou);

        const auto w = instances::window_case(rng);
        mismatches["top5"] += aggregate_case(w.windows, w.cfg).selected != oracle::best_five(w.windows, w.cfg);
    }
    bool pass = true;
    std::string detail = std::to_string(kInstances) + " instances each; mismatches:";
    for (const auto& [name, n] : mismatches) {
        pass = pass && n == 0;
        detail += " " + name + "=" + std::to_string(n);
    }
    return {pass, detail};
}

Verdict correlation() {
    Rng rng(4004);
    double oracle_err = 0.0, symmetry_err = 0.0, affine_err = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto n = static_cast<std::size_t>(rng.uniform_int(3, 80));
        std::vector<double> x(n), y(n);
        const double slope = rng.uniform(-1, 1);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = rng.uniform(-50, 50);
            y[i] = slope * x[i] + rng.normal(0, 20);
        }
        const double r = pearson(x, y).r;
        oracle_err = std::max(oracle_err, std::abs(r - oracle::pearson_r(x, y)));
        symmetry_err = std::max(symmetry_err, std::abs(pearson(y, x).r - r));
        const double a = rng.uniform(0.1, 10), b = rng.uniform(-100, 100);
        affine_err = std::max(affine_err, std::abs(pearson(instances::affine(x, a, b), y).r - r));
        affine_err = std::max(affine_err, std::abs(pearson(x, instances::affine(y, a, b)).r - r));
    }
    const auto [x, y] = instances::correlated(30, 0.655, rng);
    const auto sig = pearson(x, y);
    const double t = 0.655 * std::sqrt(28.0 / (1 - 0.655 * 0.655));
    const double boost_p = 2.0 * boost::math::cdf(boost::math::complement(boost::math::students_t(28.0), t));
    const bool pass = oracle_err < 1e-12 && symmetry_err < 1e-12 && affine_err < 1e-12 && sig.p < 1e-3 &&
                      std::abs(sig.p - boost_p) <= 1e-8 * boost_p;
    return {pass, "oracle " + fmt(oracle_err) + ", symmetry " + fmt(symmetry_err) + ", affine " + fmt(affine_err) +
                      "; n=30 r=" + fmt(sig.r) + " p=" + fmt(sig.p) + " (independent " + fmt(boost_p) + ")"};
}

// Rows of a CSV with a header line, keyed by column name.
std::vector<std::map<std::string, std::string>> read_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("missing " + path.string());
    }
    const auto split = [](const std::string& line) {
        std::vector<std::string> cells;
        std::stringstream s(line);
        std::string cell;
        while (std::getline(s, cell, ',')) {
            cells.push_back(cell);
        }
        return cells;
    };
    std::string line;
    std::getline(in, line);
    const auto header = split(line);
    std::vector<std::map<std::string, std::string>> rows;
    while (std::getline(in, line)) {
        const auto cells = split(line);
        std::map<std::string, std::string> row;
        for (std::size_t i = 0; i < header.size() && i < cells.size(); ++i) {
            row[header[i]] = cells[i];
        }
        rows.push_back(row);
    }
    return rows;
}

Json read_json(const fs::path& path) { return Json::parse(read_text_file(path.string())); }

double num(const std::map<std::string, std::string>& row, const std::string& key) { return std::stod(row.at(key)); }

// Every circle of `want` has a distinct partner in `got` within tol.
bool same_circles(const std::vector<DetectionCircle>& got, const std::vector<Circle>& want, double tol) {
    if (got.size() != want.size()) {
        return false;
    }
    std::vector<bool> used(got.size(), false);
    for (const auto& w : want) {
        bool found = false;
        for (std::size_t i = 0; i < got.size() && !found; ++i) {
            if (!used[i] && std::abs(got[i].center_x - w.center_x) <= tol &&
                std::abs(got[i].center_y - w.center_y) <= tol && std::abs(got[i].radius - w.radius) <= tol) {
                used[i] = found = true;
            }
        }
        if (!found) {
            return false;
        }
    }
    return true;
}

std::vector<DetectionCircle> load_geojson_circles(const fs::path& path) {
    return geojson_circles(parse_geojson(read_text_file(path.string())));
}

Verdict training_quality(const fs::path& runs) {
    const Json metrics = read_json(runs / "infer" / "metrics.json");
    const Json synth = read_json(runs / "synth_train" / "manifest.json");
    const Json train = read_json(runs / "train" / "manifest.json");
    const Json infer = read_json(runs / "infer" / "manifest.json");
    const int patches = synth.at("config").at("count").get<int>();
    const int steps = train.at("config").at("train").at("steps").get<int>();
    const int held_out = metrics.at("images").get<int>();
    const double seconds = synth.at("duration_seconds").get<double>() + train.at("duration_seconds").get<double>() +
                           infer.at("duration_seconds").get<double>();
    const double f1 = metrics.at("f1").get<double>();
    const double l1 = metrics.at("mean_contour_l1").get<double>();
    const bool pass = patches == 200 && steps == 2000 && held_out == 50 && f1 >= 0.8 && l1 <= 1.5 && seconds <= 900;
    return {pass, std::to_string(patches) + " patches, " + std::to_string(steps) + " steps, " +
                      std::to_string(held_out) + " held out: F1 " + fmt(f1) + ", contour L1 " + fmt(l1) + " px, " +
                      fmt(seconds) + " s"};
}

Verdict shift_degradation(const fs::path& runs) {
    const auto rows = read_csv(runs / "shift" / "shift.csv");
    std::map<std::string, std::pair<double, double>> zero_and_far;
    std::map<std::string, double> far_magnitude;
    for (const auto& row : rows) {
        const std::string& series = row.at("series");
        const double l = num(row, "luminance_delta"), i = num(row, "intensity_delta");
        const double mag = std::abs(l) + std::abs(i);
        if (mag == 0.0) {
            zero_and_far[series].first = num(row, "f1");
        }
        if (!far_magnitude.contains(series) || mag > far_magnitude[series]) {
            far_magnitude[series] = mag;
            zero_and_far[series].second = num(row, "f1");
        }
    }
    bool pass = !zero_and_far.empty() && fs::exists(runs / "shift" / "shift.svg") &&
                fs::file_size(runs / "shift" / "shift.svg") > 0;
    std::string detail;
    for (const auto& [series, f] : zero_and_far) {
        pass = pass && far_magnitude[series] > 0.0 && f.second < f.first;
        detail += series + " F1 " + fmt(f.first) + " -> " + fmt(f.second) + "; ";
    }
    return {pass, detail + "svg " + (fs::exists(runs / "shift" / "shift.svg") ? "present" : "missing")};
}

Verdict pipeline_outputs(const fs::path& runs, bool script_ok) {
    std::string detail = script_ok ? "script ok" : "script failed";
    bool pass = script_ok;

    // Inference GeoJSON against the detections table.
    std::map<std::string, std::vector<Circle>> by_image;
    for (const auto& row : read_csv(runs / "infer" / "detections.csv")) {
        by_image[row.at("slide_id")].push_back({num(row, "x"), num(row, "y"), num(row, "radius")});
    }
    std::size_t files = 0, agree = 0;
    for (const auto& entry : fs::directory_iterator(runs / "infer" / "geojson")) {
        ++files;
        agree += same_circles(load_geojson_circles(entry.path()), by_image[entry.path().stem().string()], 1e-6);
    }
    pass = pass && files > 0 && agree == files;
    detail += "; detections geojson " + std::to_string(agree) + "/" + std::to_string(files);

    // Truth exported to GeoJSON against the COCO circles.
    const AnnotationSet truth = load_coco((runs / "synth_test" / "truth.json").string());
    std::map<std::int64_t, std::vector<Circle>> truth_by_image;
    for (const auto& [id, a] : truth.annotations) {
        if (const auto* c = std::get_if<Circle>(&a.geometry)) {
            truth_by_image[a.image_id].push_back(*c);
        }
    }
    std::size_t images = 0, truth_agree = 0;
    for (const auto& [id, im] : truth.images) {
        ++images;
        const fs::path file = runs / "to_geojson" / "geojson" / (fs::path(im.file_name).stem().string() + ".geojson");
        truth_agree += fs::exists(file) && same_circles(load_geojson_circles(file), truth_by_image[id], 1e-6);
    }
    pass = pass && images > 0 && truth_agree == images;
    detail += ", truth geojson " + std::to_string(truth_agree) + "/" + std::to_string(images);

    // Correlation table: metric x threshold, in the fixed order.
    const auto corr = read_csv(runs / "eval" / "correlation.csv");
    const std::vector<double> thresholds{0.3, 0.2, 0.15, 0.1};
    bool shape = corr.size() == 8;
    for (std::size_t i = 0; shape && i < corr.size(); ++i) {
        shape = corr[i].at("metric") == (i < 4 ? "top5_mean" : "max") && num(corr[i], "threshold") == thresholds[i % 4];
    }
    pass = pass && shape;
    detail += ", correlation " + std::to_string(corr.size()) + " rows " + (shape ? "in order" : "malformed");

    // Machine counts per case never grow as the score threshold rises.
    std::map<std::string, std::map<double, std::pair<double, double>>> counts;
    for (const auto& row : read_csv(runs / "eval" / "counts.csv")) {
        counts[row.at("case_id")][num(row, "threshold")] = {num(row, "machine_top5_mean"), num(row, "machine_max")};
    }
    std::size_t monotone = 0;
    for (const auto& [id, per_threshold] : counts) {
        bool ok = per_threshold.size() == thresholds.size();
        // Ascending threshold order: each count is at most the previous one.
        for (auto it = per_threshold.begin(); ok && std::next(it) != per_threshold.end(); ++it) {
            const auto& lo = it->second;
            const auto& hi = std::next(it)->second;
            ok = hi.first <= lo.first && hi.second <= lo.second;
        }
        monotone += ok;
    }
    pass = pass && !counts.empty() && monotone == counts.size();
    detail += ", monotone cases " + std::to_string(monotone) + "/" + std::to_string(counts.size());
    return {pass, detail};
}

Verdict reproducibility(const fs::path& work, const fs::path& runs) {
    std::ifstream in(work / "rerun.txt");
    std::size_t lines = 0, ok = 0;
    std::string name, status, differs;
    while (in >> name >> status) {
        ++lines;
        if (status == "ok") {
            ++ok;
        } else {
            differs += " " + name;
        }
    }
    std::size_t manifests = 0;
    for (const auto& entry : fs::directory_iterator(runs)) {
        manifests += fs::exists(entry.path() / "manifest.json");
    }
    return {lines > 0 && ok == lines && lines == manifests,
            std::to_string(ok) + "/" + std::to_string(manifests) + " manifests reproduce byte-for-byte" +
                (differs.empty() ? "" : ", differ:" + differs)};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"circlesnake acceptance run"};
    std::string tool, script, work;
    bool reuse = false;
    app.add_option("--tool", tool, "circlesnake binary")->required();
    app.add_option("--script", script, "pipeline script")->required();
    app.add_option("--work", work, "pipeline work directory")->required();
    app.add_flag("--reuse", reuse, "inspect an existing work directory instead of running the script");
    CLI11_PARSE(app, argc, argv);

    int failed = 0;
    failed += !report(1, "analytic gradients match central differences", gradients);
    failed += !report(2, "render then decode recovers planted circles", decode_round_trip);
    failed += !report(3, "fast paths equal brute-force oracles", oracle_equivalence);
    failed += !report(4, "correlation matches definition and significance", correlation);

    const fs::path runs = fs::path(work) / "runs";
    bool script_ok = reuse;
    double pipeline_seconds = 0.0;
    if (!reuse) {
        const Stopwatch clock;
        const std::string cmd = "bash '" + script + "' '" + work + "' '" + tool + "' > '" + work + ".log' 2>&1";
        script_ok = std::system(cmd.c_str()) == 0;
        pipeline_seconds = clock.seconds();
        std::cout << "pipeline " << (script_ok ? "finished" : "failed") << " in " << fmt(pipeline_seconds)
                  << " s, log " << work << ".log" << std::endl;
    }
    failed += !report(5, "training reaches detection and contour targets", [&] { return training_quality(runs); });
    failed += !report(6, "stain shift degrades detection", [&] { return shift_degradation(runs); });
    failed += !report(7, "pipeline outputs are consistent", [&] { return pipeline_outputs(runs, script_ok); });
    failed += !report(8, "manifests reproduce", [&] { return reproducibility(work, runs); });
    std::cout << (failed == 0 ? "all criteria pass" : std::to_string(failed) + " criteria fail") << std::endl;
    return failed == 0 ? 0 : 1;
}
