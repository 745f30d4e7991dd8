#include "commands.hpp"

#include "circlesnake/config_io.hpp"
#include "circlesnake/data_io.hpp"
#include "circlesnake/error.hpp"
#include "circlesnake/eval.hpp"
#include "circlesnake/model.hpp"
#include "circlesnake/synth.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace csnake::cli {

namespace {

Json hpf_json(const HpfConfig& c) {
    return {{"hpf_width", c.hpf_width}, {"hpf_height", c.hpf_height}, {"stride", c.stride}, {"disjoint", c.disjoint}};
}

HpfConfig hpf_from_json(const Json& j, const std::string& path) {
    HpfConfig c;
    c.hpf_width = json_require<int>(j, "hpf_width", path);
    c.hpf_height = json_require<int>(j, "hpf_height", path);
    c.stride = json_require<int>(j, "stride", path);
    c.disjoint = json_require<bool>(j, "disjoint", path);
    try {
        c.validate();
    } catch (const Error& e) {
        fail(Error::Kind::Schema, path + ": " + e.what());
    }
    return c;
}

Json default_series() {
    const std::vector<double> steps{0.0, -0.1, -0.2, -0.3, -0.4};
    const std::vector<double> zeros(steps.size(), 0.0);
    return Json::array({
        {{"name", "combined"}, {"luminance_delta", steps}, {"intensity_delta", steps}},
        {{"name", "luminance"}, {"luminance_delta", steps}, {"intensity_delta", zeros}},
        {{"name", "intensity"}, {"luminance_delta", zeros}, {"intensity_delta", steps}},
    });
}

} // namespace

Json default_config(const std::string& command) {
    if (command == "synth") {
        return {{"synth", nullptr},
                {"count", nullptr},
                {"category", "cell"},
                {"slides", nullptr},
                {"hpf", hpf_json(HpfConfig{})}};
    }
    if (command == "train") {
        return {{"model", to_json(ModelConfig{})},
                {"train", to_json(TrainConfig{})},
                {"init_seed", 1},
                {"calibration_samples", 16}};
    }
    if (command == "infer") {
        return {{"ct_score", 0.1},     {"top_n", 100},          {"stride", 0},
                {"merge_iou", 0.5},    {"images", "all"},       {"class_name", "cell"},
                {"polygon_vertices", kDefaultContourVertices}, {"metrics_ct_score", 0.3},
                {"match_iou", 0.5}};
    }
    if (command == "eval") {
        return {{"hpf", hpf_json(HpfConfig{})},
                {"thresholds", kDefaultThresholds},
                {"group_threshold", 0.15},
                {"group_metric", "top5_mean"},
                {"confidence", 0.95}};
    }
    if (command == "shift-study") {
        SynthConfig test;
        test.seed = 9001;
        return {{"test", to_json(test)}, {"count", 50}, {"ct_score", 0.3}, {"iou", 0.5}, {"series", default_series()}};
    }
    if (command == "convert") {
        return {{"from", "coco"},
                {"class_name", nullptr},
                {"polygon_vertices", kDefaultContourVertices},
                {"image", {{"file_name", "image.pam"}, {"width", 0}, {"height", 0}}}};
    }
    fail(Error::Kind::Usage, "unknown command " + command);
}

std::vector<std::string> required_inputs(const std::string& command) {
    if (command == "train") {
        return {"dataset"};
    }
    if (command == "infer") {
        return {"checkpoint", "dataset"};
    }
    if (command == "eval") {
        return {"detections", "slides", "human"};
    }
    if (command == "shift-study") {
        return {"checkpoint"};
    }
    if (command == "convert") {
        return {"input"};
    }
    return {};
}

Json merge_config(const Json& base, const Json& patch, const std::string& path) {
    if (base.is_null() || !base.is_object() || !patch.is_object()) {
        if (base.is_object() && !patch.is_object()) {
            fail(Error::Kind::Usage, "config field " + (path.empty() ? "/" : path) + " must be an object");
        }
        return patch;
    }
    Json out = base;
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        const std::string where = path + "/" + it.key();
        if (!base.contains(it.key())) {
            fail(Error::Kind::Usage, "unknown config field " + where);
        }
        out[it.key()] = merge_config(base.at(it.key()), it.value(), where);
    }
    return out;
}

void apply_assignment(Json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        fail(Error::Kind::Usage, "override '" + assignment + "' is not of the form key.path=value");
    }
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    Json value;
    try {
        value = Json::parse(text);
    } catch (const nlohmann::json::exception&) {
        value = text;
    }
    Json patch = value;
    std::vector<std::string> parts;
    std::stringstream ss(key);
    for (std::string part; std::getline(ss, part, '.');) {
        parts.push_back(part);
    }
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
        patch = Json{{*it, patch}};
    }
    config = merge_config(config, patch);
}

std::string fnv1a64_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(Error::Kind::Io, "cannot open " + path.string());
    }
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
    return hex;
}

namespace {

// ---- shared helpers -----------------------------------------------------

struct Outputs {
    fs::path root;
    std::vector<std::string> files;

    fs::path add(const std::string& rel) {
        const fs::path p = root / rel;
        fs::create_directories(p.parent_path());
        files.push_back(rel);
        return p;
    }
    void text(const std::string& rel, const std::string& body) { write_text_file(add(rel).string(), body); }
};

Grid2D crop(const Grid2D& image, int x0, int y0, int w, int h) {
    Grid2D out(w, h, image.channels(), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < image.channels(); ++c) {
                out.at(x, y, c) = image.at(x0 + x, y0 + y, c);
            }
        }
    }
    return out;
}

std::string stem_of(const std::string& file_name) { return fs::path(file_name).stem().string(); }

std::vector<std::vector<std::string>> parse_csv(const std::string& path, const std::vector<std::string>& header) {
    std::istringstream in(read_text_file(path));
    std::string line;
    std::vector<std::vector<std::string>> rows;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) {
            cells.push_back(cell);
        }
        if (line.back() == ',') {
            cells.emplace_back();
        }
        if (cells.size() != header.size()) {
            fail(Error::Kind::Schema, path + ":" + std::to_string(line_no) + ": expected " +
                                          std::to_string(header.size()) + " columns");
        }
        if (rows.empty() && line_no == 1) {
            if (cells != header) {
                std::string want;
                for (const auto& h : header) {
                    want += (want.empty() ? "" : ",") + h;
                }
                fail(Error::Kind::Schema, path + ":1: header must be " + want);
            }
            rows.emplace_back();
            continue;
        }
        rows.push_back(std::move(cells));
    }
    if (rows.empty()) {
        fail(Error::Kind::Schema, path + ": missing header");
    }
    rows.erase(rows.begin());
    return rows;
}

double csv_double(const std::string& s, const std::string& where) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) {
            throw std::invalid_argument(s);
        }
        return v;
    } catch (const std::exception&) {
        fail(Error::Kind::Schema, where + ": '" + s + "' is not a number");
    }
}

std::string detections_csv(const std::vector<std::pair<std::string, std::vector<DetectionCircle>>>& per_image) {
    std::ostringstream out;
    out << "slide_id,x,y,radius,score,class\n";
    for (const auto& [id, dets] : per_image) {
        for (const auto& d : dets) {
            out << id << ',' << csv_number(d.center_x) << ',' << csv_number(d.center_y) << ','
                << csv_number(d.radius) << ',' << csv_number(d.score) << ',' << d.class_id << '\n';
        }
    }
    return out.str();
}

struct DatasetImage {
    std::string file_name;
    Grid2D image;
    std::vector<GroundTruthCircle> truth;
};

std::vector<DatasetImage> load_dataset(const fs::path& dir, const std::string& which) {
    const AnnotationSet set = load_coco((dir / "truth.json").string());
    std::map<std::int64_t, DatasetImage> by_id;
    for (const auto& [id, im] : set.images) {
        const bool is_patch = im.file_name.starts_with("patches/");
        const bool is_slide = im.file_name.starts_with("slides/");
        if ((which == "patches" && !is_patch) || (which == "slides" && !is_slide)) {
            continue;
        }
        DatasetImage d{im.file_name, read_raster((dir / im.file_name).string()), {}};
        if (d.image.width() != im.width || d.image.height() != im.height) {
            fail(Error::Kind::Integrity, im.file_name + " does not match the size recorded in truth.json");
        }
        by_id.emplace(id, std::move(d));
    }
    for (const auto& [id, ann] : set.annotations) {
        auto it = by_id.find(ann.image_id);
        if (it == by_id.end()) {
            continue;
        }
        Circle c;
        if (const auto* circle = std::get_if<Circle>(&ann.geometry)) {
            c = *circle;
        } else {
            c = fit_circle(std::get<Polygon>(ann.geometry));
        }
        it->second.truth.push_back({c.center_x, c.center_y, c.radius, 0});
    }
    std::vector<DatasetImage> out;
    for (auto& [id, d] : by_id) {
        out.push_back(std::move(d));
    }
    return out;
}

// ---- synth --------------------------------------------------------------

std::vector<std::uint64_t> run_synth(const Json& cfg, Outputs& out) {
    if (cfg.at("synth").is_null()) {
        fail(Error::Kind::Schema, "missing field /synth");
    }
    if (cfg.at("count").is_null()) {
        fail(Error::Kind::Schema, "missing field /count");
    }
    const SynthConfig patch_cfg = synth_config_from_json(cfg.at("synth"), "/synth");
    const int count = json_require<int>(cfg, "count", "");
    if (count < 0) {
        fail(Error::Kind::Usage, "field /count must be >= 0");
    }
    const HpfConfig hpf = hpf_from_json(cfg.at("hpf"), "/hpf");
    const std::string category = json_require<std::string>(cfg, "category", "");
    std::vector<std::uint64_t> seeds{patch_cfg.seed};

    AnnotationSet set;
    set.categories[1] = category;
    std::int64_t next_image = 1;
    std::int64_t next_ann = 1;
    const auto record = [&](const std::string& rel, const SynthSample& s) {
        write_raster(out.add(rel).string(), s.image);
        set.images[next_image] = {rel, s.image.width(), s.image.height()};
        for (const auto& t : s.truth) {
            set.annotations[next_ann++] = {next_image, 1, Circle{t.center_x, t.center_y, t.radius}};
        }
        ++next_image;
    };
    const auto patches = generate_dataset(patch_cfg, static_cast<std::size_t>(count));
    for (std::size_t i = 0; i < patches.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof name, "patches/patch_%04zu.pam", i);
        record(name, patches[i]);
    }

    if (!cfg.at("slides").is_null()) {
        const Json& sj = cfg.at("slides");
        const SynthConfig slide_cfg = synth_config_from_json(json_require<Json>(sj, "synth", "/slides"), "/slides/synth");
        const int slide_count = json_require<int>(sj, "count", "/slides");
        const int per_case = json_optional<int>(sj, "slides_per_case", 1, "/slides");
        if (slide_count < 1 || per_case < 1) {
            fail(Error::Kind::Usage, "fields /slides/count and /slides/slides_per_case must be >= 1");
        }
        seeds.push_back(slide_cfg.seed);
        std::ostringstream slides_csv;
        slides_csv << "slide_id,case_id,width,height\n";
        std::map<std::string, CaseData> cases;
        const auto slides = generate_dataset(slide_cfg, static_cast<std::size_t>(slide_count));
        for (std::size_t i = 0; i < slides.size(); ++i) {
            char name[64], case_id[32], slide_id[32];
            std::snprintf(name, sizeof name, "slides/slide_%03zu.pam", i);
            std::snprintf(slide_id, sizeof slide_id, "slide_%03zu", i);
            std::snprintf(case_id, sizeof case_id, "case_%03zu", i / static_cast<std::size_t>(per_case));
            record(name, slides[i]);
            slides_csv << slide_id << ',' << case_id << ',' << slides[i].image.width() << ','
                       << slides[i].image.height() << '\n';
            SlideDetections sd{slide_id, slides[i].image.width(), slides[i].image.height(), {}};
            for (const auto& t : slides[i].truth) {
                sd.detections.push_back({t.center_x, t.center_y, t.radius, 1.0, 0});
            }
            cases[case_id].case_id = case_id;
            cases[case_id].slides.push_back(std::move(sd));
        }
        std::ostringstream human;
        human << "case_id,top5_mean,max\n";
        for (const auto& [id, c] : cases) {
            const CaseCounts counts = case_counts(c, hpf, 1.0);
            human << id << ',' << csv_number(counts.machine_top5_mean) << ',' << csv_number(counts.machine_max)
                  << '\n';
        }
        out.text("slides.csv", slides_csv.str());
        out.text("human.csv", human.str());
    }
    out.text("truth.json", serialize_coco(set));
    return seeds;
}

// ---- train --------------------------------------------------------------

std::vector<std::uint64_t> run_train(const Json& cfg, const std::map<std::string, std::string>& inputs,
                                     Outputs& out) {
    const ModelConfig mc = model_config_from_json(cfg.at("model"), "/model");
    const TrainConfig tc = train_config_from_json(cfg.at("train"), "/train");
    const auto init_seed = json_require<std::uint64_t>(cfg, "init_seed", "");
    const int calib = json_require<int>(cfg, "calibration_samples", "");

    std::vector<LabeledImage> data;
    for (auto& d : load_dataset(inputs.at("dataset"), "patches")) {
        if (d.image.width() != mc.backbone.input_width || d.image.height() != mc.backbone.input_height ||
            d.image.channels() != mc.backbone.in_channels) {
            fail(Error::Kind::Usage, d.file_name + " does not match the model input size");
        }
        data.push_back({std::move(d.image), std::move(d.truth)});
    }
    if (data.empty()) {
        fail(Error::Kind::Usage, "dataset holds no patches/ images");
    }
    CircleSnakeModel model(mc);
    model.initialize(init_seed);
    const std::size_t n_cal = std::min<std::size_t>(data.size(), static_cast<std::size_t>(std::max(1, calib)));
    calibrate_model(model, std::span<const LabeledImage>(data.data(), n_cal));

    std::ostringstream trace;
    trace << "step,total,focal,radius,offset,contour\n";
    train(model, data, tc, [&](std::size_t step, const StepLoss& l) {
        trace << step << ',' << csv_number(l.total) << ',' << csv_number(l.focal) << ',' << csv_number(l.radius)
              << ',' << csv_number(l.offset) << ',' << csv_number(l.contour) << '\n';
    });
    save_checkpoint(out.add("checkpoint.ckpt").string(), model);
    out.text("loss_trace.csv", trace.str());
    return {tc.seed, init_seed};
}

// ---- infer --------------------------------------------------------------

std::vector<std::uint64_t> run_infer(const Json& cfg, const std::map<std::string, std::string>& inputs,
                                     Outputs& out) {
    const double ct = json_require<double>(cfg, "ct_score", "");
    const int top_n = json_require<int>(cfg, "top_n", "");
    const int stride = json_require<int>(cfg, "stride", "");
    const double merge_iou = json_require<double>(cfg, "merge_iou", "");
    const std::string which = json_require<std::string>(cfg, "images", "");
    const std::string class_name = json_require<std::string>(cfg, "class_name", "");
    const int vertices = json_require<int>(cfg, "polygon_vertices", "");
    const double metrics_ct = json_require<double>(cfg, "metrics_ct_score", "");
    const double match_iou = json_require<double>(cfg, "match_iou", "");
    if (which != "all" && which != "patches" && which != "slides") {
        fail(Error::Kind::Usage, "field /images must be all, patches or slides");
    }
    const CircleSnakeModel model = load_checkpoint(inputs.at("checkpoint"));
    const int pw = model.config.backbone.input_width;
    if (model.config.backbone.input_height != pw) {
        fail(Error::Kind::Usage, "tiling needs a square model input");
    }

    std::vector<std::pair<std::string, std::vector<DetectionCircle>>> all;
    std::vector<LabeledImage> scored;
    for (const auto& d : load_dataset(inputs.at("dataset"), which)) {
        std::vector<DetectionCircle> dets;
        if (d.image.width() == pw && d.image.height() == pw) {
            dets = infer(model, d.image, ct, top_n).detections;
            if (d.file_name.starts_with("patches/")) {
                scored.push_back({d.image, d.truth});
            }
        } else {
            const PatchPlan plan = plan_patches(d.image.width(), d.image.height(), pw, stride);
            std::vector<PatchDetections> per_patch;
            for (const auto& o : plan.patches) {
                per_patch.push_back({o, infer(model, crop(d.image, o.x, o.y, pw, pw), ct, top_n).detections});
            }
            dets = merge_detections(per_patch, merge_iou);
        }
        const std::string stem = stem_of(d.file_name);
        out.text("geojson/" + stem + ".geojson", export_geojson(dets, vertices, class_name).document);
        all.emplace_back(stem, std::move(dets));
    }
    out.text("detections.csv", detections_csv(all));
    if (!scored.empty()) {
        const EvalSummary s = evaluate(model, scored, metrics_ct, match_iou);
        const Json metrics = {{"images", scored.size()},
                              {"ct_score", metrics_ct},
                              {"iou_threshold", match_iou},
                              {"true_positives", s.true_positives},
                              {"false_positives", s.false_positives},
                              {"false_negatives", s.false_negatives},
                              {"precision", s.precision},
                              {"recall", s.recall},
                              {"f1", s.f1},
                              {"matched", s.matched},
                              {"mean_contour_l1", s.mean_contour_l1},
                              {"mean_initial_contour_l1", s.mean_initial_contour_l1}};
        out.text("metrics.json", canonical_dump(metrics));
    }
    return {};
}

// ---- eval ---------------------------------------------------------------

CountMetric metric_from(const std::string& s) {
    if (s == "top5_mean") {
        return CountMetric::Top5Mean;
    }
    if (s == "max") {
        return CountMetric::Max;
    }
    fail(Error::Kind::Usage, "field /group_metric must be top5_mean or max");
}

std::vector<std::uint64_t> run_eval(const Json& cfg, const std::map<std::string, std::string>& inputs,
                                    Outputs& out) {
    const HpfConfig hpf = hpf_from_json(cfg.at("hpf"), "/hpf");
    const auto thresholds = json_require<std::vector<double>>(cfg, "thresholds", "");
    const double group_t = json_require<double>(cfg, "group_threshold", "");
    const CountMetric group_metric = metric_from(json_require<std::string>(cfg, "group_metric", ""));
    const double confidence = json_require<double>(cfg, "confidence", "");

    std::map<std::string, CaseData> cases;
    std::map<std::string, std::pair<std::string, std::size_t>> slide_index; // slide -> (case, index)
    for (const auto& row : parse_csv(inputs.at("slides"), {"slide_id", "case_id", "width", "height"})) {
        auto& c = cases[row[1]];
        c.case_id = row[1];
        if (slide_index.contains(row[0])) {
            fail(Error::Kind::Integrity, "slide " + row[0] + " listed twice");
        }
        slide_index[row[0]] = {row[1], c.slides.size()};
        c.slides.push_back({row[0], static_cast<int>(csv_double(row[2], "slides width")),
                            static_cast<int>(csv_double(row[3], "slides height")), {}});
    }
    for (const auto& row : parse_csv(inputs.at("detections"), {"slide_id", "x", "y", "radius", "score", "class"})) {
        const auto it = slide_index.find(row[0]);
        if (it == slide_index.end()) {
            continue; // detections on images that are not slides
        }
        cases[it->second.first].slides[it->second.second].detections.push_back(
            {csv_double(row[1], "x"), csv_double(row[2], "y"), csv_double(row[3], "radius"),
             csv_double(row[4], "score"), static_cast<int>(csv_double(row[5], "class"))});
    }
    std::set<std::string> with_human;
    for (const auto& row : parse_csv(inputs.at("human"), {"case_id", "top5_mean", "max"})) {
        const auto it = cases.find(row[0]);
        if (it == cases.end()) {
            fail(Error::Kind::Integrity, "human counts reference unknown case " + row[0]);
        }
        it->second.human_top5_mean = csv_double(row[1], "top5_mean");
        it->second.human_max = csv_double(row[2], "max");
        with_human.insert(row[0]);
    }
    std::vector<CaseData> list;
    for (auto& [id, c] : cases) {
        if (!with_human.contains(id)) {
            fail(Error::Kind::Integrity, "case " + id + " has no human counts");
        }
        list.push_back(std::move(c));
    }
    const SweepTable table = threshold_sweep(list, hpf, thresholds);
    out.text("correlation.csv", sweep_csv(table));
    out.text("counts.csv", counts_csv(table));

    std::vector<CaseCounts> group_counts;
    for (const auto& c : list) {
        group_counts.push_back(case_counts(c, hpf, group_t));
    }
    std::vector<double> hx, my;
    for (const auto& c : group_counts) {
        hx.push_back(group_metric == CountMetric::Top5Mean ? c.human_top5_mean : c.human_max);
        my.push_back(group_metric == CountMetric::Top5Mean ? c.machine_top5_mean : c.machine_max);
    }
    const RegressionBand band = regression_with_groups(hx, my, confidence);
    out.text("groups.csv", groups_csv(group_counts, band, group_metric));
    const std::string label = metric_name(group_metric);
    out.text("regression.svg", regression_svg(hx, my, band, "Human vs machine counts (" + label + ")",
                                              "human " + label, "machine " + label));
    return {};
}

// ---- shift study --------------------------------------------------------

std::vector<std::uint64_t> run_shift(const Json& cfg, const std::map<std::string, std::string>& inputs,
                                     Outputs& out) {
    const SynthConfig test_cfg = synth_config_from_json(cfg.at("test"), "/test");
    const int count = json_require<int>(cfg, "count", "");
    const double ct = json_require<double>(cfg, "ct_score", "");
    const double iou = json_require<double>(cfg, "iou", "");
    const CircleSnakeModel model = load_checkpoint(inputs.at("checkpoint"));
    const auto test = generate_dataset(test_cfg, static_cast<std::size_t>(std::max(0, count)));

    std::ostringstream csv;
    csv << "series,luminance_delta,intensity_delta,precision,recall,f1,matched\n";
    std::vector<SvgSeries> curves;
    const Json& series = cfg.at("series");
    if (!series.is_array() || series.empty()) {
        fail(Error::Kind::Usage, "field /series must be a non-empty array");
    }
    for (std::size_t k = 0; k < series.size(); ++k) {
        const std::string path = "/series/" + std::to_string(k);
        const auto name = json_require<std::string>(series[k], "name", path);
        const auto lum = json_require<std::vector<double>>(series[k], "luminance_delta", path);
        const auto inten = json_require<std::vector<double>>(series[k], "intensity_delta", path);
        if (lum.size() != inten.size() || lum.empty()) {
            fail(Error::Kind::Usage, "fields " + path + "/luminance_delta and intensity_delta need equal, non-zero length");
        }
        std::vector<ShiftPoint> points;
        for (std::size_t i = 0; i < lum.size(); ++i) {
            points.push_back({lum[i], inten[i]});
        }
        SvgSeries curve{name, {}, {}};
        for (const auto& r : shift_study(model, points, test, ct, iou)) {
            csv << name << ',' << csv_number(r.shift.luminance_delta) << ',' << csv_number(r.shift.intensity_delta)
                << ',' << csv_number(r.summary.precision) << ',' << csv_number(r.summary.recall) << ','
                << csv_number(r.summary.f1) << ',' << r.summary.matched << '\n';
            curve.x.push_back(std::max(std::abs(r.shift.luminance_delta), std::abs(r.shift.intensity_delta)));
            curve.y.push_back(r.summary.f1);
        }
        curves.push_back(std::move(curve));
    }
    out.text("shift.csv", csv.str());
    out.text("shift.svg", line_svg(curves, "Detection F1 under stain shift", "shift magnitude", "F1 @ IoU 0.5"));
    return {test_cfg.seed};
}

// ---- convert ------------------------------------------------------------

std::vector<std::uint64_t> run_convert(const Json& cfg, const std::map<std::string, std::string>& inputs,
                                       Outputs& out) {
    const std::string from = json_require<std::string>(cfg, "from", "");
    const int vertices = json_require<int>(cfg, "polygon_vertices", "");
    const Json& cls = cfg.at("class_name");
    if (from == "coco") {
        const AnnotationSet set = load_coco(inputs.at("input"));
        std::map<std::int64_t, GeoFeatureSet> per_image;
        for (const auto& [id, im] : set.images) {
            per_image[id];
        }
        for (const auto& [id, ann] : set.annotations) {
            GeoFeature f;
            f.class_name = cls.is_null() ? set.categories.at(ann.category_id) : cls.get<std::string>();
            f.score = 1.0;
            if (const auto* c = std::get_if<Circle>(&ann.geometry)) {
                f.ring = sample_circle_vertices(*c, vertices).vertices;
            } else {
                f.ring = std::get<Polygon>(ann.geometry);
            }
            f.ring.push_back(f.ring.front());
            per_image[ann.image_id].features.push_back(std::move(f));
        }
        for (const auto& [id, features] : per_image) {
            out.text("geojson/" + stem_of(set.images.at(id).file_name) + ".geojson", serialize_geojson(features));
        }
    } else if (from == "geojson") {
        const GeoFeatureSet features = parse_geojson(read_text_file(inputs.at("input")));
        const Json& im = cfg.at("image");
        AnnotationSet set;
        set.images[1] = {json_require<std::string>(im, "file_name", "/image"), json_require<int>(im, "width", "/image"),
                         json_require<int>(im, "height", "/image")};
        std::map<std::string, std::int64_t> category_ids;
        std::int64_t next = 1;
        const auto circles = geojson_circles(features);
        for (std::size_t i = 0; i < features.features.size(); ++i) {
            const std::string name = cls.is_null() ? features.features[i].class_name : cls.get<std::string>();
            if (!category_ids.contains(name)) {
                const auto cid = static_cast<std::int64_t>(category_ids.size() + 1);
                category_ids[name] = cid;
                set.categories[cid] = name;
            }
            const auto& c = circles[i];
            set.annotations[next++] = {1, category_ids[name], Circle{c.center_x, c.center_y, c.radius}};
        }
        out.text("converted.json", serialize_coco(set));
    } else {
        fail(Error::Kind::Usage, "field /from must be coco or geojson");
    }
    return {};
}

} // namespace

std::vector<OutputRecord> run(const RunRequest& request) {
    const auto started = std::chrono::steady_clock::now();
    for (const auto& role : required_inputs(request.command)) {
        if (!request.inputs.contains(role)) {
            fail(Error::Kind::Usage, request.command + " needs --" + role);
        }
    }
    fs::create_directories(request.out_dir);
    Outputs out{request.out_dir, {}};
    const Json& cfg = request.config;
    std::vector<std::uint64_t> seeds;
    if (request.command == "synth") {
        seeds = run_synth(cfg, out);
    } else if (request.command == "train") {
        seeds = run_train(cfg, request.inputs, out);
    } else if (request.command == "infer") {
        seeds = run_infer(cfg, request.inputs, out);
    } else if (request.command == "eval") {
        seeds = run_eval(cfg, request.inputs, out);
    } else if (request.command == "shift-study") {
        seeds = run_shift(cfg, request.inputs, out);
    } else if (request.command == "convert") {
        seeds = run_convert(cfg, request.inputs, out);
    } else {
        fail(Error::Kind::Usage, "unknown command " + request.command);
    }

    std::vector<OutputRecord> records;
    Json outputs = Json::array();
    for (const auto& rel : out.files) {
        const fs::path p = request.out_dir / rel;
        OutputRecord r{rel, fs::file_size(p), fnv1a64_file(p)};
        outputs.push_back({{"path", r.path}, {"bytes", r.bytes}, {"fnv1a64", r.fnv1a64}});
        records.push_back(std::move(r));
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    const Json manifest = {{"command", request.command},
                           {"config", cfg},
                           {"seeds", seeds},
                           {"inputs", request.inputs},
                           {"output_dir", fs::absolute(request.out_dir).string()},
                           {"outputs", outputs},
                           {"tool_version", kToolVersion},
                           {"duration_seconds", seconds}};
    write_text_file((request.out_dir / "manifest.json").string(), manifest.dump(2) + "\n");
    return records;
}

std::vector<std::string> rerun(const fs::path& manifest_path, const fs::path& out_dir) {
    Json m;
    try {
        m = Json::parse(read_text_file(manifest_path.string()));
    } catch (const nlohmann::json::exception& e) {
        fail(Error::Kind::Schema, "manifest is not valid JSON: " + std::string(e.what()));
    }
    RunRequest req;
    req.command = json_require<std::string>(m, "command", "");
    req.config = json_require<Json>(m, "config", "");
    req.inputs = json_require<std::map<std::string, std::string>>(m, "inputs", "");
    req.out_dir = out_dir;
    if (fs::exists(out_dir) && fs::equivalent(out_dir, json_require<std::string>(m, "output_dir", ""))) {
        fail(Error::Kind::Usage, "rerun needs an output directory different from the original run");
    }
    const auto records = run(req);
    std::map<std::string, std::string> expected;
    for (const auto& o : json_require<Json>(m, "outputs", "")) {
        expected[json_require<std::string>(o, "path", "/outputs")] = json_require<std::string>(o, "fnv1a64", "/outputs");
    }
    std::vector<std::string> mismatched;
    std::set<std::string> seen;
    for (const auto& r : records) {
        seen.insert(r.path);
        const auto it = expected.find(r.path);
        if (it == expected.end() || it->second != r.fnv1a64) {
            mismatched.push_back(r.path);
        }
    }
    for (const auto& [path, hash] : expected) {
        if (!seen.contains(path)) {
            mismatched.push_back(path);
        }
    }
    return mismatched;
}

} // namespace csnake::cli
