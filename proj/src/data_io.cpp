#include "circlesnake/data_io.hpp"

#include "circlesnake/error.hpp"
#include "circlesnake/json_util.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <sstream>

namespace csnake {

// ---- patch tiling -------------------------------------------------------

namespace {

std::vector<int> axis_origins(int extent, int patch, int stride) {
    std::vector<int> out;
    int pos = 0;
    while (pos + patch <= extent) {
        out.push_back(pos);
        pos += stride;
    }
    if (out.back() + patch < extent) {
        out.push_back(extent - patch);
    }
    return out;
}

} // namespace

PatchPlan plan_patches(int wsi_width, int wsi_height, int patch_size, int stride) {
    if (patch_size < 1) {
        fail(Error::Kind::Sizing, "patch size must be positive");
    }
    if (stride <= 0) {
        stride = patch_size;
    }
    if (wsi_width < patch_size || wsi_height < patch_size) {
        fail(Error::Kind::Sizing, "slide " + std::to_string(wsi_width) + "x" + std::to_string(wsi_height) +
                                      " is smaller than the " + std::to_string(patch_size) + " px patch");
    }
    PatchPlan plan;
    plan.wsi_width = wsi_width;
    plan.wsi_height = wsi_height;
    plan.patch_size = patch_size;
    plan.stride = stride;
    const auto xs = axis_origins(wsi_width, patch_size, stride);
    const auto ys = axis_origins(wsi_height, patch_size, stride);
    for (int y : ys) {
        for (int x : xs) {
            plan.patches.push_back({x, y});
        }
    }
    return plan;
}

// ---- COCO annotations ---------------------------------------------------

void AnnotationSet::validate() const {
    for (const auto& [id, ann] : annotations) {
        if (!images.contains(ann.image_id)) {
            fail(Error::Kind::Integrity, "annotation " + std::to_string(id) + " references missing image id " +
                                             std::to_string(ann.image_id));
        }
        if (!categories.contains(ann.category_id)) {
            fail(Error::Kind::Integrity, "annotation " + std::to_string(id) + " references missing category id " +
                                             std::to_string(ann.category_id));
        }
    }
}

namespace {

const Json& require_array(const Json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object() || !obj.contains(key)) {
        fail(Error::Kind::Schema, "missing field " + path + "/" + key);
    }
    const Json& a = obj.at(key);
    if (!a.is_array()) {
        fail(Error::Kind::Schema, "field " + path + "/" + key + " must be an array");
    }
    return a;
}

template <typename Map>
void insert_unique(Map& m, std::int64_t id, typename Map::mapped_type value, const std::string& path) {
    if (!m.emplace(id, std::move(value)).second) {
        fail(Error::Kind::Integrity, "duplicate id " + std::to_string(id) + " at " + path);
    }
}

std::variant<Circle, Polygon> annotation_geometry(const Json& a, const std::string& path) {
    if (a.contains("segmentation") && !a.at("segmentation").is_null() &&
        !(a.at("segmentation").is_array() && a.at("segmentation").empty())) {
        const Json& seg = a.at("segmentation");
        if (!seg.is_array() || seg.size() != 1 || !seg[0].is_array()) {
            fail(Error::Kind::Schema, "field " + path + "/segmentation must hold exactly one polygon ring");
        }
        std::vector<double> flat;
        try {
            flat = seg[0].get<std::vector<double>>();
        } catch (const nlohmann::json::exception&) {
            fail(Error::Kind::Schema, "field " + path + "/segmentation/0 must be an array of numbers");
        }
        if (flat.size() < 6 || flat.size() % 2 != 0) {
            fail(Error::Kind::Schema, "field " + path + "/segmentation/0 needs an even count of at least 6 numbers");
        }
        Polygon poly;
        for (std::size_t i = 0; i < flat.size(); i += 2) {
            poly.push_back({flat[i], flat[i + 1]});
        }
        return poly;
    }
    const auto bbox = json_require<std::vector<double>>(a, "bbox", path);
    if (bbox.size() != 4) {
        fail(Error::Kind::Schema, "field " + path + "/bbox must have 4 numbers");
    }
    const double w = bbox[2];
    const double h = bbox[3];
    if (!(w > 0.0) || std::abs(w - h) > 1e-9 * std::max(1.0, w)) {
        fail(Error::Kind::Schema, "field " + path + "/bbox is not a positive square and no segmentation is given");
    }
    Circle c{bbox[0] + w / 2.0, bbox[1] + h / 2.0, w / 2.0};
    if (a.contains("circle")) {
        const auto exact = json_require<std::vector<double>>(a, "circle", path);
        if (exact.size() != 3) {
            fail(Error::Kind::Schema, "field " + path + "/circle must have 3 numbers");
        }
        const Circle e{exact[0], exact[1], exact[2]};
        if (std::abs(e.center_x - c.center_x) > 1e-6 || std::abs(e.center_y - c.center_y) > 1e-6 ||
            std::abs(e.radius - c.radius) > 1e-6) {
            fail(Error::Kind::Schema, "field " + path + "/circle disagrees with " + path + "/bbox");
        }
        c = e;
    }
    return c;
}

} // namespace

AnnotationSet parse_coco(const std::string& text) {
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(Error::Kind::Schema, std::string("COCO file is not valid JSON: ") + e.what());
    }
    AnnotationSet set;
    const Json& images = require_array(doc, "images", "");
    for (std::size_t i = 0; i < images.size(); ++i) {
        const std::string path = "/images/" + std::to_string(i);
        const Json& im = images[i];
        ImageRecord rec{json_require<std::string>(im, "file_name", path), json_require<int>(im, "width", path),
                        json_require<int>(im, "height", path)};
        insert_unique(set.images, json_require<std::int64_t>(im, "id", path), rec, path);
    }
    const Json& cats = require_array(doc, "categories", "");
    for (std::size_t i = 0; i < cats.size(); ++i) {
        const std::string path = "/categories/" + std::to_string(i);
        insert_unique(set.categories, json_require<std::int64_t>(cats[i], "id", path),
                      json_require<std::string>(cats[i], "name", path), path);
    }
    const Json& anns = require_array(doc, "annotations", "");
    for (std::size_t i = 0; i < anns.size(); ++i) {
        const std::string path = "/annotations/" + std::to_string(i);
        const Json& a = anns[i];
        AnnotationRecord rec;
        rec.image_id = json_require<std::int64_t>(a, "image_id", path);
        rec.category_id = json_require<std::int64_t>(a, "category_id", path);
        rec.geometry = annotation_geometry(a, path);
        insert_unique(set.annotations, json_require<std::int64_t>(a, "id", path), rec, path);
    }
    set.validate();
    return set;
}

AnnotationSet load_coco(std::istream& in) {
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_coco(text);
}

AnnotationSet load_coco(const std::string& path) { return parse_coco(read_text_file(path)); }

std::string serialize_coco(const AnnotationSet& set) {
    set.validate();
    Json doc;
    doc["images"] = Json::array();
    for (const auto& [id, im] : set.images) {
        doc["images"].push_back({{"id", id}, {"file_name", im.file_name}, {"width", im.width}, {"height", im.height}});
    }
    doc["categories"] = Json::array();
    for (const auto& [id, name] : set.categories) {
        doc["categories"].push_back({{"id", id}, {"name", name}});
    }
    doc["annotations"] = Json::array();
    for (const auto& [id, ann] : set.annotations) {
        Json a = {{"id", id}, {"image_id", ann.image_id}, {"category_id", ann.category_id}, {"iscrowd", 0}};
        if (const auto* c = std::get_if<Circle>(&ann.geometry)) {
            a["bbox"] = {c->center_x - c->radius, c->center_y - c->radius, 2.0 * c->radius, 2.0 * c->radius};
            a["circle"] = {c->center_x, c->center_y, c->radius};
            a["area"] = M_PI * c->radius * c->radius;
        } else {
            const auto& poly = std::get<Polygon>(ann.geometry);
            std::vector<double> flat;
            double x0 = poly.front().x, x1 = x0, y0 = poly.front().y, y1 = y0, area2 = 0.0;
            for (std::size_t k = 0; k < poly.size(); ++k) {
                const Point& p = poly[k];
                const Point& q = poly[(k + 1) % poly.size()];
                flat.push_back(p.x);
                flat.push_back(p.y);
                x0 = std::min(x0, p.x);
                x1 = std::max(x1, p.x);
                y0 = std::min(y0, p.y);
                y1 = std::max(y1, p.y);
                area2 += p.x * q.y - q.x * p.y;
            }
            a["segmentation"] = Json::array({flat});
            a["bbox"] = {x0, y0, x1 - x0, y1 - y0};
            a["area"] = std::abs(area2) / 2.0;
        }
        doc["annotations"].push_back(a);
    }
    return doc.dump(1) + "\n";
}

void save_coco(const std::string& path, const AnnotationSet& set) { write_text_file(path, serialize_coco(set)); }

// ---- detection merging --------------------------------------------------

std::vector<DetectionCircle> merge_detections(const std::vector<PatchDetections>& per_patch, double iou_threshold) {
    std::vector<DetectionCircle> all;
    for (const auto& patch : per_patch) {
        for (DetectionCircle d : patch.detections) {
            d.center_x += patch.origin.x;
            d.center_y += patch.origin.y;
            all.push_back(d);
        }
    }
    std::stable_sort(all.begin(), all.end(), [](const DetectionCircle& a, const DetectionCircle& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        if (a.center_x != b.center_x) {
            return a.center_x < b.center_x;
        }
        if (a.center_y != b.center_y) {
            return a.center_y < b.center_y;
        }
        return a.radius < b.radius;
    });
    std::vector<DetectionCircle> kept;
    for (const auto& d : all) {
        const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const DetectionCircle& k) {
            return circle_iou(as_circle(k), as_circle(d)) >= iou_threshold;
        });
        if (!suppressed) {
            kept.push_back(d);
        }
    }
    return kept;
}

// ---- GeoJSON ------------------------------------------------------------

GeoExport export_geojson(const std::vector<DetectionCircle>& detections, int polygon_vertices,
                         const std::string& class_name) {
    GeoExport out;
    for (const auto& d : detections) {
        if (!std::isfinite(d.center_x) || !std::isfinite(d.center_y) || !std::isfinite(d.radius) ||
            !std::isfinite(d.score)) {
            fail(Error::Kind::Export, "detection has a non-finite coordinate, radius or score");
        }
        GeoFeature f;
        f.ring = sample_circle_vertices(as_circle(d), polygon_vertices).vertices;
        f.ring.push_back(f.ring.front());
        f.class_name = class_name;
        f.score = d.score;
        out.features.features.push_back(std::move(f));
    }
    out.document = serialize_geojson(out.features);
    return out;
}

std::string serialize_geojson(const GeoFeatureSet& set) {
    Json features = Json::array();
    for (const auto& f : set.features) {
        Json ring = Json::array();
        for (const auto& p : f.ring) {
            if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
                fail(Error::Kind::Export, "ring has a non-finite coordinate");
            }
            ring.push_back(Json::array({p.x, p.y}));
        }
        features.push_back({{"type", "Feature"},
                            {"geometry", {{"type", "Polygon"}, {"coordinates", Json::array({ring})}}},
                            {"properties",
                             {{"objectType", "detection"},
                              {"classification", {{"name", f.class_name}}},
                              {"measurements", {{"score", f.score}}}}}});
    }
    return canonical_dump({{"type", "FeatureCollection"}, {"features", features}});
}

GeoFeatureSet parse_geojson(const std::string& text) {
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(Error::Kind::Schema, std::string("GeoJSON is not valid JSON: ") + e.what());
    }
    if (json_require<std::string>(doc, "type", "") != "FeatureCollection") {
        fail(Error::Kind::Schema, "field /type must be FeatureCollection");
    }
    GeoFeatureSet set;
    const Json& features = require_array(doc, "features", "");
    for (std::size_t i = 0; i < features.size(); ++i) {
        const std::string path = "/features/" + std::to_string(i);
        const Json& f = features[i];
        const Json geom = json_require<Json>(f, "geometry", path);
        if (json_require<std::string>(geom, "type", path + "/geometry") != "Polygon") {
            fail(Error::Kind::Schema, "field " + path + "/geometry/type must be Polygon");
        }
        const auto rings =
            json_require<std::vector<std::vector<std::vector<double>>>>(geom, "coordinates", path + "/geometry");
        if (rings.empty() || rings[0].size() < 4) {
            fail(Error::Kind::Schema, "field " + path + "/geometry/coordinates needs a ring of at least 4 points");
        }
        GeoFeature out;
        for (const auto& p : rings[0]) {
            if (p.size() < 2) {
                fail(Error::Kind::Schema, "field " + path + "/geometry/coordinates holds a point with < 2 numbers");
            }
            out.ring.push_back({p[0], p[1]});
        }
        const Json props = json_optional<Json>(f, "properties", Json::object(), path);
        out.class_name = json_optional<std::string>(json_optional<Json>(props, "classification", Json::object(),
                                                                        path + "/properties"),
                                                    "name", "", path + "/properties/classification");
        out.score = json_optional<double>(json_optional<Json>(props, "measurements", Json::object(),
                                                              path + "/properties"),
                                          "score", 0.0, path + "/properties/measurements");
        set.features.push_back(std::move(out));
    }
    return set;
}

std::vector<DetectionCircle> geojson_circles(const GeoFeatureSet& set) {
    std::vector<DetectionCircle> out;
    for (const auto& f : set.features) {
        std::vector<Point> ring = f.ring;
        if (ring.size() > 1 && ring.front() == ring.back()) {
            ring.pop_back();
        }
        const Circle c = fit_circle(ring);
        out.push_back({c.center_x, c.center_y, c.radius, f.score, 0});
    }
    return out;
}

// ---- patch rasters ------------------------------------------------------

void write_raster(std::ostream& out, const Grid2D& image) {
    out << "P7\nWIDTH " << image.width() << "\nHEIGHT " << image.height() << "\nDEPTH " << image.channels()
        << "\nMAXVAL 255\nENDHDR\n";
    std::string bytes(image.size(), '\0');
    for (std::size_t i = 0; i < image.size(); ++i) {
        const double v = std::clamp(image.values()[i], 0.0, 1.0);
        bytes[i] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        fail(Error::Kind::Io, "failed to write raster");
    }
}

void write_raster(const std::string& path, const Grid2D& image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        fail(Error::Kind::Io, "cannot open " + path + " for writing");
    }
    write_raster(out, image);
}

Grid2D read_raster(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "P7") {
        fail(Error::Kind::Io, "raster does not start with the P7 magic");
    }
    int width = -1, height = -1, depth = -1, maxval = -1;
    while (true) {
        if (!std::getline(in, line)) {
            fail(Error::Kind::Io, "raster header has no ENDHDR");
        }
        if (line.empty() || line.front() == '#') {
            continue;
        }
        if (line == "ENDHDR") {
            break;
        }
        std::istringstream fields(line);
        std::string key;
        fields >> key;
        if (key == "TUPLTYPE") {
            continue;
        }
        int value = -1;
        fields >> value;
        if (key == "WIDTH") {
            width = value;
        } else if (key == "HEIGHT") {
            height = value;
        } else if (key == "DEPTH") {
            depth = value;
        } else if (key == "MAXVAL") {
            maxval = value;
        } else {
            fail(Error::Kind::Io, "unknown raster header field " + key);
        }
    }
    if (width < 1 || height < 1 || depth < 1 || maxval != 255) {
        fail(Error::Kind::Io, "raster header needs positive WIDTH/HEIGHT/DEPTH and MAXVAL 255");
    }
    Grid2D image(width, height, depth, 0.0);
    std::string bytes(image.size(), '\0');
    if (!in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
        fail(Error::Kind::Io, "raster sample data is truncated");
    }
    for (std::size_t i = 0; i < image.size(); ++i) {
        image.values()[i] = static_cast<unsigned char>(bytes[i]) / 255.0;
    }
    return image;
}

Grid2D read_raster(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(Error::Kind::Io, "cannot open " + path);
    }
    return read_raster(in);
}

// ---- small file helpers -------------------------------------------------

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(Error::Kind::Io, "cannot open " + path);
    }
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out || !out.write(text.data(), static_cast<std::streamsize>(text.size()))) {
        fail(Error::Kind::Io, "cannot write " + path);
    }
}

} // namespace csnake
