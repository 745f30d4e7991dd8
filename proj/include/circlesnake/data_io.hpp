#pragma once

#include "circlesnake/contour.hpp"
#include "circlesnake/detection.hpp"
#include "circlesnake/geometry.hpp"
#include "circlesnake/grid.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace csnake {

// ---- patch tiling -------------------------------------------------------

struct PatchOrigin {
    int x = 0;
    int y = 0;

    friend bool operator==(const PatchOrigin&, const PatchOrigin&) = default;
};

struct PatchPlan {
    int wsi_width = 0;
    int wsi_height = 0;
    int patch_size = 1024;
    int stride = 1024;
    // Row-major: y outer, x inner.
    std::vector<PatchOrigin> patches;
};

// Origins at multiples of stride; the last row and column are shifted inward
// so that they end exactly on the slide edge. stride <= 0 means patch_size.
PatchPlan plan_patches(int wsi_width, int wsi_height, int patch_size = 1024, int stride = 0);

// ---- COCO annotations ---------------------------------------------------

struct ImageRecord {
    std::string file_name;
    int width = 0;
    int height = 0;

    friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

using Polygon = std::vector<Point>;

struct AnnotationRecord {
    std::int64_t image_id = 0;
    std::int64_t category_id = 0;
    std::variant<Circle, Polygon> geometry;

    friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

struct AnnotationSet {
    std::map<std::int64_t, ImageRecord> images;
    std::map<std::int64_t, AnnotationRecord> annotations;
    std::map<std::int64_t, std::string> categories;

    // Throws Integrity naming the first dangling image or category id.
    void validate() const;

    friend bool operator==(const AnnotationSet&, const AnnotationSet&) = default;
};

// Circles are stored as a square bbox (inscribed circle) without
// segmentation; polygons as a single segmentation ring.
AnnotationSet parse_coco(const std::string& text);
AnnotationSet load_coco(std::istream& in);
AnnotationSet load_coco(const std::string& path);
std::string serialize_coco(const AnnotationSet& set);
void save_coco(const std::string& path, const AnnotationSet& set);

// ---- detection merging --------------------------------------------------

struct PatchDetections {
    PatchOrigin origin;
    std::vector<DetectionCircle> detections;
};

// Translates to slide coordinates, then keeps detections greedily by score
// (ties: x, y, radius ascending), dropping any with IoU >= iou_threshold
// against an already kept one.
std::vector<DetectionCircle> merge_detections(const std::vector<PatchDetections>& per_patch,
                                              double iou_threshold = 0.5);

// ---- GeoJSON ------------------------------------------------------------

struct GeoFeature {
    std::vector<Point> ring; // closed: first point repeated last
    std::string class_name;
    double score = 0.0;
};

struct GeoFeatureSet {
    std::vector<GeoFeature> features;
};

struct GeoExport {
    GeoFeatureSet features;
    std::string document;
};

GeoExport export_geojson(const std::vector<DetectionCircle>& detections, int polygon_vertices = kDefaultContourVertices,
                         const std::string& class_name = "cell");
std::string serialize_geojson(const GeoFeatureSet& set);
GeoFeatureSet parse_geojson(const std::string& text);
// Least-squares circle per feature ring; the score is carried over.
std::vector<DetectionCircle> geojson_circles(const GeoFeatureSet& set);

// ---- patch rasters ------------------------------------------------------

// Portable arbitrary map (P7) with MAXVAL 255. Samples in [0, 1] are
// quantized to round(255 v) after clamping.
void write_raster(std::ostream& out, const Grid2D& image);
void write_raster(const std::string& path, const Grid2D& image);
Grid2D read_raster(std::istream& in);
Grid2D read_raster(const std::string& path);

// ---- small file helpers -------------------------------------------------

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

} // namespace csnake
