#include "test_util.hpp"

#include "commands.hpp"

#include "circlesnake/data_io.hpp"

#include <unistd.h>

#include <atomic>
#include <fstream>

using namespace csnake;
using namespace csnake::cli;

namespace {

// Fresh directory under the system temp dir, removed on scope exit.
struct TempDir {
    fs::path path;
    TempDir() {
        static std::atomic<int> counter{0};
        path = fs::temp_directory_path() /
               ("circlesnake_cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

Json synth_config(int count, int lo, int hi) {
    Json cfg = default_config("synth");
    cfg["synth"] = {{"patch_size", 64}, {"cell_count_range", {lo, hi}}, {"radius_range", {5, 9}}, {"seed", 3}};
    cfg["count"] = count;
    return cfg;
}

std::vector<OutputRecord> run_cmd(const std::string& command, const Json& config,
                                  std::map<std::string, std::string> inputs, const fs::path& out) {
    return run({command, merge_config(default_config(command), config), std::move(inputs), out});
}

std::size_t csv_rows(const fs::path& file) {
    std::ifstream in(file);
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++rows;
    }
    return rows - 1;
}

} // namespace

TEST_CASE("config overlay rejects unknown keys and keeps the rest") {
    const Json base = default_config("infer");
    const Json merged = merge_config(base, {{"ct_score", 0.4}});
    CHECK(merged.at("ct_score") == 0.4);
    CHECK(merged.at("top_n") == 100);
    CHECK_THROWS_KIND(merge_config(base, {{"ct_scor", 0.4}}), Usage);
    const Json train = merge_config(default_config("train"), {{"train", {{"steps", 5}}}});
    CHECK(train.at("train").at("steps") == 5);
    CHECK(train.at("train").at("batch_size") == default_config("train").at("train").at("batch_size"));
    CHECK_THROWS_KIND(merge_config(default_config("train"), {{"train", 5}}), Usage);
    CHECK_THROWS_KIND(default_config("paint"), Usage);
}

TEST_CASE("assignments parse JSON values with a string fallback") {
    Json cfg = default_config("convert");
    apply_assignment(cfg, "image.width=256");
    apply_assignment(cfg, "image.file_name=slides/a.pam");
    apply_assignment(cfg, "class_name=\"eos\"");
    CHECK(cfg.at("image").at("width") == 256);
    CHECK(cfg.at("image").at("file_name") == "slides/a.pam");
    CHECK(cfg.at("class_name") == "eos");
    CHECK_THROWS_KIND(apply_assignment(cfg, "no_equals_sign"), Usage);
}

TEST_CASE("required inputs per command") {
    CHECK(required_inputs("synth").empty());
    CHECK(required_inputs("train") == std::vector<std::string>{"dataset"});
    CHECK(required_inputs("infer") == std::vector<std::string>{"checkpoint", "dataset"});
    CHECK(required_inputs("eval") == std::vector<std::string>{"detections", "slides", "human"});
}

TEST_CASE("FNV-1a 64 of known inputs") {
    TempDir dir;
    write_text_file((dir.path / "a.txt").string(), "a");
    write_text_file((dir.path / "empty.txt").string(), "");
    CHECK(fnv1a64_file(dir.path / "a.txt") == "af63dc4c8601ec8c");
    CHECK(fnv1a64_file(dir.path / "empty.txt") == "cbf29ce484222325");
}

TEST_CASE("synth output is a pure function of its config") {
    TempDir dir;
    const auto a = run_cmd("synth", synth_config(4, 1, 3), {}, dir.path / "a");
    const auto b = run_cmd("synth", synth_config(4, 1, 3), {}, dir.path / "b");
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].path == b[i].path);
        CHECK(a[i].fnv1a64 == b[i].fnv1a64);
    }
    CHECK(fs::exists(dir.path / "a" / "manifest.json"));
    CHECK(fs::exists(dir.path / "a" / "truth.json"));
    const auto truth = load_coco((dir.path / "a" / "truth.json").string());
    CHECK(truth.images.size() == 4);
}

TEST_CASE("a config without the generator block is a schema error") {
    TempDir dir;
    Json cfg = default_config("synth");
    cfg["count"] = 2;
    CHECK_THROWS_KIND(run({"synth", cfg, {}, dir.path / "x"}), Schema);
    Json partial = synth_config(2, 1, 2);
    partial["synth"].erase("seed");
    CHECK_THROWS_KIND(run({"synth", partial, {}, dir.path / "y"}), Schema);
}

TEST_CASE("train, infer at score 1 and rerun on a tiny dataset") {
    TempDir dir;
    run_cmd("synth", synth_config(3, 0, 2), {}, dir.path / "data");
    Json train_cfg = {{"train", {{"steps", 0}}}, {"calibration_samples", 2}};
    run_cmd("train", train_cfg, {{"dataset", (dir.path / "data").string()}}, dir.path / "train");
    const std::string ckpt = (dir.path / "train" / "checkpoint.ckpt").string();
    REQUIRE(fs::exists(ckpt));

    run_cmd("infer", {{"ct_score", 1.0}}, {{"checkpoint", ckpt}, {"dataset", (dir.path / "data").string()}},
            dir.path / "infer");
    CHECK(csv_rows(dir.path / "infer" / "detections.csv") == 0);
    CHECK(fs::exists(dir.path / "infer" / "geojson" / "patch_0000.geojson"));
    const auto empty = parse_geojson(read_text_file((dir.path / "infer" / "geojson" / "patch_0000.geojson").string()));
    CHECK(empty.features.empty());

    CHECK(rerun(dir.path / "infer" / "manifest.json", dir.path / "infer_again").empty());
    CHECK(rerun(dir.path / "train" / "manifest.json", dir.path / "train_again").empty());
    CHECK_THROWS_KIND(rerun(dir.path / "infer" / "manifest.json", dir.path / "infer"), Usage);
}

TEST_CASE("a command missing an input is a usage error") {
    TempDir dir;
    CHECK_THROWS_KIND(run({"train", default_config("train"), {}, dir.path / "t"}), Usage);
}
