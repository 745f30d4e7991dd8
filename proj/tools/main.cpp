#include "commands.hpp"

#include "circlesnake/data_io.hpp"
#include "circlesnake/error.hpp"
#include "circlesnake/synth.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>

namespace {

using namespace csnake;
using namespace csnake::cli;

constexpr const char* kOutEnv = "CIRCLESNAKE_OUT";

struct CommonArgs {
    std::string config_path;
    std::string out;
    std::vector<std::string> sets;
    std::map<std::string, std::string> inputs;
};

fs::path default_out(const std::string& command) {
    const char* root = std::getenv(kOutEnv);
    return fs::path(root && *root ? root : "circlesnake-out") / command;
}

Json effective_config(Json cfg, const CommonArgs& args, const Json& flag_patch) {
    if (!args.config_path.empty()) {
        Json file;
        try {
            file = Json::parse(read_text_file(args.config_path));
        } catch (const nlohmann::json::exception& e) {
            fail(Error::Kind::Usage, args.config_path + ": invalid JSON: " + e.what());
        }
        cfg = merge_config(cfg, file);
    }
    for (const auto& s : args.sets) {
        apply_assignment(cfg, s);
    }
    return merge_config(cfg, flag_patch);
}

int exit_code(const Error& e) {
    switch (e.kind()) {
    case Error::Kind::Usage:
    case Error::Kind::Schema:
        return 2;
    default:
        return 1;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Circle-representation cell detection and counting toolkit"};
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);

    std::map<std::string, CommonArgs> args;
    std::map<std::string, CLI::App*> subs;
    const auto add = [&](const std::string& name, const std::string& help) {
        CLI::App* sub = app.add_subcommand(name, help);
        CommonArgs& a = args[name];
        sub->add_option("--config", a.config_path, "JSON config merged over the defaults")->check(CLI::ExistingFile);
        sub->add_option("--out", a.out, std::string("Output directory (default $") + kOutEnv + "/" + name + ")");
        sub->add_option("--set", a.sets, "Override one config field, e.g. train.steps=100");
        for (const auto& role : required_inputs(name)) {
            sub->add_option("--" + role, a.inputs[role], "Input " + role)->required()->check(CLI::ExistingPath);
        }
        subs[name] = sub;
        return sub;
    };

    std::optional<int> synth_count;
    std::optional<std::uint64_t> synth_seed;
    std::string synth_preset_name;
    CLI::App* synth = add("synth", "Generate a synthetic dataset with COCO truth");
    synth->add_option("--count", synth_count, "Number of patches");
    synth->add_option("--seed", synth_seed, "Patch generator seed");
    synth->add_option("--preset", synth_preset_name, "Start the patch generator from a named preset");

    std::optional<std::size_t> train_steps;
    std::optional<std::uint64_t> train_seed;
    CLI::App* train = add("train", "Train the toy model on a synthetic dataset");
    train->add_option("--steps", train_steps, "Optimizer steps");
    train->add_option("--seed", train_seed, "Batch sampling seed");

    std::optional<double> infer_ct;
    CLI::App* infer = add("infer", "Detect cells and export GeoJSON and CSV");
    infer->add_option("--ct-score", infer_ct, "Detection score threshold");

    add("eval", "Correlate machine and human counts across ct_score thresholds");
    add("shift-study", "Measure detection F1 under stain shifts");

    std::string convert_from;
    CLI::App* convert = add("convert", "Convert annotations between COCO and GeoJSON");
    convert->add_option("--from", convert_from, "Input format")->check(CLI::IsMember({"coco", "geojson"}));

    std::string manifest_path;
    std::string rerun_out;
    CLI::App* rerun_cmd = app.add_subcommand("rerun", "Repeat a manifest and compare output bytes");
    rerun_cmd->add_option("manifest", manifest_path, "manifest.json of an earlier run")->required()->check(CLI::ExistingFile);
    rerun_cmd->add_option("--out", rerun_out, "Output directory for the repeat")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (rerun_cmd->parsed()) {
            const auto bad = csnake::cli::rerun(manifest_path, rerun_out);
            for (const auto& p : bad) {
                std::cerr << "mismatch: " << p << '\n';
            }
            std::cout << (bad.empty() ? "reproduced " : "differs ") << manifest_path << '\n';
            return bad.empty() ? 0 : 1;
        }
        for (const auto& [name, sub] : subs) {
            if (!sub->parsed()) {
                continue;
            }
            const CommonArgs& a = args.at(name);
            Json patch = Json::object();
            if (name == "synth") {
                if (synth_count) {
                    patch["count"] = *synth_count;
                }
                if (synth_seed) {
                    patch["synth"]["seed"] = *synth_seed;
                }
            } else if (name == "train") {
                if (train_steps) {
                    patch["train"]["steps"] = *train_steps;
                }
                if (train_seed) {
                    patch["train"]["seed"] = *train_seed;
                }
            } else if (name == "infer" && infer_ct) {
                patch["ct_score"] = *infer_ct;
            } else if (name == "convert" && !convert_from.empty()) {
                patch["from"] = convert_from;
            }
            RunRequest req;
            req.command = name;
            Json base = default_config(name);
            if (name == "synth" && !synth_preset_name.empty()) {
                // A preset replaces the whole synth block before file and flag overrides.
                base["synth"] = to_json(synth_preset(synth_preset_name));
            }
            req.config = effective_config(base, a, patch);
            for (const auto& [role, path] : a.inputs) {
                req.inputs[role] = fs::absolute(path).lexically_normal().string();
            }
            req.out_dir = a.out.empty() ? default_out(name) : fs::path(a.out);
            const auto records = run(req);
            std::cout << name << ": wrote " << records.size() << " files to " << req.out_dir.string() << '\n';
        }
        return 0;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
