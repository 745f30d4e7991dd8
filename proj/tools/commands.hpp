#pragma once

#include "circlesnake/json_util.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace csnake::cli {

namespace fs = std::filesystem;

inline constexpr const char* kToolVersion = "circlesnake 0.1.0";

struct RunRequest {
    std::string command;
    Json config;                                // effective, after file and flag merges
    std::map<std::string, std::string> inputs;  // role -> absolute path
    fs::path out_dir;
};

struct OutputRecord {
    std::string path; // relative to out_dir
    std::uintmax_t bytes = 0;
    std::string fnv1a64;
};

// Default configuration of a command; keys absent here are rejected.
Json default_config(const std::string& command);
// Input roles a command requires.
std::vector<std::string> required_inputs(const std::string& command);

// Overlays `patch` onto `base` recursively; unknown keys are a Usage error
// unless base holds null or an object marked open at that point.
Json merge_config(const Json& base, const Json& patch, const std::string& path = "");
// "a.b.c=value": the value parses as JSON, falling back to a plain string.
void apply_assignment(Json& config, const std::string& assignment);

// Runs the command, writes all outputs plus manifest.json, and returns the
// output records (manifest excluded).
std::vector<OutputRecord> run(const RunRequest& request);

// Re-executes a manifest into `out_dir` and compares output hashes.
// Returns the paths whose bytes differ (empty on success).
std::vector<std::string> rerun(const fs::path& manifest, const fs::path& out_dir);

std::string fnv1a64_file(const fs::path& path);

} // namespace csnake::cli
