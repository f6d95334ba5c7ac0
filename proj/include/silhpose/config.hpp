#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "silhpose/camera.hpp"
#include "silhpose/geometry.hpp"
#include "silhpose/orientlib.hpp"
#include "silhpose/rotation.hpp"
#include "silhpose/synthbench.hpp"
#include "silhpose/track.hpp"

namespace silhpose {

inline constexpr const char* kVersion = "0.1.0";

/// Fully validated run configuration. Unknown keys and invariant violations
/// are rejected at parse time with the offending key path.
struct RunConfig {
    std::string mode;  // track | bench | render | library | report
    uint64_t seed = 1;
    int workers = 0;  // 0 = hardware concurrency
    std::string out_dir = "out";

    // bench
    std::string bench_study = "static";
    BenchSpec bench;
    std::vector<int> image_sizes{30, 60, 100};
    std::vector<double> noise_sigmas{0.0, 0.1, 0.2, 0.3};
    int noise_seeds = 3;
    std::string library_cache_dir;

    // render / library
    std::string particle = "chiral_right";
    std::string model_file;
    std::string rig_name = "near_planar_4";
    std::string calibration_file;
    Quaternion orientation = Quaternion::identity();
    int image_size = 100;
    std::string image_format = "pgm";
    LibraryParams library_params;

    // track
    std::vector<std::string> camera_dirs;
    std::vector<std::string> track_models{"tetrad"};
    double frame_rate = 1.0;
    int max_frames = -1;
    SegmentationParams segmentation;
    ProcessParams process;
    LinkParams link;

    // report
    std::string track_file;

    nlohmann::json snapshot;  // validated config, for the manifest
};

RunConfig parse_config(const std::string& path);
RunConfig parse_config_json(const nlohmann::json& j, const std::string& where);

/// Executes the configured run, writing all artifacts (and a manifest
/// sufficient to reproduce them bit-identically) under out_dir. Returns the
/// process exit status; per-particle soft failures in track mode do not make
/// it nonzero.
int run(const RunConfig& config);

}  // namespace silhpose
