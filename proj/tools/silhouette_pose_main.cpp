#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "silhpose/config.hpp"

int main(int argc, char** argv) {
    CLI::App app{"silhouette-pose: 3D position and orientation tracking of anisotropic "
                 "particles from multi-camera silhouettes"};
    app.set_version_flag("--version", silhpose::kVersion);

    std::string mode;
    std::string config_path;
    std::string out_dir;
    int64_t seed = -1;
    int workers = -1;

    app.add_option("mode", mode, "Run mode: track | bench | render | library | report")
        ->required();
    app.add_option("--config", config_path, "JSON configuration file")->required();
    app.add_option("--seed", seed, "Override the config seed");
    app.add_option("--workers", workers, "Worker thread count (0 = all cores)");
    app.add_option("--out", out_dir, "Output directory override");

    CLI11_PARSE(app, argc, argv);

    try {
        std::ifstream in(config_path);
        if (!in) {
            throw std::runtime_error("cannot open config file: " + config_path);
        }
        nlohmann::json j = nlohmann::json::parse(in);
        // Command-line flags take precedence over config file keys.
        j["mode"] = mode;
        if (seed >= 0) {
            j["seed"] = static_cast<uint64_t>(seed);
        }
        if (workers >= 0) {
            j["workers"] = workers;
        }
        if (!out_dir.empty()) {
            j["out_dir"] = out_dir;
        }
        const silhpose::RunConfig cfg = silhpose::parse_config_json(j, config_path);
        return silhpose::run(cfg);
    } catch (const std::exception& e) {
        nlohmann::json err;
        err["error"] = e.what();
        err["config"] = config_path;
        std::cerr << err.dump() << "\n";
        return 1;
    }
}
