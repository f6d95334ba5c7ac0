#include "silhpose/synthbench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "silhpose/cost.hpp"
#include "silhpose/parallel.hpp"
#include "silhpose/render.hpp"

namespace silhpose {

void BenchSpec::validate() const {
    if (n_orientations < 1) {
        throw std::runtime_error("bench spec: n_orientations must be >= 1");
    }
    if (image_size < 8) {
        throw std::runtime_error("bench spec: image_size must be >= 8, got " +
                                 std::to_string(image_size));
    }
    if (noise_sigma < 0.0) {
        throw std::runtime_error("bench spec: noise_sigma must be >= 0");
    }
}

CameraRig rig_for_spec(const BenchSpec& spec) {
    const ParticleModel model = builtin_model(spec.kind);
    RigOptions opts;
    opts.image_px = spec.image_size;
    opts.particle_extent = model_extent(model);
    CameraRig rig = preset_rig(spec.rig, opts);
    if (spec.cameras_used > 0) {
        if (spec.cameras_used > static_cast<int>(rig.cameras.size())) {
            throw std::runtime_error("bench spec: cameras_used exceeds the preset camera count");
        }
        rig.cameras.resize(static_cast<size_t>(spec.cameras_used));
    }
    return rig;
}

SilhouetteImage add_edge_noise(const SilhouetteImage& img, double sigma, Rng& rng) {
    if (sigma < 0.0) {
        throw std::invalid_argument("add_edge_noise: sigma must be >= 0");
    }
    SilhouetteImage out = img;
    if (sigma == 0.0) {
        return out;
    }
    for (float& v : out.pixels) {
        if (v > 0.0f && v < 1.0f) {
            const double noisy = static_cast<double>(v) + sigma * rng.gaussian();
            v = static_cast<float>(std::clamp(noisy, 0.0, 1.0));
        }
    }
    return out;
}

BenchCase make_case(const BenchSpec& spec, int i, const CameraRig& rig, const ParticleModel& m) {
    BenchCase c;
    Rng truth_rng(mix_seed(spec.seed, static_cast<uint64_t>(i)));
    c.truth = random_orientation(truth_rng);
    c.observed.reserve(rig.cameras.size());
    for (size_t cam = 0; cam < rig.cameras.size(); ++cam) {
        SilhouetteImage img = render_silhouette(m, c.truth, rig.cameras[cam], spec.image_size);
        if (spec.noise_sigma > 0.0) {
            Rng noise_rng(mix_seed(spec.seed, static_cast<uint64_t>(i), 0x9055 + cam));
            img = add_edge_noise(img, spec.noise_sigma, noise_rng);
        }
        c.observed.push_back(std::move(img));
    }
    return c;
}

const OrientationLibrary& LibraryCache::get(const ParticleModel& m, const CameraRig& rig,
                                            const LibraryParams& params, int workers) {
    const uint64_t fp = library_fingerprint(m, rig, params);
    {
        std::lock_guard<std::mutex> lock(mutex_);
        const auto it = mem_.find(fp);
        if (it != mem_.end()) {
            return it->second;
        }
    }
    OrientationLibrary lib;
    bool loaded = false;
    std::string path;
    if (!disk_dir_.empty()) {
        path = disk_dir_ + "/library_" + std::to_string(fp) + ".bin";
        if (std::filesystem::exists(path)) {
            lib = load_library(path);
            loaded = lib.fingerprint == fp;
        }
    }
    if (!loaded) {
        lib = build_library(m, rig, params, workers);
        if (!disk_dir_.empty()) {
            std::filesystem::create_directories(disk_dir_);
            save_library(lib, path);
        }
    }
    std::lock_guard<std::mutex> lock(mutex_);
    return mem_.emplace(fp, std::move(lib)).first->second;
}

namespace {

void finalize_stats(BenchResult& r) {
    const size_t n = r.theta_err_deg.size();
    if (n == 0) {
        return;
    }
    double sum = 0.0;
    for (double v : r.theta_err_deg) {
        sum += v;
        if (v > r.failure_threshold_deg) {
            ++r.failure_count;
        }
    }
    r.mean_deg = sum / static_cast<double>(n);
    std::vector<double> sorted = r.theta_err_deg;
    std::sort(sorted.begin(), sorted.end());
    r.median_deg = (n % 2 == 1) ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);

    const int n_bins = 48;
    const double hi = std::max(sorted.back(), 1e-9);
    r.hist_edges.resize(n_bins + 1);
    for (int b = 0; b <= n_bins; ++b) {
        r.hist_edges[static_cast<size_t>(b)] = hi * b / n_bins;
    }
    std::vector<int> counts(n_bins, 0);
    for (double v : r.theta_err_deg) {
        int b = static_cast<int>(v / hi * n_bins);
        b = std::clamp(b, 0, n_bins - 1);
        ++counts[static_cast<size_t>(b)];
    }
    const double width = hi / n_bins;
    r.hist_density.resize(n_bins);
    for (int b = 0; b < n_bins; ++b) {
        r.hist_density[static_cast<size_t>(b)] =
            counts[static_cast<size_t>(b)] / (static_cast<double>(n) * width);
    }
}

}  // namespace

BenchResult run_bench(const BenchSpec& spec, int workers, LibraryCache* cache) {
    spec.validate();
    const auto t0 = std::chrono::steady_clock::now();

    const ParticleModel model = builtin_model(spec.kind);
    const CameraRig rig = rig_for_spec(spec);
    LibraryCache local_cache;
    if (cache == nullptr) {
        cache = &local_cache;
    }
    const OrientationLibrary& lib = cache->get(model, rig, spec.library, workers);
    const SymmetryGroup& sym = model_symmetry(model);

    BenchResult result;
    result.theta_err_deg.resize(static_cast<size_t>(spec.n_orientations));
    result.theta_err_raw_deg.resize(static_cast<size_t>(spec.n_orientations));
    parallel_for(static_cast<size_t>(spec.n_orientations), workers, [&](size_t i) {
        const BenchCase c = make_case(spec, static_cast<int>(i), rig, model);
        const RigCostContext ctx(rig, c.observed);
        const std::vector<Guess> guesses = best_guesses_prepared(lib, ctx.observed_masks(), 4);
        std::vector<Quaternion> qs;
        qs.reserve(guesses.size());
        for (const Guess& g : guesses) {
            qs.push_back(g.q);
        }
        const FitResult fit = refine_with_context(model, ctx, qs, spec.refine);
        result.theta_err_deg[i] = rad_to_deg(angle_between(fit.q, c.truth, sym));
        result.theta_err_raw_deg[i] = rad_to_deg(angle_between(fit.q, c.truth));
    });
    finalize_stats(result);
    result.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

std::map<std::string, BenchResult> bench_arrangements(const BenchSpec& spec_template, int workers,
                                                      LibraryCache* cache) {
    LibraryCache local_cache;
    if (cache == nullptr) {
        cache = &local_cache;
    }
    // The single-camera case is run with the particle's handedness supplied:
    // the bench always refines the true model, so no classification happens.
    const RigPreset presets[5] = {RigPreset::single, RigPreset::orthogonal_2,
                                  RigPreset::orthogonal_3, RigPreset::near_planar_4,
                                  RigPreset::tetrahedral_4};
    std::map<std::string, BenchResult> out;
    for (const RigPreset p : presets) {
        BenchSpec spec = spec_template;
        spec.rig = p;
        spec.cameras_used = 0;
        out[to_string(p)] = run_bench(spec, workers, cache);
    }
    return out;
}

AppendixAReport appendix_a_coupling(const BenchSpec& spec, const std::vector<int>& image_sizes,
                                    const std::vector<double>& mean_theta_err_deg, int workers,
                                    LibraryCache* cache) {
    AppendixAReport report;
    const ParticleModel model = builtin_model(spec.kind);

    // (a) A centroid error of com_offset_fraction of the image footprint,
    // applied perpendicular to the viewing direction, tilts the camera
    // vector by atan(offset / working distance).
    {
        const CameraRig rig = rig_for_spec(spec);
        double dev_sum = 0.0;
        double offset_sum = 0.0;
        for (const CameraModel& cam : rig.cameras) {
            const double distance = (cam.position - Vec3{0, 0, 0}).norm();
            const double footprint_world = spec.image_size * distance / cam.focal_length;
            const double offset = spec.com_offset_fraction * footprint_world;
            offset_sum += offset;
            dev_sum += rad_to_deg(std::atan2(offset, distance));
        }
        report.position_offset_world = offset_sum / static_cast<double>(rig.cameras.size());
        report.camera_vector_deviation_deg = dev_sum / static_cast<double>(rig.cameras.size());
    }

    // (b) Rotate reference orientations by each size's measured mean
    // orientation error and average the projected-COM displacement.
    LibraryCache local_cache;
    if (cache == nullptr) {
        cache = &local_cache;
    }
    for (size_t s = 0; s < image_sizes.size(); ++s) {
        BenchSpec size_spec = spec;
        size_spec.image_size = image_sizes[s];
        double mean_deg = 0.0;
        if (s < mean_theta_err_deg.size() && mean_theta_err_deg[s] >= 0.0) {
            mean_deg = mean_theta_err_deg[s];
        } else {
            mean_deg = run_bench(size_spec, workers, cache).mean_deg;
        }
        const CameraRig rig = rig_for_spec(size_spec);
        const double err_rad = deg_to_rad(mean_deg);
        const Vec3 com = model_com(model);

        constexpr int kReference = 1000;
        constexpr int kPerturbations = 100;
        std::vector<double> sums(static_cast<size_t>(kReference), 0.0);
        parallel_for(static_cast<size_t>(kReference), workers, [&](size_t r) {
            Rng rng(mix_seed(size_spec.seed, 0xA11Au + r));
            const Quaternion q_ref = random_orientation(rng);
            const Vec3 com_ref = rotate_point(q_ref, com);
            double acc = 0.0;
            for (int p = 0; p < kPerturbations; ++p) {
                // Random axis, fixed angle = the measured mean error.
                Vec3 axis;
                for (;;) {
                    axis = {rng.gaussian(), rng.gaussian(), rng.gaussian()};
                    if (axis.norm() > 1e-6) {
                        break;
                    }
                }
                const Quaternion q_pert = from_axis_angle(axis.normalized(), err_rad) * q_ref;
                const Vec3 com_pert = rotate_point(q_pert, com);
                for (const CameraModel& cam : rig.cameras) {
                    const Vec2 a = project_point(cam, com_ref);
                    const Vec2 b = project_point(cam, com_pert);
                    acc += (a - b).norm();
                }
            }
            sums[r] = acc / (kPerturbations * static_cast<double>(rig.cameras.size()));
        });
        double mean_px = 0.0;
        for (double v : sums) {
            mean_px += v;
        }
        mean_px /= kReference;

        AppendixAReport::SizeEntry entry;
        entry.image_size = image_sizes[s];
        entry.mean_theta_err_deg = mean_deg;
        entry.mean_displacement_pct = 100.0 * mean_px / image_sizes[s];
        report.sizes.push_back(entry);
    }
    return report;
}

AppendixBReport appendix_b_shapes(const BenchSpec& spec_template,
                                  const std::vector<int>& image_sizes, int workers,
                                  LibraryCache* cache) {
    LibraryCache local_cache;
    if (cache == nullptr) {
        cache = &local_cache;
    }
    AppendixBReport report;
    const ParticleKind kinds[3] = {ParticleKind::chiral_right, ParticleKind::tetrad,
                                   ParticleKind::oloid};
    for (const ParticleKind kind : kinds) {
        for (const int size : image_sizes) {
            BenchSpec spec = spec_template;
            spec.kind = kind;
            spec.image_size = size;
            const BenchResult r = run_bench(spec, workers, cache);
            report.entries.push_back({kind, size, r.mean_deg, r.median_deg});
        }
    }
    return report;
}

void write_bench_samples_csv(const BenchResult& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write bench samples: " + path);
    }
    out.precision(17);
    out << "case_index,theta_err_deg,theta_err_raw_deg\n";
    for (size_t i = 0; i < r.theta_err_deg.size(); ++i) {
        out << i << "," << r.theta_err_deg[i] << "," << r.theta_err_raw_deg[i] << "\n";
    }
}

void write_bench_stats_json(const BenchResult& r, const std::string& path) {
    nlohmann::json j;
    j["n"] = r.theta_err_deg.size();
    j["mean_deg"] = r.mean_deg;
    j["median_deg"] = r.median_deg;
    j["failure_count"] = r.failure_count;
    j["failure_threshold_deg"] = r.failure_threshold_deg;
    // Runtime stays out of the file so fixed-seed runs are bit-identical.
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write bench stats: " + path);
    }
    out << j.dump(2) << "\n";
}

void write_bench_hist_csv(const BenchResult& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write bench histogram: " + path);
    }
    out.precision(17);
    out << "bin_lo_deg,bin_hi_deg,density\n";
    for (size_t b = 0; b < r.hist_density.size(); ++b) {
        out << r.hist_edges[b] << "," << r.hist_edges[b + 1] << "," << r.hist_density[b] << "\n";
    }
}

SyntheticSequence synth_sequence(const SequenceSpec& spec) {
    SyntheticSequence seq;
    BenchSpec rig_spec;
    rig_spec.kind = spec.kind;
    rig_spec.rig = spec.rig;
    rig_spec.image_size = spec.image_size;
    seq.rig = rig_for_spec(rig_spec);
    const ParticleModel model = builtin_model(spec.kind);

    Rng rng(mix_seed(spec.seed, 0x5EC0ULL));
    const Quaternion q0 = random_orientation(rng);
    const Vec3 axis = spec.rotation_axis.normalized();
    const double step = deg_to_rad(spec.rot_deg_per_frame);

    // Each camera gets a sensor just large enough to cover the whole drift;
    // the cameras are rebased so the emitted frames are full-sensor images
    // (pixel coordinates survive plain image files).
    const Vec3 total_drift = spec.velocity * static_cast<double>(spec.n_frames);
    std::vector<RenderWindow> windows;
    for (CameraModel& cam : seq.rig.cameras) {
        const Vec2 p0 = project_point(cam, Vec3{0, 0, 0});
        const Vec2 p1 = project_point(cam, total_drift);
        const double motion = std::max(std::abs(p1.x - p0.x), std::abs(p1.y - p0.y));
        const int size = spec.image_size + 2 * (static_cast<int>(std::ceil(motion)) + 8);
        const int origin_x = static_cast<int>(std::lround(0.5 * (p0.x + p1.x))) - size / 2;
        const int origin_y = static_cast<int>(std::lround(0.5 * (p0.y + p1.y))) - size / 2;
        cam.principal_point.x -= origin_x;
        cam.principal_point.y -= origin_y;
        cam.sensor_width = size;
        cam.sensor_height = size;
        windows.push_back({0, 0, size, size});
    }

    for (int f = 0; f < spec.n_frames; ++f) {
        const Quaternion q =
            (from_axis_angle(axis, step * f) * q0).canonical();
        const Vec3 pos = spec.velocity * static_cast<double>(f);
        seq.truth_q.push_back(q);
        seq.truth_pos.push_back(pos);
        std::vector<SilhouetteImage> images;
        for (size_t c = 0; c < seq.rig.cameras.size(); ++c) {
            SilhouetteImage img = render_window(model, q, seq.rig.cameras[c], windows[c], pos);
            if (spec.noise_sigma > 0.0) {
                Rng noise_rng(mix_seed(spec.seed, static_cast<uint64_t>(f), 0xF00D + c));
                img = add_edge_noise(img, spec.noise_sigma, noise_rng);
            }
            images.push_back(std::move(img));
        }
        seq.frames.push_back(std::move(images));
    }
    return seq;
}

}  // namespace silhpose
