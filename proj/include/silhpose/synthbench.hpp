#pragma once

#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "silhpose/camera.hpp"
#include "silhpose/geometry.hpp"
#include "silhpose/image.hpp"
#include "silhpose/optimize.hpp"
#include "silhpose/orientlib.hpp"
#include "silhpose/rng.hpp"
#include "silhpose/rotation.hpp"

namespace silhpose {

struct BenchSpec {
    ParticleKind kind = ParticleKind::chiral_right;
    RigPreset rig = RigPreset::near_planar_4;
    int image_size = 60;       // square, px
    int n_orientations = 200;  // desk-scale default; the full-scale studies used 5000
    double noise_sigma = 0.0;  // grayscale std-dev on edge pixels
    uint64_t seed = 1;
    int cameras_used = 0;             // 0 = all cameras of the preset
    double com_offset_fraction = 0.2; // position offset for the coupling study
    LibraryParams library;
    RefineOptions refine;

    void validate() const;
};

struct BenchResult {
    std::vector<double> theta_err_deg;      // symmetry-reduced, per case index
    std::vector<double> theta_err_raw_deg;  // identity-group angle
    double mean_deg = 0.0;
    double median_deg = 0.0;
    std::vector<double> hist_edges;    // n_bins + 1
    std::vector<double> hist_density;  // integrates to 1
    int failure_count = 0;             // theta_err > failure_threshold_deg
    double failure_threshold_deg = 10.0;
    double runtime_seconds = 0.0;  // informational; never serialized
};

/// The rig a spec renders with: preset pointed at the origin with the focal
/// length scaled so the particle spans ~fill * image_size pixels.
CameraRig rig_for_spec(const BenchSpec& spec);

/// Deterministic synthetic case: truth orientation depends only on
/// (seed, i), so different rigs and image sizes share truths.
struct BenchCase {
    Quaternion truth;
    std::vector<SilhouetteImage> observed;
};
BenchCase make_case(const BenchSpec& spec, int i, const CameraRig& rig, const ParticleModel& m);

/// Gaussian noise on the anti-aliased rim only: pixels strictly inside
/// (0, 1) are perturbed with std-dev sigma and clamped; pure black/white
/// pixels stay untouched.
SilhouetteImage add_edge_noise(const SilhouetteImage& img, double sigma, Rng& rng);

/// In-memory (optionally disk-backed) library store keyed by fingerprint.
class LibraryCache {
public:
    explicit LibraryCache(std::string disk_dir = "") : disk_dir_(std::move(disk_dir)) {}
    const OrientationLibrary& get(const ParticleModel& m, const CameraRig& rig,
                                  const LibraryParams& params, int workers);

private:
    std::map<uint64_t, OrientationLibrary> mem_;
    std::string disk_dir_;
    std::mutex mutex_;
};

/// Full cold-start benchmark: per case, library guesses then Nelder-Mead
/// refinement; theta_err against the known truth with the particle's
/// symmetry group. Deterministic for a fixed seed and any worker count.
BenchResult run_bench(const BenchSpec& spec, int workers = 1, LibraryCache* cache = nullptr);

/// The arrangement study: identical truths run through single (chirality
/// supplied), orthogonal_2, orthogonal_3, near_planar_4 and tetrahedral_4.
std::map<std::string, BenchResult> bench_arrangements(const BenchSpec& spec_template,
                                                      int workers = 1,
                                                      LibraryCache* cache = nullptr);

struct AppendixAReport {
    // (a) position error -> camera vector deviation
    double position_offset_world = 0.0;
    double camera_vector_deviation_deg = 0.0;
    // (b) orientation error -> projected-COM displacement
    struct SizeEntry {
        int image_size = 0;
        double mean_theta_err_deg = 0.0;
        double mean_displacement_pct = 0.0;  // of image size, averaged over cameras
    };
    std::vector<SizeEntry> sizes;
};

/// Position<->orientation error coupling. Part (b) reuses the measured mean
/// theta_err of each image size (supplied, or measured here with run_bench).
AppendixAReport appendix_a_coupling(const BenchSpec& spec, const std::vector<int>& image_sizes,
                                    const std::vector<double>& mean_theta_err_deg, int workers = 1,
                                    LibraryCache* cache = nullptr);

struct AppendixBReport {
    struct Entry {
        ParticleKind kind;
        int image_size = 0;
        double mean_deg = 0.0;
        double median_deg = 0.0;
    };
    std::vector<Entry> entries;
};

/// Mean orientation error per shape (chiral, tetrad, oloid) and image size.
AppendixBReport appendix_b_shapes(const BenchSpec& spec_template,
                                  const std::vector<int>& image_sizes, int workers = 1,
                                  LibraryCache* cache = nullptr);

void write_bench_samples_csv(const BenchResult& r, const std::string& path);
void write_bench_stats_json(const BenchResult& r, const std::string& path);
void write_bench_hist_csv(const BenchResult& r, const std::string& path);

/// Synthetic multi-camera sequence of one rigid particle rotating at a
/// constant rate about a fixed axis while drifting, for end-to-end tracking
/// runs and their ground truth.
struct SequenceSpec {
    ParticleKind kind = ParticleKind::tetrad;
    RigPreset rig = RigPreset::orthogonal_3;
    int image_size = 120;
    int n_frames = 100;
    double rot_deg_per_frame = 1.0;
    Vec3 rotation_axis{0.26726124191242440, 0.53452248382484879, 0.80178372573726599};
    Vec3 velocity{0.02, 0.0, 0.01};  // world units per frame
    double noise_sigma = 0.0;
    uint64_t seed = 7;
};

struct SyntheticSequence {
    CameraRig rig;
    std::vector<std::vector<SilhouetteImage>> frames;  // [frame][camera]
    std::vector<Quaternion> truth_q;
    std::vector<Vec3> truth_pos;
};

SyntheticSequence synth_sequence(const SequenceSpec& spec);

}  // namespace silhpose
