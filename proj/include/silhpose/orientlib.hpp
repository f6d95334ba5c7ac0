#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "silhpose/camera.hpp"
#include "silhpose/cost.hpp"
#include "silhpose/geometry.hpp"
#include "silhpose/rotation.hpp"

namespace silhpose {

struct LibraryParams {
    int n_axes = 100;
    int n_angles = 16;
    int resolution = 100;
    double dedup_tol = 1e-6;  // rad, symmetry-reduced near-duplicate removal
};

struct LibraryEntry {
    Quaternion q;
    std::vector<Mask> per_camera;  // cost-ready masks at the library resolution
};

/// Precomputed grid of rendered standard orientations used for cold-start
/// first guesses. Entries store the comparison-ready masks so queries skip
/// the crop/resize step.
struct OrientationLibrary {
    std::string particle_type;
    uint64_t fingerprint = 0;      // model + rig + params
    uint64_t rig_fingerprint = 0;  // rig parameters only
    int resolution = 100;
    int camera_count = 0;
    int n_axes = 0;
    int n_angles = 0;
    std::vector<LibraryEntry> entries;
};

uint64_t model_fingerprint(const ParticleModel& m);
uint64_t library_fingerprint(const ParticleModel& m, const CameraRig& rig,
                             const LibraryParams& params);

/// The standard-orientation quaternion grid: fibonacci_axes(n_axes) crossed
/// with n_angles rotation angles equally distributed over (-pi, pi)
/// (midpoint-offset so no grid point duplicates the identity or pairs up at
/// +-pi), with symmetry-equivalent near-duplicates removed.
std::vector<Quaternion> standard_orientations(const SymmetryGroup& sym, const LibraryParams& params);

OrientationLibrary build_library(const ParticleModel& m, const CameraRig& rig,
                                 const LibraryParams& params = {}, int workers = 1);

struct Guess {
    Quaternion q;
    double total_error = 0.0;
};

/// The k library entries with lowest total silhouette error against the
/// observed cutouts, ascending. Rejects rig fingerprint mismatches and
/// observed lists of the wrong length.
std::vector<Guess> best_guesses(const OrientationLibrary& lib, const CameraRig& rig,
                                const std::vector<SilhouetteImage>& observed, int k = 4);

/// Same query on already-prepared masks.
std::vector<Guess> best_guesses_prepared(const OrientationLibrary& lib,
                                         const std::vector<Mask>& observed, int k);

/// Versioned binary cache.
void save_library(const OrientationLibrary& lib, const std::string& path);
OrientationLibrary load_library(const std::string& path);

}  // namespace silhpose
