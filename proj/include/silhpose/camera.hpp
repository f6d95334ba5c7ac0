#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "silhpose/vec.hpp"

namespace silhpose {

/// Straight-ray pinhole camera. Calibrations supplied to the pipeline must
/// already be effective pinhole parameters (no refraction model here).
struct CameraModel {
    Vec3 position;
    Vec3 view_direction;  // unit, toward the scene
    Vec3 up;              // unit, orthogonal to view_direction
    double focal_length = 1.0;  // pixels
    Vec2 principal_point;
    int sensor_width = 1024;
    int sensor_height = 1024;

    /// Pixel-x direction in world space (right-handed with view and up;
    /// pixel y runs down the image, along -up).
    Vec3 right() const { return cross(view_direction, up); }

    void validate() const;
};

struct CameraRig {
    std::vector<CameraModel> cameras;
};

struct Ray {
    Vec3 origin;
    Vec3 direction;  // unit
};

/// Perspective projection to sensor pixels. The point must be strictly in
/// front of the camera (positive depth along view_direction).
Vec2 project_point(const CameraModel& cam, const Vec3& p);

/// Depth of p along the camera's viewing direction.
double point_depth(const CameraModel& cam, const Vec3& p);

/// Ray from the camera center through the given pixel.
Ray back_project(const CameraModel& cam, const Vec2& px);

struct Triangulation {
    Vec3 point;
    double rms_gap = 0.0;  // root-mean-square point-to-ray distance
};

/// Least-squares closest point to >= 2 rays. Rejects bundles in which every
/// pair of rays is parallel within 1e-6 rad.
Triangulation triangulate(const std::vector<Ray>& rays);

enum class RigPreset { near_planar_4, orthogonal_2, orthogonal_3, tetrahedral_4, single };

RigPreset rig_preset_from_string(const std::string& s);
std::string to_string(RigPreset preset);

/// Controls for preset construction. Focal lengths are chosen so a particle
/// of `particle_extent` world units at the origin spans `fill * image_px`
/// pixels on each camera.
struct RigOptions {
    double distance = 500.0;      // working distance, world units
    double image_px = 100.0;      // target particle image size in pixels
    double fill = 0.8;            // fraction of the image the particle spans
    double particle_extent = 5.0; // world units
    int sensor = 1024;
};

/// Cameras aimed at the world origin at equal working distance.
/// near_planar_4 runs along the arc (-25, -9, +9, +25 degrees of azimuth)
/// so the camera-count subsets {1,2} and {1,2,3} widen their viewing span
/// with every added camera.
CameraRig preset_rig(RigPreset preset, const RigOptions& opts = {});

struct CentroidMatch {
    std::vector<int> indices;  // one centroid index per camera
    Vec3 point;
    double rms_gap = 0.0;
};

/// Match one 2D centroid per camera into particle candidates by smallest
/// triangulation gap. Groups with rms_gap > gap_tol are discarded and each
/// centroid is used at most once. Only full-rig groups are emitted.
std::vector<CentroidMatch> match_centroids(const CameraRig& rig,
                                           const std::vector<std::vector<Vec2>>& per_camera,
                                           double gap_tol);

/// match_centroids plus overlap detection: a winner is flagged when another
/// geometrically consistent candidate tuple claims one of its centroids
/// (two 3D candidates sharing a blob cannot be disentangled).
struct CentroidMatchSet {
    std::vector<CentroidMatch> matches;
    std::vector<bool> overlap_flag;  // aligned with matches
};
CentroidMatchSet match_centroids_detailed(const CameraRig& rig,
                                          const std::vector<std::vector<Vec2>>& per_camera,
                                          double gap_tol);

/// Calibration file I/O ("silhpose-calibration v1" structured text).
CameraRig load_calibration(const std::string& path);
void save_calibration(const CameraRig& rig, const std::string& path);

/// Stable hash of all rig parameters, used to key orientation libraries.
uint64_t rig_fingerprint(const CameraRig& rig);

}  // namespace silhpose
