#pragma once

#include <cstdint>
#include <vector>

#include "silhpose/camera.hpp"
#include "silhpose/geometry.hpp"
#include "silhpose/image.hpp"
#include "silhpose/rotation.hpp"

namespace silhpose {

/// Per-pixel exact Euclidean distance to the nearest value-1 pixel of a
/// binary image; 0 at white pixels. all_empty flags an all-black input, in
/// which case every distance is +infinity.
struct DistanceField {
    int width = 0;
    int height = 0;
    std::vector<double> distances;
    bool all_empty = false;

    double at(int x, int y) const {
        return distances[static_cast<size_t>(y) * static_cast<size_t>(width) +
                         static_cast<size_t>(x)];
    }
};

DistanceField distance_transform(const SilhouetteImage& binary);

/// Silhouette prepared for comparison: binarized content cropped to its
/// bounding box, bit-packed row-major, positioned in a centroid-anchored
/// frame (the rounded content centroid sits at coordinate (0,0)). Two
/// prepared masks from any source align by construction.
struct Mask {
    int width = 0;
    int height = 0;
    int off_x = 0;  // content origin in the centroid-anchored frame
    int off_y = 0;
    int words_per_row = 0;
    std::vector<uint64_t> words;

    bool test(int x, int y) const {
        return (words[static_cast<size_t>(y) * static_cast<size_t>(words_per_row) +
                      static_cast<size_t>(x >> 6)] >>
                (x & 63)) &
               1u;
    }
    void set_bit(int x, int y) {
        words[static_cast<size_t>(y) * static_cast<size_t>(words_per_row) +
              static_cast<size_t>(x >> 6)] |= 1ULL << (x & 63);
    }
    long long popcount() const;
};

/// Builds the comparison mask of a silhouette: crop to the thresholded
/// content's bounding box (plus 2 px context), pad to square, box-resize to
/// resolution x resolution, binarize, anchor at the rounded centroid.
/// Throws if the thresholded image is empty.
Mask prepare_mask(const SilhouetteImage& img, int resolution, double threshold = 0.5);

struct MaskError {
    double epsilon = 0.0;
    bool disjoint = false;
};

/// Mismatch of two prepared masks:
///   O = A intersect B, U = A union B, D = distance transform of O,
///   epsilon = sum over U of D / resolution^2.
/// Empty O takes the capped penalty path: epsilon = resolution * |U| /
/// resolution^2, flagged disjoint. Exactly symmetric in its arguments.
MaskError mask_error(const Mask& a, const Mask& b, int resolution);

/// Exact |A union B| and |A intersect B| pixel counts (cheap, word-parallel).
struct OverlapCounts {
    long long union_count = 0;
    long long inter_count = 0;
};
OverlapCounts overlap_counts(const Mask& a, const Mask& b);

/// Exact Euclidean distance field of a mask's content over an arbitrary
/// window of the common (centroid-anchored) frame. Supports the library
/// query lower bound.
struct MaskDistanceField {
    int x0 = 0, y0 = 0, w = 0, h = 0;
    std::vector<double> d;
    /// Distance at common-frame coordinates; 0 outside the window (a safe
    /// lower bound).
    double at(int x, int y) const {
        if (x < x0 || y < y0 || x >= x0 + w || y >= y0 + h) {
            return 0.0;
        }
        return d[static_cast<size_t>(y - y0) * static_cast<size_t>(w) +
                 static_cast<size_t>(x - x0)];
    }
};
MaskDistanceField mask_distance_field(const Mask& m, int x0, int y0, int w, int h);

/// sum over the set pixels of `a` of field(p): with field = the distance
/// field of mask b, this is a lower bound on sum_U D(A intersect B).
double mask_field_sum(const Mask& a, const MaskDistanceField& field);

struct SilhouetteErrorResult {
    double epsilon = 0.0;
    bool disjoint = false;
};

/// The full image-pair error: prepare both inputs, then mask_error.
SilhouetteErrorResult silhouette_error(const SilhouetteImage& i1, const SilhouetteImage& i2,
                                       int resolution = 100, double threshold = 0.5);

struct CostBreakdown {
    std::vector<double> per_camera;
    double total = 0.0;
    int disjoint_count = 0;
};

/// Multi-camera cost evaluator with the observed cutouts prepared once.
/// evaluate() renders the model at the stored world position per camera and
/// sums the per-camera silhouette errors.
class RigCostContext {
public:
    RigCostContext(const CameraRig& rig, const std::vector<SilhouetteImage>& observed,
                   const Vec3& world_pos = {}, int resolution = 100, double threshold = 0.5);

    CostBreakdown evaluate(const ParticleModel& m, const Quaternion& q) const;

    const std::vector<Mask>& observed_masks() const { return observed_; }
    int resolution() const { return resolution_; }
    const CameraRig& rig() const { return *rig_; }
    const Vec3& world_pos() const { return world_pos_; }

private:
    const CameraRig* rig_;
    Vec3 world_pos_;
    int resolution_;
    double threshold_;
    std::vector<Mask> observed_;
};

/// Renders m at q per camera and sums silhouette errors against the
/// observed cutouts (particle assumed at world_pos).
CostBreakdown rig_error(const ParticleModel& m, const Quaternion& q, const CameraRig& rig,
                        const std::vector<SilhouetteImage>& observed, const Vec3& world_pos = {},
                        int resolution = 100, double threshold = 0.5);

}  // namespace silhpose
