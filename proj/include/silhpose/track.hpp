#pragma once

#include <optional>
#include <string>
#include <vector>

#include "silhpose/camera.hpp"
#include "silhpose/geometry.hpp"
#include "silhpose/image.hpp"
#include "silhpose/optimize.hpp"
#include "silhpose/rotation.hpp"

namespace silhpose {

struct SegmentationParams {
    enum class Polarity { bright_particle, dark_particle };
    double intensity_threshold = 0.5;
    double min_area = 4.0;    // px
    double max_area = 1e12;   // px
    Polarity polarity = Polarity::bright_particle;
};

/// One segmented particle candidate on one camera. Centroid and bounding box
/// are in sensor coordinates; the cutout is normalized to 1 = particle.
struct Blob {
    int camera_index = 0;
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive bbox, sensor coords
    Vec2 centroid;
    double area = 0.0;
    SilhouetteImage cutout;
};

/// Threshold by polarity, 8-connected component labeling, area gating
/// (bubble and noise removal), per-component cutout with 4 px padding.
std::vector<Blob> segment(const SilhouetteImage& image, const SegmentationParams& p,
                          int camera_index = 0);

struct FrameObservation {
    int frame_index = 0;
    double time = 0.0;
    std::vector<std::vector<Blob>> blobs_per_camera;
};

/// Per-track state handed to the next frame as a warm start.
struct TrackSeed {
    int track_id = -1;
    Vec3 predicted_position;
    Quaternion q;
    std::string particle_type;
};

struct ParticleFit {
    std::vector<int> blob_indices;  // one per camera
    Vec3 position_raw;              // triangulated projection centroids
    Vec3 position;                  // after COM correction
    FitResult fit;
    int seed_track_id = -1;  // -1 = cold start through the library
    bool com_corrected = false;
};

struct FrameResult {
    int frame_index = 0;
    double time = 0.0;
    std::vector<ParticleFit> particles;
    int skipped_overlap = 0;   // blobs flagged as overlapping particles
    int skipped_partial = 0;   // blobs not matched across all cameras
    int failed = 0;            // per-particle errors (never abort the frame)
};

struct ProcessParams {
    double gap_tol = 0.4;    // centroid match gate, world units
    double seed_gate = 5.0;  // max distance for warm-start association
    double overlap_area_factor = 1.8;
    int com_iterations = 1;
    int k_guesses = 4;
    /// Position <-> orientation iterations: after the COM correction the
    /// orientation is refined again at the corrected position, removing the
    /// orientation bias induced by the projection-centroid offset.
    int pose_refine_rounds = 1;
    RefineOptions refine;
};

/// Full per-frame reconstruction: centroid matching, warm- or cold-start
/// orientation fits, COM correction. Particles not seen by every camera and
/// overlapping particles are skipped, not errors.
FrameResult process_frame(const FrameObservation& obs, const std::vector<ModelLibrary>& models,
                          const CameraRig& rig, const std::vector<TrackSeed>& seeds,
                          const ProcessParams& params);

/// Shift each camera's experimental centroid by the synthetic
/// (projection-centroid minus projected-COM) offset at the fitted
/// orientation, then re-triangulate. Renders are at sensor scale, so no
/// rescaling is needed. On triangulation degeneracy returns the uncorrected
/// position with corrected=false.
struct ComCorrection {
    Vec3 position;
    bool corrected = false;
};
ComCorrection correct_com(const ParticleModel& m, const Quaternion& q, const CameraRig& rig,
                          const std::vector<Vec2>& blob_centroids, int iterate = 1);

struct TrackSample {
    int frame_index = 0;
    double time = 0.0;
    Vec3 position;
    Quaternion q;
    double total_error = 0.0;
    bool converged = false;
    EulerZYX euler;
    bool jump_flagged = false;
};

struct ParticleTrack {
    int id = 0;
    std::string particle_type;
    std::vector<TrackSample> samples;
};

struct LinkParams {
    double max_jump = 5.0;         // world units, association gate
    double jump_flag_factor = 5.0; // orientation step > factor * running median
};

/// Nearest-neighbor association on constant-velocity predictions, gated by
/// max_jump; types must match to link; no gap bridging (a missed frame
/// closes the track).
std::vector<ParticleTrack> link_tracks(const std::vector<FrameResult>& frames,
                                       const LinkParams& params = {});

/// Marks samples whose symmetry-reduced orientation step exceeds
/// jump_flag_factor times the running median step (local-minimum jumps).
void flag_orientation_jumps(ParticleTrack& track, const SymmetryGroup& sym,
                            double factor = 5.0);

/// Sequential tracking driver: frames processed in order, live tracks feed
/// warm starts to the next frame.
class TrackPipeline {
public:
    TrackPipeline(std::vector<ModelLibrary> models, const CameraRig& rig, ProcessParams process,
                  LinkParams link);

    FrameResult& process(const FrameObservation& obs);
    /// Closes all tracks, applies jump flags, returns them sorted by id.
    std::vector<ParticleTrack> finish();

    const std::vector<FrameResult>& frames() const { return frames_; }

private:
    std::vector<ModelLibrary> models_;
    const CameraRig* rig_;
    ProcessParams process_;
    LinkParams link_;
    std::vector<FrameResult> frames_;
};

/// Track record I/O: line-delimited JSON with a version header record.
void write_track_records(const std::vector<ParticleTrack>& tracks, const std::string& path);
std::vector<ParticleTrack> read_track_records(const std::string& path);
void write_track_summary(const std::vector<ParticleTrack>& tracks, const std::string& path);

}  // namespace silhpose
