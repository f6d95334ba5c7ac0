#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <filesystem>

#include "silhpose/render.hpp"
#include "silhpose/rng.hpp"
#include "silhpose/synthbench.hpp"
#include "silhpose/track.hpp"

using namespace silhpose;

namespace {

CameraRig tracking_rig(double extent, int image_px = 60) {
    RigOptions opts;
    opts.image_px = image_px;
    opts.particle_extent = extent;
    return preset_rig(RigPreset::orthogonal_3, opts);
}

/// A camera frame containing renders of particles at given poses, with the
/// window fixed so segmentation sees sensor-level coordinates.
SilhouetteImage synth_frame(const ParticleModel& m, const CameraModel& cam,
                            const std::vector<std::pair<Quaternion, Vec3>>& poses, int size) {
    RenderWindow win;
    win.origin_x = static_cast<int>(cam.principal_point.x) - size / 2;
    win.origin_y = static_cast<int>(cam.principal_point.y) - size / 2;
    win.width = size;
    win.height = size;
    SilhouetteImage frame(size, size);
    frame.origin_x = win.origin_x;
    frame.origin_y = win.origin_y;
    for (const auto& [q, pos] : poses) {
        const SilhouetteImage r = render_window(m, q, cam, win, pos);
        for (size_t i = 0; i < frame.pixels.size(); ++i) {
            frame.pixels[i] = std::max(frame.pixels[i], r.pixels[i]);
        }
    }
    return frame;
}

}  // namespace

TEST_CASE("segment: blank image, single particle, speckle removal") {
    SegmentationParams params;
    params.min_area = 10.0;
    CHECK(segment(SilhouetteImage(50, 50), params).empty());

    const ParticleModel m = builtin_model(ParticleKind::tetrad);
    const CameraRig rig = tracking_rig(model_extent(m));
    Rng rng(3);
    const Quaternion q = random_orientation(rng);
    SilhouetteImage frame = synth_frame(m, rig.cameras[0], {{q, {0, 0, 0}}}, 90);
    // 3 px speckle, below min_area.
    frame.set(3, 3, 1.0f);
    frame.set(4, 3, 1.0f);
    frame.set(3, 4, 1.0f);

    const auto blobs = segment(frame, params);
    REQUIRE(blobs.size() == 1);
    const Vec2 expect = image_centroid(render_tight(m, q, rig.cameras[0], 3));
    CHECK(std::abs(blobs[0].centroid.x - expect.x) < 0.5);
    CHECK(std::abs(blobs[0].centroid.y - expect.y) < 0.5);
    CHECK(blobs[0].area > 100);
}

TEST_CASE("segment: dark polarity inverts the cutout") {
    SilhouetteImage img(30, 30, 1.0f);  // bright background
    for (int y = 10; y < 20; ++y) {
        for (int x = 12; x < 22; ++x) {
            img.set(x, y, 0.05f);  // dark particle
        }
    }
    SegmentationParams params;
    params.polarity = SegmentationParams::Polarity::dark_particle;
    params.intensity_threshold = 0.5;
    params.min_area = 10;
    const auto blobs = segment(img, params);
    REQUIRE(blobs.size() == 1);
    CHECK(blobs[0].centroid.x == doctest::Approx(17.0).epsilon(0.01));
    // Cutout normalized so 1 = particle.
    const Mask mask = prepare_mask(blobs[0].cutout, 50);
    CHECK(mask.popcount() > 100);
}

TEST_CASE("correct_com: spherically symmetric model has zero shift") {
    // A degenerate single-edge capsule renders as a disc: the projection
    // centroid coincides with the projected COM for every orientation.
    WireframeModel ball;
    ball.name = "ball";
    ball.vertices = {{-1e-9, 0, 0}, {1e-9, 0, 0}};
    ball.edges = {{0, 1}};
    ball.tube_radius = 1.0;
    ball.com = {0, 0, 0};
    const ParticleModel m = ball;
    const CameraRig rig = tracking_rig(2.0);

    Rng rng(5);
    const Quaternion q = random_orientation(rng);
    const Vec3 truth{0.2, -0.1, 0.3};
    std::vector<Vec2> centroids;
    for (const CameraModel& cam : rig.cameras) {
        centroids.push_back(image_centroid(render_tight(m, q, cam, 3, truth)));
    }
    const Vec3 uncorrected = [&] {
        std::vector<Ray> rays;
        for (size_t c = 0; c < rig.cameras.size(); ++c) {
            rays.push_back(back_project(rig.cameras[c], centroids[c]));
        }
        return triangulate(rays).point;
    }();
    const ComCorrection cc = correct_com(m, q, rig, centroids, 1);
    CHECK(cc.corrected);
    CHECK((cc.position - uncorrected).norm() < 2e-3);
    CHECK((cc.position - truth).norm() < 2e-3);
}

TEST_CASE("correct_com improves the chiral position estimate") {
    const ParticleModel m = builtin_model(ParticleKind::chiral_right);
    const CameraRig rig = tracking_rig(model_extent(m));
    const Vec3 com_model = model_com(m);
    Rng rng(6);
    int improved = 0;
    int contracted = 0;
    const int trials = 30;
    for (int t = 0; t < trials; ++t) {
        const Quaternion q = random_orientation(rng);
        const Vec3 world_pos{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        const Vec3 truth_com = world_pos + rotate_point(q, com_model);
        std::vector<Vec2> centroids;
        for (const CameraModel& cam : rig.cameras) {
            centroids.push_back(image_centroid(render_tight(m, q, cam, 3, world_pos)));
        }
        std::vector<Ray> rays;
        for (size_t c = 0; c < rig.cameras.size(); ++c) {
            rays.push_back(back_project(rig.cameras[c], centroids[c]));
        }
        const Vec3 uncorrected = triangulate(rays).point;
        const ComCorrection c1 = correct_com(m, q, rig, centroids, 1);
        const ComCorrection c2 = correct_com(m, q, rig, centroids, 2);
        REQUIRE(c1.corrected);
        if ((c1.position - truth_com).norm() < (uncorrected - truth_com).norm()) {
            ++improved;
        }
        // Contraction evidence: the second iteration moves less than the first.
        const double first_step = (c1.position - uncorrected).norm();
        const double second_step = (c2.position - c1.position).norm();
        if (second_step < first_step) {
            ++contracted;
        }
    }
    CHECK(improved >= trials * 8 / 10);
    CHECK(contracted >= trials * 8 / 10);
}

TEST_CASE("centroid-to-COM offset varies with orientation and is a finite arm fraction") {
    const ParticleModel m = builtin_model(ParticleKind::chiral_right);
    const CameraRig rig = tracking_rig(model_extent(m));
    const CameraModel& cam = rig.cameras[0];
    const double arm_px = 2.5 * cam.focal_length / 500.0;
    Rng rng(7);
    double max_offset = 0.0;
    double min_offset = 1e30;
    for (int t = 0; t < 100; ++t) {
        const Quaternion q = random_orientation(rng);
        const Vec2 centroid = image_centroid(render_tight(m, q, cam, 3));
        const Vec2 com_px = project_point(cam, rotate_point(q, model_com(m)));
        const double off = (centroid - com_px).norm() / arm_px;
        max_offset = std::max(max_offset, off);
        min_offset = std::min(min_offset, off);
    }
    CHECK(max_offset > 0.02);  // a finite fraction of the arm length
    CHECK(max_offset < 1.0);
    CHECK(max_offset > 3.0 * min_offset);  // orientation-dependent
}

TEST_CASE("process_frame: cold start, warm start, and per-frame bookkeeping") {
    const ParticleModel m = builtin_model(ParticleKind::tetrad);
    const CameraRig rig = tracking_rig(model_extent(m));
    LibraryParams lp;
    lp.n_axes = 60;
    lp.n_angles = 12;
    const OrientationLibrary lib = build_library(m, rig, lp, 2);
    const std::vector<ModelLibrary> models = {{&m, &lib}};
    const SymmetryGroup& sym = model_symmetry(m);

    Rng rng(9);
    const Quaternion q0 = random_orientation(rng);
    const Quaternion q1 = from_axis_angle({0, 0, 1}, deg_to_rad(2.0)) * q0;
    SegmentationParams seg;
    seg.min_area = 20;
    ProcessParams params;

    auto observe = [&](const Quaternion& q, int frame_idx) {
        FrameObservation obs;
        obs.frame_index = frame_idx;
        obs.time = frame_idx * 0.01;
        for (size_t c = 0; c < rig.cameras.size(); ++c) {
            obs.blobs_per_camera.push_back(segment(
                synth_frame(m, rig.cameras[c], {{q, {0, 0, 0}}}, 90), seg, static_cast<int>(c)));
        }
        return obs;
    };

    // Cold start through the library.
    const FrameResult r0 = process_frame(observe(q0, 0), models, rig, {}, params);
    REQUIRE(r0.particles.size() == 1);
    CHECK(r0.particles[0].seed_track_id == -1);
    CHECK(angle_between(r0.particles[0].fit.q, q0, sym) < deg_to_rad(1.0));
    CHECK(r0.particles[0].com_corrected);
    CHECK(r0.failed == 0);

    // Warm start from the previous orientation skips the library and takes
    // fewer iterations.
    TrackSeed seed;
    seed.track_id = 0;
    seed.predicted_position = r0.particles[0].position;
    seed.q = r0.particles[0].fit.q;
    seed.particle_type = "tetrad";
    const FrameResult r1 = process_frame(observe(q1, 1), models, rig, {seed}, params);
    REQUIRE(r1.particles.size() == 1);
    CHECK(r1.particles[0].seed_track_id == 0);
    CHECK(angle_between(r1.particles[0].fit.q, q1, sym) < deg_to_rad(1.0));
    CHECK(r1.particles[0].fit.iterations < r0.particles[0].fit.iterations);
}

TEST_CASE("process_frame skips particles overlapping on one camera") {
    const ParticleModel m = builtin_model(ParticleKind::tetrad);
    const CameraRig rig = tracking_rig(model_extent(m));
    LibraryParams lp;
    lp.n_axes = 20;
    lp.n_angles = 6;
    const OrientationLibrary lib = build_library(m, rig, lp, 2);
    const std::vector<ModelLibrary> models = {{&m, &lib}};

    Rng rng(11);
    const Quaternion qa = random_orientation(rng);
    const Quaternion qb = random_orientation(rng);
    // The second particle sits behind the first along camera 0's view axis:
    // camera 0 sees one merged blob, the other cameras see two particles
    // (the separation exceeds the particle extent).
    const Vec3 pa{0.0, 0.0, 0.0};
    const Vec3 pb = pa + rig.cameras[0].view_direction * 7.0;
    SegmentationParams seg;
    seg.min_area = 20;
    FrameObservation obs;
    obs.frame_index = 0;
    for (size_t c = 0; c < rig.cameras.size(); ++c) {
        const SilhouetteImage frame = synth_frame(m, rig.cameras[c], {{qa, pa}, {qb, pb}}, 220);
        obs.blobs_per_camera.push_back(segment(frame, seg, static_cast<int>(c)));
    }
    REQUIRE(obs.blobs_per_camera[0].size() == 1);
    REQUIRE(obs.blobs_per_camera[1].size() == 2);

    ProcessParams params;
    const FrameResult r = process_frame(obs, models, rig, {}, params);
    // The merged group is flagged and skipped; nothing is reconstructed
    // from the contaminated blobs.
    CHECK(r.skipped_overlap >= 1);
    CHECK(r.particles.empty());
}

TEST_CASE("process_frame skips blobs far above the median area") {
    const ParticleModel m = builtin_model(ParticleKind::tetrad);
    const CameraRig rig = tracking_rig(model_extent(m));
    LibraryParams lp;
    lp.n_axes = 8;
    lp.n_angles = 4;
    const OrientationLibrary lib = build_library(m, rig, lp, 1);
    const std::vector<ModelLibrary> models = {{&m, &lib}};

    // Fabricated blobs: a consistent oversized group at P plus two
    // unmatched normal-size blobs per camera that set the area median.
    const Vec3 p{0.2, -0.1, 0.3};
    FrameObservation obs;
    obs.frame_index = 0;
    for (size_t c = 0; c < rig.cameras.size(); ++c) {
        std::vector<Blob> blobs;
        Blob big;
        big.camera_index = static_cast<int>(c);
        big.centroid = project_point(rig.cameras[c], p);
        big.area = 900.0;
        blobs.push_back(big);
        for (int k = 0; k < 2; ++k) {
            Blob small;
            small.camera_index = static_cast<int>(c);
            // Inconsistent positions so these never match across cameras.
            small.centroid = {100.0 + 300.0 * k + 40.0 * static_cast<double>(c), 80.0};
            small.area = 300.0;
            blobs.push_back(small);
        }
        obs.blobs_per_camera.push_back(blobs);
    }
    ProcessParams params;
    const FrameResult r = process_frame(obs, models, rig, {}, params);
    CHECK(r.skipped_overlap == 1);
    CHECK(r.particles.empty());
}

TEST_CASE("link_tracks: continuity, crossing, and gaps") {
    auto fit_at = [](const Vec3& pos, const std::string& type) {
        ParticleFit pf;
        pf.position = pos;
        pf.position_raw = pos;
        pf.fit.q = Quaternion::identity();
        pf.fit.particle_type = type;
        pf.fit.converged = true;
        return pf;
    };

    // Single particle moving continuously: one track over all frames.
    std::vector<FrameResult> frames;
    for (int f = 0; f < 10; ++f) {
        FrameResult fr;
        fr.frame_index = f;
        fr.time = f * 0.1;
        fr.particles.push_back(fit_at({0.1 * f, 0, 0}, "tetrad"));
        frames.push_back(fr);
    }
    LinkParams link;
    link.max_jump = 1.0;
    auto tracks = link_tracks(frames, link);
    REQUIRE(tracks.size() == 1);
    CHECK(tracks[0].samples.size() == 10);

    // Two particles crossing with per-frame steps below the gate but mutual
    // distance above it: no identity swap.
    frames.clear();
    for (int f = 0; f < 8; ++f) {
        FrameResult fr;
        fr.frame_index = f;
        fr.particles.push_back(fit_at({0.4 * f, 2.0, 0}, "tetrad"));
        fr.particles.push_back(fit_at({2.8 - 0.4 * f, -2.0, 0}, "tetrad"));
        frames.push_back(fr);
    }
    tracks = link_tracks(frames, link);
    REQUIRE(tracks.size() == 2);
    for (const ParticleTrack& t : tracks) {
        REQUIRE(t.samples.size() == 8);
        // y stays on one side: no swap.
        for (const TrackSample& s : t.samples) {
            CHECK(s.position.y == doctest::Approx(t.samples[0].position.y));
        }
    }

    // A 10-frame disappearance splits the track (no gap bridging).
    frames.clear();
    for (int f = 0; f < 30; ++f) {
        FrameResult fr;
        fr.frame_index = f;
        if (f < 10 || f >= 20) {
            fr.particles.push_back(fit_at({0.05 * f, 0, 0}, "tetrad"));
        }
        frames.push_back(fr);
    }
    tracks = link_tracks(frames, link);
    CHECK(tracks.size() == 2);

    // Type mismatch prevents linking.
    frames.clear();
    for (int f = 0; f < 2; ++f) {
        FrameResult fr;
        fr.frame_index = f;
        fr.particles.push_back(fit_at({0, 0, 0}, f == 0 ? "tetrad" : "oloid"));
        frames.push_back(fr);
    }
    CHECK(link_tracks(frames, link).size() == 2);
}

TEST_CASE("orientation jumps are flagged against the running median") {
    ParticleTrack track;
    track.particle_type = "tetrad";
    Quaternion q = Quaternion::identity();
    for (int f = 0; f < 30; ++f) {
        const double step = f == 20 ? 20.0 : 1.0;  // one local-minimum jump
        q = (from_axis_angle({0, 0, 1}, deg_to_rad(step)) * q).canonical();
        TrackSample s;
        s.frame_index = f;
        s.q = q;
        s.euler = to_euler_zyx(q);
        track.samples.push_back(s);
    }
    flag_orientation_jumps(track, SymmetryGroup::identity_only(), 5.0);
    int flagged = 0;
    for (const TrackSample& s : track.samples) {
        flagged += s.jump_flagged ? 1 : 0;
    }
    CHECK(flagged == 1);
    // The f=20 sample is the first after the 20-degree step.
    CHECK(track.samples[20].jump_flagged);
}

TEST_CASE("track records round-trip through the JSONL format") {
    ParticleTrack track;
    track.id = 3;
    track.particle_type = "oloid";
    Rng rng(13);
    for (int f = 0; f < 5; ++f) {
        TrackSample s;
        s.frame_index = f;
        s.time = f / 250.0;
        s.position = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        s.q = random_orientation(rng);
        s.euler = to_euler_zyx(s.q);
        s.total_error = rng.uniform01();
        s.converged = f != 2;
        s.jump_flagged = f == 3;
        track.samples.push_back(s);
    }
    const std::string path =
        (std::filesystem::temp_directory_path() / "silhpose_tracks_test.jsonl").string();
    write_track_records({track}, path);
    const auto loaded = read_track_records(path);
    REQUIRE(loaded.size() == 1);
    REQUIRE(loaded[0].samples.size() == 5);
    CHECK(loaded[0].id == 3);
    CHECK(loaded[0].particle_type == "oloid");
    for (size_t i = 0; i < 5; ++i) {
        const TrackSample& a = track.samples[i];
        const TrackSample& b = loaded[0].samples[i];
        CHECK(a.frame_index == b.frame_index);
        CHECK(a.position.x == doctest::Approx(b.position.x).epsilon(1e-12));
        CHECK(a.q.w == doctest::Approx(b.q.w).epsilon(1e-12));
        CHECK(a.converged == b.converged);
        CHECK(a.jump_flagged == b.jump_flagged);
    }
    write_track_summary(loaded, path + ".csv");
    CHECK(std::filesystem::exists(path + ".csv"));
    std::filesystem::remove(path);
    std::filesystem::remove(path + ".csv");
}
