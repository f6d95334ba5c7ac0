#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "silhpose/render.hpp"
#include "silhpose/rng.hpp"
#include "silhpose/synthbench.hpp"

using namespace silhpose;

TEST_CASE("bench spec validation") {
    BenchSpec spec;
    spec.validate();
    spec.image_size = 4;
    CHECK_THROWS_AS(spec.validate(), std::runtime_error);
    spec.image_size = 60;
    spec.noise_sigma = -0.1;
    CHECK_THROWS_AS(spec.validate(), std::runtime_error);
    spec.noise_sigma = 0;
    spec.n_orientations = 0;
    CHECK_THROWS_AS(spec.validate(), std::runtime_error);
}

TEST_CASE("make_case: clean renders, determinism, distinct truths") {
    BenchSpec spec;
    spec.kind = ParticleKind::tetrad;
    spec.rig = RigPreset::orthogonal_2;
    spec.seed = 99;
    const ParticleModel m = builtin_model(spec.kind);
    const CameraRig rig = rig_for_spec(spec);

    const BenchCase a = make_case(spec, 5, rig, m);
    const BenchCase b = make_case(spec, 5, rig, m);
    CHECK(angle_between(a.truth, b.truth) == 0.0);
    REQUIRE(a.observed.size() == rig.cameras.size());
    for (size_t c = 0; c < a.observed.size(); ++c) {
        CHECK(a.observed[c].pixels == b.observed[c].pixels);
        // Sigma = 0: the observed images are the clean renders exactly.
        const SilhouetteImage direct =
            render_silhouette(m, a.truth, rig.cameras[c], spec.image_size);
        CHECK(a.observed[c].pixels == direct.pixels);
    }

    const BenchCase other = make_case(spec, 6, rig, m);
    CHECK(angle_between(a.truth, other.truth) > 1e-6);

    // The truth depends only on (seed, i), not on the rig or image size.
    BenchSpec bigger = spec;
    bigger.image_size = 100;
    bigger.rig = RigPreset::tetrahedral_4;
    const BenchCase shared = make_case(bigger, 5, rig_for_spec(bigger), m);
    CHECK(angle_between(shared.truth, a.truth) == 0.0);
}

TEST_CASE("add_edge_noise perturbs only the anti-aliased rim") {
    const ParticleModel m = builtin_model(ParticleKind::chiral_right);
    BenchSpec spec;
    const CameraRig rig = rig_for_spec(spec);
    Rng rng(12);
    const SilhouetteImage img = render_silhouette(m, random_orientation(rng), rig.cameras[0], 60);

    Rng noise_rng(55);
    const SilhouetteImage same = add_edge_noise(img, 0.0, noise_rng);
    CHECK(same.pixels == img.pixels);

    // A fully binary image has no edge pixels to perturb.
    const SilhouetteImage binary = binarize(img, 0.5);
    Rng noise_rng2(55);
    const SilhouetteImage still = add_edge_noise(binary, 0.4, noise_rng2);
    CHECK(still.pixels == binary.pixels);

    Rng noise_rng3(55);
    const SilhouetteImage noisy = add_edge_noise(img, 0.3, noise_rng3);
    int changed = 0;
    for (size_t i = 0; i < img.pixels.size(); ++i) {
        const bool edge = img.pixels[i] > 0.0f && img.pixels[i] < 1.0f;
        if (!edge) {
            CHECK(noisy.pixels[i] == img.pixels[i]);  // interior and background untouched
        } else if (noisy.pixels[i] != img.pixels[i]) {
            ++changed;
        }
        CHECK(noisy.pixels[i] >= 0.0f);
        CHECK(noisy.pixels[i] <= 1.0f);
    }
    CHECK(changed > 10);
}

TEST_CASE("run_bench: deterministic across runs and worker counts") {
    BenchSpec spec;
    spec.kind = ParticleKind::tetrad;
    spec.rig = RigPreset::orthogonal_2;
    spec.image_size = 40;
    spec.n_orientations = 6;
    spec.seed = 2718;
    spec.library.n_axes = 30;
    spec.library.n_angles = 8;

    LibraryCache cache;
    const BenchResult a = run_bench(spec, 1, &cache);
    const BenchResult b = run_bench(spec, 2, &cache);
    CHECK(a.theta_err_deg == b.theta_err_deg);
    CHECK(a.theta_err_raw_deg == b.theta_err_raw_deg);
    CHECK(a.mean_deg == b.mean_deg);

    // Histogram density integrates to 1; the mean is recomputable.
    double integral = 0.0;
    for (size_t i = 0; i < a.hist_density.size(); ++i) {
        integral += a.hist_density[i] * (a.hist_edges[i + 1] - a.hist_edges[i]);
    }
    CHECK(integral == doctest::Approx(1.0).epsilon(1e-6));
    double mean = 0.0;
    for (double v : a.theta_err_deg) {
        mean += v;
    }
    CHECK(a.mean_deg == doctest::Approx(mean / a.theta_err_deg.size()).epsilon(1e-12));

    // Raw angle is never below the symmetry-reduced one.
    for (size_t i = 0; i < a.theta_err_deg.size(); ++i) {
        CHECK(a.theta_err_raw_deg[i] >= a.theta_err_deg[i] - 1e-12);
    }
}

TEST_CASE("run_bench respects camera subsets") {
    BenchSpec spec;
    spec.cameras_used = 2;
    CameraRig rig = rig_for_spec(spec);
    CHECK(rig.cameras.size() == 2);
    spec.cameras_used = 9;
    CHECK_THROWS_AS(rig_for_spec(spec), std::runtime_error);
}

TEST_CASE("appendix A: zero orientation error produces zero displacement") {
    BenchSpec spec;
    spec.n_orientations = 1;
    const AppendixAReport r = appendix_a_coupling(spec, {60}, {0.0}, 2);
    REQUIRE(r.sizes.size() == 1);
    CHECK(r.sizes[0].mean_displacement_pct == 0.0);
    // Part (a): the camera-vector deviation is a fraction of a degree at the
    // working geometry.
    CHECK(r.camera_vector_deviation_deg > 0.01);
    CHECK(r.camera_vector_deviation_deg < 1.0);
}

TEST_CASE("appendix A: supplied mean error yields a small finite displacement") {
    BenchSpec spec;
    const AppendixAReport r = appendix_a_coupling(spec, {30, 60}, {0.35, 0.1}, 2);
    REQUIRE(r.sizes.size() == 2);
    for (const auto& e : r.sizes) {
        CHECK(e.mean_displacement_pct > 0.0);
        CHECK(e.mean_displacement_pct < 0.5);
    }
}

TEST_CASE("appendix B smoke: one case per shape completes") {
    BenchSpec spec;
    spec.n_orientations = 1;
    spec.library.n_axes = 20;
    spec.library.n_angles = 6;
    LibraryCache cache;
    const AppendixBReport r = appendix_b_shapes(spec, {30, 60}, 2, &cache);
    REQUIRE(r.entries.size() == 6);  // 3 shapes x 2 sizes
    for (const auto& e : r.entries) {
        CHECK(e.mean_deg >= 0.0);
        CHECK(e.mean_deg < 180.0);
    }
}

TEST_CASE("bench output files are written and deterministic") {
    BenchSpec spec;
    spec.kind = ParticleKind::tetrad;
    spec.rig = RigPreset::orthogonal_2;
    spec.image_size = 40;
    spec.n_orientations = 4;
    spec.seed = 5;
    spec.library.n_axes = 20;
    spec.library.n_angles = 6;
    LibraryCache cache;
    const BenchResult r = run_bench(spec, 2, &cache);

    namespace fs = std::filesystem;
    const std::string dir = (fs::temp_directory_path() / "silhpose_bench_out").string();
    fs::create_directories(dir);
    write_bench_samples_csv(r, dir + "/samples.csv");
    write_bench_stats_json(r, dir + "/stats.json");
    write_bench_hist_csv(r, dir + "/hist.csv");
    for (const char* f : {"/samples.csv", "/stats.json", "/hist.csv"}) {
        CHECK(fs::file_size(dir + f) > 10);
    }
    fs::remove_all(dir);
}

TEST_CASE("synthetic sequences carry consistent ground truth") {
    SequenceSpec spec;
    spec.n_frames = 5;
    spec.image_size = 60;
    const SyntheticSequence seq = synth_sequence(spec);
    REQUIRE(seq.frames.size() == 5);
    REQUIRE(seq.truth_q.size() == 5);
    CHECK(seq.rig.cameras.size() == 3);
    // Constant rotation rate about a fixed axis.
    for (size_t f = 1; f < seq.truth_q.size(); ++f) {
        CHECK(angle_between(seq.truth_q[f], seq.truth_q[f - 1]) ==
              doctest::Approx(deg_to_rad(spec.rot_deg_per_frame)).epsilon(1e-9));
    }
    // Constant drift.
    CHECK((seq.truth_pos[4] - seq.truth_pos[3] - spec.velocity).norm() < 1e-12);
    // Each frame contains a particle (nonzero content) on each camera.
    for (const auto& frame : seq.frames) {
        for (const SilhouetteImage& img : frame) {
            CHECK(img.mean() > 0.0);
        }
    }
}
