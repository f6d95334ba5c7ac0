#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "silhpose/optimize.hpp"
#include "silhpose/render.hpp"
#include "silhpose/rng.hpp"
#include "silhpose/synthbench.hpp"

using namespace silhpose;

namespace {

std::array<std::array<double, 4>, 5> random_simplex(Rng& rng, double scale) {
    std::array<std::array<double, 4>, 5> pts;
    for (auto& p : pts) {
        for (double& v : p) {
            v = scale * rng.gaussian();
        }
    }
    return pts;
}

/// Oracle: 4-simplex volume as |det of edge vectors| / 4!.
double volume_by_determinant(const std::array<std::array<double, 4>, 5>& pts) {
    double m[4][4];
    for (int i = 0; i < 4; ++i) {
        for (int k = 0; k < 4; ++k) {
            m[i][k] = pts[static_cast<size_t>(i + 1)][static_cast<size_t>(k)] -
                      pts[0][static_cast<size_t>(k)];
        }
    }
    double det = 1.0;
    for (int col = 0; col < 4; ++col) {
        int piv = col;
        for (int r = col + 1; r < 4; ++r) {
            if (std::abs(m[r][col]) > std::abs(m[piv][col])) {
                piv = r;
            }
        }
        if (piv != col) {
            for (int c = 0; c < 4; ++c) {
                std::swap(m[col][c], m[piv][c]);
            }
            det = -det;
        }
        if (m[col][col] == 0.0) {
            return 0.0;
        }
        det *= m[col][col];
        for (int r = col + 1; r < 4; ++r) {
            const double f = m[r][col] / m[col][col];
            for (int c = col; c < 4; ++c) {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    return std::abs(det) / 24.0;
}

}  // namespace

TEST_CASE("Cayley-Menger hyper-volume matches the determinant oracle") {
    Rng rng(6);
    for (int i = 0; i < 200; ++i) {
        const auto pts = random_simplex(rng, i % 2 ? 1.0 : 0.01);
        const double want = volume_by_determinant(pts);
        const double got = simplex_hypervolume(pts);
        CHECK(got == doctest::Approx(want).epsilon(1e-6));
    }
    // Degenerate simplex: zero volume.
    auto flat = random_simplex(rng, 1.0);
    flat[4] = flat[0];
    CHECK(simplex_hypervolume(flat) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("nelder_mead converges on a smooth orientation objective") {
    Rng rng(41);
    for (int i = 0; i < 20; ++i) {
        const Quaternion target = random_orientation(rng);
        const Quaternion q0 =
            from_axis_angle(Vec3{rng.gaussian(), rng.gaussian(), rng.gaussian()}.normalized(),
                            deg_to_rad(rng.uniform(5.0, 20.0))) *
            target;
        NelderMeadOptions opts;
        opts.vol_tol = 1e-16;  // tight tolerance for the smooth oracle
        const auto f = [&](const Quaternion& q) { return angle_between(q, target); };
        const FitResult r = nelder_mead(f, q0, opts);
        CHECK(r.converged);
        CHECK(angle_between(r.q, target) < 1e-3);
    }
}

TEST_CASE("nelder_mead honors the hyper-volume tolerance") {
    Rng rng(42);
    const Quaternion target = random_orientation(rng);
    const auto f = [&](const Quaternion& q) { return angle_between(q, target); };
    const Quaternion q0 = from_axis_angle({0, 0, 1}, deg_to_rad(12.0)) * target;
    NelderMeadOptions opts;  // default vol_tol = 1e-8 as in the termination rule
    const FitResult r = nelder_mead(f, target, opts);
    CHECK(r.converged);
    CHECK(r.hyper_volume < 1e-8);
    const FitResult r2 = nelder_mead(f, q0, opts);
    CHECK(r2.converged);
    CHECK(r2.hyper_volume < 1e-8);
}

TEST_CASE("nelder_mead starting at the target collapses immediately") {
    Rng rng(43);
    const Quaternion target = random_orientation(rng);
    const auto f = [&](const Quaternion& q) { return angle_between(q, target); };
    const FitResult r = nelder_mead(f, target, {});
    CHECK(r.converged);
    CHECK(angle_between(r.q, target) < deg_to_rad(2.0));
    CHECK(r.total_error <= f(target) + deg_to_rad(8.0));  // never worse than a vertex
    CHECK(r.iterations < 60);
}

TEST_CASE("nelder_mead never returns worse than the best initial vertex") {
    Rng rng(44);
    for (int i = 0; i < 20; ++i) {
        const Quaternion target = random_orientation(rng);
        const Quaternion q0 = random_orientation(rng);
        const auto f = [&](const Quaternion& q) { return angle_between(q, target); };
        // Best initial vertex is q0 itself or one of the four perturbations;
        // f(q0) bounds them all within the init spread.
        const FitResult r = nelder_mead(f, q0, {});
        CHECK(r.total_error <= f(q0) + 1e-12);
    }
}

TEST_CASE("every evaluated candidate is unit norm") {
    Rng rng(45);
    const Quaternion target = random_orientation(rng);
    double worst = 0.0;
    const auto f = [&](const Quaternion& q) {
        worst = std::max(worst, std::abs(q.norm() - 1.0));
        return angle_between(q, target);
    };
    nelder_mead(f, from_axis_angle({1, 0, 0}, 0.3) * target, {});
    CHECK(worst < 1e-12);
}

TEST_CASE("nelder_mead is deterministic") {
    Rng rng(46);
    const Quaternion target = random_orientation(rng);
    const Quaternion q0 = from_axis_angle({0, 1, 0}, 0.2) * target;
    const auto f = [&](const Quaternion& q) { return angle_between(q, target); };
    const FitResult a = nelder_mead(f, q0, {});
    const FitResult b = nelder_mead(f, q0, {});
    CHECK(a.q.w == b.q.w);
    CHECK(a.q.x == b.q.x);
    CHECK(a.total_error == b.total_error);
    CHECK(a.iterations == b.iterations);
}

TEST_CASE("max_iter exhaustion reports converged = false") {
    Rng rng(47);
    const Quaternion target = random_orientation(rng);
    const auto f = [&](const Quaternion& q) { return angle_between(q, target); };
    NelderMeadOptions opts;
    opts.vol_tol = 1e-300;
    opts.max_iter = 10;
    const FitResult r = nelder_mead(f, random_orientation(rng), opts);
    CHECK_FALSE(r.converged);
    CHECK(r.iterations == 10);
}

TEST_CASE("refine with the exact truth among the guesses reaches zero error") {
    const ParticleModel m = builtin_model(ParticleKind::tetrad);
    RigOptions opts;
    opts.image_px = 60;
    opts.particle_extent = model_extent(m);
    const CameraRig rig = preset_rig(RigPreset::orthogonal_3, opts);
    Rng rng(48);
    const Quaternion truth = random_orientation(rng);
    std::vector<SilhouetteImage> observed;
    for (const CameraModel& cam : rig.cameras) {
        observed.push_back(render_silhouette(m, truth, cam, 60));
    }
    const Quaternion decoy = from_axis_angle({0, 0, 1}, deg_to_rad(8.0)) * truth;
    const FitResult r = refine(m, rig, observed, {truth, decoy});
    CHECK(r.total_error <= 1e-12);
    CHECK(angle_between(r.q, truth, model_symmetry(m)) < deg_to_rad(0.2));
    CHECK(r.particle_type == "tetrad");
    CHECK_THROWS_AS(refine(m, rig, observed, {}), std::invalid_argument);
}

TEST_CASE("refined result is never worse than the seed's evaluation") {
    const ParticleModel m = builtin_model(ParticleKind::chiral_right);
    RigOptions opts;
    opts.image_px = 60;
    opts.particle_extent = model_extent(m);
    const CameraRig rig = preset_rig(RigPreset::orthogonal_2, opts);
    Rng rng(49);
    for (int i = 0; i < 5; ++i) {
        const Quaternion truth = random_orientation(rng);
        std::vector<SilhouetteImage> observed;
        for (const CameraModel& cam : rig.cameras) {
            observed.push_back(render_silhouette(m, truth, cam, 60));
        }
        const RigCostContext ctx(rig, observed);
        const Quaternion seed = from_axis_angle({1, 0, 0}, deg_to_rad(4.0)) * truth;
        const double seed_cost = ctx.evaluate(m, seed).total;
        const FitResult r = refine_with_context(m, ctx, {seed});
        CHECK(r.total_error <= seed_cost + 1e-12);
    }
}

TEST_CASE("classify_and_fit separates tetrad from oloid") {
    RigOptions rig_opts;
    rig_opts.image_px = 60;
    rig_opts.particle_extent = 5.0;
    const CameraRig rig = preset_rig(RigPreset::orthogonal_3, rig_opts);
    const ParticleModel tetrad = builtin_model(ParticleKind::tetrad);
    const ParticleModel oloid = builtin_model(ParticleKind::oloid);
    LibraryParams params;
    params.n_axes = 40;
    params.n_angles = 8;
    const OrientationLibrary lib_t = build_library(tetrad, rig, params, 2);
    const OrientationLibrary lib_o = build_library(oloid, rig, params, 2);
    const std::vector<ModelLibrary> models = {{&tetrad, &lib_t}, {&oloid, &lib_o}};

    Rng rng(50);
    for (int i = 0; i < 6; ++i) {
        const bool use_tetrad = i % 2 == 0;
        const ParticleModel& truth_model = use_tetrad ? tetrad : oloid;
        const Quaternion truth = random_orientation(rng);
        std::vector<SilhouetteImage> observed;
        for (const CameraModel& cam : rig.cameras) {
            observed.push_back(render_silhouette(truth_model, truth, cam, 60));
        }
        const FitResult r = classify_and_fit(models, rig, observed);
        CHECK(r.particle_type == (use_tetrad ? "tetrad" : "oloid"));
    }

    // Single model: equivalent to refine, type is that model.
    const std::vector<ModelLibrary> just_tetrad = {{&tetrad, &lib_t}};
    const Quaternion q = random_orientation(rng);
    std::vector<SilhouetteImage> observed;
    for (const CameraModel& cam : rig.cameras) {
        observed.push_back(render_silhouette(tetrad, q, cam, 60));
    }
    const FitResult r = classify_and_fit(just_tetrad, rig, observed);
    CHECK(r.particle_type == "tetrad");
    CHECK(angle_between(r.q, q, model_symmetry(tetrad)) < deg_to_rad(0.5));
}
