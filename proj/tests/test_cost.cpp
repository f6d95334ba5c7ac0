#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "silhpose/cost.hpp"
#include "silhpose/render.hpp"
#include "silhpose/rng.hpp"

using namespace silhpose;

namespace {

/// Brute-force oracle: per-pixel minimum over all white pixels of
/// sqrt((k-i)^2 + (l-j)^2). O(N^2 M) scan, exact by construction.
std::vector<double> brute_force_edt(const SilhouetteImage& bin) {
    std::vector<double> out(bin.pixels.size(), std::numeric_limits<double>::infinity());
    for (int y = 0; y < bin.height; ++y) {
        for (int x = 0; x < bin.width; ++x) {
            long long best = -1;
            for (int j = 0; j < bin.height; ++j) {
                for (int i = 0; i < bin.width; ++i) {
                    if (bin.at(i, j) == 1.0f) {
                        const long long d2 = static_cast<long long>(x - i) * (x - i) +
                                             static_cast<long long>(y - j) * (y - j);
                        if (best < 0 || d2 < best) {
                            best = d2;
                        }
                    }
                }
            }
            if (best >= 0) {
                out[static_cast<size_t>(y) * static_cast<size_t>(bin.width) +
                    static_cast<size_t>(x)] = std::sqrt(static_cast<double>(best));
            }
        }
    }
    return out;
}

SilhouetteImage random_binary(Rng& rng, int w, int h, double fill) {
    SilhouetteImage img(w, h);
    for (float& v : img.pixels) {
        v = rng.uniform01() < fill ? 1.0f : 0.0f;
    }
    return img;
}

Mask single_pixel_mask(int x, int y) {
    Mask m;
    m.width = 1;
    m.height = 1;
    m.off_x = x;
    m.off_y = y;
    m.words_per_row = 1;
    m.words = {1ULL};
    return m;
}

Mask square_mask(int x0, int y0, int side) {
    Mask m;
    m.width = side;
    m.height = side;
    m.off_x = x0;
    m.off_y = y0;
    m.words_per_row = (side + 63) / 64;
    m.words.assign(static_cast<size_t>(m.words_per_row) * static_cast<size_t>(side), 0);
    for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
            m.set_bit(x, y);
        }
    }
    return m;
}

CameraModel test_camera() {
    CameraModel cam;
    cam.position = {0, -500, 0};
    cam.view_direction = {0, 1, 0};
    cam.up = {0, 0, 1};
    cam.focal_length = 4800;
    cam.principal_point = {512, 512};
    return cam;
}

}  // namespace

TEST_CASE("distance transform basics") {
    SilhouetteImage all_white(9, 7, 1.0f);
    const DistanceField f = distance_transform(all_white);
    CHECK_FALSE(f.all_empty);
    for (double d : f.distances) {
        CHECK(d == 0.0);
    }

    SilhouetteImage one(15, 11);
    one.set(4, 6, 1.0f);
    const DistanceField g = distance_transform(one);
    for (int y = 0; y < 11; ++y) {
        for (int x = 0; x < 15; ++x) {
            const double want = std::sqrt(static_cast<double>((x - 4) * (x - 4)) +
                                          static_cast<double>((y - 6) * (y - 6)));
            CHECK(g.at(x, y) == want);
        }
    }

    const DistanceField empty = distance_transform(SilhouetteImage(5, 5));
    CHECK(empty.all_empty);
    CHECK(std::isinf(empty.at(2, 2)));

    SilhouetteImage gray(3, 3, 0.5f);
    CHECK_THROWS_AS(distance_transform(gray), std::invalid_argument);
}

TEST_CASE("distance transform matches brute force exactly on 500 random binaries") {
    Rng rng(606);
    for (int trial = 0; trial < 500; ++trial) {
        const int w = 1 + static_cast<int>(rng.next_u64() % 25);
        const int h = 1 + static_cast<int>(rng.next_u64() % 25);
        const double fill = rng.uniform(0.02, 0.6);
        const SilhouetteImage img = random_binary(rng, w, h, fill);
        const std::vector<double> want = brute_force_edt(img);
        bool any_white = false;
        for (float v : img.pixels) {
            any_white = any_white || v == 1.0f;
        }
        const DistanceField got = distance_transform(img);
        CHECK(got.all_empty == !any_white);
        for (size_t i = 0; i < want.size(); ++i) {
            CHECK(got.distances[i] == want[i]);  // exact, including sqrt
        }
    }
}

TEST_CASE("silhouette_error is zero for identical images, exactly") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        const SilhouetteImage img = random_binary(rng, 40, 40, 0.3);
        const SilhouetteErrorResult r = silhouette_error(img, img);
        CHECK(r.epsilon == 0.0);
        CHECK_FALSE(r.disjoint);
    }
}

TEST_CASE("silhouette_error is exactly symmetric on 100 random pairs") {
    Rng rng(18);
    int nontrivial = 0;
    for (int trial = 0; trial < 100; ++trial) {
        // Blob-like content: random rectangles plus speckle.
        auto make = [&rng]() {
            SilhouetteImage img(50, 50);
            for (int r = 0; r < 3; ++r) {
                const int x0 = static_cast<int>(rng.next_u64() % 30);
                const int y0 = static_cast<int>(rng.next_u64() % 30);
                const int wl = 5 + static_cast<int>(rng.next_u64() % 15);
                const int hl = 5 + static_cast<int>(rng.next_u64() % 15);
                for (int y = y0; y < std::min(50, y0 + hl); ++y) {
                    for (int x = x0; x < std::min(50, x0 + wl); ++x) {
                        img.set(x, y, 1.0f);
                    }
                }
            }
            return img;
        };
        const SilhouetteImage a = make();
        const SilhouetteImage b = make();
        const SilhouetteErrorResult ab = silhouette_error(a, b);
        const SilhouetteErrorResult ba = silhouette_error(b, a);
        CHECK(ab.epsilon == ba.epsilon);  // bitwise
        CHECK(ab.disjoint == ba.disjoint);
        if (ab.epsilon > 0.0) {
            ++nontrivial;
        }
    }
    CHECK(nontrivial > 50);
}

TEST_CASE("silhouette_error rejects empty inputs") {
    const SilhouetteImage empty(20, 20);
    const SilhouetteImage full(20, 20, 1.0f);
    CHECK_THROWS_AS(silhouette_error(empty, full), std::runtime_error);
    CHECK_THROWS_AS(silhouette_error(full, empty), std::runtime_error);
}

TEST_CASE("mask_error: hand-computed single-pixel examples") {
    // Two single pixels 10 px apart: U has 2 pixels, O is empty, so the
    // capped penalty applies: resolution * |U| / resolution^2.
    const Mask a = single_pixel_mask(0, 0);
    const Mask b = single_pixel_mask(10, 0);
    const MaskError e = mask_error(a, b, 100);
    CHECK(e.disjoint);
    CHECK(e.epsilon == doctest::Approx(100.0 * 2 / (100.0 * 100.0)).epsilon(1e-12));

    // Same pixel: U = O, distance zero everywhere on it.
    const MaskError same = mask_error(a, a, 100);
    CHECK(same.epsilon == 0.0);
    CHECK_FALSE(same.disjoint);

    // Pixels 3 apart, evaluated by hand: O empty again.
    const Mask c = single_pixel_mask(3, 4);
    const MaskError e2 = mask_error(a, c, 100);
    CHECK(e2.disjoint);
    CHECK(e2.epsilon == doctest::Approx(0.02).epsilon(1e-12));
}

TEST_CASE("mask_error with overlap: hand-computed square pair") {
    // 2x1 vs 1x1 sharing one pixel: O = shared pixel, U = both.
    Mask a;
    a.width = 2;
    a.height = 1;
    a.off_x = 0;
    a.off_y = 0;
    a.words_per_row = 1;
    a.words = {3ULL};  // pixels (0,0), (1,0)
    const Mask b = single_pixel_mask(0, 0);
    const MaskError e = mask_error(a, b, 100);
    // U = {(0,0),(1,0)}, O = {(0,0)}: D over U is 0 at (0,0) and 1 at (1,0).
    CHECK_FALSE(e.disjoint);
    CHECK(e.epsilon == doctest::Approx(1.0 / (100.0 * 100.0)).epsilon(1e-12));
}

TEST_CASE("shrinking overlap to zero never decreases the error") {
    // Two 10x10 squares sliding apart: at shift 10 the overlap vanishes and
    // the penalty path takes over; epsilon must be monotone non-decreasing.
    const Mask a = square_mask(0, 0, 10);
    double previous = -1.0;
    for (int shift = 7; shift <= 13; ++shift) {
        const Mask b = square_mask(shift, 0, 10);
        const MaskError e = mask_error(a, b, 100);
        CHECK(e.disjoint == (shift >= 10));
        CHECK(e.epsilon >= previous);
        previous = e.epsilon;
    }
}

TEST_CASE("overlap_counts agrees with per-pixel counting") {
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        auto random_mask = [&rng]() {
            Mask m;
            m.width = 3 + static_cast<int>(rng.next_u64() % 70);
            m.height = 3 + static_cast<int>(rng.next_u64() % 70);
            m.off_x = static_cast<int>(rng.next_u64() % 40) - 20;
            m.off_y = static_cast<int>(rng.next_u64() % 40) - 20;
            m.words_per_row = (m.width + 63) / 64;
            m.words.assign(
                static_cast<size_t>(m.words_per_row) * static_cast<size_t>(m.height), 0);
            for (int y = 0; y < m.height; ++y) {
                for (int x = 0; x < m.width; ++x) {
                    if (rng.uniform01() < 0.4) {
                        m.set_bit(x, y);
                    }
                }
            }
            return m;
        };
        const Mask a = random_mask();
        const Mask b = random_mask();
        long long want_union = 0, want_inter = 0;
        for (int y = -60; y < 140; ++y) {
            for (int x = -60; x < 140; ++x) {
                const bool in_a = x >= a.off_x && x < a.off_x + a.width && y >= a.off_y &&
                                  y < a.off_y + a.height && a.test(x - a.off_x, y - a.off_y);
                const bool in_b = x >= b.off_x && x < b.off_x + b.width && y >= b.off_y &&
                                  y < b.off_y + b.height && b.test(x - b.off_x, y - b.off_y);
                want_union += (in_a || in_b) ? 1 : 0;
                want_inter += (in_a && in_b) ? 1 : 0;
            }
        }
        const OverlapCounts got = overlap_counts(a, b);
        CHECK(got.union_count == want_union);
        CHECK(got.inter_count == want_inter);

        // Cross-check: mask_error on the same pair is symmetric bitwise.
        CHECK(mask_error(a, b, 100).epsilon == mask_error(b, a, 100).epsilon);
    }
}

TEST_CASE("prepare_mask is content-relative (translation invariant)") {
    // The same shape drawn at two offsets produces the identical mask.
    auto draw = [](int ox, int oy) {
        SilhouetteImage img(80, 80);
        for (int y = 0; y < 12; ++y) {
            for (int x = 0; x < 5 + y; ++x) {
                img.set(ox + x, oy + y, 1.0f);
            }
        }
        return img;
    };
    const Mask a = prepare_mask(draw(10, 20), 100);
    const Mask b = prepare_mask(draw(41, 7), 100);
    CHECK(a.width == b.width);
    CHECK(a.height == b.height);
    CHECK(a.off_x == b.off_x);
    CHECK(a.off_y == b.off_y);
    CHECK(a.words == b.words);
}

TEST_CASE("rig_error: zero at the truth, growing with perturbation") {
    const ParticleModel m = builtin_model(ParticleKind::chiral_right);
    CameraRig rig;
    rig.cameras.push_back(test_camera());
    {
        CameraModel side = test_camera();
        side.position = {-500, 0, 0};
        side.view_direction = {1, 0, 0};
        side.up = {0, 0, 1};
        rig.cameras.push_back(side);
    }

    Rng rng(55);
    int five_beats_one = 0;
    const int trials = 50;
    for (int t = 0; t < trials; ++t) {
        const Quaternion q = random_orientation(rng);
        std::vector<SilhouetteImage> observed;
        for (const CameraModel& cam : rig.cameras) {
            observed.push_back(render_silhouette(m, q, cam, 60));
        }
        const CostBreakdown at_truth = rig_error(m, q, rig, observed);
        CHECK(at_truth.total == 0.0);
        CHECK(at_truth.per_camera.size() == 2);

        const Vec3 axis = Vec3{rng.gaussian(), rng.gaussian(), rng.gaussian()}.normalized();
        const double c1 = rig_error(m, from_axis_angle(axis, deg_to_rad(1.0)) * q, rig, observed).total;
        const double c5 = rig_error(m, from_axis_angle(axis, deg_to_rad(5.0)) * q, rig, observed).total;
        CHECK(c5 > 0.0);
        if (c5 > c1) {
            ++five_beats_one;
        }
    }
    // Median comparison: the 5-degree perturbation costs more than the
    // 1-degree one in the typical case.
    CHECK(five_beats_one > trials / 2);
}

TEST_CASE("rig_error total is invariant under camera permutation") {
    const ParticleModel m = builtin_model(ParticleKind::tetrad);
    CameraRig rig = preset_rig(RigPreset::orthogonal_3);
    Rng rng(56);
    const Quaternion truth = random_orientation(rng);
    const Quaternion eval_at = from_axis_angle({0, 0, 1}, deg_to_rad(3.0)) * truth;
    std::vector<SilhouetteImage> observed;
    for (const CameraModel& cam : rig.cameras) {
        observed.push_back(render_silhouette(m, truth, cam, 60));
    }
    const double base = rig_error(m, eval_at, rig, observed).total;

    CameraRig permuted;
    permuted.cameras = {rig.cameras[2], rig.cameras[0], rig.cameras[1]};
    std::vector<SilhouetteImage> obs_permuted = {observed[2], observed[0], observed[1]};
    const double perm = rig_error(m, eval_at, permuted, obs_permuted).total;
    CHECK(std::abs(base - perm) < 1e-12);
}

TEST_CASE("cost breakdown total equals the per-camera sum") {
    const ParticleModel m = builtin_model(ParticleKind::tetrad);
    const CameraRig rig = preset_rig(RigPreset::orthogonal_3);
    Rng rng(57);
    const Quaternion truth = random_orientation(rng);
    std::vector<SilhouetteImage> observed;
    for (const CameraModel& cam : rig.cameras) {
        observed.push_back(render_silhouette(m, truth, cam, 60));
    }
    const CostBreakdown c =
        rig_error(m, from_axis_angle({1, 0, 0}, 0.1) * truth, rig, observed);
    double sum = 0.0;
    for (double v : c.per_camera) {
        CHECK(v >= 0.0);
        sum += v;
    }
    CHECK(std::abs(c.total - sum) < 1e-12);
}
