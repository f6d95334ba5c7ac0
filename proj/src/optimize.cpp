#include "silhpose/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace silhpose {

namespace {

using Point4 = std::array<double, 4>;

Quaternion to_quat(const Point4& p) { return Quaternion{p[0], p[1], p[2], p[3]}.normalized(); }

Point4 axpy(const Point4& a, double s, const Point4& b) {
    // a + s * (b - a) applied componentwise via explicit form below.
    Point4 r;
    for (int i = 0; i < 4; ++i) {
        r[i] = a[i] + s * (b[i] - a[i]);
    }
    return r;
}

double det6(double m[6][6]) {
    double det = 1.0;
    for (int col = 0; col < 6; ++col) {
        int piv = col;
        for (int r = col + 1; r < 6; ++r) {
            if (std::abs(m[r][col]) > std::abs(m[piv][col])) {
                piv = r;
            }
        }
        if (piv != col) {
            for (int c = 0; c < 6; ++c) {
                std::swap(m[col][c], m[piv][c]);
            }
            det = -det;
        }
        const double p = m[col][col];
        if (p == 0.0) {
            return 0.0;
        }
        det *= p;
        for (int r = col + 1; r < 6; ++r) {
            const double f = m[r][col] / p;
            for (int c = col; c < 6; ++c) {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    return det;
}

}  // namespace

double simplex_hypervolume(const std::array<Point4, 5>& pts) {
    // Cayley-Menger: for an n-simplex, (-1)^(n+1) 2^n (n!)^2 V^2 = det(CM).
    // n = 4 gives V^2 = -det / 9216.
    double cm[6][6];
    cm[0][0] = 0.0;
    for (int i = 1; i < 6; ++i) {
        cm[0][i] = 1.0;
        cm[i][0] = 1.0;
    }
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 5; ++j) {
            double d2 = 0.0;
            for (int k = 0; k < 4; ++k) {
                const double d = pts[static_cast<size_t>(i)][static_cast<size_t>(k)] -
                                 pts[static_cast<size_t>(j)][static_cast<size_t>(k)];
                d2 += d * d;
            }
            cm[i + 1][j + 1] = d2;
        }
    }
    const double v2 = -det6(cm) / 9216.0;
    return std::sqrt(std::max(0.0, v2));
}

FitResult nelder_mead(const std::function<double(const Quaternion&)>& f, const Quaternion& q0,
                      const NelderMeadOptions& opts) {
    const Quaternion start = q0.normalized();
    std::array<Point4, 5> pts;
    std::array<double, 5> vals;
    pts[0] = {start.w, start.x, start.y, start.z};
    const double delta = std::sin(0.5 * opts.init_spread);
    for (int i = 1; i < 5; ++i) {
        pts[static_cast<size_t>(i)] = pts[0];
        pts[static_cast<size_t>(i)][static_cast<size_t>(i - 1)] += delta;
    }
    for (int i = 0; i < 5; ++i) {
        vals[static_cast<size_t>(i)] = f(to_quat(pts[static_cast<size_t>(i)]));
    }

    auto order = [&] {
        std::array<int, 5> idx{0, 1, 2, 3, 4};
        std::stable_sort(idx.begin(), idx.end(),
                         [&](int a, int b) { return vals[static_cast<size_t>(a)] < vals[static_cast<size_t>(b)]; });
        std::array<Point4, 5> p2;
        std::array<double, 5> v2;
        for (int i = 0; i < 5; ++i) {
            p2[static_cast<size_t>(i)] = pts[static_cast<size_t>(idx[static_cast<size_t>(i)])];
            v2[static_cast<size_t>(i)] = vals[static_cast<size_t>(idx[static_cast<size_t>(i)])];
        }
        pts = p2;
        vals = v2;
    };

    FitResult result;
    int iter = 0;
    for (;;) {
        order();
        result.hyper_volume = simplex_hypervolume(pts);
        if (result.hyper_volume < opts.vol_tol) {
            result.converged = true;
            break;
        }
        if (iter >= opts.max_iter) {
            break;
        }
        ++iter;

        Point4 centroid{0, 0, 0, 0};
        for (int i = 0; i < 4; ++i) {
            for (int k = 0; k < 4; ++k) {
                centroid[static_cast<size_t>(k)] += pts[static_cast<size_t>(i)][static_cast<size_t>(k)] / 4.0;
            }
        }
        const Point4& worst = pts[4];
        const Point4 reflected = axpy(centroid, -1.0, worst);  // c + (c - worst)
        const double fr = f(to_quat(reflected));

        if (fr < vals[0]) {
            const Point4 expanded = axpy(centroid, -2.0, worst);  // c + 2(c - worst)
            const double fe = f(to_quat(expanded));
            if (fe < fr) {
                pts[4] = expanded;
                vals[4] = fe;
            } else {
                pts[4] = reflected;
                vals[4] = fr;
            }
            continue;
        }
        if (fr < vals[3]) {
            pts[4] = reflected;
            vals[4] = fr;
            continue;
        }
        if (fr < vals[4]) {
            // Outside contraction.
            const Point4 contracted = axpy(centroid, -0.5, worst);
            const double fc = f(to_quat(contracted));
            if (fc <= fr) {
                pts[4] = contracted;
                vals[4] = fc;
                continue;
            }
        } else {
            // Inside contraction.
            const Point4 contracted = axpy(centroid, 0.5, worst);
            const double fc = f(to_quat(contracted));
            if (fc < vals[4]) {
                pts[4] = contracted;
                vals[4] = fc;
                continue;
            }
        }
        // Shrink toward the best vertex.
        for (int i = 1; i < 5; ++i) {
            pts[static_cast<size_t>(i)] = axpy(pts[0], 0.5, pts[static_cast<size_t>(i)]);
            vals[static_cast<size_t>(i)] = f(to_quat(pts[static_cast<size_t>(i)]));
        }
    }

    result.q = to_quat(pts[0]).canonical();
    result.total_error = vals[0];
    result.iterations = iter;
    return result;
}

namespace {

/// Restart rounds with halved spread. The volume tolerance shrinks with the
/// simplex (never above the base tolerance), otherwise a small restart
/// simplex would start below the threshold and terminate immediately. Each
/// round only ever improves the total error.
FitResult polish_result(const std::function<double(const Quaternion&)>& objective, FitResult r,
                        const NelderMeadOptions& base, int rounds, int& iterations) {
    NelderMeadOptions polish = base;
    for (int round = 0; round < rounds; ++round) {
        polish.init_spread *= 0.5;
        const double delta = std::sin(0.5 * polish.init_spread);
        const double init_volume = delta * delta * delta * delta / 24.0;
        polish.vol_tol = std::min(base.vol_tol, init_volume / 256.0);
        const FitResult next = nelder_mead(objective, r.q, polish);
        iterations += next.iterations;
        if (next.total_error < r.total_error) {
            const bool conv = r.converged || next.converged;
            r = next;
            r.converged = conv;
        }
    }
    return r;
}

}  // namespace

FitResult refine_with_context(const ParticleModel& m, const RigCostContext& ctx,
                              const std::vector<Quaternion>& guesses, const RefineOptions& opts) {
    if (guesses.empty()) {
        throw std::invalid_argument("refine: at least one first guess required");
    }
    const auto objective = [&](const Quaternion& q) { return ctx.evaluate(m, q).total; };
    const SymmetryGroup& sym = model_symmetry(m);

    int total_iterations = 0;
    std::vector<FitResult> results;
    results.reserve(guesses.size());
    for (const Quaternion& g : guesses) {
        FitResult r = nelder_mead(objective, g, opts.nm);
        total_iterations += r.iterations;
        r = polish_result(objective, r, opts.nm, opts.polish_rounds, total_iterations);
        results.push_back(r);
    }

    // Lowest-total-error converged result; best-so-far if none converged.
    FitResult winner = results.front();
    for (const FitResult& r : results) {
        if (r.converged == winner.converged ? r.total_error < winner.total_error
                                            : r.converged) {
            winner = r;
        }
    }
    double scatter = 0.0;
    for (size_t a = 0; a < results.size(); ++a) {
        for (size_t b = a + 1; b < results.size(); ++b) {
            scatter = std::max(scatter, angle_between(results[a].q, results[b].q, sym));
        }
    }

    // Disagreement between the polished runs marks a multimodal landscape;
    // a deterministic restart ring around the winner then hunts for a
    // deeper basin. With three or more views the landscape near the winner
    // is effectively unimodal and restarts never improve it, so the ring is
    // reserved for the one- and two-camera cases (and unconverged fits).
    const bool few_views = ctx.rig().cameras.size() <= 2;
    if (opts.restart_ring > 0 && scatter > opts.scatter_gate_rad &&
        (few_views || !winner.converged || opts.ring_any_views)) {
        static const Vec3 kAxes[4] = {
            {1, 0, 0}, {0, 1, 0}, {0, 0, 1},
            {0.57735026918962576, 0.57735026918962576, 0.57735026918962576}};
        NelderMeadOptions half = opts.nm;
        half.init_spread *= 0.5;
        for (int rs = 0; rs < opts.restart_ring; ++rs) {
            const double sign = (rs & 1) ? -1.0 : 1.0;
            const Quaternion seed =
                from_axis_angle(kAxes[(rs / 2) % 4], sign * opts.restart_angle_rad) * winner.q;
            FitResult r = nelder_mead(objective, seed, half);
            total_iterations += r.iterations;
            r = polish_result(objective, r, half, std::max(0, opts.polish_rounds - 1),
                              total_iterations);
            if (r.total_error < winner.total_error) {
                const bool conv = winner.converged || r.converged;
                winner = r;
                winner.converged = conv;
            }
        }
    }

    winner.iterations = total_iterations;
    winner.particle_type = model_name(m);
    return winner;
}

FitResult refine(const ParticleModel& m, const CameraRig& rig,
                 const std::vector<SilhouetteImage>& observed,
                 const std::vector<Quaternion>& guesses, const RefineOptions& opts,
                 const Vec3& world_pos) {
    const RigCostContext ctx(rig, observed, world_pos);
    return refine_with_context(m, ctx, guesses, opts);
}

FitResult classify_and_fit(const std::vector<ModelLibrary>& candidates, const CameraRig& rig,
                           const std::vector<SilhouetteImage>& observed, const RefineOptions& opts,
                           int k_guesses, const Vec3& world_pos) {
    if (candidates.empty()) {
        throw std::invalid_argument("classify_and_fit: no candidate models");
    }
    const RigCostContext ctx(rig, observed, world_pos);

    std::vector<std::vector<Quaternion>> guess_qs(candidates.size());
    std::vector<double> guess_error(candidates.size());
    double lowest = 0.0;
    for (size_t i = 0; i < candidates.size(); ++i) {
        const ModelLibrary& c = candidates[i];
        if (c.library->rig_fingerprint != rig_fingerprint(rig)) {
            throw std::runtime_error("classify_and_fit: library rig fingerprint mismatch for " +
                                     model_name(*c.model));
        }
        if (c.library->resolution != ctx.resolution()) {
            throw std::runtime_error("classify_and_fit: library resolution mismatch for " +
                                     model_name(*c.model));
        }
        const std::vector<Guess> guesses =
            best_guesses_prepared(*c.library, ctx.observed_masks(), k_guesses);
        guess_error[i] = guesses.front().total_error;
        for (const Guess& g : guesses) {
            guess_qs[i].push_back(g.q);
        }
        if (i == 0 || guess_error[i] < lowest) {
            lowest = guess_error[i];
        }
    }

    // The particle type with the lowest first-guess error wins outright.
    // Types scoring within kAmbiguityRatio of it are close enough that the
    // coarse grid cannot settle the call; those are refined too and the
    // refined total error decides.
    constexpr double kAmbiguityRatio = 2.0;
    FitResult best;
    bool have = false;
    for (size_t i = 0; i < candidates.size(); ++i) {
        if (guess_error[i] > kAmbiguityRatio * lowest) {
            continue;
        }
        const FitResult r =
            refine_with_context(*candidates[i].model, ctx, guess_qs[i], opts);
        if (!have || r.total_error < best.total_error) {
            best = r;
            have = true;
        }
    }
    return best;
}

}  // namespace silhpose
