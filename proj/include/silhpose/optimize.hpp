#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "silhpose/cost.hpp"
#include "silhpose/orientlib.hpp"
#include "silhpose/rotation.hpp"

namespace silhpose {

struct FitResult {
    Quaternion q;
    double total_error = 0.0;
    std::string particle_type;
    int iterations = 0;
    bool converged = false;
    double hyper_volume = 0.0;  // final simplex 4-volume
};

struct NelderMeadOptions {
    double init_spread = deg_to_rad(8.0);  // per-component perturbation, angle-equivalent
    double vol_tol = 1e-8;                 // simplex hyper-volume termination
    int max_iter = 500;
};

/// 4-volume of the simplex spanned by five 4D points, via the Cayley-Menger
/// determinant.
double simplex_hypervolume(const std::array<std::array<double, 4>, 5>& pts);

/// Standard Nelder-Mead (reflection 1, expansion 2, contraction 0.5, shrink
/// 0.5) over raw quaternion 4-vectors; every candidate is renormalized
/// before f is evaluated. The initial simplex is q0 plus one vertex per
/// perturbed component. Terminates when the simplex hyper-volume drops below
/// vol_tol (converged) or at max_iter.
FitResult nelder_mead(const std::function<double(const Quaternion&)>& f, const Quaternion& q0,
                      const NelderMeadOptions& opts = {});

struct RefineOptions {
    NelderMeadOptions nm;
    /// Extra Nelder-Mead rounds restarted from each run's result with
    /// progressively halved spread (and proportionally tightened volume
    /// tolerance, never looser than nm.vol_tol); lifts results off the
    /// plateau the volume termination stops on.
    int polish_rounds = 5;
    /// When the polished per-guess results disagree by more than
    /// scatter_gate_rad the landscape is multimodal; a deterministic ring of
    /// restart seeds around the winner then hunts for a deeper basin. The
    /// ring normally engages only for 1-2 camera rigs (or unconverged
    /// winners), where multimodality actually occurs; ring_any_views lifts
    /// that restriction (used by the tracking refits, whose clustered warm
    /// seeds rarely scatter, so the ring stays cheap).
    int restart_ring = 8;
    double scatter_gate_rad = deg_to_rad(2.0);
    double restart_angle_rad = deg_to_rad(6.0);
    bool ring_any_views = false;
};

/// Optimizes every first guess with Nelder-Mead against the total rig error
/// and returns the converged result with the lowest total error (best
/// unconverged result if none converged).
FitResult refine(const ParticleModel& m, const CameraRig& rig,
                 const std::vector<SilhouetteImage>& observed,
                 const std::vector<Quaternion>& guesses, const RefineOptions& opts = {},
                 const Vec3& world_pos = {});

FitResult refine_with_context(const ParticleModel& m, const RigCostContext& ctx,
                              const std::vector<Quaternion>& guesses,
                              const RefineOptions& opts = {});

struct ModelLibrary {
    const ParticleModel* model = nullptr;
    const OrientationLibrary* library = nullptr;
};

/// Queries each candidate model's library, picks the particle type whose
/// best first guess scores lowest, and refines within that type.
FitResult classify_and_fit(const std::vector<ModelLibrary>& candidates, const CameraRig& rig,
                           const std::vector<SilhouetteImage>& observed,
                           const RefineOptions& opts = {}, int k_guesses = 4,
                           const Vec3& world_pos = {});

}  // namespace silhpose
