#pragma once

#include <vector>

#include "silhpose/rng.hpp"
#include "silhpose/vec.hpp"

namespace silhpose {

/// Unit quaternion encoding a 3D orientation. q and -q denote the same
/// orientation; comparisons must stay sign-invariant.
struct Quaternion {
    double w = 1.0;
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    static Quaternion identity() { return {1.0, 0.0, 0.0, 0.0}; }

    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

    Quaternion conjugate() const { return {w, -x, -y, -z}; }

    Vec3 imag() const { return {x, y, z}; }

    /// Hamilton product. Terms are grouped so that q * q.conjugate() cancels
    /// exactly in floating point: the orientation distance of q to +-q is a
    /// hard zero.
    Quaternion operator*(const Quaternion& r) const {
        return {(w * r.w - x * r.x) + (-y * r.y - z * r.z),
                (w * r.x + x * r.w) + (y * r.z - z * r.y),
                (w * r.y + y * r.w) + (z * r.x - x * r.z),
                (w * r.z + z * r.w) + (x * r.y - y * r.x)};
    }

    Quaternion normalized() const;

    /// Sign-canonical form: w >= 0 (ties broken on the first nonzero
    /// imaginary component). Serialization and stored results use this.
    Quaternion canonical() const;
};

/// Rotates p by q: the imaginary part of q * (0, p) * q^-1. Requires unit q.
Vec3 rotate_point(const Quaternion& q, const Vec3& p);

/// Rotation of `angle` radians about the unit axis `u`. Rejects non-unit axes
/// (norm off by more than 1e-9).
Quaternion from_axis_angle(const Vec3& u, double angle);

/// Rotation angle of q folded to [0, pi].
double rotation_angle(const Quaternion& q);

/// Finite set of rotations mapping a particle onto itself. Always contains
/// the identity (kept as the first element).
struct SymmetryGroup {
    std::vector<Quaternion> elements;

    static SymmetryGroup identity_only();
    /// Cyclic group C_n about a unit axis.
    static SymmetryGroup cyclic(const Vec3& axis, int n);
    /// Rotational tetrahedral group (12 elements) for a tetrad whose arms
    /// point to the vertices (1,1,1), (1,-1,-1), (-1,1,-1), (-1,-1,1).
    static SymmetryGroup tetrahedral();

    /// True if the element set is closed under composition up to sign,
    /// within tol on the orientation distance.
    bool is_closed(double tol = 1e-9) const;
};

/// Symmetry-reduced angle between two orientations:
///   min over s in sym of 2*asin(||imag(q1 * (q2*s)^-1)||), in [0, pi].
/// With the identity-only group this is the plain orientation distance.
double angle_between(const Quaternion& q1, const Quaternion& q2, const SymmetryGroup& sym);
double angle_between(const Quaternion& q1, const Quaternion& q2);

/// Uniform sample on SO(3) (normalized 4D Gaussian), sign-canonicalized.
Quaternion random_orientation(Rng& rng);

/// Z-Y-X (yaw-pitch-roll) Euler decomposition, intrinsic rotation order
/// Z then Y then X. theta is the middle (Y) angle.
struct EulerZYX {
    double psi = 0.0;
    double theta = 0.0;
    double phi = 0.0;
    bool gimbal_lock = false;
};

/// Decomposes q as qz(psi)*qy(theta)*qx(phi). At gimbal lock (|theta| near
/// pi/2) phi is pinned to 0 and the flag is set.
EulerZYX to_euler_zyx(const Quaternion& q);
Quaternion from_euler_zyx(const EulerZYX& e);

/// n near-uniform unit vectors from the spherical Fibonacci lattice.
std::vector<Vec3> fibonacci_axes(int n);

}  // namespace silhpose
