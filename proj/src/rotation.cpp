#include "silhpose/rotation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace silhpose {

Quaternion Quaternion::normalized() const {
    const double n = norm();
    if (n < 1e-300) {
        throw std::invalid_argument("cannot normalize near-zero quaternion");
    }
    return {w / n, x / n, y / n, z / n};
}

Quaternion Quaternion::canonical() const {
    const Quaternion q = normalized();
    bool flip = q.w < 0.0;
    if (q.w == 0.0) {
        if (q.x != 0.0) {
            flip = q.x < 0.0;
        } else if (q.y != 0.0) {
            flip = q.y < 0.0;
        } else {
            flip = q.z < 0.0;
        }
    }
    return flip ? Quaternion{-q.w, -q.x, -q.y, -q.z} : q;
}

Vec3 rotate_point(const Quaternion& q, const Vec3& p) {
    const Quaternion pure{0.0, p.x, p.y, p.z};
    return (q * pure * q.conjugate()).imag();
}

Quaternion from_axis_angle(const Vec3& u, double angle) {
    if (std::abs(u.norm() - 1.0) > 1e-9) {
        throw std::invalid_argument("rotation axis must have unit length");
    }
    const double h = 0.5 * angle;
    const double s = std::sin(h);
    return {std::cos(h), u.x * s, u.y * s, u.z * s};
}

double rotation_angle(const Quaternion& q) {
    const double s = std::clamp(q.imag().norm(), 0.0, 1.0);
    return 2.0 * std::asin(s);
}

SymmetryGroup SymmetryGroup::identity_only() { return SymmetryGroup{{Quaternion::identity()}}; }

SymmetryGroup SymmetryGroup::cyclic(const Vec3& axis, int n) {
    if (n < 1) {
        throw std::invalid_argument("cyclic group order must be >= 1");
    }
    SymmetryGroup g;
    g.elements.push_back(Quaternion::identity());
    const Vec3 u = axis.normalized();
    for (int k = 1; k < n; ++k) {
        g.elements.push_back(from_axis_angle(u, 2.0 * kPi * k / n).canonical());
    }
    return g;
}

SymmetryGroup SymmetryGroup::tetrahedral() {
    SymmetryGroup g;
    g.elements.push_back(Quaternion::identity());
    // 180 degrees about each coordinate axis (edge-midpoint axes).
    g.elements.push_back(from_axis_angle({1, 0, 0}, kPi).canonical());
    g.elements.push_back(from_axis_angle({0, 1, 0}, kPi).canonical());
    g.elements.push_back(from_axis_angle({0, 0, 1}, kPi).canonical());
    // +-120 degrees about each vertex axis.
    const double a = 1.0 / std::sqrt(3.0);
    const Vec3 verts[4] = {{a, a, a}, {a, -a, -a}, {-a, a, -a}, {-a, -a, a}};
    for (const Vec3& v : verts) {
        g.elements.push_back(from_axis_angle(v, 2.0 * kPi / 3.0).canonical());
        g.elements.push_back(from_axis_angle(v, -2.0 * kPi / 3.0).canonical());
    }
    return g;
}

bool SymmetryGroup::is_closed(double tol) const {
    for (const Quaternion& a : elements) {
        for (const Quaternion& b : elements) {
            const Quaternion ab = a * b;
            double best = kPi;
            for (const Quaternion& c : elements) {
                best = std::min(best, angle_between(ab, c));
            }
            if (best > tol) {
                return false;
            }
        }
    }
    return true;
}

double angle_between(const Quaternion& q1, const Quaternion& q2, const SymmetryGroup& sym) {
    double best = kPi;
    for (const Quaternion& s : sym.elements) {
        const Quaternion rel = q1 * (q2 * s).conjugate();
        const double v = std::clamp(rel.imag().norm(), 0.0, 1.0);
        best = std::min(best, 2.0 * std::asin(v));
    }
    return best;
}

double angle_between(const Quaternion& q1, const Quaternion& q2) {
    const Quaternion rel = q1 * q2.conjugate();
    const double v = std::clamp(rel.imag().norm(), 0.0, 1.0);
    return 2.0 * std::asin(v);
}

Quaternion random_orientation(Rng& rng) {
    for (;;) {
        const Quaternion q{rng.gaussian(), rng.gaussian(), rng.gaussian(), rng.gaussian()};
        const double n = q.norm();
        if (n > 1e-6) {
            return Quaternion{q.w / n, q.x / n, q.y / n, q.z / n}.canonical();
        }
    }
}

EulerZYX to_euler_zyx(const Quaternion& qin) {
    const Quaternion q = qin.normalized();
    // Rotation matrix entries needed for the Z-Y-X extraction.
    const double r00 = 1.0 - 2.0 * (q.y * q.y + q.z * q.z);
    const double r10 = 2.0 * (q.x * q.y + q.w * q.z);
    const double r20 = 2.0 * (q.x * q.z - q.w * q.y);
    const double r21 = 2.0 * (q.y * q.z + q.w * q.x);
    const double r22 = 1.0 - 2.0 * (q.x * q.x + q.y * q.y);
    const double r01 = 2.0 * (q.x * q.y - q.w * q.z);
    const double r11 = 1.0 - 2.0 * (q.x * q.x + q.z * q.z);

    EulerZYX e;
    const double sp = std::clamp(-r20, -1.0, 1.0);
    e.theta = std::asin(sp);
    if (std::abs(sp) < 1.0 - 1e-9) {
        e.psi = std::atan2(r10, r00);
        e.phi = std::atan2(r21, r22);
    } else {
        // Gimbal lock: only psi -+ phi is determined; pin phi = 0.
        e.psi = std::atan2(-r01, r11);
        e.phi = 0.0;
        e.gimbal_lock = true;
    }
    return e;
}

Quaternion from_euler_zyx(const EulerZYX& e) {
    const Quaternion qz = from_axis_angle({0, 0, 1}, e.psi);
    const Quaternion qy = from_axis_angle({0, 1, 0}, e.theta);
    const Quaternion qx = from_axis_angle({1, 0, 0}, e.phi);
    return (qz * qy * qx).normalized();
}

std::vector<Vec3> fibonacci_axes(int n) {
    if (n < 1) {
        throw std::invalid_argument("fibonacci_axes requires n >= 1");
    }
    std::vector<Vec3> axes;
    axes.reserve(static_cast<size_t>(n));
    const double golden_angle = kPi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < n; ++i) {
        const double zc = 1.0 - 2.0 * (i + 0.5) / n;
        const double r = std::sqrt(std::max(0.0, 1.0 - zc * zc));
        const double phi = golden_angle * i;
        axes.push_back(Vec3{r * std::cos(phi), r * std::sin(phi), zc}.normalized());
    }
    return axes;
}

}  // namespace silhpose
