#pragma once

#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "silhpose/rotation.hpp"
#include "silhpose/vec.hpp"

namespace silhpose {

/// Tube-skeleton particle: vertices joined by edges, each edge drawn as a
/// cylinder of tube_radius. Model units are world units.
struct WireframeModel {
    std::string name;
    std::vector<Vec3> vertices;
    std::vector<std::pair<int, int>> edges;
    double tube_radius = 0.0;
    Vec3 com;
    SymmetryGroup symmetry = SymmetryGroup::identity_only();
};

/// Standard oloid: two congruent circles in perpendicular planes, each
/// passing through the other's center. Circles are stored as center plus an
/// in-plane orthonormal basis (u, v) so rotation commutes exactly with
/// sampling.
struct OloidModel {
    std::string name;
    double circle_radius = 0.0;
    int samples_per_circle = 64;
    Vec3 com;
    SymmetryGroup symmetry = SymmetryGroup::identity_only();
    Vec3 center1, u1, v1;
    Vec3 center2, u2, v2;

    /// 2*samples_per_circle points on the two generating circles.
    std::vector<Vec3> sample_points() const;
};

using ParticleModel = std::variant<WireframeModel, OloidModel>;

enum class ParticleKind { chiral_left, chiral_right, tetrad, oloid };

ParticleModel builtin_model(ParticleKind kind);
ParticleKind particle_kind_from_string(const std::string& s);
std::string to_string(ParticleKind kind);

/// Rigid rotation of every vertex (or circle basis) and the COM by q.
ParticleModel rotate_model(const ParticleModel& m, const Quaternion& q);

const std::string& model_name(const ParticleModel& m);
const Vec3& model_com(const ParticleModel& m);
const SymmetryGroup& model_symmetry(const ParticleModel& m);

/// Largest caliper size of the model (max pairwise point distance plus the
/// tube diameter for wireframes). Used to scale camera focal lengths.
double model_extent(const ParticleModel& m);

/// Length-weighted centroid of the edge midpoints (uniform line density).
Vec3 wireframe_com(const WireframeModel& m);

/// Model file I/O ("silhpose-model v1" structured text). Load validates all
/// invariants and reports the offending line / index on failure.
ParticleModel load_model(const std::string& path);
void save_model(const ParticleModel& m, const std::string& path);

}  // namespace silhpose
