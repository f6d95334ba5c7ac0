#include "silhpose/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace silhpose {

namespace {

// Chiral crank proportions: central rod of half-length kChiralH along z, two
// end arms of length kChiralArm in the end planes, twisted 90 degrees apart.
// The shape is C2-symmetric about the x axis and distinct from its mirror.
constexpr double kChiralH = 1.5;
constexpr double kChiralArm = 2.5;
constexpr double kChiralTubeRadius = 0.4;
constexpr double kTetradArm = 2.5;
constexpr double kTetradTubeRadius = 0.4;
constexpr double kOloidRadius = 1.5;

WireframeModel make_chiral(bool left_handed) {
    const double c = kChiralArm * std::sqrt(0.5);
    const double sx = left_handed ? -1.0 : 1.0;
    WireframeModel m;
    m.name = left_handed ? "chiral_left" : "chiral_right";
    m.vertices = {{0, 0, -kChiralH},
                  {0, 0, kChiralH},
                  {sx * c, c, kChiralH},
                  {sx * c, -c, -kChiralH}};
    m.edges = {{0, 1}, {1, 2}, {0, 3}};
    m.tube_radius = kChiralTubeRadius;
    m.symmetry = SymmetryGroup::cyclic({1, 0, 0}, 2);
    m.com = wireframe_com(m);
    return m;
}

WireframeModel make_tetrad() {
    const double s = kTetradArm / std::sqrt(3.0);
    WireframeModel m;
    m.name = "tetrad";
    m.vertices = {{0, 0, 0}, {s, s, s}, {s, -s, -s}, {-s, s, -s}, {-s, -s, s}};
    m.edges = {{0, 1}, {0, 2}, {0, 3}, {0, 4}};
    m.tube_radius = kTetradTubeRadius;
    m.symmetry = SymmetryGroup::tetrahedral();
    m.com = wireframe_com(m);
    return m;
}

OloidModel make_oloid() {
    OloidModel m;
    m.name = "oloid";
    m.circle_radius = kOloidRadius;
    m.samples_per_circle = 64;
    // Circle 1 in the x-z plane, circle 2 in the x-y plane; centers one
    // radius apart so each circle passes through the other's center.
    m.center1 = {-0.5 * kOloidRadius, 0, 0};
    m.u1 = {1, 0, 0};
    m.v1 = {0, 0, 1};
    m.center2 = {0.5 * kOloidRadius, 0, 0};
    m.u2 = {1, 0, 0};
    m.v2 = {0, 1, 0};
    m.com = {0, 0, 0};
    // Proper symmetries of the hull: 180 deg about the center line, and the
    // two 180 deg axes that swap the circles (normals are y and z here).
    const double s = std::sqrt(0.5);
    m.symmetry.elements = {Quaternion::identity(),
                           from_axis_angle({1, 0, 0}, kPi).canonical(),
                           from_axis_angle({0, s, s}, kPi).canonical(),
                           from_axis_angle({0, -s, s}, kPi).canonical()};
    return m;
}

void validate_wireframe(const WireframeModel& m, const std::string& where) {
    if (m.edges.empty()) {
        throw std::runtime_error(where + ": wireframe model needs at least one edge");
    }
    if (!(m.tube_radius > 0.0)) {
        throw std::runtime_error(where + ": tube_radius must be > 0, got " +
                                 std::to_string(m.tube_radius));
    }
    const int n = static_cast<int>(m.vertices.size());
    for (size_t e = 0; e < m.edges.size(); ++e) {
        const auto [a, b] = m.edges[e];
        if (a < 0 || a >= n || b < 0 || b >= n) {
            throw std::runtime_error(where + ": edge " + std::to_string(e) +
                                     " references out-of-range vertex index " +
                                     std::to_string(a < 0 || a >= n ? a : b));
        }
    }
}

void validate_oloid(const OloidModel& m, const std::string& where) {
    if (!(m.circle_radius > 0.0)) {
        throw std::runtime_error(where + ": circle_radius must be > 0");
    }
    if (m.samples_per_circle < 16) {
        throw std::runtime_error(where + ": samples_per_circle must be >= 16, got " +
                                 std::to_string(m.samples_per_circle));
    }
    const double r = m.circle_radius;
    const Vec3 n1 = cross(m.u1, m.v1);
    const Vec3 n2 = cross(m.u2, m.v2);
    if (std::abs(dot(n1, n2)) > 1e-9) {
        throw std::runtime_error(where + ": oloid circle planes must be perpendicular");
    }
    if (std::abs((m.center2 - m.center1).norm() - r) > 1e-9) {
        throw std::runtime_error(where + ": oloid circles must pass through each other's center");
    }
}

}  // namespace

std::vector<Vec3> OloidModel::sample_points() const {
    std::vector<Vec3> pts;
    pts.reserve(static_cast<size_t>(2 * samples_per_circle));
    for (int k = 0; k < samples_per_circle; ++k) {
        const double t = 2.0 * kPi * k / samples_per_circle;
        const double c = std::cos(t);
        const double s = std::sin(t);
        pts.push_back(center1 + circle_radius * (c * u1 + s * v1));
    }
    for (int k = 0; k < samples_per_circle; ++k) {
        const double t = 2.0 * kPi * k / samples_per_circle;
        const double c = std::cos(t);
        const double s = std::sin(t);
        pts.push_back(center2 + circle_radius * (c * u2 + s * v2));
    }
    return pts;
}

ParticleModel builtin_model(ParticleKind kind) {
    switch (kind) {
        case ParticleKind::chiral_left:
            return make_chiral(true);
        case ParticleKind::chiral_right:
            return make_chiral(false);
        case ParticleKind::tetrad:
            return make_tetrad();
        case ParticleKind::oloid:
            return make_oloid();
    }
    throw std::invalid_argument("unknown particle kind");
}

ParticleKind particle_kind_from_string(const std::string& s) {
    if (s == "chiral_left") return ParticleKind::chiral_left;
    if (s == "chiral_right") return ParticleKind::chiral_right;
    if (s == "tetrad") return ParticleKind::tetrad;
    if (s == "oloid") return ParticleKind::oloid;
    throw std::invalid_argument("unknown particle kind: " + s);
}

std::string to_string(ParticleKind kind) {
    switch (kind) {
        case ParticleKind::chiral_left:
            return "chiral_left";
        case ParticleKind::chiral_right:
            return "chiral_right";
        case ParticleKind::tetrad:
            return "tetrad";
        case ParticleKind::oloid:
            return "oloid";
    }
    return "?";
}

ParticleModel rotate_model(const ParticleModel& m, const Quaternion& q) {
    const Quaternion qn = q.normalized();
    if (const auto* w = std::get_if<WireframeModel>(&m)) {
        WireframeModel out = *w;
        for (Vec3& v : out.vertices) {
            v = rotate_point(qn, v);
        }
        out.com = rotate_point(qn, w->com);
        return out;
    }
    const auto& o = std::get<OloidModel>(m);
    OloidModel out = o;
    out.center1 = rotate_point(qn, o.center1);
    out.u1 = rotate_point(qn, o.u1);
    out.v1 = rotate_point(qn, o.v1);
    out.center2 = rotate_point(qn, o.center2);
    out.u2 = rotate_point(qn, o.u2);
    out.v2 = rotate_point(qn, o.v2);
    out.com = rotate_point(qn, o.com);
    return out;
}

const std::string& model_name(const ParticleModel& m) {
    return std::visit([](const auto& v) -> const std::string& { return v.name; }, m);
}

const Vec3& model_com(const ParticleModel& m) {
    return std::visit([](const auto& v) -> const Vec3& { return v.com; }, m);
}

const SymmetryGroup& model_symmetry(const ParticleModel& m) {
    return std::visit([](const auto& v) -> const SymmetryGroup& { return v.symmetry; }, m);
}

double model_extent(const ParticleModel& m) {
    std::vector<Vec3> pts;
    double pad = 0.0;
    if (const auto* w = std::get_if<WireframeModel>(&m)) {
        pts = w->vertices;
        pad = 2.0 * w->tube_radius;
    } else {
        pts = std::get<OloidModel>(m).sample_points();
    }
    double best = 0.0;
    for (size_t i = 0; i < pts.size(); ++i) {
        for (size_t j = i + 1; j < pts.size(); ++j) {
            best = std::max(best, (pts[i] - pts[j]).norm());
        }
    }
    return best + pad;
}

Vec3 wireframe_com(const WireframeModel& m) {
    Vec3 weighted{0, 0, 0};
    double total = 0.0;
    for (const auto& [a, b] : m.edges) {
        const Vec3& pa = m.vertices[static_cast<size_t>(a)];
        const Vec3& pb = m.vertices[static_cast<size_t>(b)];
        const double len = (pb - pa).norm();
        weighted += (pa + pb) * (0.5 * len);
        total += len;
    }
    if (total <= 0.0) {
        throw std::runtime_error("wireframe has zero total edge length");
    }
    return weighted / total;
}

namespace {

std::vector<double> parse_doubles(const std::string& rest, size_t count, const std::string& where) {
    std::istringstream iss(rest);
    std::vector<double> vals(count);
    for (size_t i = 0; i < count; ++i) {
        if (!(iss >> vals[i])) {
            throw std::runtime_error(where + ": expected " + std::to_string(count) + " numbers");
        }
    }
    return vals;
}

}  // namespace

ParticleModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open model file: " + path);
    }
    std::string header;
    std::getline(in, header);
    if (header != "silhpose-model v1") {
        throw std::runtime_error(path + ":1: bad model header: '" + header + "'");
    }

    WireframeModel wf;
    OloidModel ol;
    std::string kind;
    bool have_com = false;
    Vec3 com;
    std::vector<Quaternion> symmetry;
    int circles_seen = 0;

    std::string line;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = path + ":" + std::to_string(lineno);
        std::istringstream iss(line);
        std::string key;
        if (!(iss >> key) || key[0] == '#') {
            continue;
        }
        std::string rest;
        std::getline(iss, rest);
        if (key == "kind") {
            std::istringstream(rest) >> kind;
            if (kind != "wireframe" && kind != "oloid") {
                throw std::runtime_error(where + ": unknown model kind '" + kind + "'");
            }
        } else if (key == "name") {
            std::string n;
            std::istringstream(rest) >> n;
            wf.name = ol.name = n;
        } else if (key == "tube_radius") {
            wf.tube_radius = parse_doubles(rest, 1, where)[0];
        } else if (key == "vertex") {
            const auto v = parse_doubles(rest, 3, where);
            wf.vertices.push_back({v[0], v[1], v[2]});
        } else if (key == "edge") {
            const auto v = parse_doubles(rest, 2, where);
            wf.edges.emplace_back(static_cast<int>(v[0]), static_cast<int>(v[1]));
        } else if (key == "circle_radius") {
            ol.circle_radius = parse_doubles(rest, 1, where)[0];
        } else if (key == "samples_per_circle") {
            ol.samples_per_circle = static_cast<int>(parse_doubles(rest, 1, where)[0]);
        } else if (key == "circle") {
            const auto v = parse_doubles(rest, 9, where);
            if (circles_seen == 0) {
                ol.center1 = {v[0], v[1], v[2]};
                ol.u1 = {v[3], v[4], v[5]};
                ol.v1 = {v[6], v[7], v[8]};
            } else if (circles_seen == 1) {
                ol.center2 = {v[0], v[1], v[2]};
                ol.u2 = {v[3], v[4], v[5]};
                ol.v2 = {v[6], v[7], v[8]};
            } else {
                throw std::runtime_error(where + ": more than two circles");
            }
            ++circles_seen;
        } else if (key == "com") {
            const auto v = parse_doubles(rest, 3, where);
            com = {v[0], v[1], v[2]};
            have_com = true;
        } else if (key == "symmetry") {
            const auto v = parse_doubles(rest, 4, where);
            Quaternion q{v[0], v[1], v[2], v[3]};
            if (std::abs(q.norm() - 1.0) > 1e-6) {
                throw std::runtime_error(where + ": symmetry quaternion not unit norm");
            }
            symmetry.push_back(q.canonical());
        } else {
            throw std::runtime_error(where + ": unknown key '" + key + "'");
        }
    }

    SymmetryGroup group = SymmetryGroup::identity_only();
    for (const Quaternion& q : symmetry) {
        if (angle_between(q, Quaternion::identity()) > 1e-9) {
            group.elements.push_back(q);
        }
    }

    if (kind == "wireframe") {
        wf.symmetry = group;
        wf.com = have_com ? com : wireframe_com(wf);
        validate_wireframe(wf, path);
        return wf;
    }
    if (kind == "oloid") {
        if (circles_seen != 2) {
            throw std::runtime_error(path + ": oloid model needs exactly two circle lines");
        }
        ol.symmetry = group;
        ol.com = have_com ? com : (ol.center1 + ol.center2) * 0.5;
        validate_oloid(ol, path);
        return ol;
    }
    throw std::runtime_error(path + ": missing 'kind' line");
}

void save_model(const ParticleModel& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write model file: " + path);
    }
    out.precision(17);
    out << "silhpose-model v1\n";
    if (const auto* w = std::get_if<WireframeModel>(&m)) {
        out << "kind wireframe\n";
        out << "name " << w->name << "\n";
        out << "tube_radius " << w->tube_radius << "\n";
        for (const Vec3& v : w->vertices) {
            out << "vertex " << v.x << " " << v.y << " " << v.z << "\n";
        }
        for (const auto& [a, b] : w->edges) {
            out << "edge " << a << " " << b << "\n";
        }
        out << "com " << w->com.x << " " << w->com.y << " " << w->com.z << "\n";
        for (size_t i = 1; i < w->symmetry.elements.size(); ++i) {
            const Quaternion& q = w->symmetry.elements[i];
            out << "symmetry " << q.w << " " << q.x << " " << q.y << " " << q.z << "\n";
        }
    } else {
        const auto& o = std::get<OloidModel>(m);
        out << "kind oloid\n";
        out << "name " << o.name << "\n";
        out << "circle_radius " << o.circle_radius << "\n";
        out << "samples_per_circle " << o.samples_per_circle << "\n";
        auto circle = [&out](const Vec3& c, const Vec3& u, const Vec3& v) {
            out << "circle " << c.x << " " << c.y << " " << c.z << " " << u.x << " " << u.y << " "
                << u.z << " " << v.x << " " << v.y << " " << v.z << "\n";
        };
        circle(o.center1, o.u1, o.v1);
        circle(o.center2, o.u2, o.v2);
        out << "com " << o.com.x << " " << o.com.y << " " << o.com.z << "\n";
        for (size_t i = 1; i < o.symmetry.elements.size(); ++i) {
            const Quaternion& q = o.symmetry.elements[i];
            out << "symmetry " << q.w << " " << q.x << " " << q.y << " " << q.z << "\n";
        }
    }
}

}  // namespace silhpose
