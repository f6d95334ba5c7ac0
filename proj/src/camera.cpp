#include "silhpose/camera.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace silhpose {

void CameraModel::validate() const {
    if (std::abs(view_direction.norm() - 1.0) > 1e-9 || std::abs(up.norm() - 1.0) > 1e-9) {
        throw std::runtime_error("camera view/up vectors must be unit length");
    }
    if (std::abs(dot(view_direction, up)) > 1e-9) {
        throw std::runtime_error("camera view_direction and up must be orthogonal");
    }
    if (!(focal_length > 0.0)) {
        throw std::runtime_error("camera focal_length must be > 0");
    }
}

double point_depth(const CameraModel& cam, const Vec3& p) {
    return dot(p - cam.position, cam.view_direction);
}

Vec2 project_point(const CameraModel& cam, const Vec3& p) {
    const Vec3 d = p - cam.position;
    const double depth = dot(d, cam.view_direction);
    if (!(depth > 0.0)) {
        throw std::runtime_error("point at or behind the camera plane");
    }
    const double xc = dot(d, cam.right());
    const double yc = -dot(d, cam.up);  // pixel y runs down the image
    return {cam.principal_point.x + cam.focal_length * xc / depth,
            cam.principal_point.y + cam.focal_length * yc / depth};
}

Ray back_project(const CameraModel& cam, const Vec2& px) {
    const Vec3 dir = cam.view_direction +
                     cam.right() * ((px.x - cam.principal_point.x) / cam.focal_length) -
                     cam.up * ((px.y - cam.principal_point.y) / cam.focal_length);
    return {cam.position, dir.normalized()};
}

Triangulation triangulate(const std::vector<Ray>& rays) {
    if (rays.size() < 2) {
        throw std::invalid_argument("triangulation needs at least two rays");
    }
    double max_pair_angle = 0.0;
    for (size_t i = 0; i < rays.size(); ++i) {
        for (size_t j = i + 1; j < rays.size(); ++j) {
            const double a = angle_between_vectors(rays[i].direction, rays[j].direction);
            max_pair_angle = std::max(max_pair_angle, std::min(a, kPi - a));
        }
    }
    if (max_pair_angle < 1e-6) {
        throw std::runtime_error("degenerate triangulation: rays are parallel");
    }

    // Normal equations for sum_i || (I - d d^T)(x - o_i) ||^2.
    double A[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
    double b[3] = {0, 0, 0};
    for (const Ray& r : rays) {
        const double d[3] = {r.direction.x, r.direction.y, r.direction.z};
        const double o[3] = {r.origin.x, r.origin.y, r.origin.z};
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                const double m = (i == j ? 1.0 : 0.0) - d[i] * d[j];
                A[i][j] += m;
                b[i] += m * o[j];
            }
        }
    }

    // 3x3 Gaussian elimination with partial pivoting.
    int idx[3] = {0, 1, 2};
    for (int col = 0; col < 3; ++col) {
        int piv = col;
        for (int r = col + 1; r < 3; ++r) {
            if (std::abs(A[idx[r]][col]) > std::abs(A[idx[piv]][col])) {
                piv = r;
            }
        }
        std::swap(idx[col], idx[piv]);
        const double p = A[idx[col]][col];
        if (std::abs(p) < 1e-12) {
            throw std::runtime_error("degenerate triangulation: singular system");
        }
        for (int r = col + 1; r < 3; ++r) {
            const double f = A[idx[r]][col] / p;
            for (int c = col; c < 3; ++c) {
                A[idx[r]][c] -= f * A[idx[col]][c];
            }
            b[idx[r]] -= f * b[idx[col]];
        }
    }
    double x[3];
    for (int row = 2; row >= 0; --row) {
        double s = b[idx[row]];
        for (int c = row + 1; c < 3; ++c) {
            s -= A[idx[row]][c] * x[c];
        }
        x[row] = s / A[idx[row]][row];
    }

    const Vec3 point{x[0], x[1], x[2]};
    double sq = 0.0;
    for (const Ray& r : rays) {
        const Vec3 d = point - r.origin;
        const Vec3 perp = d - r.direction * dot(d, r.direction);
        sq += perp.squared_norm();
    }
    return {point, std::sqrt(sq / static_cast<double>(rays.size()))};
}

RigPreset rig_preset_from_string(const std::string& s) {
    if (s == "near_planar_4") return RigPreset::near_planar_4;
    if (s == "orthogonal_2") return RigPreset::orthogonal_2;
    if (s == "orthogonal_3") return RigPreset::orthogonal_3;
    if (s == "tetrahedral_4") return RigPreset::tetrahedral_4;
    if (s == "single") return RigPreset::single;
    throw std::invalid_argument("unknown rig preset: " + s);
}

std::string to_string(RigPreset preset) {
    switch (preset) {
        case RigPreset::near_planar_4:
            return "near_planar_4";
        case RigPreset::orthogonal_2:
            return "orthogonal_2";
        case RigPreset::orthogonal_3:
            return "orthogonal_3";
        case RigPreset::tetrahedral_4:
            return "tetrahedral_4";
        case RigPreset::single:
            return "single";
    }
    return "?";
}

namespace {

CameraModel camera_at(const Vec3& pos, const RigOptions& opts) {
    CameraModel cam;
    cam.position = pos;
    cam.view_direction = (-pos).normalized();
    // Up: world z projected out of the view direction; fall back to world x
    // when looking straight along z.
    Vec3 ref{0, 0, 1};
    if (std::abs(dot(cam.view_direction, ref)) > 1.0 - 1e-9) {
        ref = {1, 0, 0};
    }
    cam.up = (ref - cam.view_direction * dot(ref, cam.view_direction)).normalized();
    cam.focal_length = opts.distance * opts.image_px * opts.fill / opts.particle_extent;
    cam.sensor_width = opts.sensor;
    cam.sensor_height = opts.sensor;
    cam.principal_point = {opts.sensor / 2.0, opts.sensor / 2.0};
    cam.validate();
    return cam;
}

Vec3 azimuth_elevation_position(double az_deg, double el_deg, double distance) {
    const double az = deg_to_rad(az_deg);
    const double el = deg_to_rad(el_deg);
    return {distance * std::cos(el) * std::sin(az), -distance * std::cos(el) * std::cos(az),
            distance * std::sin(el)};
}

}  // namespace

CameraRig preset_rig(RigPreset preset, const RigOptions& opts) {
    CameraRig rig;
    const double d = opts.distance;
    switch (preset) {
        case RigPreset::near_planar_4: {
            // Planar arc around -y, ordered along the arc so the leading
            // camera-count subsets {1,2} and {1,2,3} widen their span with
            // every added camera; the elevation offsets supply the
            // out-of-plane baseline while keeping the arrangement
            // approximately planar (max pairwise viewing angle ~54 deg).
            const double az[4] = {-25.0, -9.0, 9.0, 25.0};
            const double el[4] = {-14.0, 11.0, -11.0, 14.0};
            for (int i = 0; i < 4; ++i) {
                rig.cameras.push_back(camera_at(azimuth_elevation_position(az[i], el[i], d), opts));
            }
            break;
        }
        case RigPreset::orthogonal_2:
            rig.cameras.push_back(camera_at({0, -d, 0}, opts));
            rig.cameras.push_back(camera_at({d, 0, 0}, opts));
            break;
        case RigPreset::orthogonal_3:
            rig.cameras.push_back(camera_at({0, -d, 0}, opts));
            rig.cameras.push_back(camera_at({d, 0, 0}, opts));
            rig.cameras.push_back(camera_at({0, 0, d}, opts));
            break;
        case RigPreset::tetrahedral_4: {
            const double a = d / std::sqrt(3.0);
            rig.cameras.push_back(camera_at({a, a, a}, opts));
            rig.cameras.push_back(camera_at({a, -a, -a}, opts));
            rig.cameras.push_back(camera_at({-a, a, -a}, opts));
            rig.cameras.push_back(camera_at({-a, -a, a}, opts));
            break;
        }
        case RigPreset::single:
            rig.cameras.push_back(camera_at({0, -d, 0}, opts));
            break;
    }
    return rig;
}

namespace {

struct Candidate {
    std::vector<int> indices;
    Vec3 point;
    double rms_gap;
};

}  // namespace

namespace {

std::vector<Candidate> enumerate_candidates(const CameraRig& rig,
                                            const std::vector<std::vector<Vec2>>& per_camera,
                                            double gap_tol);

}  // namespace

std::vector<CentroidMatch> match_centroids(const CameraRig& rig,
                                           const std::vector<std::vector<Vec2>>& per_camera,
                                           double gap_tol) {
    return match_centroids_detailed(rig, per_camera, gap_tol).matches;
}

CentroidMatchSet match_centroids_detailed(const CameraRig& rig,
                                          const std::vector<std::vector<Vec2>>& per_camera,
                                          double gap_tol) {
    const size_t n_cams = rig.cameras.size();
    if (per_camera.size() != n_cams) {
        throw std::invalid_argument("match_centroids: one centroid list per camera required");
    }
    CentroidMatchSet out;
    if (n_cams < 2) {
        return out;
    }
    for (const auto& list : per_camera) {
        if (list.empty()) {
            return out;
        }
    }

    std::vector<Candidate> candidates = enumerate_candidates(rig, per_camera, gap_tol);

    // Greedy minimum-gap assignment with disjoint centroid usage.
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.rms_gap != b.rms_gap) return a.rms_gap < b.rms_gap;
        return a.indices < b.indices;
    });
    std::vector<std::vector<char>> used(n_cams);
    for (size_t c = 0; c < n_cams; ++c) {
        used[c].assign(per_camera[c].size(), 0);
    }
    for (const Candidate& c : candidates) {
        bool free = true;
        for (size_t cam = 0; cam < n_cams; ++cam) {
            if (used[cam][static_cast<size_t>(c.indices[cam])]) {
                free = false;
                break;
            }
        }
        if (!free) {
            continue;
        }
        for (size_t cam = 0; cam < n_cams; ++cam) {
            used[cam][static_cast<size_t>(c.indices[cam])] = 1;
        }
        out.matches.push_back({c.indices, c.point, c.rms_gap});
    }

    // Overlap: some other consistent candidate claims one of the winner's
    // centroids while differing elsewhere, i.e. a second particle hides in
    // one of its blobs.
    out.overlap_flag.assign(out.matches.size(), false);
    for (size_t m = 0; m < out.matches.size(); ++m) {
        const std::vector<int>& win = out.matches[m].indices;
        for (const Candidate& c : candidates) {
            bool shares = false;
            bool differs = false;
            for (size_t cam = 0; cam < n_cams; ++cam) {
                if (c.indices[cam] == win[cam]) {
                    shares = true;
                } else {
                    differs = true;
                }
            }
            if (shares && differs) {
                out.overlap_flag[m] = true;
                break;
            }
        }
    }
    return out;
}

namespace {

std::vector<Candidate> enumerate_candidates(const CameraRig& rig,
                                            const std::vector<std::vector<Vec2>>& per_camera,
                                            double gap_tol) {
    const size_t n_cams = rig.cameras.size();

    // Enumerate tuples camera by camera, keeping partial tuples whose
    // triangulation gap is already within tolerance. Candidate counts stay
    // tiny for dilute scenes; the pair gate prunes the combinatorics.
    std::vector<Candidate> partial;
    for (int i = 0; i < static_cast<int>(per_camera[0].size()); ++i) {
        partial.push_back({{i}, {}, 0.0});
    }
    std::vector<Ray> rays;
    for (size_t cam = 1; cam < n_cams; ++cam) {
        std::vector<Candidate> next;
        for (const Candidate& c : partial) {
            for (int j = 0; j < static_cast<int>(per_camera[cam].size()); ++j) {
                rays.clear();
                for (size_t k = 0; k < c.indices.size(); ++k) {
                    rays.push_back(back_project(rig.cameras[k], per_camera[k][c.indices[k]]));
                }
                rays.push_back(back_project(rig.cameras[cam], per_camera[cam][j]));
                Triangulation tri;
                try {
                    tri = triangulate(rays);
                } catch (const std::runtime_error&) {
                    continue;
                }
                if (tri.rms_gap <= gap_tol) {
                    Candidate ext = c;
                    ext.indices.push_back(j);
                    ext.point = tri.point;
                    ext.rms_gap = tri.rms_gap;
                    next.push_back(std::move(ext));
                }
            }
        }
        partial = std::move(next);
    }
    return partial;
}

}  // namespace

CameraRig load_calibration(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open calibration file: " + path);
    }
    std::string header;
    std::getline(in, header);
    if (header != "silhpose-calibration v1") {
        throw std::runtime_error(path + ":1: bad calibration header: '" + header + "'");
    }
    CameraRig rig;
    std::string line;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream iss(line);
        std::string key;
        if (!(iss >> key) || key[0] == '#') {
            continue;
        }
        if (key != "camera") {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": unknown key '" +
                                     key + "'");
        }
        CameraModel cam;
        double w = 0.0, h = 0.0;
        if (!(iss >> cam.position.x >> cam.position.y >> cam.position.z >> cam.view_direction.x >>
              cam.view_direction.y >> cam.view_direction.z >> cam.up.x >> cam.up.y >> cam.up.z >>
              cam.focal_length >> cam.principal_point.x >> cam.principal_point.y >> w >> h)) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": camera record needs 14 numbers");
        }
        cam.sensor_width = static_cast<int>(w);
        cam.sensor_height = static_cast<int>(h);
        cam.validate();
        rig.cameras.push_back(cam);
    }
    if (rig.cameras.empty()) {
        throw std::runtime_error(path + ": calibration contains no cameras");
    }
    return rig;
}

void save_calibration(const CameraRig& rig, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write calibration file: " + path);
    }
    out.precision(17);
    out << "silhpose-calibration v1\n";
    for (const CameraModel& c : rig.cameras) {
        out << "camera " << c.position.x << " " << c.position.y << " " << c.position.z << " "
            << c.view_direction.x << " " << c.view_direction.y << " " << c.view_direction.z << " "
            << c.up.x << " " << c.up.y << " " << c.up.z << " " << c.focal_length << " "
            << c.principal_point.x << " " << c.principal_point.y << " " << c.sensor_width << " "
            << c.sensor_height << "\n";
    }
}

uint64_t rig_fingerprint(const CameraRig& rig) {
    // FNV-1a over the raw bit patterns of every parameter.
    uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](const void* data, size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ULL;
        }
    };
    auto feed_d = [&](double v) { feed(&v, sizeof(v)); };
    auto feed_i = [&](int64_t v) { feed(&v, sizeof(v)); };
    feed_i(static_cast<int64_t>(rig.cameras.size()));
    for (const CameraModel& c : rig.cameras) {
        feed_d(c.position.x);
        feed_d(c.position.y);
        feed_d(c.position.z);
        feed_d(c.view_direction.x);
        feed_d(c.view_direction.y);
        feed_d(c.view_direction.z);
        feed_d(c.up.x);
        feed_d(c.up.y);
        feed_d(c.up.z);
        feed_d(c.focal_length);
        feed_d(c.principal_point.x);
        feed_d(c.principal_point.y);
        feed_i(c.sensor_width);
        feed_i(c.sensor_height);
    }
    return h;
}

}  // namespace silhpose
