#include "silhpose/orientlib.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "silhpose/parallel.hpp"
#include "silhpose/render.hpp"

namespace silhpose {

namespace {

class Fnv {
public:
    void feed(const void* data, size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < n; ++i) {
            h_ ^= p[i];
            h_ *= 0x100000001b3ULL;
        }
    }
    void feed_d(double v) { feed(&v, sizeof(v)); }
    void feed_i(int64_t v) { feed(&v, sizeof(v)); }
    void feed_s(const std::string& s) {
        feed_i(static_cast<int64_t>(s.size()));
        feed(s.data(), s.size());
    }
    void feed_v(const Vec3& v) {
        feed_d(v.x);
        feed_d(v.y);
        feed_d(v.z);
    }
    uint64_t value() const { return h_; }

private:
    uint64_t h_ = 0xcbf29ce484222325ULL;
};

}  // namespace

uint64_t model_fingerprint(const ParticleModel& m) {
    Fnv f;
    if (const auto* w = std::get_if<WireframeModel>(&m)) {
        f.feed_s("wireframe");
        f.feed_s(w->name);
        f.feed_d(w->tube_radius);
        f.feed_i(static_cast<int64_t>(w->vertices.size()));
        for (const Vec3& v : w->vertices) {
            f.feed_v(v);
        }
        f.feed_i(static_cast<int64_t>(w->edges.size()));
        for (const auto& [a, b] : w->edges) {
            f.feed_i(a);
            f.feed_i(b);
        }
        f.feed_v(w->com);
        for (const Quaternion& q : w->symmetry.elements) {
            f.feed_d(q.w);
            f.feed_d(q.x);
            f.feed_d(q.y);
            f.feed_d(q.z);
        }
    } else {
        const auto& o = std::get<OloidModel>(m);
        f.feed_s("oloid");
        f.feed_s(o.name);
        f.feed_d(o.circle_radius);
        f.feed_i(o.samples_per_circle);
        f.feed_v(o.center1);
        f.feed_v(o.u1);
        f.feed_v(o.v1);
        f.feed_v(o.center2);
        f.feed_v(o.u2);
        f.feed_v(o.v2);
        f.feed_v(o.com);
        for (const Quaternion& q : o.symmetry.elements) {
            f.feed_d(q.w);
            f.feed_d(q.x);
            f.feed_d(q.y);
            f.feed_d(q.z);
        }
    }
    return f.value();
}

uint64_t library_fingerprint(const ParticleModel& m, const CameraRig& rig,
                             const LibraryParams& params) {
    Fnv f;
    f.feed_i(1);  // format version
    const uint64_t mf = model_fingerprint(m);
    const uint64_t rf = rig_fingerprint(rig);
    f.feed(&mf, sizeof(mf));
    f.feed(&rf, sizeof(rf));
    f.feed_i(params.n_axes);
    f.feed_i(params.n_angles);
    f.feed_i(params.resolution);
    f.feed_d(params.dedup_tol);
    return f.value();
}

std::vector<Quaternion> standard_orientations(const SymmetryGroup& sym,
                                              const LibraryParams& params) {
    if (params.n_axes < 1 || params.n_angles < 1) {
        throw std::invalid_argument("library grid needs n_axes >= 1 and n_angles >= 1");
    }
    const std::vector<Vec3> axes = fibonacci_axes(params.n_axes);
    std::vector<Quaternion> grid;
    grid.reserve(static_cast<size_t>(params.n_axes) * static_cast<size_t>(params.n_angles));
    for (const Vec3& axis : axes) {
        for (int k = 0; k < params.n_angles; ++k) {
            const double angle = -kPi + (k + 0.5) * (2.0 * kPi / params.n_angles);
            grid.push_back(from_axis_angle(axis, angle).canonical());
        }
    }
    // Remove orientations within dedup_tol (symmetry-reduced) of an earlier
    // grid point, so particle symmetries never produce equivalent entries.
    std::vector<Quaternion> kept;
    kept.reserve(grid.size());
    for (const Quaternion& q : grid) {
        bool duplicate = false;
        for (const Quaternion& prev : kept) {
            if (angle_between(q, prev, sym) <= params.dedup_tol) {
                duplicate = true;
                break;
            }
        }
        if (!duplicate) {
            kept.push_back(q);
        }
    }
    return kept;
}

OrientationLibrary build_library(const ParticleModel& m, const CameraRig& rig,
                                 const LibraryParams& params, int workers) {
    if (rig.cameras.empty()) {
        throw std::invalid_argument("build_library: rig has no cameras");
    }
    OrientationLibrary lib;
    lib.particle_type = model_name(m);
    lib.fingerprint = library_fingerprint(m, rig, params);
    lib.rig_fingerprint = rig_fingerprint(rig);
    lib.resolution = params.resolution;
    lib.camera_count = static_cast<int>(rig.cameras.size());
    lib.n_axes = params.n_axes;
    lib.n_angles = params.n_angles;

    const std::vector<Quaternion> grid = standard_orientations(model_symmetry(m), params);
    lib.entries.resize(grid.size());
    parallel_for(grid.size(), workers, [&](size_t i) {
        LibraryEntry& e = lib.entries[i];
        e.q = grid[i];
        e.per_camera.reserve(rig.cameras.size());
        for (const CameraModel& cam : rig.cameras) {
            const SilhouetteImage img = render_tight(m, e.q, cam, 3);
            e.per_camera.push_back(prepare_mask(img, params.resolution));
        }
    });
    return lib;
}

std::vector<Guess> best_guesses_prepared(const OrientationLibrary& lib,
                                         const std::vector<Mask>& observed, int k) {
    if (static_cast<int>(observed.size()) != lib.camera_count) {
        throw std::invalid_argument("best_guesses: observed image count != library camera count");
    }
    if (k < 1) {
        throw std::invalid_argument("best_guesses: k must be >= 1");
    }
    const size_t n = lib.entries.size();
    const size_t kk = std::min<size_t>(static_cast<size_t>(k), n);

    // Exact lower bound per entry: with A = entry, B = observed, O = A&B,
    // the overlap distance transform dominates B's own distance transform
    // (O is a subset of B), and every B pixel outside O contributes at
    // least 1:
    //   epsilon >= ( sum_{p in A} D_B(p) + |B| - |O| ) / resolution^2.
    // Entries are evaluated exactly in ascending bound order until the
    // bound exceeds the current k-th best exact error, which cannot change
    // the exact top-k result.
    const double hw = static_cast<double>(lib.resolution) * static_cast<double>(lib.resolution);
    const int half = lib.resolution / 2 + 3;
    std::vector<MaskDistanceField> fields;
    std::vector<long long> observed_count;
    fields.reserve(observed.size());
    for (const Mask& b : observed) {
        fields.push_back(mask_distance_field(b, -half, -half, 2 * half, 2 * half));
        observed_count.push_back(b.popcount());
    }
    std::vector<std::pair<double, size_t>> bounds(n);
    for (size_t i = 0; i < n; ++i) {
        double lb = 0.0;
        for (size_t c = 0; c < observed.size(); ++c) {
            const Mask& a = lib.entries[i].per_camera[c];
            const OverlapCounts oc = overlap_counts(a, observed[c]);
            lb += (mask_field_sum(a, fields[c]) +
                   static_cast<double>(observed_count[c] - oc.inter_count)) /
                  hw;
        }
        bounds[i] = {lb, i};
    }
    std::sort(bounds.begin(), bounds.end());

    std::vector<std::pair<double, size_t>> top;  // (exact total, entry index), sorted
    for (const auto& [lb, i] : bounds) {
        if (top.size() >= kk && lb > top.back().first) {
            break;
        }
        double total = 0.0;
        for (size_t c = 0; c < observed.size(); ++c) {
            total += mask_error(lib.entries[i].per_camera[c], observed[c], lib.resolution).epsilon;
        }
        const std::pair<double, size_t> item{total, i};
        auto pos = std::upper_bound(top.begin(), top.end(), item);
        if (pos != top.end() || top.size() < kk) {
            top.insert(pos, item);
            if (top.size() > kk) {
                top.pop_back();
            }
        }
    }

    std::vector<Guess> out;
    out.reserve(top.size());
    for (const auto& [err, i] : top) {
        out.push_back({lib.entries[i].q, err});
    }
    return out;
}

std::vector<Guess> best_guesses(const OrientationLibrary& lib, const CameraRig& rig,
                                const std::vector<SilhouetteImage>& observed, int k) {
    if (rig_fingerprint(rig) != lib.rig_fingerprint) {
        throw std::runtime_error("best_guesses: library was built for a different rig");
    }
    std::vector<Mask> masks;
    masks.reserve(observed.size());
    for (const SilhouetteImage& img : observed) {
        masks.push_back(prepare_mask(img, lib.resolution));
    }
    return best_guesses_prepared(lib, masks, k);
}

namespace {

constexpr char kLibMagic[8] = {'S', 'P', 'L', 'I', 'B', '0', '0', '1'};

template <typename T>
void put(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) {
        throw std::runtime_error("library cache: truncated file");
    }
    return v;
}

}  // namespace

void save_library(const OrientationLibrary& lib, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write library cache: " + path);
    }
    out.write(kLibMagic, sizeof(kLibMagic));
    put(out, lib.fingerprint);
    put(out, lib.rig_fingerprint);
    put(out, static_cast<int32_t>(lib.resolution));
    put(out, static_cast<int32_t>(lib.camera_count));
    put(out, static_cast<int32_t>(lib.n_axes));
    put(out, static_cast<int32_t>(lib.n_angles));
    put(out, static_cast<int32_t>(lib.particle_type.size()));
    out.write(lib.particle_type.data(), static_cast<std::streamsize>(lib.particle_type.size()));
    put(out, static_cast<int64_t>(lib.entries.size()));
    for (const LibraryEntry& e : lib.entries) {
        put(out, e.q.w);
        put(out, e.q.x);
        put(out, e.q.y);
        put(out, e.q.z);
        for (const Mask& m : e.per_camera) {
            put(out, static_cast<int32_t>(m.width));
            put(out, static_cast<int32_t>(m.height));
            put(out, static_cast<int32_t>(m.off_x));
            put(out, static_cast<int32_t>(m.off_y));
            put(out, static_cast<int64_t>(m.words.size()));
            out.write(reinterpret_cast<const char*>(m.words.data()),
                      static_cast<std::streamsize>(m.words.size() * sizeof(uint64_t)));
        }
    }
}

OrientationLibrary load_library(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open library cache: " + path);
    }
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kLibMagic, sizeof(magic)) != 0) {
        throw std::runtime_error(path + ": not a library cache file (bad magic)");
    }
    OrientationLibrary lib;
    lib.fingerprint = get<uint64_t>(in);
    lib.rig_fingerprint = get<uint64_t>(in);
    lib.resolution = get<int32_t>(in);
    lib.camera_count = get<int32_t>(in);
    lib.n_axes = get<int32_t>(in);
    lib.n_angles = get<int32_t>(in);
    const int32_t name_len = get<int32_t>(in);
    lib.particle_type.resize(static_cast<size_t>(name_len));
    in.read(lib.particle_type.data(), name_len);
    const int64_t n = get<int64_t>(in);
    lib.entries.resize(static_cast<size_t>(n));
    for (LibraryEntry& e : lib.entries) {
        e.q.w = get<double>(in);
        e.q.x = get<double>(in);
        e.q.y = get<double>(in);
        e.q.z = get<double>(in);
        e.per_camera.resize(static_cast<size_t>(lib.camera_count));
        for (Mask& m : e.per_camera) {
            m.width = get<int32_t>(in);
            m.height = get<int32_t>(in);
            m.off_x = get<int32_t>(in);
            m.off_y = get<int32_t>(in);
            m.words_per_row = (m.width + 63) / 64;
            const int64_t nwords = get<int64_t>(in);
            m.words.resize(static_cast<size_t>(nwords));
            in.read(reinterpret_cast<char*>(m.words.data()),
                    static_cast<std::streamsize>(m.words.size() * sizeof(uint64_t)));
            if (!in) {
                throw std::runtime_error(path + ": truncated mask data");
            }
        }
    }
    return lib;
}

}  // namespace silhpose
