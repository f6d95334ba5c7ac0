#include "silhpose/render.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace silhpose {

namespace {

struct Capsule {
    Vec2 a;
    Vec2 b;
    double radius;  // pixels
};

struct ProjectedShape {
    std::vector<Capsule> capsules;   // wireframe silhouette
    std::vector<Vec2> hull;          // oloid silhouette (convex, CCW)
    double min_x = 0, min_y = 0, max_x = 0, max_y = 0;
};

std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
    std::sort(pts.begin(), pts.end(), [](const Vec2& p, const Vec2& q) {
        return p.x != q.x ? p.x < q.x : p.y < q.y;
    });
    pts.erase(std::unique(pts.begin(), pts.end(),
                          [](const Vec2& p, const Vec2& q) { return p.x == q.x && p.y == q.y; }),
              pts.end());
    const size_t n = pts.size();
    if (n < 3) {
        return pts;
    }
    auto cross2 = [](const Vec2& o, const Vec2& a, const Vec2& b) {
        return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    };
    std::vector<Vec2> hull(2 * n);
    size_t k = 0;
    for (size_t i = 0; i < n; ++i) {
        while (k >= 2 && cross2(hull[k - 2], hull[k - 1], pts[i]) <= 0) {
            --k;
        }
        hull[k++] = pts[i];
    }
    for (size_t i = n - 1, t = k + 1; i-- > 0;) {
        while (k >= t && cross2(hull[k - 2], hull[k - 1], pts[i]) <= 0) {
            --k;
        }
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

ProjectedShape project_shape(const ParticleModel& m, const Quaternion& q, const CameraModel& cam,
                             const Vec3& world_pos) {
    ProjectedShape shape;
    const Quaternion qn = q.normalized();
    bool first = true;
    auto extend = [&shape, &first](double x, double y, double pad) {
        if (first) {
            shape.min_x = x - pad;
            shape.max_x = x + pad;
            shape.min_y = y - pad;
            shape.max_y = y + pad;
            first = false;
        } else {
            shape.min_x = std::min(shape.min_x, x - pad);
            shape.max_x = std::max(shape.max_x, x + pad);
            shape.min_y = std::min(shape.min_y, y - pad);
            shape.max_y = std::max(shape.max_y, y + pad);
        }
    };

    if (const auto* w = std::get_if<WireframeModel>(&m)) {
        std::vector<Vec3> world(w->vertices.size());
        std::vector<Vec2> px(w->vertices.size());
        for (size_t i = 0; i < w->vertices.size(); ++i) {
            world[i] = rotate_point(qn, w->vertices[i]) + world_pos;
            if (point_depth(cam, world[i]) <= 0.0) {
                throw std::runtime_error("render: model not fully in front of the camera");
            }
            px[i] = project_point(cam, world[i]);
        }
        for (const auto& [a, b] : w->edges) {
            const Vec3 mid = (world[static_cast<size_t>(a)] + world[static_cast<size_t>(b)]) * 0.5;
            const double r_px = cam.focal_length * w->tube_radius / point_depth(cam, mid);
            shape.capsules.push_back({px[static_cast<size_t>(a)], px[static_cast<size_t>(b)], r_px});
            extend(px[static_cast<size_t>(a)].x, px[static_cast<size_t>(a)].y, r_px);
            extend(px[static_cast<size_t>(b)].x, px[static_cast<size_t>(b)].y, r_px);
        }
        return shape;
    }

    const auto& o = std::get<OloidModel>(m);
    std::vector<Vec2> px;
    for (const Vec3& s : o.sample_points()) {
        const Vec3 p = rotate_point(qn, s) + world_pos;
        if (point_depth(cam, p) <= 0.0) {
            throw std::runtime_error("render: model not fully in front of the camera");
        }
        const Vec2 v = project_point(cam, p);
        px.push_back(v);
        extend(v.x, v.y, 0.0);
    }
    shape.hull = convex_hull(px);
    return shape;
}

void rasterize_capsule(const Capsule& c, const RenderWindow& win, std::vector<uint8_t>& grid) {
    const int sw = win.width * kSupersample;
    const int sh = win.height * kSupersample;
    const double r2 = c.radius * c.radius;
    const Vec2 ab = c.b - c.a;
    const double len2 = ab.x * ab.x + ab.y * ab.y;

    // Sample (i,j) center in sensor coords: origin + (index + 0.5)/4.
    auto to_index = [](double sensor, int origin) {
        return (sensor - origin) * kSupersample - 0.5;
    };
    const double x_lo = std::min(c.a.x, c.b.x) - c.radius;
    const double x_hi = std::max(c.a.x, c.b.x) + c.radius;
    const double y_lo = std::min(c.a.y, c.b.y) - c.radius;
    const double y_hi = std::max(c.a.y, c.b.y) + c.radius;
    const int j0 = std::max(0, static_cast<int>(std::floor(to_index(x_lo, win.origin_x))));
    const int j1 = std::min(sw - 1, static_cast<int>(std::ceil(to_index(x_hi, win.origin_x))));
    const int i0 = std::max(0, static_cast<int>(std::floor(to_index(y_lo, win.origin_y))));
    const int i1 = std::min(sh - 1, static_cast<int>(std::ceil(to_index(y_hi, win.origin_y))));

    for (int i = i0; i <= i1; ++i) {
        const double py = win.origin_y + (i + 0.5) / kSupersample;
        for (int j = j0; j <= j1; ++j) {
            const double px = win.origin_x + (j + 0.5) / kSupersample;
            double dx = px - c.a.x;
            double dy = py - c.a.y;
            if (len2 > 0.0) {
                const double t = std::clamp((dx * ab.x + dy * ab.y) / len2, 0.0, 1.0);
                dx -= t * ab.x;
                dy -= t * ab.y;
            }
            if (dx * dx + dy * dy <= r2) {
                grid[static_cast<size_t>(i) * static_cast<size_t>(sw) + static_cast<size_t>(j)] = 1;
            }
        }
    }
}

void rasterize_hull(const std::vector<Vec2>& hull, const RenderWindow& win,
                    std::vector<uint8_t>& grid) {
    if (hull.size() < 3) {
        return;
    }
    const int sw = win.width * kSupersample;
    const int sh = win.height * kSupersample;
    double y_lo = hull[0].y, y_hi = hull[0].y;
    for (const Vec2& p : hull) {
        y_lo = std::min(y_lo, p.y);
        y_hi = std::max(y_hi, p.y);
    }
    const int i0 = std::max(0, static_cast<int>(std::floor((y_lo - win.origin_y) * kSupersample - 0.5)));
    const int i1 = std::min(sh - 1, static_cast<int>(std::ceil((y_hi - win.origin_y) * kSupersample - 0.5)));

    for (int i = i0; i <= i1; ++i) {
        const double py = win.origin_y + (i + 0.5) / kSupersample;
        // Convex polygon: a horizontal line crosses the boundary in one span.
        double xl = 0.0, xr = 0.0;
        bool found = false;
        for (size_t e = 0; e < hull.size(); ++e) {
            const Vec2& p = hull[e];
            const Vec2& r = hull[(e + 1) % hull.size()];
            const double ymin = std::min(p.y, r.y);
            const double ymax = std::max(p.y, r.y);
            if (py < ymin || py > ymax) {
                continue;
            }
            double x;
            if (r.y == p.y) {
                // Horizontal edge: both endpoints bound the span.
                if (!found) {
                    xl = std::min(p.x, r.x);
                    xr = std::max(p.x, r.x);
                    found = true;
                } else {
                    xl = std::min({xl, p.x, r.x});
                    xr = std::max({xr, p.x, r.x});
                }
                continue;
            }
            x = p.x + (r.x - p.x) * (py - p.y) / (r.y - p.y);
            if (!found) {
                xl = xr = x;
                found = true;
            } else {
                xl = std::min(xl, x);
                xr = std::max(xr, x);
            }
        }
        if (!found) {
            continue;
        }
        const int j0 = std::max(0, static_cast<int>(std::ceil((xl - win.origin_x) * kSupersample - 0.5)));
        const int j1 = std::min(sw - 1, static_cast<int>(std::floor((xr - win.origin_x) * kSupersample - 0.5)));
        for (int j = j0; j <= j1; ++j) {
            grid[static_cast<size_t>(i) * static_cast<size_t>(sw) + static_cast<size_t>(j)] = 1;
        }
    }
}

}  // namespace

SilhouetteImage render_window(const ParticleModel& m, const Quaternion& q, const CameraModel& cam,
                              const RenderWindow& window, const Vec3& world_pos) {
    if (window.width < 1 || window.height < 1) {
        throw std::invalid_argument("render: window must be at least 1x1");
    }
    const ProjectedShape shape = project_shape(m, q, cam, world_pos);

    const int sw = window.width * kSupersample;
    const int sh = window.height * kSupersample;
    thread_local std::vector<uint8_t> grid;
    grid.assign(static_cast<size_t>(sw) * static_cast<size_t>(sh), 0);
    for (const Capsule& c : shape.capsules) {
        rasterize_capsule(c, window, grid);
    }
    rasterize_hull(shape.hull, window, grid);

    SilhouetteImage out(window.width, window.height);
    out.origin_x = window.origin_x;
    out.origin_y = window.origin_y;
    long long total = 0;
    for (int y = 0; y < window.height; ++y) {
        for (int x = 0; x < window.width; ++x) {
            int count = 0;
            for (int sy = 0; sy < kSupersample; ++sy) {
                const size_t row =
                    (static_cast<size_t>(y) * kSupersample + static_cast<size_t>(sy)) *
                    static_cast<size_t>(sw);
                for (int sx = 0; sx < kSupersample; ++sx) {
                    count += grid[row + static_cast<size_t>(x) * kSupersample +
                                  static_cast<size_t>(sx)];
                }
            }
            total += count;
            out.set(x, y, static_cast<float>(count) / (kSupersample * kSupersample));
        }
    }
    if (total == 0) {
        throw std::runtime_error("render: silhouette has zero extent in the window");
    }
    return out;
}

SilhouetteImage render_silhouette(const ParticleModel& m, const Quaternion& q,
                                  const CameraModel& cam, int out_size, const Vec3& world_pos) {
    if (out_size < 1) {
        throw std::invalid_argument("render: out_size must be >= 1");
    }
    const ProjectedShape shape = project_shape(m, q, cam, world_pos);
    const double cx = 0.5 * (shape.min_x + shape.max_x);
    const double cy = 0.5 * (shape.min_y + shape.max_y);
    RenderWindow win;
    win.origin_x = static_cast<int>(std::lround(cx)) - out_size / 2;
    win.origin_y = static_cast<int>(std::lround(cy)) - out_size / 2;
    win.width = out_size;
    win.height = out_size;
    return render_window(m, q, cam, win, world_pos);
}

SilhouetteImage render_tight(const ParticleModel& m, const Quaternion& q, const CameraModel& cam,
                             int margin_px, const Vec3& world_pos) {
    const ProjectedShape shape = project_shape(m, q, cam, world_pos);
    RenderWindow win;
    win.origin_x = static_cast<int>(std::floor(shape.min_x)) - margin_px;
    win.origin_y = static_cast<int>(std::floor(shape.min_y)) - margin_px;
    win.width = static_cast<int>(std::ceil(shape.max_x)) - win.origin_x + margin_px;
    win.height = static_cast<int>(std::ceil(shape.max_y)) - win.origin_y + margin_px;
    return render_window(m, q, cam, win, world_pos);
}

Vec2 image_centroid(const SilhouetteImage& img) {
    double sx = 0.0, sy = 0.0, total = 0.0;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const double v = img.at(x, y);
            sx += v * (img.origin_x + x + 0.5);
            sy += v * (img.origin_y + y + 0.5);
            total += v;
        }
    }
    if (total <= 0.0) {
        throw std::runtime_error("image_centroid: empty image");
    }
    return {sx / total, sy / total};
}

}  // namespace silhpose
