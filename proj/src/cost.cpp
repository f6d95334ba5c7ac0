#include "silhpose/cost.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

#include "silhpose/render.hpp"

namespace silhpose {

namespace {

constexpr double kInf = 1e18;

/// 1D squared-distance transform (lower envelope of parabolas). f holds the
/// per-cell squared distances (kInf where no site); d receives the result.
/// Values stay exact: all finite inputs and outputs are small integers.
void dt1d(const double* f, int n, double* d, int* v, double* z) {
    int k = 0;
    v[0] = 0;
    z[0] = -kInf;
    z[1] = kInf;
    for (int q = 1; q < n; ++q) {
        double s;
        for (;;) {
            const int vk = v[k];
            s = ((f[q] + static_cast<double>(q) * q) - (f[vk] + static_cast<double>(vk) * vk)) /
                (2.0 * (q - vk));
            if (s <= z[k]) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) {
            ++k;
        }
        const int vk = v[k];
        d[q] = static_cast<double>(q - vk) * (q - vk) + f[vk];
    }
}

/// Exact squared EDT of a white-pixel indicator grid (row-major, W x H).
/// Returns squared distances; unreachable cells hold kInf. Scratch buffers
/// are thread-local: this sits on the optimizer's innermost loop.
void squared_edt(const uint8_t* white, int w, int h, std::vector<double>& out) {
    out.assign(static_cast<size_t>(w) * static_cast<size_t>(h), kInf);
    const int n = std::max(w, h);
    thread_local std::vector<double> f, d, z;
    thread_local std::vector<int> v;
    f.resize(static_cast<size_t>(n));
    d.resize(static_cast<size_t>(n));
    v.resize(static_cast<size_t>(n));
    z.resize(static_cast<size_t>(n) + 1);

    // Columns first.
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) {
            f[static_cast<size_t>(y)] = white[static_cast<size_t>(y) * w + x] ? 0.0 : kInf;
        }
        dt1d(f.data(), h, d.data(), v.data(), z.data());
        for (int y = 0; y < h; ++y) {
            out[static_cast<size_t>(y) * w + x] = d[static_cast<size_t>(y)];
        }
    }
    // Then rows.
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            f[static_cast<size_t>(x)] = out[static_cast<size_t>(y) * w + x];
        }
        dt1d(f.data(), w, d.data(), v.data(), z.data());
        for (int x = 0; x < w; ++x) {
            out[static_cast<size_t>(y) * w + x] = d[static_cast<size_t>(x)];
        }
    }
}

}  // namespace

DistanceField distance_transform(const SilhouetteImage& binary) {
    DistanceField field;
    field.width = binary.width;
    field.height = binary.height;
    std::vector<uint8_t> white(static_cast<size_t>(binary.width) *
                               static_cast<size_t>(binary.height));
    bool any = false;
    for (size_t i = 0; i < binary.pixels.size(); ++i) {
        const float v = binary.pixels[i];
        if (v != 0.0f && v != 1.0f) {
            throw std::invalid_argument("distance_transform requires a binary image");
        }
        white[i] = v == 1.0f;
        any = any || white[i];
    }
    std::vector<double> sq;
    if (!any) {
        field.all_empty = true;
        field.distances.assign(white.size(), std::numeric_limits<double>::infinity());
        return field;
    }
    squared_edt(white.data(), binary.width, binary.height, sq);
    field.distances.resize(sq.size());
    for (size_t i = 0; i < sq.size(); ++i) {
        field.distances[i] = std::sqrt(sq[i]);
    }
    return field;
}

long long Mask::popcount() const {
    long long n = 0;
    for (uint64_t w : words) {
        n += std::popcount(w);
    }
    return n;
}

namespace {

/// Tap plan for one axis of a box resample: which source cells each output
/// cell integrates, and with what widths.
struct TapPlan {
    std::vector<int> first;      // first source index per output cell
    std::vector<int> count;      // tap count per output cell
    std::vector<double> weight;  // flattened tap widths
};

void build_tap_plan(double w0, double step, int out, int hi_clamp, TapPlan& plan) {
    plan.first.resize(static_cast<size_t>(out));
    plan.count.resize(static_cast<size_t>(out));
    plan.weight.clear();
    for (int o = 0; o < out; ++o) {
        const double lo = w0 + o * step;
        const double hi = lo + step;
        const int i0 = std::max(0, static_cast<int>(std::floor(lo)));
        // hi_clamp guards the last cell: out*step can exceed the window by
        // one ulp and spill a tap past the buffered rows.
        const int i1 = std::min(hi_clamp, static_cast<int>(std::ceil(hi)) - 1);
        plan.first[static_cast<size_t>(o)] = i0;
        int n = 0;
        for (int i = i0; i <= i1; ++i) {
            const double w =
                std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i));
            plan.weight.push_back(std::max(0.0, w));
            ++n;
        }
        plan.count[static_cast<size_t>(o)] = n;
    }
}

/// Area-average resampling of a fractional source window onto an out x out
/// grid, done separably (horizontal pass then vertical). Pixels outside the
/// source image read as 0.
void resample_window(const SilhouetteImage& img, double x0, double y0, double side, int out,
                     std::vector<float>& dst) {
    dst.assign(static_cast<size_t>(out) * static_cast<size_t>(out), 0.0f);
    const double step = side / out;
    const double inv_cell = 1.0 / (step * step);

    const int iy_lo = std::max(0, static_cast<int>(std::floor(y0)));
    const int iy_hi = std::min(img.height - 1, static_cast<int>(std::ceil(y0 + side)) - 1);
    if (iy_hi < iy_lo) {
        return;
    }

    thread_local TapPlan px, py;
    build_tap_plan(x0, step, out, img.width - 1, px);
    build_tap_plan(y0, step, out, iy_hi, py);
    const int rows = iy_hi - iy_lo + 1;
    thread_local std::vector<double> hpass;
    hpass.assign(static_cast<size_t>(rows) * static_cast<size_t>(out), 0.0);
    for (int r = 0; r < rows; ++r) {
        const float* src =
            &img.pixels[static_cast<size_t>(iy_lo + r) * static_cast<size_t>(img.width)];
        double* row = &hpass[static_cast<size_t>(r) * static_cast<size_t>(out)];
        size_t w = 0;
        for (int o = 0; o < out; ++o) {
            const int n = px.count[static_cast<size_t>(o)];
            const int i0 = px.first[static_cast<size_t>(o)];
            double acc = 0.0;
            for (int t = 0; t < n; ++t) {
                acc += px.weight[w + static_cast<size_t>(t)] *
                       static_cast<double>(src[i0 + t]);
            }
            row[o] = acc;
            w += static_cast<size_t>(n);
        }
    }

    // Vertical pass, accumulated in double.
    thread_local std::vector<double> vacc;
    vacc.resize(static_cast<size_t>(out));
    size_t wy = 0;
    for (int oy = 0; oy < out; ++oy) {
        const int n = py.count[static_cast<size_t>(oy)];
        const int r0 = py.first[static_cast<size_t>(oy)] - iy_lo;
        std::fill(vacc.begin(), vacc.end(), 0.0);
        for (int t = 0; t < n; ++t) {
            const double hy = py.weight[wy + static_cast<size_t>(t)];
            const double* row = &hpass[static_cast<size_t>(r0 + t) * static_cast<size_t>(out)];
            for (int ox = 0; ox < out; ++ox) {
                vacc[static_cast<size_t>(ox)] += hy * row[ox];
            }
        }
        float* outrow = &dst[static_cast<size_t>(oy) * static_cast<size_t>(out)];
        for (int ox = 0; ox < out; ++ox) {
            outrow[ox] = static_cast<float>(vacc[static_cast<size_t>(ox)] * inv_cell);
        }
        wy += static_cast<size_t>(n);
    }
}

}  // namespace

Mask prepare_mask(const SilhouetteImage& img, int resolution, double threshold) {
    if (resolution < 2) {
        throw std::invalid_argument("prepare_mask: resolution must be >= 2");
    }
    // Bounding box and centroid of the thresholded content.
    int x0 = img.width, y0 = img.height, x1 = -1, y1 = -1;
    long long count = 0;
    double cx = 0.0, cy = 0.0;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            if (img.at(x, y) >= threshold) {
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
                cx += x + 0.5;
                cy += y + 0.5;
                ++count;
            }
        }
    }
    if (x1 < 0) {
        throw std::runtime_error("prepare_mask: empty silhouette");
    }
    cx /= static_cast<double>(count);
    cy /= static_cast<double>(count);

    // Square crop window centered on the content centroid with sub-pixel
    // precision (the alignment is folded into the resampling phase, so the
    // comparison never sees integer-rounding jumps), wide enough to cover
    // the bounding box plus 2 px of anti-aliased context.
    constexpr double kPad = 2.0;
    const double half =
        std::max(std::max(cx - (x0 - kPad), (x1 + 1 + kPad) - cx),
                 std::max(cy - (y0 - kPad), (y1 + 1 + kPad) - cy));
    const double side = 2.0 * half;

    thread_local std::vector<float> resized;
    resample_window(img, cx - half, cy - half, side, resolution, resized);

    // Binarize; the content centroid sits at the canvas center by
    // construction, which is the masks' common alignment anchor.
    const int anchor = resolution / 2;
    int bx0 = resolution, by0 = resolution, bx1 = -1, by1 = -1;
    for (int y = 0; y < resolution; ++y) {
        for (int x = 0; x < resolution; ++x) {
            if (resized[static_cast<size_t>(y) * static_cast<size_t>(resolution) +
                        static_cast<size_t>(x)] >= threshold) {
                bx0 = std::min(bx0, x);
                bx1 = std::max(bx1, x);
                by0 = std::min(by0, y);
                by1 = std::max(by1, y);
            }
        }
    }
    if (bx1 < 0) {
        throw std::runtime_error("prepare_mask: silhouette vanished after resize");
    }

    Mask mask;
    mask.width = bx1 - bx0 + 1;
    mask.height = by1 - by0 + 1;
    mask.off_x = bx0 - anchor;
    mask.off_y = by0 - anchor;
    mask.words_per_row = (mask.width + 63) / 64;
    mask.words.assign(static_cast<size_t>(mask.words_per_row) * static_cast<size_t>(mask.height),
                      0);
    for (int y = by0; y <= by1; ++y) {
        for (int x = bx0; x <= bx1; ++x) {
            if (resized[static_cast<size_t>(y) * static_cast<size_t>(resolution) +
                        static_cast<size_t>(x)] >= threshold) {
                mask.set_bit(x - bx0, y - by0);
            }
        }
    }
    return mask;
}

namespace {

/// Writes one mask row into a frame-aligned word buffer (bit i of the buffer
/// is frame column i). shift = mask.off_x - frame_x0 >= 0.
void or_row_into(const Mask& m, int row, int shift, uint64_t* dst) {
    const uint64_t* src = &m.words[static_cast<size_t>(row) * static_cast<size_t>(m.words_per_row)];
    const int word_shift = shift >> 6;
    const int bit_shift = shift & 63;
    for (int w = 0; w < m.words_per_row; ++w) {
        const uint64_t v = src[w];
        if (v == 0) {
            continue;
        }
        dst[w + word_shift] |= v << bit_shift;
        if (bit_shift != 0) {
            dst[w + word_shift + 1] |= v >> (64 - bit_shift);
        }
    }
}

struct Frame {
    int x0, y0, w, h, nw;
};

Frame common_frame(const Mask& a, const Mask& b) {
    Frame f;
    f.x0 = std::min(a.off_x, b.off_x);
    f.y0 = std::min(a.off_y, b.off_y);
    const int x1 = std::max(a.off_x + a.width, b.off_x + b.width);
    const int y1 = std::max(a.off_y + a.height, b.off_y + b.height);
    f.w = x1 - f.x0;
    f.h = y1 - f.y0;
    f.nw = (f.w + 63) / 64 + 1;  // one spare word for shifted tails
    return f;
}

}  // namespace

OverlapCounts overlap_counts(const Mask& a, const Mask& b) {
    const Frame f = common_frame(a, b);
    std::vector<uint64_t> row_a(static_cast<size_t>(f.nw));
    std::vector<uint64_t> row_b(static_cast<size_t>(f.nw));
    OverlapCounts out;
    for (int y = 0; y < f.h; ++y) {
        const int fy = f.y0 + y;
        const int ya = fy - a.off_y;
        const int yb = fy - b.off_y;
        const bool ha = ya >= 0 && ya < a.height;
        const bool hb = yb >= 0 && yb < b.height;
        if (!ha && !hb) {
            continue;
        }
        std::fill(row_a.begin(), row_a.end(), 0);
        std::fill(row_b.begin(), row_b.end(), 0);
        if (ha) {
            or_row_into(a, ya, a.off_x - f.x0, row_a.data());
        }
        if (hb) {
            or_row_into(b, yb, b.off_x - f.x0, row_b.data());
        }
        for (int w = 0; w < f.nw; ++w) {
            out.union_count += std::popcount(row_a[static_cast<size_t>(w)] | row_b[static_cast<size_t>(w)]);
            out.inter_count += std::popcount(row_a[static_cast<size_t>(w)] & row_b[static_cast<size_t>(w)]);
        }
    }
    return out;
}

MaskError mask_error(const Mask& a, const Mask& b, int resolution) {
    const Frame f = common_frame(a, b);
    const size_t cells = static_cast<size_t>(f.w) * static_cast<size_t>(f.h);

    thread_local std::vector<uint8_t> overlap;
    thread_local std::vector<uint64_t> union_rows, row_a, row_b;
    overlap.assign(cells, 0);
    union_rows.assign(static_cast<size_t>(f.nw) * static_cast<size_t>(f.h), 0);
    row_a.resize(static_cast<size_t>(f.nw));
    row_b.resize(static_cast<size_t>(f.nw));

    long long union_count = 0;
    long long inter_count = 0;
    for (int y = 0; y < f.h; ++y) {
        const int fy = f.y0 + y;
        const int ya = fy - a.off_y;
        const int yb = fy - b.off_y;
        const bool ha = ya >= 0 && ya < a.height;
        const bool hb = yb >= 0 && yb < b.height;
        std::fill(row_a.begin(), row_a.end(), 0);
        std::fill(row_b.begin(), row_b.end(), 0);
        if (ha) {
            or_row_into(a, ya, a.off_x - f.x0, row_a.data());
        }
        if (hb) {
            or_row_into(b, yb, b.off_x - f.x0, row_b.data());
        }
        uint64_t* urow = &union_rows[static_cast<size_t>(y) * static_cast<size_t>(f.nw)];
        for (int w = 0; w < f.nw; ++w) {
            const uint64_t u = row_a[static_cast<size_t>(w)] | row_b[static_cast<size_t>(w)];
            const uint64_t o = row_a[static_cast<size_t>(w)] & row_b[static_cast<size_t>(w)];
            urow[w] = u;
            union_count += std::popcount(u);
            inter_count += std::popcount(o);
            uint64_t bits = o;
            while (bits) {
                const int x = 64 * w + std::countr_zero(bits);
                overlap[static_cast<size_t>(y) * static_cast<size_t>(f.w) + static_cast<size_t>(x)] = 1;
                bits &= bits - 1;
            }
        }
    }

    const double hw = static_cast<double>(resolution) * static_cast<double>(resolution);
    if (inter_count == 0) {
        // Capped penalty: every union pixel counted at `resolution` distance.
        return {static_cast<double>(resolution) * static_cast<double>(union_count) / hw, true};
    }

    thread_local std::vector<double> sq;
    squared_edt(overlap.data(), f.w, f.h, sq);

    double sum = 0.0;
    for (int y = 0; y < f.h; ++y) {
        const uint64_t* urow = &union_rows[static_cast<size_t>(y) * static_cast<size_t>(f.nw)];
        for (int w = 0; w < f.nw; ++w) {
            uint64_t bits = urow[w];
            while (bits) {
                const int x = 64 * w + std::countr_zero(bits);
                const double d = sq[static_cast<size_t>(y) * static_cast<size_t>(f.w) +
                                    static_cast<size_t>(x)];
                if (d > 0.0) {
                    sum += std::sqrt(d);
                }
                bits &= bits - 1;
            }
        }
    }
    return {sum / hw, false};
}

MaskDistanceField mask_distance_field(const Mask& m, int x0, int y0, int w, int h) {
    MaskDistanceField field;
    field.x0 = x0;
    field.y0 = y0;
    field.w = w;
    field.h = h;
    std::vector<uint8_t> white(static_cast<size_t>(w) * static_cast<size_t>(h), 0);
    for (int y = 0; y < m.height; ++y) {
        const int fy = m.off_y + y - y0;
        if (fy < 0 || fy >= h) {
            continue;
        }
        for (int x = 0; x < m.width; ++x) {
            if (!m.test(x, y)) {
                continue;
            }
            const int fx = m.off_x + x - x0;
            if (fx >= 0 && fx < w) {
                white[static_cast<size_t>(fy) * static_cast<size_t>(w) +
                      static_cast<size_t>(fx)] = 1;
            }
        }
    }
    std::vector<double> sq;
    squared_edt(white.data(), w, h, sq);
    field.d.resize(sq.size());
    for (size_t i = 0; i < sq.size(); ++i) {
        field.d[i] = sq[i] >= kInf ? 1e9 : std::sqrt(sq[i]);
    }
    return field;
}

double mask_field_sum(const Mask& a, const MaskDistanceField& field) {
    double sum = 0.0;
    for (int y = 0; y < a.height; ++y) {
        const uint64_t* row =
            &a.words[static_cast<size_t>(y) * static_cast<size_t>(a.words_per_row)];
        const int fy = a.off_y + y;
        for (int w = 0; w < a.words_per_row; ++w) {
            uint64_t bits = row[w];
            while (bits) {
                const int x = 64 * w + std::countr_zero(bits);
                sum += field.at(a.off_x + x, fy);
                bits &= bits - 1;
            }
        }
    }
    return sum;
}

SilhouetteErrorResult silhouette_error(const SilhouetteImage& i1, const SilhouetteImage& i2,
                                       int resolution, double threshold) {
    const Mask a = prepare_mask(i1, resolution, threshold);
    const Mask b = prepare_mask(i2, resolution, threshold);
    const MaskError e = mask_error(a, b, resolution);
    return {e.epsilon, e.disjoint};
}

RigCostContext::RigCostContext(const CameraRig& rig, const std::vector<SilhouetteImage>& observed,
                               const Vec3& world_pos, int resolution, double threshold)
    : rig_(&rig), world_pos_(world_pos), resolution_(resolution), threshold_(threshold) {
    if (observed.size() != rig.cameras.size()) {
        throw std::invalid_argument("rig cost: one observed image per camera required");
    }
    observed_.reserve(observed.size());
    for (const SilhouetteImage& img : observed) {
        observed_.push_back(prepare_mask(img, resolution_, threshold_));
    }
}

CostBreakdown RigCostContext::evaluate(const ParticleModel& m, const Quaternion& q) const {
    CostBreakdown out;
    out.per_camera.reserve(rig_->cameras.size());
    for (size_t c = 0; c < rig_->cameras.size(); ++c) {
        const SilhouetteImage synth = render_tight(m, q, rig_->cameras[c], 3, world_pos_);
        const Mask mask = prepare_mask(synth, resolution_, threshold_);
        const MaskError e = mask_error(observed_[c], mask, resolution_);
        out.per_camera.push_back(e.epsilon);
        out.total += e.epsilon;
        out.disjoint_count += e.disjoint ? 1 : 0;
    }
    return out;
}

CostBreakdown rig_error(const ParticleModel& m, const Quaternion& q, const CameraRig& rig,
                        const std::vector<SilhouetteImage>& observed, const Vec3& world_pos,
                        int resolution, double threshold) {
    return RigCostContext(rig, observed, world_pos, resolution, threshold).evaluate(m, q);
}

}  // namespace silhpose
