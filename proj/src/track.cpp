#include "silhpose/track.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <stdexcept>

#include "json.hpp"
#include "silhpose/render.hpp"

namespace silhpose {

std::vector<Blob> segment(const SilhouetteImage& image, const SegmentationParams& p,
                          int camera_index) {
    const int w = image.width;
    const int h = image.height;
    const bool bright = p.polarity == SegmentationParams::Polarity::bright_particle;
    auto foreground = [&](float v) {
        return bright ? v >= p.intensity_threshold : v <= p.intensity_threshold;
    };
    auto weight = [&](float v) { return bright ? v : 1.0f - v; };

    std::vector<int> label(static_cast<size_t>(w) * static_cast<size_t>(h), 0);
    auto lab = [&](int x, int y) -> int& {
        return label[static_cast<size_t>(y) * static_cast<size_t>(w) + static_cast<size_t>(x)];
    };

    std::vector<Blob> blobs;
    std::deque<std::pair<int, int>> queue;
    int next_label = 0;
    for (int sy = 0; sy < h; ++sy) {
        for (int sx = 0; sx < w; ++sx) {
            if (lab(sx, sy) != 0 || !foreground(image.at(sx, sy))) {
                continue;
            }
            ++next_label;
            queue.push_back({sx, sy});
            lab(sx, sy) = next_label;
            std::vector<std::pair<int, int>> pixels;
            while (!queue.empty()) {
                const auto [x, y] = queue.front();
                queue.pop_front();
                pixels.push_back({x, y});
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = x + dx;
                        const int ny = y + dy;
                        if (nx < 0 || ny < 0 || nx >= w || ny >= h) {
                            continue;
                        }
                        if (lab(nx, ny) == 0 && foreground(image.at(nx, ny))) {
                            lab(nx, ny) = next_label;
                            queue.push_back({nx, ny});
                        }
                    }
                }
            }
            const double area = static_cast<double>(pixels.size());
            if (area < p.min_area || area > p.max_area) {
                continue;  // bubble / noise / merged-too-big removal by area
            }

            Blob blob;
            blob.camera_index = camera_index;
            blob.area = area;
            int x0 = w, y0 = h, x1 = -1, y1 = -1;
            double sx_w = 0.0, sy_w = 0.0, total_w = 0.0;
            for (const auto& [x, y] : pixels) {
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
                const double wv = weight(image.at(x, y));
                sx_w += wv * (x + 0.5);
                sy_w += wv * (y + 0.5);
                total_w += wv;
            }
            blob.x0 = x0 + image.origin_x;
            blob.y0 = y0 + image.origin_y;
            blob.x1 = x1 + image.origin_x;
            blob.y1 = y1 + image.origin_y;
            blob.centroid = {image.origin_x + sx_w / total_w, image.origin_y + sy_w / total_w};

            // Cutout with 4 px padding; pixels of other components are
            // blanked so neighbors do not bleed into the comparison.
            constexpr int kPad = 4;
            const int cx0 = x0 - kPad;
            const int cy0 = y0 - kPad;
            const int cw = x1 - x0 + 1 + 2 * kPad;
            const int ch = y1 - y0 + 1 + 2 * kPad;
            blob.cutout = SilhouetteImage(cw, ch);
            blob.cutout.origin_x = cx0 + image.origin_x;
            blob.cutout.origin_y = cy0 + image.origin_y;
            for (int y = 0; y < ch; ++y) {
                const int iy = cy0 + y;
                if (iy < 0 || iy >= h) {
                    continue;
                }
                for (int x = 0; x < cw; ++x) {
                    const int ix = cx0 + x;
                    if (ix < 0 || ix >= w) {
                        continue;
                    }
                    const int l = lab(ix, iy);
                    if (l == 0 || l == next_label) {
                        blob.cutout.set(x, y, weight(image.at(ix, iy)));
                    }
                }
            }
            blobs.push_back(std::move(blob));
        }
    }
    return blobs;
}

namespace {

/// Warm-start seed set: the previous orientation plus four small tilts, so
/// the refinement sees alternative descent paths around it.
std::vector<Quaternion> warm_seeds(const Quaternion& q) {
    return {q,
            (from_axis_angle({1, 0, 0}, deg_to_rad(2.0)) * q).canonical(),
            (from_axis_angle({1, 0, 0}, deg_to_rad(-2.0)) * q).canonical(),
            (from_axis_angle({0, 0, 1}, deg_to_rad(2.0)) * q).canonical(),
            (from_axis_angle({0, 0, 1}, deg_to_rad(-2.0)) * q).canonical()};
}

}  // namespace

ComCorrection correct_com(const ParticleModel& m, const Quaternion& q, const CameraRig& rig,
                          const std::vector<Vec2>& blob_centroids, int iterate) {
    if (blob_centroids.size() != rig.cameras.size()) {
        throw std::invalid_argument("correct_com: one centroid per camera required");
    }
    std::vector<Ray> rays;
    for (size_t c = 0; c < rig.cameras.size(); ++c) {
        rays.push_back(back_project(rig.cameras[c], blob_centroids[c]));
    }
    Vec3 pos = triangulate(rays).point;

    const Vec3 com_rotated = rotate_point(q.normalized(), model_com(m));
    bool corrected = false;
    for (int it = 0; it < std::max(1, iterate); ++it) {
        std::vector<Ray> corrected_rays;
        try {
            for (size_t c = 0; c < rig.cameras.size(); ++c) {
                const CameraModel& cam = rig.cameras[c];
                const SilhouetteImage synth = render_tight(m, q, cam, 3, pos);
                const Vec2 centroid_syn = image_centroid(synth);
                const Vec2 com_syn = project_point(cam, pos + com_rotated);
                // Shift the experimental centroid by the synthetic
                // centroid-to-COM offset (both in sensor pixels).
                const Vec2 corrected_px = blob_centroids[c] - (centroid_syn - com_syn);
                corrected_rays.push_back(back_project(cam, corrected_px));
            }
            pos = triangulate(corrected_rays).point;
            corrected = true;
        } catch (const std::runtime_error&) {
            return {pos, corrected};
        }
    }
    return {pos, corrected};
}

FrameResult process_frame(const FrameObservation& obs, const std::vector<ModelLibrary>& models,
                          const CameraRig& rig, const std::vector<TrackSeed>& seeds,
                          const ProcessParams& params) {
    if (obs.blobs_per_camera.size() != rig.cameras.size()) {
        throw std::invalid_argument("process_frame: one blob list per camera required");
    }
    if (models.empty()) {
        throw std::invalid_argument("process_frame: no particle models");
    }
    FrameResult result;
    result.frame_index = obs.frame_index;
    result.time = obs.time;

    const size_t n_cams = rig.cameras.size();

    // Overlap heuristic: blobs much larger than the per-camera median are
    // likely two merged particles and poison any group they join.
    std::vector<std::vector<char>> oversized(n_cams);
    for (size_t c = 0; c < n_cams; ++c) {
        std::vector<double> areas;
        for (const Blob& b : obs.blobs_per_camera[c]) {
            areas.push_back(b.area);
        }
        oversized[c].assign(areas.size(), 0);
        if (areas.size() < 2) {
            continue;
        }
        std::vector<double> sorted = areas;
        std::sort(sorted.begin(), sorted.end());
        // Lower-middle median: with few blobs the oversized one must not
        // become its own reference.
        const double median = sorted[(sorted.size() - 1) / 2];
        for (size_t i = 0; i < areas.size(); ++i) {
            oversized[c][i] = areas[i] > params.overlap_area_factor * median;
        }
    }

    std::vector<std::vector<Vec2>> centroids(n_cams);
    for (size_t c = 0; c < n_cams; ++c) {
        for (const Blob& b : obs.blobs_per_camera[c]) {
            centroids[c].push_back(b.centroid);
        }
    }
    const CentroidMatchSet match_set = match_centroids_detailed(rig, centroids, params.gap_tol);

    std::vector<std::vector<char>> used(n_cams);
    for (size_t c = 0; c < n_cams; ++c) {
        used[c].assign(centroids[c].size(), 0);
    }

    for (size_t gi = 0; gi < match_set.matches.size(); ++gi) {
        const CentroidMatch& g = match_set.matches[gi];
        // Overlapping particles cannot be disentangled: a second consistent
        // candidate claiming one of this group's blobs, or a blob far above
        // the typical single-particle area, both mark a merged silhouette.
        bool overlap = match_set.overlap_flag[gi];
        for (size_t c = 0; c < n_cams; ++c) {
            used[c][static_cast<size_t>(g.indices[c])] = 1;
            if (oversized[c][static_cast<size_t>(g.indices[c])]) {
                overlap = true;
            }
        }
        if (overlap) {
            ++result.skipped_overlap;
            continue;
        }

        try {
            std::vector<SilhouetteImage> observed;
            std::vector<Vec2> group_centroids;
            for (size_t c = 0; c < n_cams; ++c) {
                const Blob& b = obs.blobs_per_camera[c][static_cast<size_t>(g.indices[c])];
                observed.push_back(b.cutout);
                group_centroids.push_back(b.centroid);
            }

            // Warm start from the nearest live track, if close enough.
            int seed_idx = -1;
            double seed_dist = params.seed_gate;
            for (size_t s = 0; s < seeds.size(); ++s) {
                const double d = (seeds[s].predicted_position - g.point).norm();
                if (d <= seed_dist) {
                    seed_dist = d;
                    seed_idx = static_cast<int>(s);
                }
            }

            ParticleFit pf;
            pf.blob_indices = g.indices;
            pf.position_raw = g.point;
            if (seed_idx >= 0) {
                const TrackSeed& seed = seeds[static_cast<size_t>(seed_idx)];
                const ParticleModel* model = nullptr;
                for (const ModelLibrary& ml : models) {
                    if (model_name(*ml.model) == seed.particle_type) {
                        model = ml.model;
                    }
                }
                if (model == nullptr) {
                    throw std::runtime_error("seed particle type has no model: " +
                                             seed.particle_type);
                }
                const RigCostContext ctx(rig, observed, g.point);
                // The warm start brings tilted companions so the refinement
                // sees alternatives, matching the cold path's multi-guess
                // robustness; the restart ring engages on disagreement.
                RefineOptions warm_opts = params.refine;
                warm_opts.ring_any_views = true;
                pf.fit = refine_with_context(*model, ctx, warm_seeds(seed.q), warm_opts);
                pf.seed_track_id = seed.track_id;
            } else {
                pf.fit = classify_and_fit(models, rig, observed, params.refine, params.k_guesses,
                                          g.point);
            }

            const ParticleModel* fit_model = nullptr;
            for (const ModelLibrary& ml : models) {
                if (model_name(*ml.model) == pf.fit.particle_type) {
                    fit_model = ml.model;
                }
            }
            ComCorrection cc =
                correct_com(*fit_model, pf.fit.q, rig, group_centroids, params.com_iterations);

            // Iterate position and orientation: the first fit ran with the
            // camera vectors of the raw centroid triangulation, which sits a
            // projection-centroid offset away from the true COM and biases
            // the orientation. Refit at the corrected position.
            for (int round = 0; round < params.pose_refine_rounds && cc.corrected; ++round) {
                const Vec3 origin_est =
                    cc.position - rotate_point(pf.fit.q, model_com(*fit_model));
                const RigCostContext ctx2(rig, observed, origin_est);
                RefineOptions refit_opts = params.refine;
                refit_opts.ring_any_views = true;
                FitResult refit =
                    refine_with_context(*fit_model, ctx2, warm_seeds(pf.fit.q), refit_opts);
                refit.particle_type = pf.fit.particle_type;
                pf.fit = refit;
                cc = correct_com(*fit_model, pf.fit.q, rig, group_centroids,
                                 params.com_iterations);
            }
            pf.position = cc.position;
            pf.com_corrected = cc.corrected;
            result.particles.push_back(std::move(pf));
        } catch (const std::exception&) {
            ++result.failed;
        }
    }

    for (size_t c = 0; c < n_cams; ++c) {
        for (size_t i = 0; i < used[c].size(); ++i) {
            if (!used[c][i]) {
                ++result.skipped_partial;
            }
        }
    }
    return result;
}

std::vector<ParticleTrack> link_tracks(const std::vector<FrameResult>& frames,
                                       const LinkParams& params) {
    struct Live {
        int track_index;
        Vec3 last_pos;
        Vec3 velocity;
    };
    std::vector<ParticleTrack> tracks;
    std::vector<Live> live;
    int next_id = 0;

    for (const FrameResult& frame : frames) {
        const size_t n_det = frame.particles.size();
        // All (live track, detection) pairs within the gate, nearest first.
        struct Pair {
            double dist;
            size_t live_idx;
            size_t det_idx;
        };
        std::vector<Pair> pairs;
        for (size_t li = 0; li < live.size(); ++li) {
            const Vec3 pred = live[li].last_pos + live[li].velocity;
            for (size_t di = 0; di < n_det; ++di) {
                if (tracks[static_cast<size_t>(live[li].track_index)].particle_type !=
                    frame.particles[di].fit.particle_type) {
                    continue;
                }
                const double d = (frame.particles[di].position - pred).norm();
                if (d <= params.max_jump) {
                    pairs.push_back({d, li, di});
                }
            }
        }
        std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
            if (a.dist != b.dist) return a.dist < b.dist;
            if (a.live_idx != b.live_idx) return a.live_idx < b.live_idx;
            return a.det_idx < b.det_idx;
        });

        std::vector<char> live_used(live.size(), 0);
        std::vector<int> det_track(n_det, -1);
        for (const Pair& p : pairs) {
            if (live_used[p.live_idx] || det_track[p.det_idx] >= 0) {
                continue;
            }
            live_used[p.live_idx] = 1;
            det_track[p.det_idx] = live[p.live_idx].track_index;
        }

        std::vector<Live> next_live;
        for (size_t di = 0; di < n_det; ++di) {
            const ParticleFit& pf = frame.particles[di];
            int ti = det_track[di];
            if (ti < 0) {
                ParticleTrack t;
                t.id = next_id++;
                t.particle_type = pf.fit.particle_type;
                tracks.push_back(std::move(t));
                ti = static_cast<int>(tracks.size()) - 1;
            }
            ParticleTrack& track = tracks[static_cast<size_t>(ti)];
            TrackSample s;
            s.frame_index = frame.frame_index;
            s.time = frame.time;
            s.position = pf.position;
            s.q = pf.fit.q;
            s.total_error = pf.fit.total_error;
            s.converged = pf.fit.converged;
            s.euler = to_euler_zyx(pf.fit.q);
            track.samples.push_back(s);

            Live lv;
            lv.track_index = ti;
            lv.last_pos = pf.position;
            lv.velocity = {0, 0, 0};
            if (track.samples.size() >= 2) {
                lv.velocity = track.samples[track.samples.size() - 1].position -
                              track.samples[track.samples.size() - 2].position;
            }
            next_live.push_back(lv);
        }
        // Tracks without a detection this frame are closed (no bridging).
        live = std::move(next_live);
    }
    return tracks;
}

void flag_orientation_jumps(ParticleTrack& track, const SymmetryGroup& sym, double factor) {
    const size_t n = track.samples.size();
    if (n < 3) {
        return;
    }
    std::vector<double> steps(n - 1);
    for (size_t i = 0; i + 1 < n; ++i) {
        steps[i] = angle_between(track.samples[i + 1].q, track.samples[i].q, sym);
    }
    std::vector<double> window;
    for (size_t i = 0; i + 1 < n; ++i) {
        // Running median of the steps seen so far (excluding the current).
        if (!window.empty()) {
            std::vector<double> sorted = window;
            std::sort(sorted.begin(), sorted.end());
            const double median = sorted[sorted.size() / 2];
            if (median > 0.0 && steps[i] > factor * median) {
                track.samples[i + 1].jump_flagged = true;
            }
        }
        window.push_back(steps[i]);
    }
}

TrackPipeline::TrackPipeline(std::vector<ModelLibrary> models, const CameraRig& rig,
                             ProcessParams process, LinkParams link)
    : models_(std::move(models)), rig_(&rig), process_(process), link_(link) {}

FrameResult& TrackPipeline::process(const FrameObservation& obs) {
    // Seeds from the incremental linking of what we have so far.
    std::vector<TrackSeed> seeds;
    const std::vector<ParticleTrack> tracks = link_tracks(frames_, link_);
    const int last_frame = frames_.empty() ? -1 : frames_.back().frame_index;
    int track_id = 0;
    for (const ParticleTrack& t : tracks) {
        if (!t.samples.empty() && t.samples.back().frame_index == last_frame) {
            TrackSeed s;
            s.track_id = track_id;
            const TrackSample& last = t.samples.back();
            Vec3 vel{0, 0, 0};
            if (t.samples.size() >= 2) {
                vel = last.position - t.samples[t.samples.size() - 2].position;
            }
            s.predicted_position = last.position + vel;
            s.q = last.q;
            s.particle_type = t.particle_type;
            seeds.push_back(s);
        }
        ++track_id;
    }
    frames_.push_back(process_frame(obs, models_, *rig_, seeds, process_));
    return frames_.back();
}

std::vector<ParticleTrack> TrackPipeline::finish() {
    std::vector<ParticleTrack> tracks = link_tracks(frames_, link_);
    for (ParticleTrack& t : tracks) {
        const SymmetryGroup* sym = nullptr;
        for (const ModelLibrary& ml : models_) {
            if (model_name(*ml.model) == t.particle_type) {
                sym = &model_symmetry(*ml.model);
            }
        }
        if (sym != nullptr) {
            flag_orientation_jumps(t, *sym, link_.jump_flag_factor);
        }
    }
    return tracks;
}

void write_track_records(const std::vector<ParticleTrack>& tracks, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write track records: " + path);
    }
    nlohmann::json header;
    header["format"] = "silhpose-track";
    header["version"] = 1;
    out << header.dump() << "\n";
    for (const ParticleTrack& t : tracks) {
        for (const TrackSample& s : t.samples) {
            nlohmann::json j;
            j["track"] = t.id;
            j["frame"] = s.frame_index;
            j["time"] = s.time;
            j["x"] = s.position.x;
            j["y"] = s.position.y;
            j["z"] = s.position.z;
            j["qw"] = s.q.w;
            j["qx"] = s.q.x;
            j["qy"] = s.q.y;
            j["qz"] = s.q.z;
            j["psi"] = s.euler.psi;
            j["theta"] = s.euler.theta;
            j["phi"] = s.euler.phi;
            j["type"] = t.particle_type;
            j["residual"] = s.total_error;
            nlohmann::json flags = nlohmann::json::array();
            if (!s.converged) {
                flags.push_back("unconverged");
            }
            if (s.jump_flagged) {
                flags.push_back("jump");
            }
            if (s.euler.gimbal_lock) {
                flags.push_back("gimbal_lock");
            }
            j["flags"] = flags;
            out << j.dump() << "\n";
        }
    }
}

std::vector<ParticleTrack> read_track_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open track records: " + path);
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error(path + ": empty track file");
    }
    const nlohmann::json header = nlohmann::json::parse(line);
    if (header.value("format", "") != "silhpose-track" || header.value("version", 0) != 1) {
        throw std::runtime_error(path + ": not a silhpose-track v1 file");
    }
    std::map<int, ParticleTrack> by_id;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const nlohmann::json j = nlohmann::json::parse(line);
        const int id = j.at("track").get<int>();
        ParticleTrack& t = by_id[id];
        t.id = id;
        t.particle_type = j.at("type").get<std::string>();
        TrackSample s;
        s.frame_index = j.at("frame").get<int>();
        s.time = j.at("time").get<double>();
        s.position = {j.at("x").get<double>(), j.at("y").get<double>(), j.at("z").get<double>()};
        s.q = {j.at("qw").get<double>(), j.at("qx").get<double>(), j.at("qy").get<double>(),
               j.at("qz").get<double>()};
        s.euler.psi = j.at("psi").get<double>();
        s.euler.theta = j.at("theta").get<double>();
        s.euler.phi = j.at("phi").get<double>();
        s.total_error = j.at("residual").get<double>();
        s.converged = true;
        for (const auto& f : j.at("flags")) {
            if (f == "unconverged") s.converged = false;
            if (f == "jump") s.jump_flagged = true;
            if (f == "gimbal_lock") s.euler.gimbal_lock = true;
        }
        t.samples.push_back(s);
    }
    std::vector<ParticleTrack> out;
    for (auto& [id, t] : by_id) {
        out.push_back(std::move(t));
    }
    return out;
}

void write_track_summary(const std::vector<ParticleTrack>& tracks, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write track summary: " + path);
    }
    out << "track_id,type,samples,first_frame,last_frame,mean_residual,flagged_jumps\n";
    for (const ParticleTrack& t : tracks) {
        double mean = 0.0;
        int jumps = 0;
        for (const TrackSample& s : t.samples) {
            mean += s.total_error;
            jumps += s.jump_flagged ? 1 : 0;
        }
        if (!t.samples.empty()) {
            mean /= static_cast<double>(t.samples.size());
        }
        out << t.id << "," << t.particle_type << "," << t.samples.size() << ","
            << (t.samples.empty() ? -1 : t.samples.front().frame_index) << ","
            << (t.samples.empty() ? -1 : t.samples.back().frame_index) << "," << mean << ","
            << jumps << "\n";
    }
}

}  // namespace silhpose
