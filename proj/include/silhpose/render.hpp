#pragma once

#include "silhpose/camera.hpp"
#include "silhpose/geometry.hpp"
#include "silhpose/image.hpp"
#include "silhpose/rotation.hpp"

namespace silhpose {

/// Supersampling factor for silhouette rasterization: binary rendering at
/// four times the target size, then 4x4 box downsampling.
inline constexpr int kSupersample = 4;

struct RenderWindow {
    int origin_x = 0;
    int origin_y = 0;
    int width = 0;
    int height = 0;
};

/// Renders the anti-aliased silhouette of the model rotated by q and placed
/// at world_pos, into the given sensor-pixel window. Wireframes rasterize as
/// filled capsules (projected tube radius taken at each edge's midpoint
/// depth); oloids as the filled convex hull of the projected circle samples.
/// Throws if the model is not fully in front of the camera or if the
/// silhouette has zero extent.
SilhouetteImage render_window(const ParticleModel& m, const Quaternion& q, const CameraModel& cam,
                              const RenderWindow& window, const Vec3& world_pos = {});

/// Square out_size x out_size render, auto-centered on the projected model.
SilhouetteImage render_silhouette(const ParticleModel& m, const Quaternion& q,
                                  const CameraModel& cam, int out_size,
                                  const Vec3& world_pos = {});

/// Render sized to the projected silhouette's bounding box plus margin_px.
SilhouetteImage render_tight(const ParticleModel& m, const Quaternion& q, const CameraModel& cam,
                             int margin_px = 3, const Vec3& world_pos = {});

/// Intensity-weighted centroid of a raster in sensor coordinates.
Vec2 image_centroid(const SilhouetteImage& img);

}  // namespace silhpose
