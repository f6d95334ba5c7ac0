#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace silhpose {

/// Rectangular grayscale raster with values in [0, 1] (1 = particle).
/// origin_px locates the crop in full-sensor pixel coordinates.
struct SilhouetteImage {
    int width = 0;
    int height = 0;
    int origin_x = 0;
    int origin_y = 0;
    std::vector<float> pixels;  // row-major

    SilhouetteImage() = default;
    SilhouetteImage(int w, int h, float fill = 0.0f)
        : width(w), height(h), pixels(static_cast<size_t>(w) * static_cast<size_t>(h), fill) {}

    float at(int x, int y) const {
        return pixels[static_cast<size_t>(y) * static_cast<size_t>(width) +
                      static_cast<size_t>(x)];
    }
    void set(int x, int y, float v) {
        pixels[static_cast<size_t>(y) * static_cast<size_t>(width) + static_cast<size_t>(x)] = v;
    }

    double mean() const;
};

/// Box-kernel (area average) resampling to an arbitrary size. Mean pixel
/// value is preserved for integer downscale factors.
SilhouetteImage resize_box(const SilhouetteImage& img, int out_width, int out_height);

/// Threshold to a {0,1}-valued image: pixel >= threshold -> 1.
SilhouetteImage binarize(const SilhouetteImage& img, double threshold);

/// 8-bit binary PGM (P5).
void write_pgm(const SilhouetteImage& img, const std::string& path);
SilhouetteImage read_pgm(const std::string& path);

/// 8-bit grayscale PNG. The reader also accepts 8-bit RGB (converted with
/// BT.601 luma weights).
void write_png(const SilhouetteImage& img, const std::string& path);
SilhouetteImage read_png(const std::string& path);

/// Dispatch on file extension (.pgm / .png).
void write_image(const SilhouetteImage& img, const std::string& path);
SilhouetteImage read_image(const std::string& path);

}  // namespace silhpose
