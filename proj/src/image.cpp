#include "silhpose/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace silhpose {

double SilhouetteImage::mean() const {
    if (pixels.empty()) {
        return 0.0;
    }
    double s = 0.0;
    for (float v : pixels) {
        s += v;
    }
    return s / static_cast<double>(pixels.size());
}

SilhouetteImage resize_box(const SilhouetteImage& img, int out_width, int out_height) {
    if (out_width < 1 || out_height < 1) {
        throw std::invalid_argument("resize_box: target size must be >= 1");
    }
    if (img.width < 1 || img.height < 1) {
        throw std::invalid_argument("resize_box: empty source image");
    }
    if (out_width == img.width && out_height == img.height) {
        return img;
    }

    SilhouetteImage out(out_width, out_height);
    out.origin_x = img.origin_x;
    out.origin_y = img.origin_y;

    const double sx = static_cast<double>(img.width) / out_width;
    const double sy = static_cast<double>(img.height) / out_height;

    // Exact area integration of source pixels over each output cell.
    for (int oy = 0; oy < out_height; ++oy) {
        const double y0 = oy * sy;
        const double y1 = (oy + 1) * sy;
        const int iy0 = static_cast<int>(std::floor(y0));
        const int iy1 = std::min(img.height - 1, static_cast<int>(std::ceil(y1)) - 1);
        for (int ox = 0; ox < out_width; ++ox) {
            const double x0 = ox * sx;
            const double x1 = (ox + 1) * sx;
            const int ix0 = static_cast<int>(std::floor(x0));
            const int ix1 = std::min(img.width - 1, static_cast<int>(std::ceil(x1)) - 1);
            double acc = 0.0;
            for (int iy = iy0; iy <= iy1; ++iy) {
                const double hy =
                    std::min(y1, static_cast<double>(iy + 1)) - std::max(y0, static_cast<double>(iy));
                if (hy <= 0.0) {
                    continue;
                }
                for (int ix = ix0; ix <= ix1; ++ix) {
                    const double wx = std::min(x1, static_cast<double>(ix + 1)) -
                                      std::max(x0, static_cast<double>(ix));
                    if (wx <= 0.0) {
                        continue;
                    }
                    acc += static_cast<double>(img.at(ix, iy)) * wx * hy;
                }
            }
            out.set(ox, oy, static_cast<float>(acc / (sx * sy)));
        }
    }
    return out;
}

SilhouetteImage binarize(const SilhouetteImage& img, double threshold) {
    SilhouetteImage out = img;
    for (float& v : out.pixels) {
        v = (v >= threshold) ? 1.0f : 0.0f;
    }
    return out;
}

void write_pgm(const SilhouetteImage& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write PGM file: " + path);
    }
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(img.width));
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const double v = std::clamp(static_cast<double>(img.at(x, y)), 0.0, 1.0);
            row[static_cast<size_t>(x)] = static_cast<unsigned char>(std::lround(v * 255.0));
        }
        out.write(reinterpret_cast<const char*>(row.data()), img.width);
    }
}

namespace {

int next_pnm_token(std::istream& in) {
    // Skips whitespace and '#' comments, then parses one integer.
    for (;;) {
        int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
    int v = 0;
    if (!(in >> v)) {
        throw std::runtime_error("malformed PGM header");
    }
    return v;
}

}  // namespace

SilhouetteImage read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open PGM file: " + path);
    }
    std::string magic;
    in >> magic;
    if (magic != "P5") {
        throw std::runtime_error(path + ": not a binary PGM (P5) file");
    }
    const int w = next_pnm_token(in);
    const int h = next_pnm_token(in);
    const int maxval = next_pnm_token(in);
    if (w < 1 || h < 1 || maxval < 1 || maxval > 255) {
        throw std::runtime_error(path + ": unsupported PGM geometry");
    }
    in.get();  // single whitespace after maxval
    SilhouetteImage img(w, h);
    std::vector<unsigned char> raw(static_cast<size_t>(w) * static_cast<size_t>(h));
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
        throw std::runtime_error(path + ": truncated PGM pixel data");
    }
    for (size_t i = 0; i < raw.size(); ++i) {
        img.pixels[i] = static_cast<float>(raw[i]) / static_cast<float>(maxval);
    }
    return img;
}

void write_image(const SilhouetteImage& img, const std::string& path) {
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".png") {
        write_png(img, path);
    } else {
        write_pgm(img, path);
    }
}

SilhouetteImage read_image(const std::string& path) {
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".png") {
        return read_png(path);
    }
    return read_pgm(path);
}

}  // namespace silhpose
