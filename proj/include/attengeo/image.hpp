#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "attengeo/tensor.hpp"

// 8-bit RGB raster with binary PPM (P6) I/O, simple shape painting for the
// synthetic generator, and heatmap rendering for the inference tool.

namespace attengeo {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
};

struct Image {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels; // row-major RGB triplets

    Image() = default;
    Image(std::size_t w, std::size_t h) : width(w), height(h), pixels(w * h * 3, 0) {}

    bool inside(long x, long y) const {
        return x >= 0 && y >= 0 && x < static_cast<long>(width) && y < static_cast<long>(height);
    }

    void set(long x, long y, Rgb c) {
        if (!inside(x, y)) return;
        const std::size_t i = (static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)) * 3;
        pixels[i] = c.r;
        pixels[i + 1] = c.g;
        pixels[i + 2] = c.b;
    }

    Rgb get(std::size_t x, std::size_t y) const {
        const std::size_t i = (y * width + x) * 3;
        return Rgb{pixels[i], pixels[i + 1], pixels[i + 2]};
    }

    // Channels scaled to [0, 1], laid out [3 x H x W].
    template <class T>
    Tensor<T> to_tensor() const {
        Tensor<T> t({3, height, width});
        for (std::size_t y = 0; y < height; ++y)
            for (std::size_t x = 0; x < width; ++x) {
                const Rgb c = get(x, y);
                t.at3(0, y, x) = static_cast<T>(c.r) / T(255);
                t.at3(1, y, x) = static_cast<T>(c.g) / T(255);
                t.at3(2, y, x) = static_cast<T>(c.b) / T(255);
            }
        return t;
    }
};

inline void write_ppm(const Image& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_ppm: cannot write " + path);
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
}

inline Image read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_ppm: cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P6") throw std::runtime_error("read_ppm: " + path + " is not binary PPM");
    std::size_t w = 0, h = 0;
    long maxval = 0;
    in >> w >> h >> maxval;
    if (maxval != 255 || w == 0 || h == 0) throw std::runtime_error("read_ppm: unsupported header in " + path);
    in.get(); // single whitespace after header
    Image img(w, h);
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
        throw std::runtime_error("read_ppm: truncated pixel data in " + path);
    }
    return img;
}

// Reads only "w h" from the header; used by the annotation loader for
// bounds validation without decoding pixels.
inline std::pair<std::size_t, std::size_t> read_ppm_dims(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_ppm_dims: cannot open " + path);
    std::string magic;
    std::size_t w = 0, h = 0;
    in >> magic >> w >> h;
    if (magic != "P6" || w == 0 || h == 0) {
        throw std::runtime_error("read_ppm_dims: bad PPM header in " + path);
    }
    return {w, h};
}

// ---- painting (used by the synthetic renderer and the infer tool) ----

enum class ShapeKind { kRect = 0, kDisc = 1, kCross = 2 };

// Paints a shape into the axis-aligned box [x0, x0+w) x [y0, y0+h).
inline void paint_shape(Image& img, ShapeKind kind, long x0, long y0, long w, long h, Rgb color) {
    const double cx = static_cast<double>(x0) + static_cast<double>(w) / 2.0;
    const double cy = static_cast<double>(y0) + static_cast<double>(h) / 2.0;
    for (long y = y0; y < y0 + h; ++y) {
        for (long x = x0; x < x0 + w; ++x) {
            bool hit = false;
            switch (kind) {
            case ShapeKind::kRect:
                hit = true;
                break;
            case ShapeKind::kDisc: {
                const double nx = (static_cast<double>(x) + 0.5 - cx) / (static_cast<double>(w) / 2.0);
                const double ny = (static_cast<double>(y) + 0.5 - cy) / (static_cast<double>(h) / 2.0);
                hit = nx * nx + ny * ny <= 1.0;
                break;
            }
            case ShapeKind::kCross: {
                const bool in_vbar = std::abs(static_cast<double>(x) + 0.5 - cx) <= static_cast<double>(w) / 6.0;
                const bool in_hbar = std::abs(static_cast<double>(y) + 0.5 - cy) <= static_cast<double>(h) / 6.0;
                hit = in_vbar || in_hbar;
                break;
            }
            }
            if (hit) img.set(x, y, color);
        }
    }
}

inline void draw_box_outline(Image& img, double cx, double cy, double w, double h, Rgb color) {
    const long x0 = static_cast<long>(std::lround(cx - w / 2));
    const long x1 = static_cast<long>(std::lround(cx + w / 2));
    const long y0 = static_cast<long>(std::lround(cy - h / 2));
    const long y1 = static_cast<long>(std::lround(cy + h / 2));
    for (long x = x0; x <= x1; ++x) {
        img.set(x, y0, color);
        img.set(x, y1, color);
    }
    for (long y = y0; y <= y1; ++y) {
        img.set(x0, y, color);
        img.set(x1, y, color);
    }
}

// Black -> red -> yellow -> white ramp over [0, 1].
inline Rgb heat_color(double v) {
    v = std::min(1.0, std::max(0.0, v));
    auto u8 = [](double x) { return static_cast<std::uint8_t>(std::lround(255.0 * std::min(1.0, std::max(0.0, x)))); };
    return Rgb{u8(v * 3.0), u8(v * 3.0 - 1.0), u8(v * 3.0 - 2.0)};
}

// Bilinearly upsamples a [Hg x Wg] map in [0, 1] to out_w x out_h and
// applies the color ramp. Grid values are sampled at cell centers.
inline Image render_heatmap(const Tensor<double>& heat, std::size_t out_w, std::size_t out_h) {
    if (heat.rank() != 2) throw std::invalid_argument("render_heatmap: expected [H x W] map");
    const std::size_t gh = heat.shape[0], gw = heat.shape[1];
    Image img(out_w, out_h);
    for (std::size_t y = 0; y < out_h; ++y) {
        for (std::size_t x = 0; x < out_w; ++x) {
            // position in grid coordinates, cell centers at integer indices
            const double gx = (static_cast<double>(x) + 0.5) / static_cast<double>(out_w) * static_cast<double>(gw) - 0.5;
            const double gy = (static_cast<double>(y) + 0.5) / static_cast<double>(out_h) * static_cast<double>(gh) - 0.5;
            const double cx = std::min(std::max(gx, 0.0), static_cast<double>(gw - 1));
            const double cy = std::min(std::max(gy, 0.0), static_cast<double>(gh - 1));
            const std::size_t x0 = static_cast<std::size_t>(cx);
            const std::size_t y0 = static_cast<std::size_t>(cy);
            const std::size_t x1 = std::min(x0 + 1, gw - 1);
            const std::size_t y1 = std::min(y0 + 1, gh - 1);
            const double fx = cx - static_cast<double>(x0);
            const double fy = cy - static_cast<double>(y0);
            const double v = heat.at2(y0, x0) * (1 - fx) * (1 - fy) + heat.at2(y0, x1) * fx * (1 - fy) +
                             heat.at2(y1, x0) * (1 - fx) * fy + heat.at2(y1, x1) * fx * fy;
            img.set(static_cast<long>(x), static_cast<long>(y), heat_color(v));
        }
    }
    return img;
}

} // namespace attengeo
