#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <tuple>

#include "attengeo/tensor.hpp"

// Fixed 2D sinusoidal positional encodings plus the Gaussian click channel
// concatenated to the query image. Both are pure functions of their
// arguments; the PE table is cached per (d_model, H, W).

namespace attengeo {

// Channel layout, for channel c at grid position (x, y) with j = c / 4:
//   c % 4 == 0 -> sin(x / 10000^(2j/d_model))
//   c % 4 == 1 -> cos(x / 10000^(2j/d_model))
//   c % 4 == 2 -> sin(y / 10000^(2j/d_model))
//   c % 4 == 3 -> cos(y / 10000^(2j/d_model))
template <class T>
struct PosEnc2D {
    std::size_t d_model = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    Tensor<T> table; // [d_model x H x W]
};

template <class T>
PosEnc2D<T> build_posenc(std::size_t d_model, std::size_t height, std::size_t width) {
    if (d_model == 0 || d_model % 4 != 0) {
        throw std::invalid_argument("build_posenc: d_model must be a positive multiple of 4, got " +
                                    std::to_string(d_model));
    }
    if (height == 0 || width == 0) throw std::invalid_argument("build_posenc: empty grid");

    PosEnc2D<T> pe;
    pe.d_model = d_model;
    pe.height = height;
    pe.width = width;
    pe.table = Tensor<T>({d_model, height, width});
    for (std::size_t c = 0; c < d_model; ++c) {
        const std::size_t j = c / 4;
        const double freq = std::pow(10000.0, 2.0 * static_cast<double>(j) / static_cast<double>(d_model));
        for (std::size_t y = 0; y < height; ++y) {
            for (std::size_t x = 0; x < width; ++x) {
                const double coord = (c % 4 < 2) ? static_cast<double>(x) : static_cast<double>(y);
                const double arg = coord / freq;
                const double v = (c % 2 == 0) ? std::sin(arg) : std::cos(arg);
                pe.table.at3(c, y, x) = static_cast<T>(v);
            }
        }
    }
    return pe;
}

// Process-wide cache; entries are immutable once built.
template <class T>
const PosEnc2D<T>& cached_posenc(std::size_t d_model, std::size_t height, std::size_t width) {
    using Key = std::tuple<std::size_t, std::size_t, std::size_t>;
    static std::map<Key, std::unique_ptr<PosEnc2D<T>>> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = cache[Key{d_model, height, width}];
    if (!slot) slot = std::make_unique<PosEnc2D<T>>(build_posenc<T>(d_model, height, width));
    return *slot;
}

// PE table flattened to [d_model x (H*W)], position index = y * W + x,
// matching the flattening used for feature maps.
template <class T>
Tensor<T> flatten_posenc(const PosEnc2D<T>& pe) {
    return ops::reshape(pe.table, {pe.d_model, pe.height * pe.width});
}

template <class T>
struct ClickEncoding {
    double sigma = 0;
    Tensor<T> channel; // [1 x H x W]
};

// Gaussian bump exp(-((x-xq)^2+(y-yq)^2)/(2 sigma^2)) sampled on the pixel
// grid; peak value 1 at the click.
template <class T>
ClickEncoding<T> encode_click(double x_q, double y_q, std::size_t height, std::size_t width, double sigma) {
    if (!(sigma > 0)) throw std::invalid_argument("encode_click: sigma must be positive");
    if (!(x_q >= 0 && x_q < static_cast<double>(width)) ||
        !(y_q >= 0 && y_q < static_cast<double>(height))) {
        throw std::invalid_argument("encode_click: click (" + std::to_string(x_q) + ", " + std::to_string(y_q) +
                                    ") outside image " + std::to_string(width) + "x" + std::to_string(height));
    }
    ClickEncoding<T> enc;
    enc.sigma = sigma;
    enc.channel = Tensor<T>({1, height, width});
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            const double dx = static_cast<double>(x) - x_q;
            const double dy = static_cast<double>(y) - y_q;
            enc.channel.at3(0, y, x) = static_cast<T>(std::exp(-(dx * dx + dy * dy) * inv));
        }
    }
    return enc;
}

// Elementwise feature + PE table; used on the Q and K source inputs of a
// cross-attention block, never on the V source.
template <class T>
Tensor<T> add_posenc(const Tensor<T>& features, const PosEnc2D<T>& pe) {
    if (features.rank() != 3 || features.shape[0] != pe.d_model || features.shape[1] != pe.height ||
        features.shape[2] != pe.width) {
        throw std::invalid_argument("add_posenc: features " + shape_str(features.shape) +
                                    " do not match PE table " + shape_str(pe.table.shape));
    }
    return ops::add(features, pe.table);
}

} // namespace attengeo
