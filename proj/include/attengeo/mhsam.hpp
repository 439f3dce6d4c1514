#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>

#include "attengeo/random.hpp"
#include "attengeo/tape.hpp"
#include "attengeo/tensor.hpp"

// Multi-head Spatial Attention Module. Three heads, kernel sizes 1/3/5,
// each conv -> ReLU -> deconv with stride 1 and no padding; the conv
// widens channels C -> E*C and the deconv restores both channels and
// spatial extent. Head outputs are summed in head order, gated through a
// sigmoid, and multiplied elementwise onto the module input.

namespace attengeo {

inline constexpr std::size_t kMhsamHeads = 3;

inline std::size_t mhsam_kernel(std::size_t head_index) { return 2 * head_index + 1; } // 1, 3, 5

template <class T>
struct MhsamParams {
    std::array<Tensor<T>, kMhsamHeads> conv_w;   // [E*C x C x k x k]
    std::array<Tensor<T>, kMhsamHeads> conv_b;   // [E*C], zero-initialized
    std::array<Tensor<T>, kMhsamHeads> deconv_w; // [E*C x C x k x k]
    std::array<Tensor<T>, kMhsamHeads> deconv_b; // [C], zero-initialized
    std::size_t channels = 0;
    std::size_t expansion = 2;

    static MhsamParams init(std::size_t channels, std::size_t expansion, Rng& rng) {
        if (channels == 0 || expansion == 0) {
            throw std::invalid_argument("MhsamParams: channels and expansion must be positive");
        }
        MhsamParams p;
        p.channels = channels;
        p.expansion = expansion;
        const std::size_t wide = channels * expansion;
        for (std::size_t i = 0; i < kMhsamHeads; ++i) {
            const std::size_t k = mhsam_kernel(i);
            const double cb = 1.0 / std::sqrt(static_cast<double>(channels * k * k));
            const double db = 1.0 / std::sqrt(static_cast<double>(wide * k * k));
            p.conv_w[i] = rng.tensor_uniform<T>({wide, channels, k, k}, -cb, cb);
            p.conv_b[i] = Tensor<T>({wide});
            p.deconv_w[i] = rng.tensor_uniform<T>({wide, channels, k, k}, -db, db);
            p.deconv_b[i] = Tensor<T>({channels});
        }
        return p;
    }
};

template <class T>
struct MhsamVars {
    std::array<Var<T>, kMhsamHeads> conv_w, conv_b, deconv_w, deconv_b;
};

template <class T>
MhsamVars<T> on_tape(Tape<T>& tape, const MhsamParams<T>& p) {
    MhsamVars<T> v;
    for (std::size_t i = 0; i < kMhsamHeads; ++i) {
        v.conv_w[i] = tape.leaf(p.conv_w[i]);
        v.conv_b[i] = tape.leaf(p.conv_b[i]);
        v.deconv_w[i] = tape.leaf(p.deconv_w[i]);
        v.deconv_b[i] = tape.leaf(p.deconv_b[i]);
    }
    return v;
}

// H_i = deconv(relu(conv(F))); spatial dims shrink by k-1 inside and are
// restored on the way out.
template <class T>
Var<T> mhsam_head(Var<T> fused, const MhsamVars<T>& vars, std::size_t head_index) {
    if (head_index >= kMhsamHeads) throw std::invalid_argument("mhsam_head: head index out of range");
    Tape<T>& tape = *fused.tape;
    const Tensor<T>& f = tape.value(fused);
    if (f.rank() != 3) {
        throw std::invalid_argument("mhsam_head: expected [C x H x W], got " + shape_str(f.shape));
    }
    const std::size_t k = mhsam_kernel(head_index);
    if (f.shape[1] < k || f.shape[2] < k) {
        throw std::invalid_argument("mhsam_head: spatial dims " + shape_str(f.shape) +
                                    " smaller than kernel " + std::to_string(k));
    }
    Var<T> narrowed = relu(conv2d(fused, vars.conv_w[head_index], vars.conv_b[head_index], 1, 0));
    return deconv2d(narrowed, vars.deconv_w[head_index], vars.deconv_b[head_index], 1, 0);
}

// A = sigmoid(H_1 + H_2 + H_3), O = A * F elementwise.
template <class T>
Var<T> mhsam_forward(Var<T> fused, const MhsamVars<T>& vars) {
    Var<T> acc = mhsam_head(fused, vars, 0);
    for (std::size_t i = 1; i < kMhsamHeads; ++i) acc = add(acc, mhsam_head(fused, vars, i));
    Var<T> gate = sigmoid(acc);
    return mul(gate, fused);
}

template <class T>
Tensor<T> mhsam_forward(const Tensor<T>& fused, const MhsamParams<T>& params) {
    Tape<T> tape;
    Var<T> out = mhsam_forward(tape.leaf(fused), on_tape(tape, params));
    return tape.value(out);
}

} // namespace attengeo
