#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

// Dense row-major tensor plus the pure forward/backward kernels every
// module is built from. Forward ops are free functions in attengeo::ops;
// they never mutate their inputs, so they are safe to call concurrently.
// The differentiable wrappers live in tape.hpp.

namespace attengeo {

inline std::string shape_str(const std::vector<std::size_t>& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << " x ";
        os << s[i];
    }
    os << "]";
    return os.str();
}

template <class T>
struct Tensor {
    static_assert(std::is_floating_point_v<T>, "Tensor requires a floating-point scalar");

    std::vector<std::size_t> shape;
    std::vector<T> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)), data(checked_numel(shape), T(0)) {}

    Tensor(std::vector<std::size_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (checked_numel(shape) != data.size()) {
            throw std::invalid_argument("Tensor: shape " + shape_str(shape) + " does not match buffer of " +
                                        std::to_string(data.size()) + " elements");
        }
    }

    static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

    static Tensor full(std::vector<std::size_t> s, T v) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    static Tensor ones(std::vector<std::size_t> s) { return full(std::move(s), T(1)); }

    static Tensor scalar(T v) { return Tensor({1}, {v}); }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }

    // 2-D / 3-D index helpers; no bounds check in release builds.
    T& at2(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    const T& at2(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
    T& at3(std::size_t c, std::size_t y, std::size_t x) { return data[(c * shape[1] + y) * shape[2] + x]; }
    const T& at3(std::size_t c, std::size_t y, std::size_t x) const {
        return data[(c * shape[1] + y) * shape[2] + x];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (T v : data) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    template <class U>
    Tensor<U> cast() const {
        std::vector<U> d(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) d[i] = static_cast<U>(data[i]);
        return Tensor<U>(shape, std::move(d));
    }

private:
    static std::size_t checked_numel(const std::vector<std::size_t>& s) {
        if (s.empty()) throw std::invalid_argument("Tensor: empty shape");
        std::size_t n = 1;
        for (std::size_t d : s) {
            if (d == 0) throw std::invalid_argument("Tensor: zero-sized dimension in " + shape_str(s));
            n *= d;
        }
        return n;
    }
};

using Tensor64 = Tensor<double>;
using Tensor32 = Tensor<float>;

namespace ops {

namespace detail {

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

template <class T>
void require_rank(const Tensor<T>& t, std::size_t r, const char* op) {
    if (t.rank() != r) {
        throw std::invalid_argument(std::string(op) + ": expected rank-" + std::to_string(r) + " tensor, got " +
                                    shape_str(t.shape));
    }
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                                    shape_str(b.shape));
    }
}

} // namespace detail

// ---- dense linear algebra ----

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_rank(a, 2, "matmul");
    detail::require_rank(b, 2, "matmul");
    if (a.shape[1] != b.shape[0]) {
        throw std::invalid_argument("matmul: inner dimensions disagree: " + shape_str(a.shape) + " vs " +
                                    shape_str(b.shape));
    }
    const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    Tensor<T> out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a.data.data() + i * k;
        T* orow = out.data.data() + i * n;
        for (std::size_t l = 0; l < k; ++l) {
            const T av = arow[l];
            const T* brow = b.data.data() + l * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
    detail::require_rank(a, 2, "transpose");
    const std::size_t r = a.shape[0], c = a.shape[1];
    Tensor<T> out({c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.data[j * r + i] = a.data[i * c + j];
    return out;
}

// Numerically stable softmax along `axis` (max subtraction per slice).
template <class T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
    if (axis >= x.rank()) {
        throw std::invalid_argument("softmax: axis " + std::to_string(axis) + " out of range for " +
                                    shape_str(x.shape));
    }
    const std::size_t len = x.shape[axis];
    std::size_t inner = 1, outer = 1;
    for (std::size_t i = axis + 1; i < x.rank(); ++i) inner *= x.shape[i];
    for (std::size_t i = 0; i < axis; ++i) outer *= x.shape[i];

    Tensor<T> out(x.shape);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            T mx = x.data[base];
            for (std::size_t l = 1; l < len; ++l) mx = std::max(mx, x.data[base + l * inner]);
            T sum = 0;
            for (std::size_t l = 0; l < len; ++l) {
                const T e = std::exp(x.data[base + l * inner] - mx);
                out.data[base + l * inner] = e;
                sum += e;
            }
            for (std::size_t l = 0; l < len; ++l) out.data[base + l * inner] /= sum;
        }
    }
    return out;
}

// dS of softmax: dx = y * (dy - sum(dy * y)) per slice.
template <class T>
Tensor<T> softmax_backward(const Tensor<T>& y, const Tensor<T>& dy, std::size_t axis) {
    detail::require_same_shape(y, dy, "softmax_backward");
    const std::size_t len = y.shape[axis];
    std::size_t inner = 1, outer = 1;
    for (std::size_t i = axis + 1; i < y.rank(); ++i) inner *= y.shape[i];
    for (std::size_t i = 0; i < axis; ++i) outer *= y.shape[i];

    Tensor<T> dx(y.shape);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            T dot = 0;
            for (std::size_t l = 0; l < len; ++l) dot += dy.data[base + l * inner] * y.data[base + l * inner];
            for (std::size_t l = 0; l < len; ++l) {
                const std::size_t idx = base + l * inner;
                dx.data[idx] = y.data[idx] * (dy.data[idx] - dot);
            }
        }
    }
    return dx;
}

// ---- 2-D convolution family ----
//
// x: [C_in x H x W], w: [C_out x C_in x k x k], bias: [C_out].
// Output spatial size: (H + 2*pad - k) / stride + 1.

inline std::size_t conv_out_dim(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad,
                                const char* op) {
    if (in + 2 * pad < k) {
        throw std::invalid_argument(std::string(op) + ": kernel " + std::to_string(k) +
                                    " larger than padded input " + std::to_string(in + 2 * pad));
    }
    return (in + 2 * pad - k) / stride + 1;
}

template <class T>
void check_conv_args(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, const char* op) {
    detail::require_rank(x, 3, op);
    detail::require_rank(w, 4, op);
    detail::require_rank(bias, 1, op);
    if (w.shape[2] != w.shape[3]) {
        throw std::invalid_argument(std::string(op) + ": non-square kernel " + shape_str(w.shape));
    }
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, std::size_t stride = 1,
                 std::size_t pad = 0) {
    check_conv_args(x, w, bias, "conv2d");
    const std::size_t cin = x.shape[0], h = x.shape[1], wd = x.shape[2];
    const std::size_t cout = w.shape[0], k = w.shape[2];
    detail::require(w.shape[1] == cin, "conv2d: weight expects " + std::to_string(w.shape[1]) +
                                           " input channels, tensor has " + std::to_string(cin));
    detail::require(bias.shape[0] == cout, "conv2d: bias/output channel mismatch");
    const std::size_t oh = conv_out_dim(h, k, stride, pad, "conv2d");
    const std::size_t ow = conv_out_dim(wd, k, stride, pad, "conv2d");

    Tensor<T> out({cout, oh, ow});
    for (std::size_t co = 0; co < cout; ++co) {
        T* oc = out.data.data() + co * oh * ow;
        std::fill(oc, oc + oh * ow, bias.data[co]);
        for (std::size_t ci = 0; ci < cin; ++ci) {
            const T* xc = x.data.data() + ci * h * wd;
            const T* wc = w.data.data() + (co * cin + ci) * k * k;
            for (std::size_t ky = 0; ky < k; ++ky) {
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const T wv = wc[ky * k + kx];
                    for (std::size_t oy = 0; oy < oh; ++oy) {
                        const std::ptrdiff_t iy =
                            static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                        const T* xrow = xc + static_cast<std::size_t>(iy) * wd;
                        T* orow = oc + oy * ow;
                        for (std::size_t ox = 0; ox < ow; ++ox) {
                            const std::ptrdiff_t ix =
                                static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                            orow[ox] += wv * xrow[static_cast<std::size_t>(ix)];
                        }
                    }
                }
            }
        }
    }
    return out;
}

// Accumulates (+=) into dx/dw/dbias, which must be pre-sized like x/w/bias.
template <class T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dout, std::size_t stride,
                     std::size_t pad, Tensor<T>& dx, Tensor<T>& dw, Tensor<T>& dbias) {
    const std::size_t cin = x.shape[0], h = x.shape[1], wd = x.shape[2];
    const std::size_t cout = w.shape[0], k = w.shape[2];
    const std::size_t oh = dout.shape[1], ow = dout.shape[2];

    for (std::size_t co = 0; co < cout; ++co) {
        const T* gc = dout.data.data() + co * oh * ow;
        T acc = 0;
        for (std::size_t i = 0; i < oh * ow; ++i) acc += gc[i];
        dbias.data[co] += acc;
        for (std::size_t ci = 0; ci < cin; ++ci) {
            const T* xc = x.data.data() + ci * h * wd;
            T* dxc = dx.data.data() + ci * h * wd;
            const T* wc = w.data.data() + (co * cin + ci) * k * k;
            T* dwc = dw.data.data() + (co * cin + ci) * k * k;
            for (std::size_t ky = 0; ky < k; ++ky) {
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const T wv = wc[ky * k + kx];
                    T wgrad = 0;
                    for (std::size_t oy = 0; oy < oh; ++oy) {
                        const std::ptrdiff_t iy =
                            static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
                        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                        const T* xrow = xc + static_cast<std::size_t>(iy) * wd;
                        T* dxrow = dxc + static_cast<std::size_t>(iy) * wd;
                        const T* grow = gc + oy * ow;
                        for (std::size_t ox = 0; ox < ow; ++ox) {
                            const std::ptrdiff_t ix =
                                static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                            wgrad += grow[ox] * xrow[static_cast<std::size_t>(ix)];
                            dxrow[static_cast<std::size_t>(ix)] += grow[ox] * wv;
                        }
                    }
                    dwc[ky * k + kx] += wgrad;
                }
            }
        }
    }
}

// Transposed convolution, the adjoint of conv2d's linear map.
// x: [C_in x H' x W'], w: [C_in x C_out x k x k], bias: [C_out].
// Output spatial size: (H' - 1) * stride + k - 2*pad.
template <class T>
Tensor<T> deconv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, std::size_t stride = 1,
                   std::size_t pad = 0) {
    check_conv_args(x, w, bias, "deconv2d");
    const std::size_t cin = x.shape[0], ih = x.shape[1], iw = x.shape[2];
    const std::size_t cout = w.shape[1], k = w.shape[2];
    detail::require(w.shape[0] == cin, "deconv2d: weight expects " + std::to_string(w.shape[0]) +
                                           " input channels, tensor has " + std::to_string(cin));
    detail::require(bias.shape[0] == cout, "deconv2d: bias/output channel mismatch");
    const std::size_t span_h = (ih - 1) * stride + k;
    const std::size_t span_w = (iw - 1) * stride + k;
    detail::require(span_h > 2 * pad && span_w > 2 * pad, "deconv2d: padding exceeds output extent");
    const std::size_t oh = span_h - 2 * pad;
    const std::size_t ow = span_w - 2 * pad;

    Tensor<T> out({cout, oh, ow});
    for (std::size_t co = 0; co < cout; ++co) {
        T* oc = out.data.data() + co * oh * ow;
        std::fill(oc, oc + oh * ow, bias.data[co]);
        for (std::size_t ci = 0; ci < cin; ++ci) {
            const T* xc = x.data.data() + ci * ih * iw;
            const T* wc = w.data.data() + (ci * cout + co) * k * k;
            for (std::size_t ky = 0; ky < k; ++ky) {
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const T wv = wc[ky * k + kx];
                    for (std::size_t y = 0; y < ih; ++y) {
                        const std::ptrdiff_t oy =
                            static_cast<std::ptrdiff_t>(y * stride + ky) - static_cast<std::ptrdiff_t>(pad);
                        if (oy < 0 || oy >= static_cast<std::ptrdiff_t>(oh)) continue;
                        const T* xrow = xc + y * iw;
                        T* orow = oc + static_cast<std::size_t>(oy) * ow;
                        for (std::size_t xx = 0; xx < iw; ++xx) {
                            const std::ptrdiff_t ox =
                                static_cast<std::ptrdiff_t>(xx * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                            if (ox < 0 || ox >= static_cast<std::ptrdiff_t>(ow)) continue;
                            orow[static_cast<std::size_t>(ox)] += wv * xrow[xx];
                        }
                    }
                }
            }
        }
    }
    return out;
}

template <class T>
void deconv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dout, std::size_t stride,
                       std::size_t pad, Tensor<T>& dx, Tensor<T>& dw, Tensor<T>& dbias) {
    const std::size_t cin = x.shape[0], ih = x.shape[1], iw = x.shape[2];
    const std::size_t cout = w.shape[1], k = w.shape[2];
    const std::size_t oh = dout.shape[1], ow = dout.shape[2];

    for (std::size_t co = 0; co < cout; ++co) {
        const T* gc = dout.data.data() + co * oh * ow;
        T acc = 0;
        for (std::size_t i = 0; i < oh * ow; ++i) acc += gc[i];
        dbias.data[co] += acc;
        for (std::size_t ci = 0; ci < cin; ++ci) {
            const T* xc = x.data.data() + ci * ih * iw;
            T* dxc = dx.data.data() + ci * ih * iw;
            const T* wc = w.data.data() + (ci * cout + co) * k * k;
            T* dwc = dw.data.data() + (ci * cout + co) * k * k;
            for (std::size_t ky = 0; ky < k; ++ky) {
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const T wv = wc[ky * k + kx];
                    T wgrad = 0;
                    for (std::size_t y = 0; y < ih; ++y) {
                        const std::ptrdiff_t oy =
                            static_cast<std::ptrdiff_t>(y * stride + ky) - static_cast<std::ptrdiff_t>(pad);
                        if (oy < 0 || oy >= static_cast<std::ptrdiff_t>(oh)) continue;
                        const T* xrow = xc + y * iw;
                        T* dxrow = dxc + y * iw;
                        const T* grow = gc + static_cast<std::size_t>(oy) * ow;
                        for (std::size_t xx = 0; xx < iw; ++xx) {
                            const std::ptrdiff_t ox =
                                static_cast<std::ptrdiff_t>(xx * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                            if (ox < 0 || ox >= static_cast<std::ptrdiff_t>(ow)) continue;
                            wgrad += grow[static_cast<std::size_t>(ox)] * xrow[xx];
                            dxrow[xx] += grow[static_cast<std::size_t>(ox)] * wv;
                        }
                    }
                    dwc[ky * k + kx] += wgrad;
                }
            }
        }
    }
}

// ---- elementwise and reductions ----

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> out(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
    return out;
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    Tensor<T> out(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = T(1) / (T(1) + std::exp(-x.data[i]));
    return out;
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "add");
    Tensor<T> out(a.shape);
    for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] + b.data[i];
    return out;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a, b, "mul");
    Tensor<T> out(a.shape);
    for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] * b.data[i];
    return out;
}

template <class T>
Tensor<T> affine(const Tensor<T>& x, T scale, T offset) {
    Tensor<T> out(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = scale * x.data[i] + offset;
    return out;
}

template <class T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
    detail::require(lo <= hi, "clamp: lo > hi");
    Tensor<T> out(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = std::min(hi, std::max(lo, x.data[i]));
    return out;
}

template <class T>
Tensor<T> log_elem(const Tensor<T>& x) {
    Tensor<T> out(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = std::log(x.data[i]);
    return out;
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
    T acc = 0;
    for (T v : x.data) acc += v;
    return Tensor<T>::scalar(acc);
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
    T acc = 0;
    for (T v : x.data) acc += v;
    return Tensor<T>::scalar(acc / static_cast<T>(x.size()));
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, std::vector<std::size_t> new_shape) {
    Tensor<T> out(std::move(new_shape), x.data);
    return out;
}

template <class T>
Tensor<T> gather(const Tensor<T>& x, const std::vector<std::size_t>& idx) {
    detail::require(!idx.empty(), "gather: empty index list");
    Tensor<T> out({idx.size()});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        detail::require(idx[i] < x.size(), "gather: index " + std::to_string(idx[i]) + " out of range");
        out.data[i] = x.data[idx[i]];
    }
    return out;
}

// Contiguous row slice of a 2-D tensor: rows [r0, r1).
template <class T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t r0, std::size_t r1) {
    detail::require_rank(x, 2, "slice_rows");
    detail::require(r0 < r1 && r1 <= x.shape[0], "slice_rows: bad range");
    const std::size_t c = x.shape[1];
    Tensor<T> out({r1 - r0, c});
    std::copy(x.data.begin() + static_cast<std::ptrdiff_t>(r0 * c),
              x.data.begin() + static_cast<std::ptrdiff_t>(r1 * c), out.data.begin());
    return out;
}

template <class T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
    detail::require(!parts.empty(), "concat_rows: no parts");
    const std::size_t c = parts[0].shape[1];
    std::size_t rows = 0;
    for (const auto& p : parts) {
        detail::require(p.rank() == 2 && p.shape[1] == c, "concat_rows: column mismatch");
        rows += p.shape[0];
    }
    Tensor<T> out({rows, c});
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p.data.begin(), p.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off));
        off += p.size();
    }
    return out;
}

} // namespace ops

} // namespace attengeo
