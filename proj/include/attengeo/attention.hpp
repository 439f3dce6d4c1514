#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

#include "attengeo/random.hpp"
#include "attengeo/tape.hpp"
#include "attengeo/tensor.hpp"

// Cross-Attention Block (CAB) and the Cross-view Cross-Attention Module
// (CVCAM): k iterations of paired CAB interaction between the query and
// reference feature maps, then one fusion CAB that yields a feature with
// the reference map's spatial extent.
//
// A CAB maps (f1 [D x P1], f2 [D x P2]) to [D x P1]:
//   Q = W_Q (f1 + pe1), K = W_K (f2 + pe2), V = W_V f2
//   per head: Scores = softmax(Q^T K / sqrt(D/m)) rowwise, out = (Scores V^T)^T
// Positional encodings feed only the Q and K projections; V sees raw f2.
// There is no feed-forward sublayer, layer norm, or residual around the
// block, and the interaction CABs share weights across iterations unless
// configured otherwise.

namespace attengeo {

template <class T>
struct CabParams {
    Tensor<T> w_q; // [D x D]
    Tensor<T> w_k;
    Tensor<T> w_v;
    std::size_t heads = 1;

    static CabParams init(std::size_t dim, std::size_t heads, Rng& rng) {
        if (heads == 0 || dim % heads != 0) {
            throw std::invalid_argument("CabParams: channel dim " + std::to_string(dim) +
                                        " not divisible by head count " + std::to_string(heads));
        }
        const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
        CabParams p;
        p.w_q = rng.tensor_uniform<T>({dim, dim}, -bound, bound);
        p.w_k = rng.tensor_uniform<T>({dim, dim}, -bound, bound);
        p.w_v = rng.tensor_uniform<T>({dim, dim}, -bound, bound);
        p.heads = heads;
        return p;
    }
};

// Tape-resident handles of one CAB's weights.
template <class T>
struct CabVars {
    Var<T> w_q, w_k, w_v;
    std::size_t heads = 1;
};

template <class T>
CabVars<T> on_tape(Tape<T>& tape, const CabParams<T>& p) {
    return CabVars<T>{tape.leaf(p.w_q), tape.leaf(p.w_k), tape.leaf(p.w_v), p.heads};
}

struct CvcamConfig {
    std::size_t iterations = 4; // k
    bool share_weights = true;  // one CAB pair reused across iterations
};

namespace detail {

template <class T>
void check_cab_inputs(const Tensor<T>& f1, const Tensor<T>& f2, const Tensor<T>& wq, const Tensor<T>& pe1,
                      const Tensor<T>& pe2) {
    if (f1.rank() != 2 || f2.rank() != 2) {
        throw std::invalid_argument("cab_forward: inputs must be [D x P], got " + shape_str(f1.shape) +
                                    " and " + shape_str(f2.shape));
    }
    const std::size_t d = wq.shape[0];
    if (f1.shape[0] != d || f2.shape[0] != d) {
        throw std::invalid_argument("cab_forward: channel dim mismatch: weights " + shape_str(wq.shape) +
                                    " vs features " + shape_str(f1.shape) + ", " + shape_str(f2.shape));
    }
    if (!pe1.same_shape(f1) || !pe2.same_shape(f2)) {
        throw std::invalid_argument("cab_forward: positional encodings must match feature shapes");
    }
}

} // namespace detail

// One cross-attention block. f1 drives the queries, f2 the keys/values;
// output spatial extent follows f1.
template <class T>
Var<T> cab_forward(Var<T> f1, Var<T> f2, const CabVars<T>& p, Var<T> pe1, Var<T> pe2) {
    Tape<T>& tape = *f1.tape;
    detail::check_cab_inputs(tape.value(f1), tape.value(f2), tape.value(p.w_q), tape.value(pe1),
                             tape.value(pe2));
    const std::size_t d = tape.value(p.w_q).shape[0];
    const std::size_t m = p.heads;
    if (m == 0 || d % m != 0) {
        throw std::invalid_argument("cab_forward: dim " + std::to_string(d) + " not divisible by " +
                                    std::to_string(m) + " heads");
    }
    const std::size_t dh = d / m;
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

    Var<T> q = matmul(p.w_q, add(f1, pe1));
    Var<T> k = matmul(p.w_k, add(f2, pe2));
    Var<T> v = matmul(p.w_v, f2);

    std::vector<Var<T>> head_outputs;
    head_outputs.reserve(m);
    for (std::size_t h = 0; h < m; ++h) {
        Var<T> qh = slice_rows(q, h * dh, (h + 1) * dh);
        Var<T> kh = slice_rows(k, h * dh, (h + 1) * dh);
        Var<T> vh = slice_rows(v, h * dh, (h + 1) * dh);
        Var<T> scores = softmax(affine(matmul(transpose(qh), kh), scale, T(0)), 1); // [P1 x P2]
        head_outputs.push_back(transpose(matmul(scores, transpose(vh))));           // [dh x P1]
    }
    return m == 1 ? head_outputs[0] : concat_rows(head_outputs);
}

// Pure convenience wrapper: same computation on a scratch tape.
template <class T>
Tensor<T> cab_forward(const Tensor<T>& f1, const Tensor<T>& f2, const CabParams<T>& p, const Tensor<T>& pe1,
                      const Tensor<T>& pe2) {
    Tape<T> tape;
    Var<T> out = cab_forward(tape.leaf(f1), tape.leaf(f2), on_tape(tape, p), tape.leaf(pe1), tape.leaf(pe2));
    return tape.value(out);
}

// Weights of the whole module: the two interaction CABs (per iteration, or
// one shared pair) plus the fusion CAB.
template <class T>
struct CvcamParams {
    std::vector<CabParams<T>> query_update; // CAB(f_q <- f_r), size 1 if shared
    std::vector<CabParams<T>> ref_update;   // CAB(f_r <- f_q)
    CabParams<T> fuse;

    static CvcamParams init(std::size_t dim, std::size_t heads, const CvcamConfig& cfg, Rng& rng) {
        if (cfg.iterations < 1) {
            throw std::invalid_argument("CvcamParams: iteration count must be >= 1");
        }
        CvcamParams p;
        const std::size_t sets = cfg.share_weights ? 1 : cfg.iterations;
        for (std::size_t i = 0; i < sets; ++i) {
            p.query_update.push_back(CabParams<T>::init(dim, heads, rng));
            p.ref_update.push_back(CabParams<T>::init(dim, heads, rng));
        }
        p.fuse = CabParams<T>::init(dim, heads, rng);
        return p;
    }
};

template <class T>
struct CvcamVars {
    std::vector<CabVars<T>> query_update;
    std::vector<CabVars<T>> ref_update;
    CabVars<T> fuse;
};

template <class T>
CvcamVars<T> on_tape(Tape<T>& tape, const CvcamParams<T>& p) {
    CvcamVars<T> v;
    for (const auto& c : p.query_update) v.query_update.push_back(on_tape(tape, c));
    for (const auto& c : p.ref_update) v.ref_update.push_back(on_tape(tape, c));
    v.fuse = on_tape(tape, p.fuse);
    return v;
}

// k iterations of paired interaction. Both CABs of an iteration read the
// iteration's input pair (simultaneous update).
template <class T>
std::pair<Var<T>, Var<T>> cvcam_interact(Var<T> f_q, Var<T> f_r, const CvcamConfig& cfg,
                                         const CvcamVars<T>& vars, Var<T> pe_q, Var<T> pe_r) {
    if (cfg.iterations < 1) throw std::invalid_argument("cvcam_interact: iteration count must be >= 1");
    const std::size_t sets = vars.query_update.size();
    if (sets != vars.ref_update.size() || (sets != 1 && sets != cfg.iterations)) {
        throw std::invalid_argument("cvcam_interact: weight set count does not match configuration");
    }
    Var<T> cur_q = f_q;
    Var<T> cur_r = f_r;
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        const std::size_t slot = sets == 1 ? 0 : it;
        Var<T> next_q = cab_forward(cur_q, cur_r, vars.query_update[slot], pe_q, pe_r);
        Var<T> next_r = cab_forward(cur_r, cur_q, vars.ref_update[slot], pe_r, pe_q);
        cur_q = next_q;
        cur_r = next_r;
    }
    return {cur_q, cur_r};
}

// Fusion CAB. The output must carry the reference map's spatial extent,
// which forces Q to come from the reference side and K,V from the query
// side. Returns [D x H_r x W_r].
template <class T>
Var<T> cvcam_fuse(Var<T> f_q_updated, Var<T> f_r_updated, const CabVars<T>& fuse, Var<T> pe_q, Var<T> pe_r,
                  std::size_t ref_h, std::size_t ref_w) {
    Tape<T>& tape = *f_r_updated.tape;
    const std::size_t d = tape.value(f_r_updated).shape[0];
    if (tape.value(f_r_updated).shape[1] != ref_h * ref_w) {
        throw std::invalid_argument("cvcam_fuse: reference feature " +
                                    shape_str(tape.value(f_r_updated).shape) + " does not cover grid " +
                                    std::to_string(ref_h) + "x" + std::to_string(ref_w));
    }
    Var<T> fused = cab_forward(f_r_updated, f_q_updated, fuse, pe_r, pe_q);
    return reshape(fused, {d, ref_h, ref_w});
}

} // namespace attengeo
