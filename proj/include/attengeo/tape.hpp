#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "attengeo/tensor.hpp"

// Reverse-mode autodiff. A Tape records every primitive in forward order;
// backward() replays the records in exact reverse order and accumulates
// gradients with += so a tensor used in several places (e.g. CAB weights
// shared across iterations) ends up with one summed gradient.
//
// A tape is single-threaded by design: one tape per training step.

namespace attengeo {

template <class T>
class Tape;

template <class T>
struct Var {
    Tape<T>* tape = nullptr;
    std::size_t id = 0;
};

template <class T>
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var<T> leaf(Tensor<T> v) {
        nodes_.push_back(Node{std::move(v), Tensor<T>()});
        return Var<T>{this, nodes_.size() - 1};
    }

    const Tensor<T>& value(Var<T> v) const { return nodes_.at(v.id).value; }

    const Tensor<T>& grad(Var<T> v) const {
        const Node& n = nodes_.at(v.id);
        if (n.grad.size() == 0) throw std::runtime_error("Tape::grad: backward() has not run");
        return n.grad;
    }

    // Seeds d(root)/d(root) = 1 and replays all records in reverse.
    void backward(Var<T> root) {
        if (root.tape != this) throw std::invalid_argument("Tape::backward: var from another tape");
        if (value(root).size() != 1) {
            throw std::invalid_argument("Tape::backward: root must be scalar, got " +
                                        shape_str(value(root).shape));
        }
        for (Node& n : nodes_) {
            n.grad = Tensor<T>::zeros(n.value.shape);
        }
        nodes_[root.id].grad.data[0] = T(1);
        for (std::size_t i = records_.size(); i-- > 0;) {
            records_[i].fn(Var<T>{this, records_[i].out});
        }
    }

    std::size_t node_count() const { return nodes_.size(); }
    std::size_t op_count() const { return records_.size(); }

    // Low-level hooks used by the primitive wrappers below.
    Var<T> record(Tensor<T> out, std::function<void(Var<T>)> backward_fn) {
        Var<T> v = leaf(std::move(out));
        records_.push_back(Record{v.id, std::move(backward_fn)});
        return v;
    }

    Tensor<T>& grad_slot(Var<T> v) { return nodes_.at(v.id).grad; }

    void accumulate(Var<T> v, const Tensor<T>& delta) {
        Tensor<T>& g = nodes_.at(v.id).grad;
        for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += delta.data[i];
    }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
    };
    struct Record {
        std::size_t out;
        std::function<void(Var<T>)> fn;
    };
    std::vector<Node> nodes_;
    std::vector<Record> records_;
};

namespace detail {

template <class T>
Tape<T>* same_tape(Var<T> a, Var<T> b) {
    if (a.tape == nullptr || a.tape != b.tape) {
        throw std::invalid_argument("op on vars from different tapes");
    }
    return a.tape;
}

} // namespace detail

// ---- recorded primitives ----

template <class T>
Var<T> matmul(Var<T> a, Var<T> b) {
    Tape<T>* t = detail::same_tape(a, b);
    Tensor<T> out = ops::matmul(t->value(a), t->value(b));
    return t->record(std::move(out), [t, a, b](Var<T> self) {
        const Tensor<T>& g = t->grad(self);
        t->accumulate(a, ops::matmul(g, ops::transpose(t->value(b))));
        t->accumulate(b, ops::matmul(ops::transpose(t->value(a)), g));
    });
}

template <class T>
Var<T> transpose(Var<T> x) {
    Tape<T>* t = x.tape;
    return t->record(ops::transpose(t->value(x)), [t, x](Var<T> self) {
        t->accumulate(x, ops::transpose(t->grad(self)));
    });
}

template <class T>
Var<T> softmax(Var<T> x, std::size_t axis) {
    Tape<T>* t = x.tape;
    return t->record(ops::softmax(t->value(x), axis), [t, x, axis](Var<T> self) {
        t->accumulate(x, ops::softmax_backward(t->value(self), t->grad(self), axis));
    });
}

template <class T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> bias, std::size_t stride = 1, std::size_t pad = 0) {
    Tape<T>* t = detail::same_tape(x, w);
    detail::same_tape(w, bias);
    Tensor<T> out = ops::conv2d(t->value(x), t->value(w), t->value(bias), stride, pad);
    return t->record(std::move(out), [t, x, w, bias, stride, pad](Var<T> self) {
        ops::conv2d_backward(t->value(x), t->value(w), t->grad(self), stride, pad, t->grad_slot(x),
                             t->grad_slot(w), t->grad_slot(bias));
    });
}

template <class T>
Var<T> deconv2d(Var<T> x, Var<T> w, Var<T> bias, std::size_t stride = 1, std::size_t pad = 0) {
    Tape<T>* t = detail::same_tape(x, w);
    detail::same_tape(w, bias);
    Tensor<T> out = ops::deconv2d(t->value(x), t->value(w), t->value(bias), stride, pad);
    return t->record(std::move(out), [t, x, w, bias, stride, pad](Var<T> self) {
        ops::deconv2d_backward(t->value(x), t->value(w), t->grad(self), stride, pad, t->grad_slot(x),
                               t->grad_slot(w), t->grad_slot(bias));
    });
}

template <class T>
Var<T> relu(Var<T> x) {
    Tape<T>* t = x.tape;
    return t->record(ops::relu(t->value(x)), [t, x](Var<T> self) {
        const Tensor<T>& g = t->grad(self);
        const Tensor<T>& xv = t->value(x);
        Tensor<T>& gx = t->grad_slot(x);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (xv.data[i] > T(0)) gx.data[i] += g.data[i];
        }
    });
}

template <class T>
Var<T> sigmoid(Var<T> x) {
    Tape<T>* t = x.tape;
    return t->record(ops::sigmoid(t->value(x)), [t, x](Var<T> self) {
        const Tensor<T>& g = t->grad(self);
        const Tensor<T>& y = t->value(self);
        Tensor<T>& gx = t->grad_slot(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += g.data[i] * y.data[i] * (T(1) - y.data[i]);
    });
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
    Tape<T>* t = detail::same_tape(a, b);
    return t->record(ops::add(t->value(a), t->value(b)), [t, a, b](Var<T> self) {
        const Tensor<T>& g = t->grad(self);
        t->accumulate(a, g);
        t->accumulate(b, g);
    });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
    Tape<T>* t = detail::same_tape(a, b);
    return t->record(ops::mul(t->value(a), t->value(b)), [t, a, b](Var<T> self) {
        const Tensor<T>& g = t->grad(self);
        t->accumulate(a, ops::mul(g, t->value(b)));
        t->accumulate(b, ops::mul(g, t->value(a)));
    });
}

template <class T>
Var<T> affine(Var<T> x, T scale, T offset) {
    Tape<T>* t = x.tape;
    return t->record(ops::affine(t->value(x), scale, offset), [t, x, scale](Var<T> self) {
        t->accumulate(x, ops::affine(t->grad(self), scale, T(0)));
    });
}

// Gradient is zero outside the open interval (lo, hi).
template <class T>
Var<T> clamp(Var<T> x, T lo, T hi) {
    Tape<T>* t = x.tape;
    return t->record(ops::clamp(t->value(x), lo, hi), [t, x, lo, hi](Var<T> self) {
        const Tensor<T>& g = t->grad(self);
        const Tensor<T>& xv = t->value(x);
        Tensor<T>& gx = t->grad_slot(x);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (xv.data[i] > lo && xv.data[i] < hi) gx.data[i] += g.data[i];
        }
    });
}

template <class T>
Var<T> log_elem(Var<T> x) {
    Tape<T>* t = x.tape;
    return t->record(ops::log_elem(t->value(x)), [t, x](Var<T> self) {
        const Tensor<T>& g = t->grad(self);
        const Tensor<T>& xv = t->value(x);
        Tensor<T>& gx = t->grad_slot(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx.data[i] += g.data[i] / xv.data[i];
    });
}

template <class T>
Var<T> sum(Var<T> x) {
    Tape<T>* t = x.tape;
    return t->record(ops::sum(t->value(x)), [t, x](Var<T> self) {
        const T g = t->grad(self).data[0];
        Tensor<T>& gx = t->grad_slot(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx.data[i] += g;
    });
}

template <class T>
Var<T> mean(Var<T> x) {
    Tape<T>* t = x.tape;
    const std::size_t n = t->value(x).size();
    return t->record(ops::mean(t->value(x)), [t, x, n](Var<T> self) {
        const T g = t->grad(self).data[0] / static_cast<T>(n);
        Tensor<T>& gx = t->grad_slot(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx.data[i] += g;
    });
}

template <class T>
Var<T> reshape(Var<T> x, std::vector<std::size_t> new_shape) {
    Tape<T>* t = x.tape;
    return t->record(ops::reshape(t->value(x), std::move(new_shape)), [t, x](Var<T> self) {
        const Tensor<T>& g = t->grad(self);
        Tensor<T>& gx = t->grad_slot(x);
        for (std::size_t i = 0; i < gx.size(); ++i) gx.data[i] += g.data[i];
    });
}

template <class T>
Var<T> gather(Var<T> x, std::vector<std::size_t> idx) {
    Tape<T>* t = x.tape;
    Tensor<T> out = ops::gather(t->value(x), idx);
    auto idx_ptr = std::make_shared<std::vector<std::size_t>>(std::move(idx));
    return t->record(std::move(out), [t, x, idx_ptr](Var<T> self) {
        const Tensor<T>& g = t->grad(self);
        Tensor<T>& gx = t->grad_slot(x);
        for (std::size_t i = 0; i < idx_ptr->size(); ++i) gx.data[(*idx_ptr)[i]] += g.data[i];
    });
}

template <class T>
Var<T> slice_rows(Var<T> x, std::size_t r0, std::size_t r1) {
    Tape<T>* t = x.tape;
    return t->record(ops::slice_rows(t->value(x), r0, r1), [t, x, r0](Var<T> self) {
        const Tensor<T>& g = t->grad(self);
        Tensor<T>& gx = t->grad_slot(x);
        const std::size_t c = g.shape[1];
        for (std::size_t i = 0; i < g.size(); ++i) gx.data[r0 * c + i] += g.data[i];
    });
}

template <class T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
    Tape<T>* t = parts[0].tape;
    std::vector<Tensor<T>> vals;
    vals.reserve(parts.size());
    for (Var<T> p : parts) {
        detail::same_tape(parts[0], p);
        vals.push_back(t->value(p));
    }
    Tensor<T> out = ops::concat_rows(vals);
    auto parts_ptr = std::make_shared<std::vector<Var<T>>>(parts);
    return t->record(std::move(out), [t, parts_ptr](Var<T> self) {
        const Tensor<T>& g = t->grad(self);
        std::size_t off = 0;
        for (Var<T> p : *parts_ptr) {
            Tensor<T>& gp = t->grad_slot(p);
            for (std::size_t i = 0; i < gp.size(); ++i) gp.data[i] += g.data[off + i];
            off += gp.size();
        }
    });
}

// ---- finite-difference verification ----

// Max over elements of |analytic - central difference| / max(1, |analytic|)
// for a scalar-valued function of one tensor.
template <class T>
double grad_check(const std::function<Var<T>(Tape<T>&, Var<T>)>& f, const Tensor<T>& x, double eps) {
    if (!(eps >= 1e-7 && eps <= 1e-3)) {
        throw std::invalid_argument("grad_check: eps must lie in [1e-7, 1e-3]");
    }
    Tape<T> tape;
    Var<T> vx = tape.leaf(x);
    Var<T> y = f(tape, vx);
    if (tape.value(y).size() != 1) {
        throw std::invalid_argument("grad_check: f must be scalar-valued, got " +
                                    shape_str(tape.value(y).shape));
    }
    tape.backward(y);
    const Tensor<T> analytic = tape.grad(vx);

    auto eval = [&f](const Tensor<T>& xv) {
        Tape<T> t2;
        Var<T> v = t2.leaf(xv);
        return static_cast<double>(t2.value(f(t2, v)).data[0]);
    };

    double max_err = 0.0;
    Tensor<T> xp = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T orig = xp.data[i];
        xp.data[i] = orig + static_cast<T>(eps);
        const double fp = eval(xp);
        xp.data[i] = orig - static_cast<T>(eps);
        const double fm = eval(xp);
        xp.data[i] = orig;
        const double fd = (fp - fm) / (2.0 * eps);
        const double a = static_cast<double>(analytic.data[i]);
        const double err = std::abs(a - fd) / std::max(1.0, std::abs(a));
        max_err = std::max(max_err, err);
    }
    return max_err;
}

} // namespace attengeo
