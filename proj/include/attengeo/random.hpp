#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "attengeo/tensor.hpp"

// Seeded RNG wrapper. All draws go through these helpers instead of
// std::*_distribution so a given seed produces the same stream on every
// platform/STL.

namespace attengeo {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }

    // Uniform integer in [lo, hi] inclusive.
    long range(long lo, long hi) { return lo + static_cast<long>(index(static_cast<std::size_t>(hi - lo + 1))); }

    bool coin(double p = 0.5) { return uniform() < p; }

    // Child generator with a decorrelated seed; keeps sample streams
    // independent of how many draws earlier samples consumed.
    Rng fork(std::uint64_t salt) {
        std::uint64_t s = gen_();
        s ^= salt + 0x9e3779b97f4a7c15ull + (s << 6) + (s >> 2);
        return Rng(s);
    }

    template <class T>
    Tensor<T> tensor_uniform(std::vector<std::size_t> shape, double lo, double hi) {
        Tensor<T> t(std::move(shape));
        for (auto& v : t.data) v = static_cast<T>(uniform(lo, hi));
        return t;
    }

private:
    std::mt19937_64 gen_;
};

} // namespace attengeo
