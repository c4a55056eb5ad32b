#pragma once

#include "dag/common.hpp"

namespace dag {

// y = W x + b with W stored row-major as out x in.
struct Dense {
    std::size_t in = 0;
    std::size_t out = 0;
    Vector w;
    Vector b;

    Dense() = default;
    Dense(std::size_t in_dim, std::size_t out_dim) : in(in_dim), out(out_dim), w(in_dim * out_dim, 0.0), b(out_dim, 0.0) {}

    Vector apply(std::span<const double> x) const;
    // W^T g
    Vector apply_transposed(std::span<const double> g) const;
    // grad.w += g x^T, grad.b += g
    void accumulate_grad(std::span<const double> x, std::span<const double> g, Dense& grad) const;

    bool same_shape(const Dense& o) const noexcept { return in == o.in && out == o.out; }
    friend bool operator==(const Dense&, const Dense&) = default;
};

}  // namespace dag
