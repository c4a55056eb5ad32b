#include "dag/dense.hpp"

namespace dag {

Vector Dense::apply(std::span<const double> x) const {
    require(x.size() == in, "dense layer: input has " + std::to_string(x.size()) + " entries, expected " +
                                std::to_string(in));
    Vector y(b);
    for (std::size_t o = 0; o < out; ++o) y[o] += dot({w.data() + o * in, in}, x);
    return y;
}

Vector Dense::apply_transposed(std::span<const double> g) const {
    Vector x(in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
        const double go = g[o];
        if (go == 0.0) continue;
        const double* row = w.data() + o * in;
        for (std::size_t i = 0; i < in; ++i) x[i] += row[i] * go;
    }
    return x;
}

void Dense::accumulate_grad(std::span<const double> x, std::span<const double> g, Dense& grad) const {
    for (std::size_t o = 0; o < out; ++o) {
        const double go = g[o];
        grad.b[o] += go;
        double* row = grad.w.data() + o * in;
        for (std::size_t i = 0; i < in; ++i) row[i] += go * x[i];
    }
}

}  // namespace dag
