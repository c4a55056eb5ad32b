#include "dag/common.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

namespace dag {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
    require(data_.size() == rows * cols, "matrix value count does not match its shape");
}

double dot(std::span<const double> a, std::span<const double> b) noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(std::span<const double> a) noexcept { return std::sqrt(dot(a, a)); }

double squared_distance(std::span<const double> a, std::span<const double> b) noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double t = a[i] - b[i];
        s += t * t;
    }
    return s;
}

void parallel_for(std::size_t n, std::size_t threads,
                  const std::function<void(std::size_t, std::size_t)>& body) {
    if (n == 0) return;
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, n);
    if (threads <= 1) {
        body(0, n);
        return;
    }
    const std::size_t chunk = (n + threads - 1) / threads;
    std::vector<std::exception_ptr> errors((n + chunk - 1) / chunk);
    {
        std::vector<std::jthread> workers;
        workers.reserve(errors.size());
        for (std::size_t c = 0; c < errors.size(); ++c) {
            const std::size_t begin = c * chunk;
            const std::size_t end = std::min(n, begin + chunk);
            workers.emplace_back([&body, &errors, c, begin, end] {
                try {
                    body(begin, end);
                } catch (...) {
                    errors[c] = std::current_exception();
                }
            });
        }
    }
    // Rethrow the failure of the lowest chunk so the reported error does not
    // depend on scheduling.
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace dag
