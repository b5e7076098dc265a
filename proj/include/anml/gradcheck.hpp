#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "anml/ops.hpp"
#include "anml/tensor.hpp"

namespace anml {

// Central-difference gradient of a scalar function of one tensor. The
// function is re-evaluated with single coordinates perturbed; use the 64-bit
// engine for trustworthy estimates.
template <typename T>
Tensor<T> finite_difference_grad(const std::function<T(const Tensor<T>&)>& f, const Tensor<T>& x,
                                 T epsilon) {
    if (epsilon <= T(0)) throw NumericError("finite_difference_grad: epsilon must be positive");
    std::vector<T> grad(static_cast<size_t>(x.numel()));
    Tensor<T> probe = x.detached_copy();
    auto& vals = probe.mutable_values();
    for (size_t i = 0; i < vals.size(); ++i) {
        const T orig = vals[i];
        vals[i] = orig + epsilon;
        const T up = f(probe);
        vals[i] = orig - epsilon;
        const T down = f(probe);
        vals[i] = orig;
        grad[i] = (up - down) / (T(2) * epsilon);
    }
    return Tensor<T>::from_values(x.shape(), std::move(grad));
}

// Relative error between two gradients, using the scale-aware denominator
// max(|a|, |b|, floor).
template <typename T>
T max_relative_error(const Tensor<T>& a, const Tensor<T>& b, T floor = T(1e-6)) {
    if (a.shape() != b.shape())
        throw ShapeError("max_relative_error: shape mismatch " + format_shape(a.shape()) +
                         " vs " + format_shape(b.shape()));
    T worst = T(0);
    const auto& av = a.values();
    const auto& bv = b.values();
    for (size_t i = 0; i < av.size(); ++i) {
        const T denom = std::max({std::abs(av[i]), std::abs(bv[i]), floor});
        worst = std::max(worst, std::abs(av[i] - bv[i]) / denom);
    }
    return worst;
}

// Perturbs one coordinate of a parameter vector through an arbitrary scalar
// evaluation; used for spot-checking meta-gradients coordinate by coordinate.
template <typename T>
T central_difference_coord(const std::function<T()>& eval, std::vector<T>& storage, size_t coord,
                           T epsilon) {
    const T orig = storage[coord];
    storage[coord] = orig + epsilon;
    const T up = eval();
    storage[coord] = orig - epsilon;
    const T down = eval();
    storage[coord] = orig;
    return (up - down) / (T(2) * epsilon);
}

// Central difference with a derivative-jump probe. Losses that unroll SGD
// through relu masks are only piecewise smooth: when the perturbation
// interval straddles a mask flip, the two one-sided slopes disagree and the
// symmetric estimate is meaningless, so the coordinate is reported as a kink
// and the caller samples another one.
template <typename T>
struct FdEstimate {
    T value = T(0);
    bool at_kink = false;
};

template <typename T>
FdEstimate<T> kink_aware_central_difference(const std::function<T()>& eval,
                                            std::vector<T>& storage, size_t coord, T epsilon,
                                            T value_at_center) {
    const T orig = storage[coord];
    storage[coord] = orig + epsilon;
    const T up = eval();
    storage[coord] = orig - epsilon;
    const T down = eval();
    storage[coord] = orig;

    FdEstimate<T> est;
    est.value = (up - down) / (T(2) * epsilon);
    const T d_up = (up - value_at_center) / epsilon;
    const T d_down = (value_at_center - down) / epsilon;
    const T scale = std::max({std::abs(d_up), std::abs(d_down), T(1e-4)});
    est.at_kink = std::abs(d_up - d_down) > T(0.1) * scale;
    return est;
}

}  // namespace anml
