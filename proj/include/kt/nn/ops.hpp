#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kt/nn/rng.hpp"
#include "kt/nn/tensor.hpp"

namespace kt::nn {

/// Kernel initializer: U(-limit, limit) with limit = sqrt(6 / fan_in).
template <typename T>
BasicTensor<T> he_uniform_init(const Shape& shape, std::size_t fan_in, Rng& rng);

double he_uniform_limit(std::size_t fan_in);

// Scalar mish pieces, shared by the layer and by tests.
double softplus(double x);
double mish(double x);
double mish_derivative(double x);

template <typename T>
BasicTensor<T> mish(const BasicTensor<T>& x);

/// dL/dx given x and dL/dy.
template <typename T>
BasicTensor<T> mish_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out);

/// Max-subtracted softmax over a flat logit vector.
template <typename T>
std::vector<T> softmax(std::span<const T> logits);

/// Index of the largest element; ties go to the lowest index.
template <typename T>
std::size_t argmax(std::span<const T> values);

template <typename T>
struct LossResult {
    T loss;
    std::vector<T> grad;  // dL/dlogits
};

/// Sparse categorical cross-entropy on a single example.
template <typename T>
LossResult<T> scc_loss(std::span<const T> logits, std::size_t true_class);

}  // namespace kt::nn
