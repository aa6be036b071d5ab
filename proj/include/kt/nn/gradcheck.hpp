#pragma once

#include <functional>

#include "kt/nn/layers.hpp"
#include "kt/nn/rng.hpp"
#include "kt/nn/tensor.hpp"

namespace kt::nn {

/// Elementwise relative error |a - n| / max(|a|, |n|, 1e-8), maximised.
double max_relative_error(const Tensor64& analytic, const Tensor64& numeric);

/// Compares an analytic gradient with central differences of `f` at `x`.
double finite_diff_check(const std::function<double(const Tensor64&)>& f, const Tensor64& analytic_grad,
                         const Tensor64& x, double eps);

struct LayerCheck {
    double input_error = 0.0;
    double param_error = 0.0;  // max over every parameter tensor; 0 when the layer has none
    double max() const { return input_error > param_error ? input_error : param_error; }
};

/// Checks a layer's backward against central differences of the scalar
/// L = sum(r * layer(x)) for a random projection r. Every evaluation runs on a
/// fresh clone, so stochastic layers see the same mask throughout.
LayerCheck check_layer_gradients(const Layer<double>& layer, const Tensor64& x, Mode mode, Rng& rng,
                                 double eps = 1e-5);

}  // namespace kt::nn
