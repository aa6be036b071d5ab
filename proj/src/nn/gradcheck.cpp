#include "kt/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace kt::nn {

double max_relative_error(const Tensor64& analytic, const Tensor64& numeric) {
    require(analytic.size() == numeric.size(), "gradient size mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double a = analytic[i], n = numeric[i];
        const double denom = std::max({std::abs(a), std::abs(n), 1e-8});
        worst = std::max(worst, std::abs(a - n) / denom);
    }
    return worst;
}

double finite_diff_check(const std::function<double(const Tensor64&)>& f, const Tensor64& analytic_grad,
                         const Tensor64& x, double eps) {
    require(eps > 0.0, "finite_diff_check: eps must be positive");
    require(analytic_grad.size() == x.size(), "finite_diff_check: gradient and input sizes differ");
    Tensor64 numeric(x.shape());
    Tensor64 probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + eps;
        const double up = f(probe);
        probe[i] = orig - eps;
        const double down = f(probe);
        probe[i] = orig;
        numeric[i] = (up - down) / (2.0 * eps);
    }
    return max_relative_error(analytic_grad, numeric);
}

namespace {

double project(const Tensor64& y, const Tensor64& r) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
    return s;
}

}  // namespace

LayerCheck check_layer_gradients(const Layer<double>& layer, const Tensor64& x, Mode mode, Rng& rng, double eps) {
    const Shape out_shape = layer.output_shape(x.shape());
    Tensor64 r(out_shape);
    for (auto& v : r.values()) v = rng.uniform(-1.0, 1.0);

    auto analytic = layer.clone();
    for (auto* p : analytic->params()) p->grad.fill(0.0);
    analytic->forward(x, mode);
    const Tensor64 grad_in = analytic->backward(r);

    LayerCheck result;
    result.input_error = finite_diff_check(
        [&](const Tensor64& probe) {
            auto l = layer.clone();
            return project(l->forward(probe, mode), r);
        },
        grad_in, x, eps);

    const auto analytic_params = analytic->params();
    for (std::size_t p = 0; p < analytic_params.size(); ++p) {
        const Tensor64 theta = analytic_params[p]->value;
        const double err = finite_diff_check(
            [&](const Tensor64& probe) {
                auto l = layer.clone();
                l->params()[p]->value = probe;
                return project(l->forward(x, mode), r);
            },
            analytic_params[p]->grad, theta, eps);
        result.param_error = std::max(result.param_error, err);
    }
    return result;
}

}  // namespace kt::nn
