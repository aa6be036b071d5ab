#include "kt/nn/adam.hpp"

#include <cmath>

namespace kt::nn {

template <typename T>
void adam_step(BasicTensor<T>& params, const BasicTensor<T>& grads, AdamState<T>& state) {
    require(params.shape() == grads.shape() && params.shape() == state.m.shape() &&
                params.shape() == state.v.shape(),
            "adam_step: shape mismatch between params " + shape_str(params.shape()) + ", grads " +
                shape_str(grads.shape()) + " and state " + shape_str(state.m.shape()));
    const auto& c = state.config;
    state.t += 1;
    const double t = static_cast<double>(state.t);
    const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
    const T bias1 = static_cast<T>(1.0 - std::pow(c.beta1, t));
    const T bias2 = static_cast<T>(1.0 - std::pow(c.beta2, t));
    const T lr = static_cast<T>(c.lr), eps = static_cast<T>(c.epsilon);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const T g = grads[i];
        state.m[i] = b1 * state.m[i] + (T{1} - b1) * g;
        state.v[i] = b2 * state.v[i] + (T{1} - b2) * g * g;
        const T m_hat = state.m[i] / bias1;
        const T v_hat = state.v[i] / bias2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
}

template <typename T>
void Adam<T>::step(std::span<Param<T>* const> params) {
    if (states_.empty()) {
        states_.reserve(params.size());
        for (auto* p : params) states_.emplace_back(p->value.shape(), config_);
    }
    require(states_.size() == params.size(), "Adam: parameter list changed between steps");
    for (std::size_t i = 0; i < params.size(); ++i) adam_step(params[i]->value, params[i]->grad, states_[i]);
    ++steps_;
}

template void adam_step<float>(BasicTensor<float>&, const BasicTensor<float>&, AdamState<float>&);
template void adam_step<double>(BasicTensor<double>&, const BasicTensor<double>&, AdamState<double>&);
template class Adam<float>;
template class Adam<double>;

}  // namespace kt::nn
