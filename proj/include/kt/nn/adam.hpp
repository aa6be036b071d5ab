#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "kt/nn/layers.hpp"
#include "kt/nn/tensor.hpp"

namespace kt::nn {

struct AdamConfig {
    // Keras defaults.
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-7;
};

/// Moments for one parameter tensor plus the shared hyperparameters.
template <typename T>
struct AdamState {
    BasicTensor<T> m;
    BasicTensor<T> v;
    std::uint64_t t = 0;
    AdamConfig config;

    AdamState() = default;
    AdamState(const Shape& shape, AdamConfig cfg) : m(shape), v(shape), config(cfg) {}
};

/// Bias-corrected Adam:
///   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
///   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
template <typename T>
void adam_step(BasicTensor<T>& params, const BasicTensor<T>& grads, AdamState<T>& state);

/// Adam over every parameter of a network, one AdamState per tensor.
template <typename T>
class Adam {
public:
    Adam() = default;
    explicit Adam(AdamConfig config) : config_(config) {}

    /// Applies one step to every parameter using its accumulated gradient.
    /// States are created lazily on the first call.
    void step(std::span<Param<T>* const> params);

    const AdamConfig& config() const { return config_; }
    const std::vector<AdamState<T>>& states() const { return states_; }
    std::uint64_t steps() const { return steps_; }

private:
    AdamConfig config_;
    std::vector<AdamState<T>> states_;
    std::uint64_t steps_ = 0;
};

}  // namespace kt::nn
