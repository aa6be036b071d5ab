#include "kt/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace kt::nn {

double he_uniform_limit(std::size_t fan_in) {
    require(fan_in >= 1, "he_uniform: fan_in must be >= 1");
    return std::sqrt(6.0 / static_cast<double>(fan_in));
}

template <typename T>
BasicTensor<T> he_uniform_init(const Shape& shape, std::size_t fan_in, Rng& rng) {
    const double limit = he_uniform_limit(fan_in);
    BasicTensor<T> out(shape);
    for (auto& v : out.values()) v = static_cast<T>(rng.uniform(-limit, limit));
    return out;
}

double softplus(double x) {
    if (x > 20.0) return x;
    return std::log1p(std::exp(x));
}

double mish(double x) { return x * std::tanh(softplus(x)); }

double mish_derivative(double x) {
    const double sp = softplus(x);
    const double t = std::tanh(sp);
    const double sigmoid = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    return t + x * (1.0 - t * t) * sigmoid;
}

template <typename T>
BasicTensor<T> mish(const BasicTensor<T>& x) {
    BasicTensor<T> y = x;
    for (auto& v : y.values()) v = static_cast<T>(mish(static_cast<double>(v)));
    return y;
}

template <typename T>
BasicTensor<T> mish_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out) {
    require(x.shape() == grad_out.shape(), "mish backward: gradient shape mismatch");
    BasicTensor<T> g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i)
        g[i] = static_cast<T>(static_cast<double>(g[i]) * mish_derivative(static_cast<double>(x[i])));
    return g;
}

template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
    require(!logits.empty(), "softmax of an empty vector");
    const T m = *std::max_element(logits.begin(), logits.end());
    std::vector<T> p(logits.size());
    T sum = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        sum += p[i];
    }
    for (auto& v : p) v /= sum;
    return p;
}

template <typename T>
std::size_t argmax(std::span<const T> values) {
    require(!values.empty(), "argmax of an empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best]) best = i;
    return best;
}

template <typename T>
LossResult<T> scc_loss(std::span<const T> logits, std::size_t true_class) {
    require(true_class < logits.size(), "scc_loss: class index " + std::to_string(true_class) +
                                            " out of range for " + std::to_string(logits.size()) + " classes");
    const T m = *std::max_element(logits.begin(), logits.end());
    T sum = 0;
    for (auto z : logits) sum += std::exp(z - m);
    const T log_z = m + std::log(sum);
    LossResult<T> r{log_z - logits[true_class], std::vector<T>(logits.size())};
    for (std::size_t i = 0; i < logits.size(); ++i) r.grad[i] = std::exp(logits[i] - log_z);
    r.grad[true_class] -= T{1};
    return r;
}

#define KT_INSTANTIATE(T)                                                                  \
    template BasicTensor<T> he_uniform_init<T>(const Shape&, std::size_t, Rng&);           \
    template BasicTensor<T> mish<T>(const BasicTensor<T>&);                                \
    template BasicTensor<T> mish_backward<T>(const BasicTensor<T>&, const BasicTensor<T>&); \
    template std::vector<T> softmax<T>(std::span<const T>);                                \
    template std::size_t argmax<T>(std::span<const T>);                                    \
    template LossResult<T> scc_loss<T>(std::span<const T>, std::size_t);

KT_INSTANTIATE(float)
KT_INSTANTIATE(double)
#undef KT_INSTANTIATE

}  // namespace kt::nn
