#pragma once

#include <cstdint>
#include <string>

#include "kt/models/model.hpp"
#include "kt/nn/rng.hpp"

namespace kt::models {

struct FireModuleConfig {
    std::size_t squeeze_fm;
    std::size_t expand_fm;
    std::size_t output_channels() const { return 2 * expand_fm; }
};

/// Layer plan of the simplified SqueezeNet:
/// conv1(16, 3x3, s2) > maxpool1(3x3, s2) > fire1(4,16) > fire2(4,16) > fire3(8,32)
/// > maxpool3(3x3, s2) > fire4(8,32) > dropout(0.5) > conv5(n, 1x1) > global average pool.
struct SqueezeNetConfig {
    static constexpr std::size_t conv1_filters = 16;
    static constexpr std::size_t conv1_kernel = 3;
    static constexpr std::size_t conv1_stride = 2;
    static constexpr std::size_t pool_size = 3;
    static constexpr std::size_t pool_stride = 2;
    static constexpr FireModuleConfig fire1{4, 16};
    static constexpr FireModuleConfig fire2{4, 16};
    static constexpr FireModuleConfig fire3{8, 32};
    static constexpr FireModuleConfig fire4{8, 32};
    static constexpr double dropout_rate = 0.5;
};

/// Closed-form parameter count for input channels C and n classes.
std::size_t squeezenet_parameter_count(std::size_t input_channels, std::size_t num_classes);

template <typename T = float>
BasicModel<T> build_simplified_squeezenet(const nn::Shape& input_shape, std::size_t num_classes, nn::Rng& rng);

template <typename T = float>
BasicModel<T> build_simplified_squeezenet_seeded(const nn::Shape& input_shape, std::size_t num_classes,
                                                 std::uint64_t seed);

/// flatten > dense(hidden) > mish > dense(num_classes).
template <typename T = float>
BasicModel<T> build_mlp(const nn::Shape& input_shape, std::size_t hidden, std::size_t num_classes, nn::Rng& rng);

template <typename T = float>
BasicModel<T> build_mlp_seeded(const nn::Shape& input_shape, std::size_t hidden, std::size_t num_classes,
                               std::uint64_t seed);

/// Rebuilds a freshly initialised model from BasicModel::descriptor().
template <typename T = float>
BasicModel<T> build_from_descriptor(const std::string& descriptor);

std::string format_shape(const nn::Shape& shape);  // "40x40x3"
nn::Shape parse_shape(const std::string& text);

}  // namespace kt::models
