#pragma once

#include <cstddef>
#include <vector>

#include "kt/nn/tensor.hpp"

namespace kt::data {

/// An image (HWC, values in [0, 1]) with its class index.
struct LabeledExample {
    nn::Tensor image;
    std::size_t label = 0;
};

using LabeledSet = std::vector<LabeledExample>;

}  // namespace kt::data
