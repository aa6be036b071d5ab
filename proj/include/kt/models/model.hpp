#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kt/nn/adam.hpp"
#include "kt/nn/layers.hpp"
#include "kt/nn/tensor.hpp"

namespace kt::models {

using nn::Mode;

/// A sequential network with value semantics: copying a model deep-copies
/// every layer, including the generator state of dropout layers.
template <typename T>
class BasicModel {
public:
    BasicModel() = default;
    BasicModel(std::string descriptor, nn::Shape input_shape, std::size_t num_classes,
               std::vector<nn::LayerPtr<T>> layers);
    BasicModel(const BasicModel& other);
    BasicModel& operator=(const BasicModel& other);
    BasicModel(BasicModel&&) noexcept = default;
    BasicModel& operator=(BasicModel&&) noexcept = default;

    /// Rebuild string: the builder name plus its arguments, e.g.
    /// "squeezenet:40x40x3:7:seed=42". Checkpoints store it verbatim.
    const std::string& descriptor() const { return descriptor_; }
    /// Layer-by-layer architecture summary (no weights, no seeds).
    std::string architecture() const;
    const nn::Shape& input_shape() const { return input_shape_; }
    std::size_t num_classes() const { return num_classes_; }
    std::size_t parameter_count() const;
    std::size_t layer_count() const { return layers_.size(); }
    const nn::Layer<T>& layer(std::size_t i) const { return *layers_.at(i); }

    nn::BasicTensor<T> forward(const nn::BasicTensor<T>& x, Mode mode);
    /// Infer-mode forward on a copy of the layers' caches; safe on a shared const model.
    nn::BasicTensor<T> predict_logits(const nn::BasicTensor<T>& x) const;
    /// Backpropagates dL/dlogits through the last forward pass.
    void backward(const nn::BasicTensor<T>& grad_logits);

    std::vector<nn::Param<T>*> params();
    std::vector<const nn::Param<T>*> params() const;
    void zero_grad();

    /// Flattened parameter values in params() order.
    std::vector<T> flat_parameters() const;
    void set_flat_parameters(std::span<const T> values);

private:
    std::string descriptor_;
    nn::Shape input_shape_;
    std::size_t num_classes_ = 0;
    std::vector<nn::LayerPtr<T>> layers_;
};

using Model = BasicModel<float>;
using Model64 = BasicModel<double>;

/// One optimizer update on a single example: forward in train mode, SCC loss,
/// backward, Adam step. Returns the pre-update loss.
template <typename T>
T train_step(BasicModel<T>& model, const nn::BasicTensor<T>& x, std::size_t label, nn::Adam<T>& optimizer);

/// Same as train_step but also reports the train-mode prediction made before the update.
template <typename T>
struct StepOutcome {
    T loss;
    std::size_t prediction;
};

template <typename T>
StepOutcome<T> train_step_with_prediction(BasicModel<T>& model, const nn::BasicTensor<T>& x, std::size_t label,
                                          nn::Adam<T>& optimizer);

/// argmax(softmax(logits)) in infer mode; ties broken toward the lowest index.
template <typename T>
std::size_t predict_class(const BasicModel<T>& model, const nn::BasicTensor<T>& x);

}  // namespace kt::models
