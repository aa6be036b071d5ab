#include "kt/models/model.hpp"

#include "kt/nn/ops.hpp"

namespace kt::models {

template <typename T>
BasicModel<T>::BasicModel(std::string descriptor, nn::Shape input_shape, std::size_t num_classes,
                          std::vector<nn::LayerPtr<T>> layers)
    : descriptor_(std::move(descriptor)),
      input_shape_(std::move(input_shape)),
      num_classes_(num_classes),
      layers_(std::move(layers)) {
    nn::Shape s = input_shape_;
    for (const auto& l : layers_) s = l->output_shape(s);
    if (nn::shape_size(s) != num_classes_)
        fail(Errc::invalid_argument, "model output " + nn::shape_str(s) + " does not produce " +
                                         std::to_string(num_classes_) + " logits");
}

template <typename T>
BasicModel<T>::BasicModel(const BasicModel& other)
    : descriptor_(other.descriptor_), input_shape_(other.input_shape_), num_classes_(other.num_classes_) {
    layers_.reserve(other.layers_.size());
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

template <typename T>
BasicModel<T>& BasicModel<T>::operator=(const BasicModel& other) {
    if (this != &other) {
        BasicModel copy(other);
        *this = std::move(copy);
    }
    return *this;
}

template <typename T>
std::string BasicModel<T>::architecture() const {
    std::string out = "input" + nn::shape_str(input_shape_);
    for (const auto& l : layers_) out += " > " + l->descriptor();
    return out;
}

template <typename T>
std::size_t BasicModel<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : params()) n += p->value.size();
    return n;
}

template <typename T>
nn::BasicTensor<T> BasicModel<T>::forward(const nn::BasicTensor<T>& x, Mode mode) {
    if (x.shape() != input_shape_)
        fail(Errc::invalid_argument,
             "model expects input " + nn::shape_str(input_shape_) + ", got " + nn::shape_str(x.shape()));
    nn::BasicTensor<T> h = x;
    for (auto& l : layers_) h = l->forward(h, mode);
    return h;
}

template <typename T>
nn::BasicTensor<T> BasicModel<T>::predict_logits(const nn::BasicTensor<T>& x) const {
    if (x.shape() != input_shape_)
        fail(Errc::invalid_argument,
             "model expects input " + nn::shape_str(input_shape_) + ", got " + nn::shape_str(x.shape()));
    nn::BasicTensor<T> h = x;
    for (const auto& l : layers_) h = l->infer(h);
    return h;
}

template <typename T>
void BasicModel<T>::backward(const nn::BasicTensor<T>& grad_logits) {
    nn::BasicTensor<T> g = grad_logits;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
}

template <typename T>
std::vector<nn::Param<T>*> BasicModel<T>::params() {
    std::vector<nn::Param<T>*> out;
    for (auto& l : layers_)
        for (auto* p : l->params()) out.push_back(p);
    return out;
}

template <typename T>
std::vector<const nn::Param<T>*> BasicModel<T>::params() const {
    std::vector<const nn::Param<T>*> out;
    for (const auto& l : layers_)
        for (auto* p : l->params()) out.push_back(p);
    return out;
}

template <typename T>
void BasicModel<T>::zero_grad() {
    for (auto* p : params()) p->grad.fill(T{0});
}

template <typename T>
std::vector<T> BasicModel<T>::flat_parameters() const {
    std::vector<T> out;
    out.reserve(parameter_count());
    for (const auto* p : params()) out.insert(out.end(), p->value.storage().begin(), p->value.storage().end());
    return out;
}

template <typename T>
void BasicModel<T>::set_flat_parameters(std::span<const T> values) {
    require(values.size() == parameter_count(), "parameter vector length " + std::to_string(values.size()) +
                                                    " does not match model parameter count " +
                                                    std::to_string(parameter_count()));
    std::size_t off = 0;
    for (auto* p : params()) {
        std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(off), p->value.size(), p->value.data());
        off += p->value.size();
    }
}

template <typename T>
StepOutcome<T> train_step_with_prediction(BasicModel<T>& model, const nn::BasicTensor<T>& x, std::size_t label,
                                          nn::Adam<T>& optimizer) {
    require(label < model.num_classes(), "train_step: label " + std::to_string(label) + " out of range for " +
                                             std::to_string(model.num_classes()) + " classes");
    model.zero_grad();
    const auto logits = model.forward(x, Mode::train);
    const auto loss = nn::scc_loss<T>(logits.values(), label);
    model.backward(nn::BasicTensor<T>(logits.shape(), loss.grad));
    auto params = model.params();
    optimizer.step(params);
    return {loss.loss, nn::argmax<T>(logits.values())};
}

template <typename T>
T train_step(BasicModel<T>& model, const nn::BasicTensor<T>& x, std::size_t label, nn::Adam<T>& optimizer) {
    return train_step_with_prediction(model, x, label, optimizer).loss;
}

template <typename T>
std::size_t predict_class(const BasicModel<T>& model, const nn::BasicTensor<T>& x) {
    const auto logits = model.predict_logits(x);
    const auto probs = nn::softmax<T>(logits.values());
    return nn::argmax<T>(probs);
}

#define KT_INSTANTIATE(T)                                                                                       \
    template class BasicModel<T>;                                                                               \
    template T train_step<T>(BasicModel<T>&, const nn::BasicTensor<T>&, std::size_t, nn::Adam<T>&);             \
    template StepOutcome<T> train_step_with_prediction<T>(BasicModel<T>&, const nn::BasicTensor<T>&, std::size_t, \
                                                          nn::Adam<T>&);                                        \
    template std::size_t predict_class<T>(const BasicModel<T>&, const nn::BasicTensor<T>&);

KT_INSTANTIATE(float)
KT_INSTANTIATE(double)
#undef KT_INSTANTIATE

}  // namespace kt::models
