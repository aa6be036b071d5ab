#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "kt/nn/rng.hpp"
#include "kt/nn/tensor.hpp"

namespace kt::nn {

enum class Mode { train, infer };

enum class Padding { valid, same };

template <typename T>
struct Param {
    std::string name;
    BasicTensor<T> value;
    BasicTensor<T> grad;
};

/// One node of a sequential network. forward() caches what backward() needs;
/// backward() accumulates into parameter gradients and returns dL/dinput.
/// Layers run on one example at a time (images are HWC, no batch axis).
template <typename T>
class Layer {
public:
    virtual ~Layer() = default;

    virtual std::string name() const = 0;
    /// Architecture fragment used for descriptors and hashing; excludes weights.
    virtual std::string descriptor() const = 0;
    /// Throws invalid-argument naming this layer when the input cannot be processed.
    virtual Shape output_shape(const Shape& input) const = 0;

    virtual BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) = 0;
    /// Infer-mode forward without touching caches; safe for concurrent callers.
    virtual BasicTensor<T> infer(const BasicTensor<T>& x) const = 0;
    virtual BasicTensor<T> backward(const BasicTensor<T>& grad_out) = 0;

    virtual std::vector<Param<T>*> params() { return {}; }
    virtual std::unique_ptr<Layer> clone() const = 0;
};

template <typename T>
using LayerPtr = std::unique_ptr<Layer<T>>;

template <typename T>
class Conv2D final : public Layer<T> {
public:
    /// Kernel layout [kh, kw, in_channels, filters]; kernels he_uniform, bias zero.
    Conv2D(std::string name, std::size_t in_channels, std::size_t filters, std::size_t kernel, std::size_t stride,
           Padding padding, Rng& init_rng);
    Conv2D(std::string name, BasicTensor<T> kernels, BasicTensor<T> bias, std::size_t stride, Padding padding);

    std::string name() const override { return name_; }
    std::string descriptor() const override;
    Shape output_shape(const Shape& input) const override;
    BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
    BasicTensor<T> infer(const BasicTensor<T>& x) const override;
    BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;
    std::vector<Param<T>*> params() override { return {&kernels_, &bias_}; }
    LayerPtr<T> clone() const override { return std::make_unique<Conv2D>(*this); }

    const Param<T>& kernels() const { return kernels_; }
    const Param<T>& bias() const { return bias_; }

private:
    struct Geometry {
        std::size_t out_h, out_w, pad_top, pad_left;
    };
    Geometry geometry(const Shape& input) const;

    std::string name_;
    std::size_t kernel_, stride_, in_channels_, filters_;
    Padding padding_;
    Param<T> kernels_, bias_;
    BasicTensor<T> input_;
};

template <typename T>
class MaxPool2D final : public Layer<T> {
public:
    MaxPool2D(std::string name, std::size_t pool, std::size_t stride);

    std::string name() const override { return name_; }
    std::string descriptor() const override;
    Shape output_shape(const Shape& input) const override;
    BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
    BasicTensor<T> infer(const BasicTensor<T>& x) const override;
    BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;
    LayerPtr<T> clone() const override { return std::make_unique<MaxPool2D>(*this); }

private:
    std::string name_;
    std::size_t pool_, stride_;
    Shape input_shape_;
    std::vector<std::size_t> argmax_;  // flat input index per output element
};

/// Inverted dropout with its own generator, so masks are reproducible from the
/// layer seed and a copied layer draws the same masks as the original.
template <typename T>
class Dropout final : public Layer<T> {
public:
    Dropout(std::string name, double rate, std::uint64_t seed);

    std::string name() const override { return name_; }
    std::string descriptor() const override;
    Shape output_shape(const Shape& input) const override { return input; }
    BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
    BasicTensor<T> infer(const BasicTensor<T>& x) const override;
    BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;
    LayerPtr<T> clone() const override { return std::make_unique<Dropout>(*this); }

    double rate() const { return rate_; }
    std::uint64_t seed() const { return seed_; }
    const Rng& rng() const { return rng_; }

private:
    std::string name_;
    double rate_;
    std::uint64_t seed_;
    Rng rng_;
    std::vector<T> mask_;  // scale per element; empty after an infer pass
};

template <typename T>
class GlobalAvgPool final : public Layer<T> {
public:
    explicit GlobalAvgPool(std::string name) : name_(std::move(name)) {}

    std::string name() const override { return name_; }
    std::string descriptor() const override { return "gap"; }
    Shape output_shape(const Shape& input) const override;
    BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
    BasicTensor<T> infer(const BasicTensor<T>& x) const override;
    BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;
    LayerPtr<T> clone() const override { return std::make_unique<GlobalAvgPool>(*this); }

private:
    std::string name_;
    Shape input_shape_;
};

template <typename T>
class Mish final : public Layer<T> {
public:
    explicit Mish(std::string name) : name_(std::move(name)) {}

    std::string name() const override { return name_; }
    std::string descriptor() const override { return "mish"; }
    Shape output_shape(const Shape& input) const override { return input; }
    BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
    BasicTensor<T> infer(const BasicTensor<T>& x) const override;
    BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;
    LayerPtr<T> clone() const override { return std::make_unique<Mish>(*this); }

private:
    std::string name_;
    BasicTensor<T> input_;
};

/// Fully connected layer over the flattened input. Weights [in, out].
template <typename T>
class Dense final : public Layer<T> {
public:
    Dense(std::string name, std::size_t in_features, std::size_t out_features, Rng& init_rng);
    Dense(std::string name, BasicTensor<T> weights, BasicTensor<T> bias);

    std::string name() const override { return name_; }
    std::string descriptor() const override;
    Shape output_shape(const Shape& input) const override;
    BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
    BasicTensor<T> infer(const BasicTensor<T>& x) const override;
    BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;
    std::vector<Param<T>*> params() override { return {&weights_, &bias_}; }
    LayerPtr<T> clone() const override { return std::make_unique<Dense>(*this); }

private:
    std::string name_;
    std::size_t in_, out_;
    Param<T> weights_, bias_;
    BasicTensor<T> input_;
};

/// Squeeze 1x1 conv -> {expand 1x1, expand 3x3 (same padding)} concatenated on
/// channels, every conv followed by mish. Mish is elementwise, so activating
/// each expand path equals activating the concatenation.
template <typename T>
class FireModule final : public Layer<T> {
public:
    FireModule(std::string name, std::size_t in_channels, std::size_t squeeze, std::size_t expand, Rng& init_rng);
    FireModule(const FireModule&) = default;
    FireModule& operator=(const FireModule&) = delete;

    std::string name() const override { return name_; }
    std::string descriptor() const override;
    Shape output_shape(const Shape& input) const override;
    BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) override;
    BasicTensor<T> infer(const BasicTensor<T>& x) const override;
    BasicTensor<T> backward(const BasicTensor<T>& grad_out) override;
    std::vector<Param<T>*> params() override;
    LayerPtr<T> clone() const override { return std::make_unique<FireModule>(*this); }

    std::size_t output_channels() const { return 2 * expand_; }

private:
    std::string name_;
    std::size_t in_channels_, squeeze_, expand_;
    Conv2D<T> squeeze_conv_, expand1_conv_, expand3_conv_;
    Mish<T> squeeze_act_, expand1_act_, expand3_act_;
};

}  // namespace kt::nn
