#include "kt/models/builders.hpp"

#include <charconv>
#include <sstream>
#include <vector>

namespace kt::models {

namespace {

std::size_t conv_params(std::size_t k, std::size_t cin, std::size_t cout) { return k * k * cin * cout + cout; }

std::size_t fire_params(std::size_t cin, FireModuleConfig f) {
    return conv_params(1, cin, f.squeeze_fm) + conv_params(1, f.squeeze_fm, f.expand_fm) +
           conv_params(3, f.squeeze_fm, f.expand_fm);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) out.push_back(cur);
    return out;
}

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        fail(Errc::architecture_mismatch, "cannot parse " + what + " from '" + s + "'");
    return v;
}

// Appends a layer after checking it accepts the running shape; errors name the layer.
template <typename T>
void push_checked(std::vector<nn::LayerPtr<T>>& layers, nn::Shape& shape, nn::LayerPtr<T> layer,
                  const std::string& model_name) {
    try {
        shape = layer->output_shape(shape);
    } catch (const Error& e) {
        fail(Errc::invalid_argument, model_name + ": input too small at layer " + layer->name() + " (" + e.what() + ")");
    }
    layers.push_back(std::move(layer));
}

}  // namespace

std::string format_shape(const nn::Shape& shape) {
    std::string s;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s;
}

nn::Shape parse_shape(const std::string& text) {
    nn::Shape shape;
    for (const auto& part : split(text, 'x')) shape.push_back(parse_u64(part, "shape extent"));
    if (shape.empty()) fail(Errc::architecture_mismatch, "empty shape '" + text + "'");
    return shape;
}

std::size_t squeezenet_parameter_count(std::size_t input_channels, std::size_t num_classes) {
    using C = SqueezeNetConfig;
    return conv_params(C::conv1_kernel, input_channels, C::conv1_filters) + fire_params(C::conv1_filters, C::fire1) +
           fire_params(C::fire1.output_channels(), C::fire2) + fire_params(C::fire2.output_channels(), C::fire3) +
           fire_params(C::fire3.output_channels(), C::fire4) + conv_params(1, C::fire4.output_channels(), num_classes);
}

template <typename T>
BasicModel<T> build_simplified_squeezenet_seeded(const nn::Shape& input_shape, std::size_t num_classes,
                                                 std::uint64_t seed) {
    using C = SqueezeNetConfig;
    const std::string model_name = "simplified squeezenet";
    require(input_shape.size() == 3, model_name + ": input shape must be (H, W, C)");
    require(num_classes >= 1, model_name + ": num_classes must be >= 1");
    nn::Rng init(seed);
    const std::uint64_t dropout_seed = init.fork_seed();

    std::vector<nn::LayerPtr<T>> layers;
    nn::Shape shape = input_shape;
    auto add = [&](nn::LayerPtr<T> l) { push_checked(layers, shape, std::move(l), model_name); };

    add(std::make_unique<nn::Conv2D<T>>("conv1", input_shape[2], C::conv1_filters, C::conv1_kernel, C::conv1_stride,
                                        nn::Padding::valid, init));
    add(std::make_unique<nn::Mish<T>>("conv1_mish"));
    add(std::make_unique<nn::MaxPool2D<T>>("maxpool1", C::pool_size, C::pool_stride));
    add(std::make_unique<nn::FireModule<T>>("fire1", shape[2], C::fire1.squeeze_fm, C::fire1.expand_fm, init));
    add(std::make_unique<nn::FireModule<T>>("fire2", shape[2], C::fire2.squeeze_fm, C::fire2.expand_fm, init));
    add(std::make_unique<nn::FireModule<T>>("fire3", shape[2], C::fire3.squeeze_fm, C::fire3.expand_fm, init));
    add(std::make_unique<nn::MaxPool2D<T>>("maxpool3", C::pool_size, C::pool_stride));
    add(std::make_unique<nn::FireModule<T>>("fire4", shape[2], C::fire4.squeeze_fm, C::fire4.expand_fm, init));
    add(std::make_unique<nn::Dropout<T>>("fire4_dropout", C::dropout_rate, dropout_seed));
    add(std::make_unique<nn::Conv2D<T>>("conv5", shape[2], num_classes, 1, 1, nn::Padding::valid, init));
    add(std::make_unique<nn::GlobalAvgPool<T>>("gap"));

    std::string desc = "squeezenet:" + format_shape(input_shape) + ":" + std::to_string(num_classes) +
                       ":seed=" + std::to_string(seed);
    return BasicModel<T>(std::move(desc), input_shape, num_classes, std::move(layers));
}

template <typename T>
BasicModel<T> build_simplified_squeezenet(const nn::Shape& input_shape, std::size_t num_classes, nn::Rng& rng) {
    return build_simplified_squeezenet_seeded<T>(input_shape, num_classes, rng.next_u64());
}

template <typename T>
BasicModel<T> build_mlp_seeded(const nn::Shape& input_shape, std::size_t hidden, std::size_t num_classes,
                               std::uint64_t seed) {
    require(!input_shape.empty() && nn::shape_size(input_shape) >= 1, "mlp: input dimension must be >= 1");
    require(hidden >= 1, "mlp: hidden width must be >= 1");
    require(num_classes >= 1, "mlp: num_classes must be >= 1");
    nn::Rng init(seed);
    const std::size_t in = nn::shape_size(input_shape);
    std::vector<nn::LayerPtr<T>> layers;
    layers.push_back(std::make_unique<nn::Dense<T>>("dense1", in, hidden, init));
    layers.push_back(std::make_unique<nn::Mish<T>>("dense1_mish"));
    layers.push_back(std::make_unique<nn::Dense<T>>("dense2", hidden, num_classes, init));
    std::string desc = "mlp:" + format_shape(input_shape) + ":" + std::to_string(hidden) + ":" +
                       std::to_string(num_classes) + ":seed=" + std::to_string(seed);
    return BasicModel<T>(std::move(desc), input_shape, num_classes, std::move(layers));
}

template <typename T>
BasicModel<T> build_mlp(const nn::Shape& input_shape, std::size_t hidden, std::size_t num_classes, nn::Rng& rng) {
    return build_mlp_seeded<T>(input_shape, hidden, num_classes, rng.next_u64());
}

template <typename T>
BasicModel<T> build_from_descriptor(const std::string& descriptor) {
    const auto parts = split(descriptor, ':');
    auto seed_of = [&](const std::string& field) {
        if (field.rfind("seed=", 0) != 0) fail(Errc::architecture_mismatch, "missing seed in '" + descriptor + "'");
        return parse_u64(field.substr(5), "seed");
    };
    try {
        if (parts.size() == 4 && parts[0] == "squeezenet")
            return build_simplified_squeezenet_seeded<T>(parse_shape(parts[1]), parse_u64(parts[2], "classes"),
                                                         seed_of(parts[3]));
        if (parts.size() == 5 && parts[0] == "mlp")
            return build_mlp_seeded<T>(parse_shape(parts[1]), parse_u64(parts[2], "hidden"),
                                       parse_u64(parts[3], "classes"), seed_of(parts[4]));
    } catch (const Error& e) {
        if (e.code() == Errc::architecture_mismatch) throw;
        fail(Errc::architecture_mismatch, "descriptor '" + descriptor + "' is not buildable: " + e.what());
    }
    fail(Errc::architecture_mismatch, "unknown architecture descriptor '" + descriptor + "'");
}

#define KT_INSTANTIATE(T)                                                                                      \
    template BasicModel<T> build_simplified_squeezenet<T>(const nn::Shape&, std::size_t, nn::Rng&);            \
    template BasicModel<T> build_simplified_squeezenet_seeded<T>(const nn::Shape&, std::size_t, std::uint64_t); \
    template BasicModel<T> build_mlp<T>(const nn::Shape&, std::size_t, std::size_t, nn::Rng&);                 \
    template BasicModel<T> build_mlp_seeded<T>(const nn::Shape&, std::size_t, std::size_t, std::uint64_t);     \
    template BasicModel<T> build_from_descriptor<T>(const std::string&);

KT_INSTANTIATE(float)
KT_INSTANTIATE(double)
#undef KT_INSTANTIATE

}  // namespace kt::models
