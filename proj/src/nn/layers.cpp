#include "kt/nn/layers.hpp"

#include <algorithm>
#include <sstream>

#include "kt/nn/ops.hpp"

namespace kt::nn {

std::string shape_str(const Shape& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

namespace {

void require_hwc(const std::string& layer, const Shape& input) {
    if (input.size() != 3) fail(Errc::invalid_argument, layer + ": expected HWC input, got " + shape_str(input));
}

const char* padding_name(Padding p) { return p == Padding::valid ? "valid" : "same"; }

}  // namespace

// ---------------------------------------------------------------- Conv2D

template <typename T>
Conv2D<T>::Conv2D(std::string name, std::size_t in_channels, std::size_t filters, std::size_t kernel,
                  std::size_t stride, Padding padding, Rng& init_rng)
    : name_(std::move(name)),
      kernel_(kernel),
      stride_(stride),
      in_channels_(in_channels),
      filters_(filters),
      padding_(padding) {
    require(kernel >= 1 && stride >= 1 && in_channels >= 1 && filters >= 1, name_ + ": conv extents must be >= 1");
    const Shape kshape{kernel, kernel, in_channels, filters};
    kernels_ = {name_ + "/kernel", he_uniform_init<T>(kshape, kernel * kernel * in_channels, init_rng),
                BasicTensor<T>(kshape)};
    bias_ = {name_ + "/bias", BasicTensor<T>(Shape{filters}), BasicTensor<T>(Shape{filters})};
}

template <typename T>
Conv2D<T>::Conv2D(std::string name, BasicTensor<T> kernels, BasicTensor<T> bias, std::size_t stride, Padding padding)
    : name_(std::move(name)), stride_(stride), padding_(padding) {
    require(kernels.rank() == 4 && kernels.dim(0) == kernels.dim(1), name_ + ": kernels must be [k, k, cin, cout]");
    require(bias.rank() == 1 && bias.dim(0) == kernels.dim(3), name_ + ": bias length must equal filter count");
    require(stride >= 1, name_ + ": stride must be >= 1");
    kernel_ = kernels.dim(0);
    in_channels_ = kernels.dim(2);
    filters_ = kernels.dim(3);
    kernels_ = {name_ + "/kernel", kernels, BasicTensor<T>(kernels.shape())};
    bias_ = {name_ + "/bias", bias, BasicTensor<T>(bias.shape())};
}

template <typename T>
std::string Conv2D<T>::descriptor() const {
    std::ostringstream os;
    os << "conv(" << filters_ << "," << kernel_ << "x" << kernel_ << ",s" << stride_ << "," << padding_name(padding_)
       << ")";
    return os.str();
}

template <typename T>
typename Conv2D<T>::Geometry Conv2D<T>::geometry(const Shape& input) const {
    require_hwc(name_, input);
    if (input[2] != in_channels_)
        fail(Errc::invalid_argument, name_ + ": expected " + std::to_string(in_channels_) + " input channels, got " +
                                         std::to_string(input[2]));
    Geometry g{};
    if (padding_ == Padding::valid) {
        if (input[0] < kernel_ || input[1] < kernel_)
            fail(Errc::invalid_argument,
                 name_ + ": kernel " + std::to_string(kernel_) + " larger than input " + shape_str(input));
        g.out_h = (input[0] - kernel_) / stride_ + 1;
        g.out_w = (input[1] - kernel_) / stride_ + 1;
    } else {
        g.out_h = (input[0] + stride_ - 1) / stride_;
        g.out_w = (input[1] + stride_ - 1) / stride_;
        const auto pad_h = std::max<long>(0, static_cast<long>((g.out_h - 1) * stride_ + kernel_) - static_cast<long>(input[0]));
        const auto pad_w = std::max<long>(0, static_cast<long>((g.out_w - 1) * stride_ + kernel_) - static_cast<long>(input[1]));
        g.pad_top = static_cast<std::size_t>(pad_h / 2);
        g.pad_left = static_cast<std::size_t>(pad_w / 2);
    }
    return g;
}

template <typename T>
Shape Conv2D<T>::output_shape(const Shape& input) const {
    const auto g = geometry(input);
    return {g.out_h, g.out_w, filters_};
}

template <typename T>
BasicTensor<T> Conv2D<T>::forward(const BasicTensor<T>& x, Mode) {
    input_ = x;
    return infer(x);
}

template <typename T>
BasicTensor<T> Conv2D<T>::infer(const BasicTensor<T>& x) const {
    const auto g = geometry(x.shape());
    const std::size_t in_h = x.dim(0), in_w = x.dim(1), c_in = in_channels_, f_out = filters_;
    BasicTensor<T> out(Shape{g.out_h, g.out_w, f_out});
    const T* xin = x.data();
    const T* w = kernels_.value.data();
    const T* b = bias_.value.data();
    T* o = out.data();
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            T* orow = o + (oy * g.out_w + ox) * f_out;
            std::copy(b, b + f_out, orow);
            for (std::size_t ky = 0; ky < kernel_; ++ky) {
                const long iy = static_cast<long>(oy * stride_ + ky) - static_cast<long>(g.pad_top);
                if (iy < 0 || iy >= static_cast<long>(in_h)) continue;
                for (std::size_t kx = 0; kx < kernel_; ++kx) {
                    const long ix = static_cast<long>(ox * stride_ + kx) - static_cast<long>(g.pad_left);
                    if (ix < 0 || ix >= static_cast<long>(in_w)) continue;
                    const T* px = xin + (static_cast<std::size_t>(iy) * in_w + static_cast<std::size_t>(ix)) * c_in;
                    const T* wk = w + (ky * kernel_ + kx) * c_in * f_out;
                    for (std::size_t c = 0; c < c_in; ++c) {
                        const T xv = px[c];
                        const T* wrow = wk + c * f_out;
                        for (std::size_t f = 0; f < f_out; ++f) orow[f] += xv * wrow[f];
                    }
                }
            }
        }
    }
    return out;
}

template <typename T>
BasicTensor<T> Conv2D<T>::backward(const BasicTensor<T>& grad_out) {
    require(!input_.empty(), name_ + ": backward called before forward");
    const auto g = geometry(input_.shape());
    require(grad_out.shape() == Shape({g.out_h, g.out_w, filters_}), name_ + ": gradient shape mismatch");
    const std::size_t in_h = input_.dim(0), in_w = input_.dim(1), c_in = in_channels_, f_out = filters_;
    BasicTensor<T> grad_in(input_.shape());
    const T* xin = input_.data();
    const T* w = kernels_.value.data();
    T* gw = kernels_.grad.data();
    T* gb = bias_.grad.data();
    T* gi = grad_in.data();
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const T* go = grad_out.data() + (oy * g.out_w + ox) * f_out;
            for (std::size_t f = 0; f < f_out; ++f) gb[f] += go[f];
            for (std::size_t ky = 0; ky < kernel_; ++ky) {
                const long iy = static_cast<long>(oy * stride_ + ky) - static_cast<long>(g.pad_top);
                if (iy < 0 || iy >= static_cast<long>(in_h)) continue;
                for (std::size_t kx = 0; kx < kernel_; ++kx) {
                    const long ix = static_cast<long>(ox * stride_ + kx) - static_cast<long>(g.pad_left);
                    if (ix < 0 || ix >= static_cast<long>(in_w)) continue;
                    const std::size_t pix = (static_cast<std::size_t>(iy) * in_w + static_cast<std::size_t>(ix)) * c_in;
                    const std::size_t koff = (ky * kernel_ + kx) * c_in * f_out;
                    for (std::size_t c = 0; c < c_in; ++c) {
                        const T xv = xin[pix + c];
                        const T* wrow = w + koff + c * f_out;
                        T* gwrow = gw + koff + c * f_out;
                        T acc = 0;
                        for (std::size_t f = 0; f < f_out; ++f) {
                            gwrow[f] += xv * go[f];
                            acc += wrow[f] * go[f];
                        }
                        gi[pix + c] += acc;
                    }
                }
            }
        }
    }
    return grad_in;
}

// ---------------------------------------------------------------- MaxPool2D

template <typename T>
MaxPool2D<T>::MaxPool2D(std::string name, std::size_t pool, std::size_t stride)
    : name_(std::move(name)), pool_(pool), stride_(stride) {
    require(pool >= 1 && stride >= 1, name_ + ": pool size and stride must be >= 1");
}

template <typename T>
std::string MaxPool2D<T>::descriptor() const {
    return "maxpool(" + std::to_string(pool_) + "x" + std::to_string(pool_) + ",s" + std::to_string(stride_) + ")";
}

template <typename T>
Shape MaxPool2D<T>::output_shape(const Shape& input) const {
    require_hwc(name_, input);
    if (input[0] < pool_ || input[1] < pool_)
        fail(Errc::invalid_argument, name_ + ": pool " + std::to_string(pool_) + " larger than input " + shape_str(input));
    return {(input[0] - pool_) / stride_ + 1, (input[1] - pool_) / stride_ + 1, input[2]};
}

template <typename T>
BasicTensor<T> MaxPool2D<T>::forward(const BasicTensor<T>& x, Mode) {
    const Shape os = output_shape(x.shape());
    input_shape_ = x.shape();
    const std::size_t in_w = x.dim(1), ch = x.dim(2);
    BasicTensor<T> out(os);
    argmax_.assign(out.size(), 0);
    for (std::size_t oy = 0; oy < os[0]; ++oy) {
        for (std::size_t ox = 0; ox < os[1]; ++ox) {
            for (std::size_t c = 0; c < ch; ++c) {
                std::size_t best = ((oy * stride_) * in_w + ox * stride_) * ch + c;
                for (std::size_t py = 0; py < pool_; ++py) {
                    for (std::size_t px = 0; px < pool_; ++px) {
                        const std::size_t idx = ((oy * stride_ + py) * in_w + ox * stride_ + px) * ch + c;
                        if (x[idx] > x[best]) best = idx;
                    }
                }
                const std::size_t o = (oy * os[1] + ox) * ch + c;
                out[o] = x[best];
                argmax_[o] = best;
            }
        }
    }
    return out;
}

template <typename T>
BasicTensor<T> MaxPool2D<T>::infer(const BasicTensor<T>& x) const {
    const Shape os = output_shape(x.shape());
    const std::size_t in_w = x.dim(1), ch = x.dim(2);
    BasicTensor<T> out(os);
    for (std::size_t oy = 0; oy < os[0]; ++oy)
        for (std::size_t ox = 0; ox < os[1]; ++ox)
            for (std::size_t c = 0; c < ch; ++c) {
                T best = x[((oy * stride_) * in_w + ox * stride_) * ch + c];
                for (std::size_t py = 0; py < pool_; ++py)
                    for (std::size_t px = 0; px < pool_; ++px)
                        best = std::max(best, x[((oy * stride_ + py) * in_w + ox * stride_ + px) * ch + c]);
                out[(oy * os[1] + ox) * ch + c] = best;
            }
    return out;
}

template <typename T>
BasicTensor<T> MaxPool2D<T>::backward(const BasicTensor<T>& grad_out) {
    require(!input_shape_.empty() && grad_out.size() == argmax_.size(), name_ + ": gradient shape mismatch");
    BasicTensor<T> grad_in(input_shape_);
    for (std::size_t o = 0; o < argmax_.size(); ++o) grad_in[argmax_[o]] += grad_out[o];
    return grad_in;
}

// ---------------------------------------------------------------- Dropout

template <typename T>
Dropout<T>::Dropout(std::string name, double rate, std::uint64_t seed)
    : name_(std::move(name)), rate_(rate), seed_(seed), rng_(seed) {
    require(rate >= 0.0 && rate < 1.0, name_ + ": dropout rate must lie in [0, 1)");
}

template <typename T>
std::string Dropout<T>::descriptor() const {
    std::ostringstream os;
    os << "dropout(" << rate_ << ",seed=" << seed_ << ")";
    return os.str();
}

template <typename T>
BasicTensor<T> Dropout<T>::forward(const BasicTensor<T>& x, Mode mode) {
    if (mode == Mode::infer || rate_ == 0.0) {
        mask_.clear();
        return x;
    }
    const T scale = static_cast<T>(1.0 / (1.0 - rate_));
    mask_.resize(x.size());
    BasicTensor<T> y = x;
    for (std::size_t i = 0; i < y.size(); ++i) {
        mask_[i] = rng_.uniform01() < rate_ ? T{0} : scale;
        y[i] *= mask_[i];
    }
    return y;
}

template <typename T>
BasicTensor<T> Dropout<T>::infer(const BasicTensor<T>& x) const {
    return x;
}

template <typename T>
BasicTensor<T> Dropout<T>::backward(const BasicTensor<T>& grad_out) {
    if (mask_.empty()) return grad_out;
    require(mask_.size() == grad_out.size(), name_ + ": gradient shape mismatch");
    BasicTensor<T> g = grad_out;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= mask_[i];
    return g;
}

// ---------------------------------------------------------------- GlobalAvgPool

template <typename T>
Shape GlobalAvgPool<T>::output_shape(const Shape& input) const {
    require_hwc(name_, input);
    return {input[2]};
}

template <typename T>
BasicTensor<T> GlobalAvgPool<T>::forward(const BasicTensor<T>& x, Mode) {
    input_shape_ = x.shape();
    return infer(x);
}

template <typename T>
BasicTensor<T> GlobalAvgPool<T>::infer(const BasicTensor<T>& x) const {
    const Shape os = output_shape(x.shape());
    const std::size_t spatial = x.dim(0) * x.dim(1), ch = x.dim(2);
    BasicTensor<T> out(os);
    for (std::size_t p = 0; p < spatial; ++p)
        for (std::size_t c = 0; c < ch; ++c) out[c] += x[p * ch + c];
    for (auto& v : out.values()) v /= static_cast<T>(spatial);
    return out;
}

template <typename T>
BasicTensor<T> GlobalAvgPool<T>::backward(const BasicTensor<T>& grad_out) {
    require(!input_shape_.empty() && grad_out.size() == input_shape_[2], name_ + ": gradient shape mismatch");
    const std::size_t spatial = input_shape_[0] * input_shape_[1], ch = input_shape_[2];
    BasicTensor<T> grad_in(input_shape_);
    const T inv = T{1} / static_cast<T>(spatial);
    for (std::size_t p = 0; p < spatial; ++p)
        for (std::size_t c = 0; c < ch; ++c) grad_in[p * ch + c] = grad_out[c] * inv;
    return grad_in;
}

// ---------------------------------------------------------------- Mish

template <typename T>
BasicTensor<T> Mish<T>::forward(const BasicTensor<T>& x, Mode) {
    input_ = x;
    return mish(x);
}

template <typename T>
BasicTensor<T> Mish<T>::infer(const BasicTensor<T>& x) const {
    return mish(x);
}

template <typename T>
BasicTensor<T> Mish<T>::backward(const BasicTensor<T>& grad_out) {
    return mish_backward(input_, grad_out);
}

// ---------------------------------------------------------------- Dense

template <typename T>
Dense<T>::Dense(std::string name, std::size_t in_features, std::size_t out_features, Rng& init_rng)
    : name_(std::move(name)), in_(in_features), out_(out_features) {
    require(in_features >= 1 && out_features >= 1, name_ + ": dense extents must be >= 1");
    const Shape wshape{in_features, out_features};
    weights_ = {name_ + "/kernel", he_uniform_init<T>(wshape, in_features, init_rng), BasicTensor<T>(wshape)};
    bias_ = {name_ + "/bias", BasicTensor<T>(Shape{out_features}), BasicTensor<T>(Shape{out_features})};
}

template <typename T>
Dense<T>::Dense(std::string name, BasicTensor<T> weights, BasicTensor<T> bias) : name_(std::move(name)) {
    require(weights.rank() == 2 && bias.rank() == 1 && bias.dim(0) == weights.dim(1),
            name_ + ": weights must be [in, out] and bias [out]");
    in_ = weights.dim(0);
    out_ = weights.dim(1);
    weights_ = {name_ + "/kernel", weights, BasicTensor<T>(weights.shape())};
    bias_ = {name_ + "/bias", bias, BasicTensor<T>(bias.shape())};
}

template <typename T>
std::string Dense<T>::descriptor() const {
    return "dense(" + std::to_string(out_) + ")";
}

template <typename T>
Shape Dense<T>::output_shape(const Shape& input) const {
    if (shape_size(input) != in_)
        fail(Errc::invalid_argument,
             name_ + ": expected " + std::to_string(in_) + " input features, got " + shape_str(input));
    return {out_};
}

template <typename T>
BasicTensor<T> Dense<T>::forward(const BasicTensor<T>& x, Mode) {
    input_ = x;
    return infer(x);
}

template <typename T>
BasicTensor<T> Dense<T>::infer(const BasicTensor<T>& x) const {
    output_shape(x.shape());
    BasicTensor<T> out(Shape{out_});
    std::copy(bias_.value.data(), bias_.value.data() + out_, out.data());
    const T* w = weights_.value.data();
    for (std::size_t i = 0; i < in_; ++i) {
        const T xv = x[i];
        const T* wrow = w + i * out_;
        for (std::size_t j = 0; j < out_; ++j) out[j] += xv * wrow[j];
    }
    return out;
}

template <typename T>
BasicTensor<T> Dense<T>::backward(const BasicTensor<T>& grad_out) {
    require(!input_.empty() && grad_out.size() == out_, name_ + ": gradient shape mismatch");
    BasicTensor<T> grad_in(input_.shape());
    const T* w = weights_.value.data();
    T* gw = weights_.grad.data();
    for (std::size_t j = 0; j < out_; ++j) bias_.grad[j] += grad_out[j];
    for (std::size_t i = 0; i < in_; ++i) {
        const T xv = input_[i];
        const T* wrow = w + i * out_;
        T* gwrow = gw + i * out_;
        T acc = 0;
        for (std::size_t j = 0; j < out_; ++j) {
            gwrow[j] += xv * grad_out[j];
            acc += wrow[j] * grad_out[j];
        }
        grad_in[i] = acc;
    }
    return grad_in;
}

// ---------------------------------------------------------------- FireModule

template <typename T>
FireModule<T>::FireModule(std::string name, std::size_t in_channels, std::size_t squeeze, std::size_t expand,
                          Rng& init_rng)
    : name_(name),
      in_channels_(in_channels),
      squeeze_(squeeze),
      expand_(expand),
      squeeze_conv_(name + "/squeeze1x1", in_channels, squeeze, 1, 1, Padding::valid, init_rng),
      expand1_conv_(name + "/expand1x1", squeeze, expand, 1, 1, Padding::valid, init_rng),
      expand3_conv_(name + "/expand3x3", squeeze, expand, 3, 1, Padding::same, init_rng),
      squeeze_act_(name + "/squeeze_mish"),
      expand1_act_(name + "/expand1x1_mish"),
      expand3_act_(name + "/expand3x3_mish") {}

template <typename T>
std::string FireModule<T>::descriptor() const {
    return "fire(" + std::to_string(squeeze_) + "," + std::to_string(expand_) + ")";
}

template <typename T>
Shape FireModule<T>::output_shape(const Shape& input) const {
    const Shape s = squeeze_conv_.output_shape(input);
    const Shape e = expand3_conv_.output_shape(s);
    return {e[0], e[1], 2 * expand_};
}

namespace {

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    const std::size_t ca = a.dim(2), cb = b.dim(2), spatial = a.dim(0) * a.dim(1);
    BasicTensor<T> out(Shape{a.dim(0), a.dim(1), ca + cb});
    for (std::size_t p = 0; p < spatial; ++p) {
        std::copy_n(a.data() + p * ca, ca, out.data() + p * (ca + cb));
        std::copy_n(b.data() + p * cb, cb, out.data() + p * (ca + cb) + ca);
    }
    return out;
}

}  // namespace

template <typename T>
BasicTensor<T> FireModule<T>::forward(const BasicTensor<T>& x, Mode mode) {
    output_shape(x.shape());
    const auto s = squeeze_act_.forward(squeeze_conv_.forward(x, mode), mode);
    return concat_channels(expand1_act_.forward(expand1_conv_.forward(s, mode), mode),
                           expand3_act_.forward(expand3_conv_.forward(s, mode), mode));
}

template <typename T>
BasicTensor<T> FireModule<T>::infer(const BasicTensor<T>& x) const {
    output_shape(x.shape());
    const auto s = squeeze_act_.infer(squeeze_conv_.infer(x));
    return concat_channels(expand1_act_.infer(expand1_conv_.infer(s)), expand3_act_.infer(expand3_conv_.infer(s)));
}

template <typename T>
BasicTensor<T> FireModule<T>::backward(const BasicTensor<T>& grad_out) {
    require(grad_out.rank() == 3 && grad_out.dim(2) == 2 * expand_, name_ + ": gradient shape mismatch");
    const std::size_t spatial = grad_out.dim(0) * grad_out.dim(1);
    const Shape half{grad_out.dim(0), grad_out.dim(1), expand_};
    BasicTensor<T> g1(half), g3(half);
    for (std::size_t p = 0; p < spatial; ++p) {
        std::copy_n(grad_out.data() + p * 2 * expand_, expand_, g1.data() + p * expand_);
        std::copy_n(grad_out.data() + p * 2 * expand_ + expand_, expand_, g3.data() + p * expand_);
    }
    auto gs = expand1_conv_.backward(expand1_act_.backward(g1));
    const auto gs3 = expand3_conv_.backward(expand3_act_.backward(g3));
    for (std::size_t i = 0; i < gs.size(); ++i) gs[i] += gs3[i];
    return squeeze_conv_.backward(squeeze_act_.backward(gs));
}

template <typename T>
std::vector<Param<T>*> FireModule<T>::params() {
    std::vector<Param<T>*> out;
    for (Layer<T>* l : std::initializer_list<Layer<T>*>{&squeeze_conv_, &expand1_conv_, &expand3_conv_})
        for (auto* p : l->params()) out.push_back(p);
    return out;
}

#define KT_INSTANTIATE(T)               \
    template class Conv2D<T>;           \
    template class MaxPool2D<T>;        \
    template class Dropout<T>;          \
    template class GlobalAvgPool<T>;    \
    template class Mish<T>;             \
    template class Dense<T>;            \
    template class FireModule<T>;

KT_INSTANTIATE(float)
KT_INSTANTIATE(double)
#undef KT_INSTANTIATE

}  // namespace kt::nn
