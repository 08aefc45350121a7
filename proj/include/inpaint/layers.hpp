#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "inpaint/ops.hpp"
#include "inpaint/tensor.hpp"

namespace inpaint {

template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
};

// Flat registry of learnable parameters and non-learnable state buffers
// (spectral-norm vectors). Names are dotted paths, unique per store; the
// checkpoint layer merges stores under per-network prefixes.
template <typename T>
class ParamStore {
  public:
    Tensor<T> parameter(const std::string& name, Tensor<T> init) {
        check_unique(name);
        init.set_requires_grad(true);
        params_.push_back({name, init});
        return init;
    }

    Tensor<T> buffer(const std::string& name, Tensor<T> init) {
        check_unique(name);
        buffers_.push_back({name, init});
        return init;
    }

    std::vector<Parameter<T>>& parameters() { return params_; }
    const std::vector<Parameter<T>>& parameters() const { return params_; }
    std::vector<Parameter<T>>& buffers() { return buffers_; }
    const std::vector<Parameter<T>>& buffers() const { return buffers_; }

    Tensor<T> find(const std::string& name) const {
        for (const auto& p : params_)
            if (p.name == name) return p.value;
        for (const auto& b : buffers_)
            if (b.name == name) return b.value;
        throw Error("no parameter named '" + name + "'");
    }

    void zero_grads() {
        for (auto& p : params_) p.value.zero_grad();
    }

  private:
    void check_unique(const std::string& name) {
        for (const auto& p : params_)
            require(p.name != name, "duplicate parameter name '", name, "'");
        for (const auto& b : buffers_)
            require(b.name != name, "duplicate buffer name '", name, "'");
    }

    std::vector<Parameter<T>> params_;
    std::vector<Parameter<T>> buffers_;
};

// Kaiming-uniform fan-in init with the leaky-relu(0.2) gain used throughout
// the network.
template <typename T>
Tensor<T> kaiming_conv_init(int64_t out_ch, int64_t in_ch, int64_t k, Rng& rng) {
    const double fan_in = static_cast<double>(in_ch * k * k);
    const double bound = std::sqrt(6.0 / ((1.0 + 0.2 * 0.2) * fan_in));
    return Tensor<T>::uniform({out_ch, in_ch, k, k}, -bound, bound, rng);
}

template <typename T>
class Conv2dLayer {
  public:
    Conv2dLayer() = default;
    Conv2dLayer(ParamStore<T>& store, const std::string& name, int64_t in_ch, int64_t out_ch,
                int64_t k, int64_t stride, int64_t pad, Rng& rng)
        : stride_(stride), pad_(pad) {
        weight_ = store.parameter(name + ".weight", kaiming_conv_init<T>(out_ch, in_ch, k, rng));
        bias_ = store.parameter(name + ".bias", Tensor<T>::zeros({out_ch}));
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight_, bias_, stride_, pad_); }

    const Tensor<T>& weight() const { return weight_; }
    const Tensor<T>& bias() const { return bias_; }

  private:
    Tensor<T> weight_, bias_;
    int64_t stride_ = 1, pad_ = 0;
};

// Feature paired with its validity map (the partial-convolution state).
template <typename T>
struct MaskedFeature {
    Tensor<T> feature;   // [N,C,H,W]
    Tensor<T> validity;  // [N,1,H,W], binary, never requires grad
};

// Renormalized masked convolution: out = conv(x .* m) * (window / valid)
// + bias, where `window` counts the in-image taps of each k x k window (k^2
// away from borders) and `valid` the valid mask pixels among them. Windows
// with no valid pixel output the bias alone and stay invalid. The mask path
// is constant in every graph.
template <typename T>
MaskedFeature<T> partial_conv(const MaskedFeature<T>& in, const Tensor<T>& weight,
                              const Tensor<T>& bias, int64_t stride, int64_t pad) {
    const int64_t k = weight.dim(2);
    const Tensor<T> counts = mask_window_counts(in.validity, k, stride, pad);
    const Tensor<T> window = mask_window_counts(
        Tensor<T>::ones({in.validity.dim(0), 1, in.validity.dim(2), in.validity.dim(3)}), k,
        stride, pad);

    std::vector<T> ratio(static_cast<size_t>(counts.numel()));
    std::vector<T> next_valid(static_cast<size_t>(counts.numel()));
    for (int64_t i = 0; i < counts.numel(); ++i) {
        const T c = counts.values()[i];
        ratio[i] = c > T(0) ? window.values()[i] / c : T(0);
        next_valid[i] = c > T(0) ? T(1) : T(0);
    }

    Tensor<T> masked = spatial_scale(in.feature, in.validity);
    Tensor<T> conv = conv2d(masked, weight, stride, pad);
    Tensor<T> scaled = spatial_scale(conv, Tensor<T>::from(counts.shape(), std::move(ratio)));
    Tensor<T> out = bias.defined() ? bias_add(scaled, bias) : scaled;
    return {out, Tensor<T>::from(counts.shape(), std::move(next_valid))};
}

template <typename T>
class PartialConv2dLayer {
  public:
    PartialConv2dLayer() = default;
    PartialConv2dLayer(ParamStore<T>& store, const std::string& name, int64_t in_ch,
                       int64_t out_ch, int64_t k, int64_t stride, int64_t pad, Rng& rng)
        : stride_(stride), pad_(pad) {
        weight_ = store.parameter(name + ".weight", kaiming_conv_init<T>(out_ch, in_ch, k, rng));
        bias_ = store.parameter(name + ".bias", Tensor<T>::zeros({out_ch}));
    }

    // use_pc = false degenerates to a plain convolution that carries the
    // validity map through unchanged
    MaskedFeature<T> operator()(const MaskedFeature<T>& in, bool use_pc) const {
        if (!use_pc) return {conv2d(in.feature, weight_, bias_, stride_, pad_), in.validity};
        return partial_conv(in, weight_, bias_, stride_, pad_);
    }

  private:
    Tensor<T> weight_, bias_;
    int64_t stride_ = 1, pad_ = 0;
};

// Squeeze-and-excitation: global pool, bottleneck FC pair (as 1x1 convs),
// then per-channel sigmoid rescaling of the input.
template <typename T>
class SqueezeExcite {
  public:
    static constexpr int64_t kRatio = 4;

    SqueezeExcite() = default;
    SqueezeExcite(ParamStore<T>& store, const std::string& name, int64_t channels, Rng& rng) {
        const int64_t mid = std::max<int64_t>(channels / kRatio, 4);
        reduce_ = Conv2dLayer<T>(store, name + ".reduce", channels, mid, 1, 1, 0, rng);
        expand_ = Conv2dLayer<T>(store, name + ".expand", mid, channels, 1, 1, 0, rng);
    }

    Tensor<T> operator()(const Tensor<T>& x) const {
        Tensor<T> gates = sigmoid(expand_(relu(reduce_(global_avg_pool(x)))));
        return channel_scale(x, gates);
    }

  private:
    Conv2dLayer<T> reduce_, expand_;
};

// Selective-kernel convolution: 3x3 and 5x5 branches fused by channel
// attention; the two attention maps sum to 1 per channel (softmax over two
// branches computed as a sigmoid of the logit difference).
template <typename T>
class SelectiveKernel {
  public:
    SelectiveKernel() = default;
    SelectiveKernel(ParamStore<T>& store, const std::string& name, int64_t channels, Rng& rng) {
        const int64_t mid = std::max<int64_t>(channels / 4, 4);
        conv3_ = Conv2dLayer<T>(store, name + ".conv3", channels, channels, 3, 1, 1, rng);
        conv5_ = Conv2dLayer<T>(store, name + ".conv5", channels, channels, 5, 1, 2, rng);
        squeeze_ = Conv2dLayer<T>(store, name + ".squeeze", channels, mid, 1, 1, 0, rng);
        attn3_ = Conv2dLayer<T>(store, name + ".attn3", mid, channels, 1, 1, 0, rng);
        attn5_ = Conv2dLayer<T>(store, name + ".attn5", mid, channels, 1, 1, 0, rng);
    }

    Tensor<T> operator()(const Tensor<T>& x) const {
        Tensor<T> b3 = conv3_(x);
        Tensor<T> b5 = conv5_(x);
        Tensor<T> z = relu(squeeze_(global_avg_pool(add(b3, b5))));
        Tensor<T> l3 = attn3_(z);
        Tensor<T> l5 = attn5_(z);
        Tensor<T> a3 = sigmoid(sub(l3, l5));
        Tensor<T> a5 = sigmoid(sub(l5, l3));
        return add(channel_scale(b3, a3), channel_scale(b5, a5));
    }

    // attention pair exposed for tests
    std::pair<Tensor<T>, Tensor<T>> attention(const Tensor<T>& x) const {
        Tensor<T> z = relu(squeeze_(global_avg_pool(add(conv3_(x), conv5_(x)))));
        Tensor<T> l3 = attn3_(z);
        Tensor<T> l5 = attn5_(z);
        return {sigmoid(sub(l3, l5)), sigmoid(sub(l5, l3))};
    }

  private:
    Conv2dLayer<T> conv3_, conv5_, squeeze_, attn3_, attn5_;
};

}  // namespace inpaint
