#pragma once

#include <array>
#include <string>
#include <vector>

#include "inpaint/layers.hpp"
#include "inpaint/mask.hpp"
#include "inpaint/ops.hpp"

namespace inpaint {

struct CriticConfig {
    int64_t input_size = 64;
    int64_t base_channels = 16;
    static constexpr int kLayers = 6;
    static constexpr int64_t kKernel = 4;
    static constexpr int64_t kStride = 2;
    static constexpr double kLeakySlope = 0.2;
};

// One power-iteration step on the (out, rest) matricization of `weight`,
// updating u and v in place, followed by division by the estimated largest
// singular value sigma = u^T W v. u and v are unit vectors after every call;
// sigma is clamped below at eps. Gradients flow through W only, with u and v
// treated as constants (the graph is built from the updated estimates).
// `sigma_out`, when given, receives the sigma estimate for later frozen use.
template <typename T>
Tensor<T> spectral_normalize(const Tensor<T>& weight, Tensor<T>& u, Tensor<T>& v,
                             int n_iter = 1, T eps = T(1e-8), Tensor<T>* sigma_out = nullptr) {
    const int64_t rows = weight.dim(0);
    const int64_t cols = weight.numel() / rows;
    require(u.numel() == rows && v.numel() == cols, "spectral_normalize: state sizes ",
            u.numel(), "/", v.numel(), " do not match ", rows, "x", cols, " weight");

    // raw-value power iteration; this is deliberately outside the graph
    const auto wv = weight.values();
    auto uv = u.values_mut();
    auto vv = v.values_mut();
    auto normalize = [](std::span<T> x, T floor) {
        T norm = T(0);
        for (T e : x) norm += e * e;
        norm = std::max(std::sqrt(norm), floor);
        for (T& e : x) e /= norm;
    };
    for (int it = 0; it < n_iter; ++it) {
        for (int64_t c = 0; c < cols; ++c) {
            T acc = T(0);
            for (int64_t r = 0; r < rows; ++r) acc += wv[r * cols + c] * uv[r];
            vv[c] = acc;
        }
        normalize(vv, T(1e-12));
        for (int64_t r = 0; r < rows; ++r) {
            T acc = T(0);
            for (int64_t c = 0; c < cols; ++c) acc += wv[r * cols + c] * vv[c];
            uv[r] = acc;
        }
        normalize(uv, T(1e-12));
    }

    // sigma = u^T W v through the graph so d(W/sigma)/dW is exact
    Tensor<T> w2d = reshape(weight, {rows, cols});
    Tensor<T> ucol = reshape(u.detach(), {1, rows});
    Tensor<T> vcol = reshape(v.detach(), {cols, 1});
    Tensor<T> sigma = clamp_min(reshape(matmul(ucol, matmul(w2d, vcol)), {1}), eps);
    if (sigma_out) sigma_out->values_mut()[0] = sigma.values()[0];
    return scale_by(weight, reciprocal(sigma));
}

// Frozen-state variant: divides by a previously estimated sigma, so eval-mode
// scores respond linearly to weight changes and repeated evaluation is
// invariant.
template <typename T>
Tensor<T> spectral_normalize_frozen(const Tensor<T>& weight, const Tensor<T>& sigma, T eps = T(1e-8)) {
    return mul_scalar(weight, T(1) / std::max(sigma.values()[0], eps));
}

// Six spectrally-normalized strided convolutions with leaky-relu between all
// but the last, averaged to one scalar score per batch item. Inputs smaller
// than 2^6 shrink to 1x1 before the head; the remaining layers switch to 1x1
// kernels so the layer count stays fixed.
template <typename T>
class Critic {
  public:
    Critic(const CriticConfig& cfg, const std::string& name, uint64_t seed) : cfg_(cfg) {
        Rng rng(mix64(seed, std::hash<std::string>{}(name)));
        const int64_t b = cfg.base_channels;
        const std::array<int64_t, 6> out_ch = {b, 2 * b, 4 * b, 8 * b, 8 * b, 8 * b};
        int64_t in_ch = 3;
        int64_t spatial = cfg.input_size;
        for (int i = 0; i < CriticConfig::kLayers; ++i) {
            const bool shrunk = spatial < 2;
            kernel_[i] = shrunk ? 1 : CriticConfig::kKernel;
            stride_[i] = shrunk ? 1 : CriticConfig::kStride;
            pad_[i] = shrunk ? 0 : 1;
            const std::string lname = cat("conv", i + 1);
            weights_[i] =
                store_.parameter(lname + ".weight",
                                 kaiming_conv_init<T>(out_ch[i], in_ch, kernel_[i], rng));
            biases_[i] = store_.parameter(lname + ".bias", Tensor<T>::zeros({out_ch[i]}));
            Tensor<T> u0 = Tensor<T>::normal({out_ch[i]}, 0.0, 1.0, rng);
            Tensor<T> v0 = Tensor<T>::normal({in_ch * kernel_[i] * kernel_[i]}, 0.0, 1.0, rng);
            normalize_state(u0);
            normalize_state(v0);
            sn_u_[i] = store_.buffer(lname + ".sn_u", u0);
            sn_v_[i] = store_.buffer(lname + ".sn_v", v0);
            sn_sigma_[i] = store_.buffer(lname + ".sn_sigma", Tensor<T>::ones({1}));
            in_ch = out_ch[i];
            if (!shrunk) spatial = (spatial + 2 * pad_[i] - kernel_[i]) / stride_[i] + 1;
        }
    }

    // training = true runs one power iteration per layer and mutates the
    // spectral state; eval keeps the state frozen.
    Tensor<T> forward(const Tensor<T>& image, bool training) {
        require(image.dim(2) == cfg_.input_size && image.dim(3) == cfg_.input_size,
                "critic built for ", cfg_.input_size, "x", cfg_.input_size, " inputs, got ",
                image.dim(2), "x", image.dim(3));
        Tensor<T> x = image;
        for (int i = 0; i < CriticConfig::kLayers; ++i) {
            Tensor<T> w = training
                              ? spectral_normalize(weights_[i], sn_u_[i], sn_v_[i], 1, T(1e-8),
                                                   &sn_sigma_[i])
                              : spectral_normalize_frozen(weights_[i], sn_sigma_[i]);
            x = conv2d(x, w, biases_[i], stride_[i], pad_[i]);
            if (i + 1 < CriticConfig::kLayers) x = leaky_relu(x, T(CriticConfig::kLeakySlope));
        }
        return mean_chw(x);
    }

    const CriticConfig& config() const { return cfg_; }
    ParamStore<T>& store() { return store_; }
    const ParamStore<T>& store() const { return store_; }
    Tensor<T>& layer_weight(int i) { return weights_[i]; }
    const Tensor<T>& spectral_u(int i) const { return sn_u_[i]; }
    const Tensor<T>& spectral_v(int i) const { return sn_v_[i]; }
    const Tensor<T>& spectral_sigma(int i) const { return sn_sigma_[i]; }

  private:
    static void normalize_state(Tensor<T>& t) {
        auto v = t.values_mut();
        T norm = T(0);
        for (T e : v) norm += e * e;
        norm = std::max(std::sqrt(norm), T(1e-12));
        for (T& e : v) e /= norm;
    }

    CriticConfig cfg_;
    ParamStore<T> store_;
    std::array<Tensor<T>, 6> weights_, biases_, sn_u_, sn_v_, sn_sigma_;
    std::array<int64_t, 6> kernel_{}, stride_{}, pad_{};
};

// Tightest axis-aligned rectangle around the hole pixels of each mask item,
// cropped from the image and resized to the local critic's input size.
template <typename T>
Tensor<T> local_crop(const Tensor<T>& image, const Tensor<T>& mask, int64_t out_size) {
    const int64_t N = image.dim(0), H = image.dim(2), W = image.dim(3);
    std::vector<Tensor<T>> crops;
    crops.reserve(static_cast<size_t>(N));
    for (int64_t n = 0; n < N; ++n) {
        int64_t y0 = H, y1 = -1, x0 = W, x1 = -1;
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x)
                if (mask.at4(n, 0, y, x) == T(0)) {
                    y0 = std::min(y0, y);
                    y1 = std::max(y1, y);
                    x0 = std::min(x0, x);
                    x1 = std::max(x1, x);
                }
        require<DataError>(y1 >= 0, "local_crop: mask item ", n, " has no hole pixels");
        Tensor<T> item = N == 1 ? image : select_batch(image, n);
        crops.push_back(
            bilinear_resize(crop4(item, y0, x0, y1 - y0 + 1, x1 - x0 + 1), out_size, out_size));
    }
    return N == 1 ? crops[0] : concat(crops, 0);
}

}  // namespace inpaint
