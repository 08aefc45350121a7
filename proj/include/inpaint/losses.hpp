#pragma once

#include <array>
#include <string>
#include <vector>

#include "inpaint/layers.hpp"
#include "inpaint/ops.hpp"

namespace inpaint {

// Trade-off weights of the total generator objective.
struct LossWeights {
    double rec = 1.0;
    double perc = 0.2;
    double style = 250.0;
    double adv = 0.2;
    double te = 1.0;
    double st = 1.0;

    void validate() const {
        require<ConfigError>(rec >= 0 && perc >= 0 && style >= 0 && adv >= 0 && te >= 0 && st >= 0,
                             "loss weights must be non-negative");
    }
};

// Five frozen convolutional stages emitting activation maps at strides
// 1, 2, 4, 8, 16. Weights are a fixed-seed random pyramid standing in for a
// pretrained backbone, so feature distances are self-contained and
// deterministic; externally supplied weights can be loaded in the checkpoint
// record format via trainer-level helpers.
template <typename T>
class FeatureExtractor {
  public:
    static constexpr uint64_t kDefaultSeed = 0x0f5eed;
    static constexpr std::array<int64_t, 5> kChannels = {8, 16, 32, 64, 64};

    explicit FeatureExtractor(uint64_t seed = kDefaultSeed) {
        Rng rng(mix64(seed, 0xfeedu));
        int64_t in_ch = 3;
        for (int i = 0; i < 5; ++i) {
            weights_[i] = kaiming_conv_init<T>(kChannels[i], in_ch, 3, rng);
            biases_[i] = Tensor<T>::zeros({kChannels[i]});
            in_ch = kChannels[i];
        }
    }

    std::array<Tensor<T>, 5> operator()(const Tensor<T>& image) const {
        std::array<Tensor<T>, 5> stages;
        Tensor<T> x = image;
        for (int i = 0; i < 5; ++i) {
            const int64_t stride = i == 0 ? 1 : 2;
            x = relu(conv2d(x, weights_[i], biases_[i], stride, 1));
            stages[i] = x;
        }
        return stages;
    }

    Tensor<T>& weight(int i) { return weights_[i]; }
    Tensor<T>& bias(int i) { return biases_[i]; }

  private:
    std::array<Tensor<T>, 5> weights_, biases_;
};

template <typename T>
Tensor<T> mae(const Tensor<T>& a, const Tensor<T>& b) {
    return mean_all(abs_t(sub(a, b)));
}

// Pixel losses of the two branch images and of the final output are all the
// same mean-absolute-error contract.
template <typename T>
Tensor<T> loss_rst(const Tensor<T>& structure_image, const Tensor<T>& target_structure) {
    return mae(structure_image, target_structure);
}

template <typename T>
Tensor<T> loss_rte(const Tensor<T>& texture_image, const Tensor<T>& target_image) {
    return mae(texture_image, target_image);
}

template <typename T>
Tensor<T> loss_rec(const Tensor<T>& output, const Tensor<T>& target_image) {
    return mae(output, target_image);
}

template <typename T>
Tensor<T> loss_perc(const Tensor<T>& a, const Tensor<T>& b, const FeatureExtractor<T>& fx) {
    auto fa = fx(a);
    auto fb = fx(b);
    Tensor<T> total = Tensor<T>::zeros({1});
    for (int i = 0; i < 5; ++i) total = add(total, mae(fa[i], fb[i]));
    return total;
}

namespace detail {

// Gram matrix per batch item, averaged: phi phi^T over flattened spatial
// positions, normalized by C*H*W of the stage.
template <typename T>
Tensor<T> gram(const Tensor<T>& stage, int64_t n) {
    const int64_t C = stage.dim(1), H = stage.dim(2), W = stage.dim(3);
    Tensor<T> item = stage.dim(0) == 1 ? stage : select_batch(stage, n);
    Tensor<T> flat = reshape(item, {C, H * W});
    return mul_scalar(matmul(flat, transpose2d(flat)), T(1) / static_cast<T>(C * H * W));
}

}  // namespace detail

template <typename T>
Tensor<T> loss_style(const Tensor<T>& a, const Tensor<T>& b, const FeatureExtractor<T>& fx) {
    auto fa = fx(a);
    auto fb = fx(b);
    const int64_t N = a.dim(0);
    Tensor<T> total = Tensor<T>::zeros({1});
    for (int i = 0; i < 5; ++i) {
        Tensor<T> stage_total = Tensor<T>::zeros({1});
        for (int64_t n = 0; n < N; ++n)
            stage_total = add(stage_total, mae(detail::gram(fa[i], n), detail::gram(fb[i], n)));
        total = add(total, mul_scalar(stage_total, T(1) / static_cast<T>(N)));
    }
    return total;
}

// Relativistic average adversarial pair for one critic. D_ra(a, b) =
// sigmoid(D(a) - mean_b D(b)); the generator drives real scores below the
// fake average and vice versa, the discriminator the mirror image. Logs are
// clamped at 1e-8.
template <typename T>
Tensor<T> loss_adv_g(const Tensor<T>& scores_real, const Tensor<T>& scores_fake) {
    require(scores_real.numel() >= 1 && scores_fake.numel() >= 1,
            "adversarial loss needs non-empty score batches");
    const T eps = T(1e-8);
    Tensor<T> d_rf = sigmoid(add_broadcast(scores_real, mean_all(scores_fake), T(-1)));
    Tensor<T> d_fr = sigmoid(add_broadcast(scores_fake, mean_all(scores_real), T(-1)));
    Tensor<T> one_minus = add_scalar(neg(d_rf), T(1));
    return neg(add(mean_all(log_clamped(one_minus, eps)), mean_all(log_clamped(d_fr, eps))));
}

template <typename T>
Tensor<T> loss_adv_d(const Tensor<T>& scores_real, const Tensor<T>& scores_fake) {
    require(scores_real.numel() >= 1 && scores_fake.numel() >= 1,
            "adversarial loss needs non-empty score batches");
    const T eps = T(1e-8);
    Tensor<T> d_rf = sigmoid(add_broadcast(scores_real, mean_all(scores_fake), T(-1)));
    Tensor<T> d_fr = sigmoid(add_broadcast(scores_fake, mean_all(scores_real), T(-1)));
    Tensor<T> one_minus = add_scalar(neg(d_fr), T(1));
    return neg(add(mean_all(log_clamped(d_rf, eps)), mean_all(log_clamped(one_minus, eps))));
}

template <typename T>
struct LossComponents {
    Tensor<T> rec, perc, style, adv, rte, rst;
};

template <typename T>
Tensor<T> loss_total(const LossComponents<T>& c, const LossWeights& w) {
    Tensor<T> total = mul_scalar(c.rec, static_cast<T>(w.rec));
    total = add(total, mul_scalar(c.perc, static_cast<T>(w.perc)));
    total = add(total, mul_scalar(c.style, static_cast<T>(w.style)));
    total = add(total, mul_scalar(c.adv, static_cast<T>(w.adv)));
    total = add(total, mul_scalar(c.rte, static_cast<T>(w.te)));
    total = add(total, mul_scalar(c.rst, static_cast<T>(w.st)));
    return total;
}

}  // namespace inpaint
