#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "inpaint/layers.hpp"
#include "inpaint/ops.hpp"

namespace inpaint {

struct GeneratorConfig {
    int64_t image_size = 64;     // 256 at paper scale
    int64_t base_channels = 16;  // 64 at paper scale
    bool enable_sdff = true;
    bool enable_ca = true;
    bool enable_sknet = true;
    bool enable_bpfa = true;
    bool enable_pc = true;
    int64_t ca_patch = 4;        // must divide image_size / 4
    int64_t bpa_neighborhood = 3;
    double spatial_sigma = 0.0;  // <= 0 picks bottleneck_height / 4

    int64_t bottleneck_size() const { return image_size / 4; }

    double effective_spatial_sigma() const {
        return spatial_sigma > 0 ? spatial_sigma : static_cast<double>(bottleneck_size()) / 4.0;
    }

    void validate() const {
        require<ConfigError>(image_size >= 16 && image_size % 8 == 0,
                             "image_size must be a multiple of 8 and >= 16, got ", image_size);
        require<ConfigError>(base_channels >= 1, "base_channels must be >= 1, got ", base_channels);
        require<ConfigError>(ca_patch >= 1 && bottleneck_size() % ca_patch == 0,
                             "ca_patch ", ca_patch, " must divide the bottleneck size ",
                             bottleneck_size(), " (image_size / 4)");
        require<ConfigError>(bpa_neighborhood >= 1 && bpa_neighborhood % 2 == 1,
                             "bpa_neighborhood must be odd, got ", bpa_neighborhood);
    }
};

template <typename T>
struct GeneratorOutput {
    Tensor<T> raw;               // I_out, sigmoid range
    Tensor<T> composited;        // mask * input + (1 - mask) * raw
    Tensor<T> branch_structure;  // structure branch mapped to a full-size image
    Tensor<T> branch_texture;    // texture branch mapped to a full-size image
};

template <typename T>
struct EncoderFeatures {
    std::array<Tensor<T>, 6> layer;  // strides /2, /4, /8, /8, /8, /8
    Tensor<T> input;                 // masked image with the mask as 4th channel
};

// Mutual encoder-decoder generator: shared 6-layer encoder, shallow/deep
// feature reorganization, multi-scale partial-conv filling branches for
// texture and structure, gated cross-fusion of the two, attention-based
// aggregation at the bottleneck, and a skip-connected decoder.
template <typename T>
class Generator {
  public:
    static constexpr T kLeakySlope = T(0.2);

    explicit Generator(const GeneratorConfig& cfg, uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(mix64(seed, 0x6e7u));
        const int64_t b = cfg_.base_channels;

        enc_[0] = Conv2dLayer<T>(store_, "enc1", 4, b, 3, 2, 1, rng);
        enc_[1] = Conv2dLayer<T>(store_, "enc2", b, 2 * b, 3, 2, 1, rng);
        enc_[2] = Conv2dLayer<T>(store_, "enc3", 2 * b, 4 * b, 3, 2, 1, rng);
        enc_[3] = Conv2dLayer<T>(store_, "enc4", 4 * b, 4 * b, 3, 1, 1, rng);
        enc_[4] = Conv2dLayer<T>(store_, "enc5", 4 * b, 4 * b, 3, 1, 1, rng);
        enc_[5] = Conv2dLayer<T>(store_, "enc6", 4 * b, 4 * b, 3, 1, 1, rng);

        reorg_te_ = Conv2dLayer<T>(store_, "reorg_te", 7 * b, 4 * b, 1, 1, 0, rng);
        reorg_st_ = Conv2dLayer<T>(store_, "reorg_st", 12 * b, 4 * b, 1, 1, 0, rng);

        for (int branch = 0; branch < 2; ++branch) {
            const std::string bn = branch == 0 ? "branch_st" : "branch_te";
            for (int s = 0; s < 3; ++s) {
                const int64_t k = 3 + 2 * s;
                for (int l = 0; l < 5; ++l) {
                    const std::string name = cat(bn, ".k", k, ".l", l + 1);
                    const int64_t in_ch = l == 0 ? 4 * b : b;
                    streams_[branch][s][l] =
                        PartialConv2dLayer<T>(store_, name, in_ch, b, k, 1, (k - 1) / 2, rng);
                }
            }
            merge_[branch] = Conv2dLayer<T>(store_, bn + ".merge", 3 * b, 4 * b, 1, 1, 0, rng);
        }
        to_image_st_ = Conv2dLayer<T>(store_, "to_image_st", 4 * b, 3, 1, 1, 0, rng);
        to_image_te_ = Conv2dLayer<T>(store_, "to_image_te", 4 * b, 3, 1, 1, 0, rng);

        sdff_h_ = Conv2dLayer<T>(store_, "sdff.h", 8 * b, 4 * b, 3, 1, 1, rng);
        sdff_k_ = Conv2dLayer<T>(store_, "sdff.k", 8 * b, 4 * b, 3, 1, 1, rng);
        sdff_se_te_ = SqueezeExcite<T>(store_, "sdff.se_te", 4 * b, rng);
        sdff_se_st_ = SqueezeExcite<T>(store_, "sdff.se_st", 4 * b, rng);
        sdff_alpha_ = store_.parameter("sdff.alpha", Tensor<T>::scalar(T(1)));
        sdff_beta_ = store_.parameter("sdff.beta", Tensor<T>::scalar(T(1)));
        sdff_gamma_ = store_.parameter("sdff.gamma", Tensor<T>::scalar(T(1)));
        sdff_v_ = Conv2dLayer<T>(store_, "sdff.v", 8 * b, 4 * b, 1, 1, 0, rng);

        sk_ = SelectiveKernel<T>(store_, "bpfa.sk", 4 * b, rng);
        bpfa_q_ = Conv2dLayer<T>(store_, "bpfa.q", 8 * b, 4 * b, 1, 1, 0, rng);
        bpfa_z_ = Conv2dLayer<T>(store_, "bpfa.z", 8 * b, 4 * b, 1, 1, 0, rng);

        dec1_ = Conv2dLayer<T>(store_, "dec1", 4 * b + 2 * b, 2 * b, 3, 1, 1, rng);
        dec2_ = Conv2dLayer<T>(store_, "dec2", 2 * b + b, b, 3, 1, 1, rng);
        dec3_ = Conv2dLayer<T>(store_, "dec3", b + 4, b, 3, 1, 1, rng);
        dec_out_ = Conv2dLayer<T>(store_, "dec_out", b, 3, 3, 1, 1, rng);
    }

    const GeneratorConfig& config() const { return cfg_; }
    ParamStore<T>& store() { return store_; }
    const ParamStore<T>& store() const { return store_; }

    // Six leaky-relu encoder features from the hole-zeroed image with the
    // mask stacked as a fourth channel.
    EncoderFeatures<T> encode(const Tensor<T>& image, const Tensor<T>& mask) const {
        require<ConfigError>(image.dim(2) == cfg_.image_size && image.dim(3) == cfg_.image_size,
                             "generator built for ", cfg_.image_size, "x", cfg_.image_size,
                             ", got ", image.dim(2), "x", image.dim(3));
        EncoderFeatures<T> out;
        out.input = concat<T>({spatial_scale(image, mask), mask}, 1);
        Tensor<T> x = out.input;
        for (int i = 0; i < 6; ++i) {
            x = leaky_relu(enc_[i](x), kLeakySlope);
            out.layer[i] = x;
        }
        return out;
    }

    // Shallow layers 1-3 -> texture feature, deep layers 4-6 -> structure
    // feature, both 4b channels at /4 scale.
    std::pair<Tensor<T>, Tensor<T>> reorganize(const std::array<Tensor<T>, 6>& f) const {
        const int64_t s = cfg_.bottleneck_size();
        Tensor<T> te = reorg_te_(concat<T>({bilinear_resize(f[0], s, s), bilinear_resize(f[1], s, s),
                                            bilinear_resize(f[2], s, s)},
                                           1));
        Tensor<T> st = reorg_st_(concat<T>({bilinear_resize(f[3], s, s), bilinear_resize(f[4], s, s),
                                            bilinear_resize(f[5], s, s)},
                                           1));
        return {te, st};
    }

    enum class BranchKind { Structure, Texture };

    // Three parallel 5-layer partial-conv streams (kernels 3/5/7) filling the
    // holes at multiple scales, merged back to the input channel count.
    Tensor<T> branch_fill(const Tensor<T>& input, const Tensor<T>& validity,
                          BranchKind kind) const {
        const int bi = kind == BranchKind::Structure ? 0 : 1;
        std::vector<Tensor<T>> outs;
        for (int s = 0; s < 3; ++s) {
            MaskedFeature<T> mf{input, validity};
            for (int l = 0; l < 5; ++l) {
                mf = streams_[bi][s][l](mf, cfg_.enable_pc);
                mf.feature = leaky_relu(mf.feature, kLeakySlope);
            }
            outs.push_back(mf.feature);
        }
        return merge_[bi](concat<T>(outs, 1));
    }

    // 1x1 projection to three channels, upsampled to the full image size.
    Tensor<T> branch_to_image(const Tensor<T>& branch, BranchKind kind) const {
        const auto& proj = kind == BranchKind::Structure ? to_image_st_ : to_image_te_;
        return bilinear_resize(proj(branch), cfg_.image_size, cfg_.image_size);
    }

    enum class GateKind { Texture, Structure };

    // Soft gate in (0,1): sigmoid of the squeeze-excited 3x3 projection of
    // the concatenated branch features.
    Tensor<T> sdff_gate(const Tensor<T>& f_cst, const Tensor<T>& f_cte, GateKind which) const {
        Tensor<T> cat = concat<T>({f_cst, f_cte}, 1);
        if (which == GateKind::Texture) return sigmoid(sdff_se_te_(sdff_h_(cat)));
        return sigmoid(sdff_se_st_(sdff_k_(cat)));
    }

    // Gated cross-injection of structure into texture (scaled by alpha*beta)
    // and texture into structure (scaled by gamma), then a 1x1 fusion.
    // With the module disabled the unmodified features are fused directly.
    Tensor<T> sdff_fuse(const Tensor<T>& f_cst, const Tensor<T>& f_cte) const {
        if (!cfg_.enable_sdff) return sdff_v_(concat<T>({f_cst, f_cte}, 1));
        Tensor<T> gate_te = sdff_gate(f_cst, f_cte, GateKind::Texture);
        Tensor<T> gate_st = sdff_gate(f_cst, f_cte, GateKind::Structure);
        Tensor<T> cte_prime = add(
            scale_by(mul(scale_by(mul(gate_te, f_cte), sdff_beta_), f_cst), sdff_alpha_), f_cte);
        Tensor<T> cst_prime = add(scale_by(mul(gate_st, f_cte), sdff_gamma_), f_cst);
        return sdff_v_(concat<T>({cst_prime, cte_prime}, 1));
    }

    Tensor<T> sk_conv(const Tensor<T>& f_fu) const {
        return cfg_.enable_sknet ? sk_(f_fu) : f_fu;
    }

    Tensor<T> apply_contextual_attention(const Tensor<T>& x) const {
        return cfg_.enable_ca ? contextual_attention(x, cfg_.ca_patch) : x;
    }

    Tensor<T> bpa_range(const Tensor<T>& x) const {
        return range_propagation(x, cfg_.bpa_neighborhood);
    }

    Tensor<T> bpa_spatial(const Tensor<T>& x) const {
        return spatial_propagation(x, spatial_weights());
    }

    Tensor<T> bpa_combine(const Tensor<T>& y_spatial, const Tensor<T>& y_range) const {
        return bpfa_q_(concat<T>({y_spatial, y_range}, 1));
    }

    // Selective-kernel mixing, patch attention, dual-domain propagation and
    // the two 1x1 fusions; bypassed entirely when the module is disabled.
    Tensor<T> bpfa_aggregate(const Tensor<T>& f_fu) const {
        if (!cfg_.enable_bpfa) return f_fu;
        Tensor<T> f_fu_prime = sk_conv(f_fu);
        Tensor<T> attended = apply_contextual_attention(f_fu_prime);
        Tensor<T> f_sr = bpa_combine(bpa_spatial(attended), bpa_range(attended));
        return bpfa_z_(concat<T>({f_fu_prime, f_sr}, 1));
    }

    // Three nearest-up + conv stages from /8 with encoder skips at /4 and /2
    // and the 4-channel network input as the full-resolution skip.
    GeneratorOutput<T> decode(const Tensor<T>& f_sc, const EncoderFeatures<T>& enc,
                              const Tensor<T>& image, const Tensor<T>& mask,
                              const Tensor<T>& branch_st, const Tensor<T>& branch_te) const {
        const int64_t s8 = cfg_.image_size / 8;
        Tensor<T> d = bilinear_resize(f_sc, s8, s8);
        d = leaky_relu(dec1_(concat<T>({nearest_upsample(d, 2), enc.layer[1]}, 1)), kLeakySlope);
        d = leaky_relu(dec2_(concat<T>({nearest_upsample(d, 2), enc.layer[0]}, 1)), kLeakySlope);
        d = leaky_relu(dec3_(concat<T>({nearest_upsample(d, 2), enc.input}, 1)), kLeakySlope);
        Tensor<T> raw = sigmoid(dec_out_(d));

        Tensor<T> inv_mask = add_scalar(neg(mask), T(1));  // 1 - mask
        Tensor<T> composited = add(spatial_scale(image, mask), spatial_scale(raw, inv_mask));
        return {raw, composited, branch_st, branch_te};
    }

    GeneratorOutput<T> forward(const Tensor<T>& image, const Tensor<T>& mask) const {
        EncoderFeatures<T> enc = encode(image, mask);
        auto [f_te, f_st] = reorganize(enc.layer);
        Tensor<T> validity = mask_min_downsample(mask, 4);
        Tensor<T> f_cst = branch_fill(f_st, validity, BranchKind::Structure);
        Tensor<T> f_cte = branch_fill(f_te, validity, BranchKind::Texture);
        Tensor<T> f_fu = sdff_fuse(f_cst, f_cte);
        Tensor<T> f_sc = bpfa_aggregate(f_fu);
        return decode(f_sc, enc, image, mask, branch_to_image(f_cst, BranchKind::Structure),
                      branch_to_image(f_cte, BranchKind::Texture));
    }

    // explicit override hooks for the identity tests
    void set_sdff_scalars(T alpha, T beta, T gamma) {
        sdff_alpha_.values_mut()[0] = alpha;
        sdff_beta_.values_mut()[0] = beta;
        sdff_gamma_.values_mut()[0] = gamma;
    }

  private:
    Tensor<T> spatial_weights() const {
        if (!spatial_weights_) {
            const int64_t s = cfg_.bottleneck_size();
            spatial_weights_ = Tensor<T>::from(
                {s * s, s * s}, spatial_mix_weights<T>(s, s, cfg_.effective_spatial_sigma()));
        }
        return *spatial_weights_;
    }

    GeneratorConfig cfg_;
    ParamStore<T> store_;
    std::array<Conv2dLayer<T>, 6> enc_;
    Conv2dLayer<T> reorg_te_, reorg_st_;
    std::array<std::array<std::array<PartialConv2dLayer<T>, 5>, 3>, 2> streams_;  // [st,te][k][layer]
    std::array<Conv2dLayer<T>, 2> merge_;
    Conv2dLayer<T> to_image_st_, to_image_te_;
    Conv2dLayer<T> sdff_h_, sdff_k_;
    SqueezeExcite<T> sdff_se_te_, sdff_se_st_;
    Tensor<T> sdff_alpha_, sdff_beta_, sdff_gamma_;
    Conv2dLayer<T> sdff_v_;
    SelectiveKernel<T> sk_;
    Conv2dLayer<T> bpfa_q_, bpfa_z_;
    Conv2dLayer<T> dec1_, dec2_, dec3_, dec_out_;
    mutable std::optional<Tensor<T>> spatial_weights_;
};

}  // namespace inpaint
