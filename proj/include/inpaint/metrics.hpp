#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "inpaint/image.hpp"
#include "inpaint/losses.hpp"

namespace inpaint {

struct MetricReport {
    double psnr = 0.0;       // dB; +infinity for identical inputs
    double ssim = 0.0;
    double mae = 0.0;
    double feat_dist = -1.0;  // proxy Frechet distance; < 0 when not computed
    int64_t n_images = 0;
};

inline double mse(const Image& a, const Image& b) {
    require(a.height == b.height && a.width == b.width, "mse: image sizes differ, ", a.height,
            "x", a.width, " vs ", b.height, "x", b.width);
    double acc = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.data.size());
}

// 10 * log10(1 / MSE) on [0,1] images; identical images return +infinity.
inline double psnr(const Image& a, const Image& b) {
    const double m = mse(a, b);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / m);
}

inline double mae(const Image& a, const Image& b) {
    require(a.height == b.height && a.width == b.width, "mae: image sizes differ");
    double acc = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) acc += std::abs(a.data[i] - b.data[i]);
    return acc / static_cast<double>(a.data.size());
}

namespace detail {

inline std::vector<double> gaussian_window11() {
    std::vector<double> w(11);
    double sum = 0.0;
    for (int i = 0; i < 11; ++i) {
        const double d = i - 5.0;
        w[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        sum += w[i];
    }
    for (auto& v : w) v /= sum;
    return w;
}

// separable valid-mode gaussian filter of one channel plane
inline std::vector<double> filter_valid(const std::vector<double>& plane, int64_t H, int64_t W,
                                        const std::vector<double>& win) {
    const int64_t k = static_cast<int64_t>(win.size());
    const int64_t oh = H - k + 1, ow = W - k + 1;
    std::vector<double> rows(static_cast<size_t>(H * ow), 0.0);
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int64_t i = 0; i < k; ++i) acc += win[i] * plane[y * W + x + i];
            rows[y * ow + x] = acc;
        }
    std::vector<double> out(static_cast<size_t>(oh * ow), 0.0);
    for (int64_t y = 0; y < oh; ++y)
        for (int64_t x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int64_t i = 0; i < k; ++i) acc += win[i] * rows[(y + i) * ow + x];
            out[y * ow + x] = acc;
        }
    return out;
}

}  // namespace detail

// Single-scale SSIM: 11x11 gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03,
// dynamic range 1, valid windows only, averaged over channels and positions.
inline double ssim(const Image& a, const Image& b) {
    require(a.height == b.height && a.width == b.width, "ssim: image sizes differ");
    require<ConfigError>(a.height >= 11 && a.width >= 11,
                         "ssim needs images at least 11x11, got ", a.height, "x", a.width);
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const auto win = detail::gaussian_window11();
    const int64_t H = a.height, W = a.width;

    double total = 0.0;
    for (int64_t c = 0; c < 3; ++c) {
        std::vector<double> pa(static_cast<size_t>(H * W)), pb(static_cast<size_t>(H * W));
        std::vector<double> paa(pa.size()), pbb(pa.size()), pab(pa.size());
        for (int64_t i = 0; i < H * W; ++i) {
            pa[i] = a.data[i * 3 + c];
            pb[i] = b.data[i * 3 + c];
            paa[i] = pa[i] * pa[i];
            pbb[i] = pb[i] * pb[i];
            pab[i] = pa[i] * pb[i];
        }
        const auto mu_a = detail::filter_valid(pa, H, W, win);
        const auto mu_b = detail::filter_valid(pb, H, W, win);
        const auto m_aa = detail::filter_valid(paa, H, W, win);
        const auto m_bb = detail::filter_valid(pbb, H, W, win);
        const auto m_ab = detail::filter_valid(pab, H, W, win);

        double acc = 0.0;
        for (size_t i = 0; i < mu_a.size(); ++i) {
            const double va = m_aa[i] - mu_a[i] * mu_a[i];
            const double vb = m_bb[i] - mu_b[i] * mu_b[i];
            const double cov = m_ab[i] - mu_a[i] * mu_b[i];
            acc += ((2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2)) /
                   ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
        }
        total += acc / static_cast<double>(mu_a.size());
    }
    return total / 3.0;
}

// ---------------------------------------------------------------------------
// proxy feature distance (FID stand-in on the random-pyramid features; not
// comparable to numbers computed with a pretrained Inception network)

namespace detail {

// Jacobi eigenvalue iteration for symmetric matrices.
inline std::vector<double> sym_eigenvalues(std::vector<double> m, int64_t n) {
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = i + 1; j < n; ++j) off += m[i * n + j] * m[i * n + j];
        if (off < 1e-22) break;
        for (int64_t p = 0; p < n; ++p)
            for (int64_t q = p + 1; q < n; ++q) {
                if (std::abs(m[p * n + q]) < 1e-18) continue;
                const double theta = (m[q * n + q] - m[p * n + p]) / (2.0 * m[p * n + q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double cos = 1.0 / std::sqrt(t * t + 1.0);
                const double sin = t * cos;
                for (int64_t i = 0; i < n; ++i) {
                    const double mip = m[i * n + p], miq = m[i * n + q];
                    m[i * n + p] = cos * mip - sin * miq;
                    m[i * n + q] = sin * mip + cos * miq;
                }
                for (int64_t i = 0; i < n; ++i) {
                    const double mpi = m[p * n + i], mqi = m[q * n + i];
                    m[p * n + i] = cos * mpi - sin * mqi;
                    m[q * n + i] = sin * mpi + cos * mqi;
                }
            }
    }
    std::vector<double> eig(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) eig[i] = m[i * n + i];
    return eig;
}

// eigen-decomposition based symmetric square root
inline std::vector<double> sym_sqrt(const std::vector<double>& m, int64_t n) {
    // Jacobi with accumulated rotations
    std::vector<double> a = m;
    std::vector<double> q(static_cast<size_t>(n * n), 0.0);
    for (int64_t i = 0; i < n; ++i) q[i * n + i] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = i + 1; j < n; ++j) off += a[i * n + j] * a[i * n + j];
        if (off < 1e-22) break;
        for (int64_t p = 0; p < n; ++p)
            for (int64_t r = p + 1; r < n; ++r) {
                if (std::abs(a[p * n + r]) < 1e-18) continue;
                const double theta = (a[r * n + r] - a[p * n + p]) / (2.0 * a[p * n + r]);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double cos = 1.0 / std::sqrt(t * t + 1.0);
                const double sin = t * cos;
                for (int64_t i = 0; i < n; ++i) {
                    const double aip = a[i * n + p], air = a[i * n + r];
                    a[i * n + p] = cos * aip - sin * air;
                    a[i * n + r] = sin * aip + cos * air;
                }
                for (int64_t i = 0; i < n; ++i) {
                    const double api = a[p * n + i], ari = a[r * n + i];
                    a[p * n + i] = cos * api - sin * ari;
                    a[r * n + i] = sin * api + cos * ari;
                }
                for (int64_t i = 0; i < n; ++i) {
                    const double qip = q[i * n + p], qir = q[i * n + r];
                    q[i * n + p] = cos * qip - sin * qir;
                    q[i * n + r] = sin * qip + cos * qir;
                }
            }
    }
    std::vector<double> out(static_cast<size_t>(n * n), 0.0);
    for (int64_t k = 0; k < n; ++k) {
        const double root = std::sqrt(std::max(a[k * n + k], 0.0));
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < n; ++j) out[i * n + j] += root * q[i * n + k] * q[j * n + k];
    }
    return out;
}

}  // namespace detail

// Frechet distance between Gaussian fits of two vector sets:
// |mu1 - mu2|^2 + tr(S1 + S2 - 2 (S1 S2)^(1/2)). Degenerate covariances are
// regularized with 1e-6 * I (with a warning flag in the caller's hands).
inline double frechet_gaussian(const std::vector<std::vector<double>>& set_a,
                               const std::vector<std::vector<double>>& set_b,
                               bool* regularized = nullptr) {
    require<ConfigError>(set_a.size() >= 2 && set_b.size() >= 2,
                         "frechet distance needs at least 2 vectors per set");
    const int64_t d = static_cast<int64_t>(set_a[0].size());

    auto fit = [d](const std::vector<std::vector<double>>& set, std::vector<double>& mu,
                   std::vector<double>& cov) {
        const double n = static_cast<double>(set.size());
        mu.assign(static_cast<size_t>(d), 0.0);
        for (const auto& v : set)
            for (int64_t i = 0; i < d; ++i) mu[i] += v[i] / n;
        cov.assign(static_cast<size_t>(d * d), 0.0);
        for (const auto& v : set)
            for (int64_t i = 0; i < d; ++i)
                for (int64_t j = 0; j < d; ++j)
                    cov[i * d + j] += (v[i] - mu[i]) * (v[j] - mu[j]) / (n - 1.0);
    };
    std::vector<double> mu1, mu2, s1, s2;
    fit(set_a, mu1, s1);
    fit(set_b, mu2, s2);

    bool did_regularize = false;
    for (auto* s : {&s1, &s2}) {
        auto eig = detail::sym_eigenvalues(*s, d);
        double min_eig = eig.empty() ? 0.0 : eig[0];
        for (double e : eig) min_eig = std::min(min_eig, e);
        if (min_eig < 1e-10) {
            for (int64_t i = 0; i < d; ++i) (*s)[i * d + i] += 1e-6;
            did_regularize = true;
        }
    }
    if (regularized) *regularized = did_regularize;

    double dist = 0.0;
    for (int64_t i = 0; i < d; ++i) dist += (mu1[i] - mu2[i]) * (mu1[i] - mu2[i]);
    for (int64_t i = 0; i < d; ++i) dist += s1[i * d + i] + s2[i * d + i];

    // tr((S1 S2)^(1/2)) = tr(sqrt(sqrt(S1) S2 sqrt(S1)))
    auto r1 = detail::sym_sqrt(s1, d);
    std::vector<double> tmp(static_cast<size_t>(d * d), 0.0), prod(static_cast<size_t>(d * d), 0.0);
    for (int64_t i = 0; i < d; ++i)
        for (int64_t k = 0; k < d; ++k) {
            const double v = r1[i * d + k];
            for (int64_t j = 0; j < d; ++j) tmp[i * d + j] += v * s2[k * d + j];
        }
    for (int64_t i = 0; i < d; ++i)
        for (int64_t k = 0; k < d; ++k) {
            const double v = tmp[i * d + k];
            for (int64_t j = 0; j < d; ++j) prod[i * d + j] += v * r1[k * d + j];
        }
    for (double e : detail::sym_eigenvalues(prod, d)) dist -= 2.0 * std::sqrt(std::max(e, 0.0));
    return dist;
}

// Pooled stage-5 activation vector of one image under the proxy extractor.
inline std::vector<double> feature_vector(const Image& img, const FeatureExtractor<double>& fx) {
    auto stages = fx(image_to_tensor<double>(img));
    const auto& s5 = stages[4];
    const int64_t C = s5.dim(1), HW = s5.dim(2) * s5.dim(3);
    std::vector<double> v(static_cast<size_t>(C), 0.0);
    for (int64_t c = 0; c < C; ++c) {
        for (int64_t i = 0; i < HW; ++i) v[c] += s5.values()[c * HW + i];
        v[c] /= static_cast<double>(HW);
    }
    return v;
}

inline double feat_dist(const std::vector<Image>& set_a, const std::vector<Image>& set_b,
                        const FeatureExtractor<double>& fx, bool* regularized = nullptr) {
    std::vector<std::vector<double>> fa, fb;
    for (const auto& img : set_a) fa.push_back(feature_vector(img, fx));
    for (const auto& img : set_b) fb.push_back(feature_vector(img, fx));
    return frechet_gaussian(fa, fb, regularized);
}

}  // namespace inpaint
