#pragma once

#include <cmath>
#include <vector>

#include "inpaint/image.hpp"

namespace inpaint {

struct SmoothParams {
    double lambda = 5.0;
    double sigma_e = 0.05;
    int iters = 4;
};

// Edge-preserving structure target. Iterated weighted least squares: each
// pass recomputes 4-neighbor edge weights w = exp(-|grad|/sigma_e) on the
// current estimate (gradient magnitude averaged over channels) and applies
// one normalized update u <- (u + lambda * sum w u_q) / (1 + lambda * sum w).
// Strong step edges get near-zero weights and survive; texture is averaged
// away. Output stays in [0,1] because every update is a convex combination.
inline Image structure_smooth(const Image& input, double lambda, int iters,
                              double sigma_e = 0.05) {
    require<ConfigError>(lambda > 0, "structure_smooth: lambda must be positive, got ", lambda);
    require<ConfigError>(iters >= 1, "structure_smooth: iters must be >= 1, got ", iters);
    require<ConfigError>(sigma_e > 0, "structure_smooth: sigma_e must be positive, got ", sigma_e);

    const int64_t H = input.height, W = input.width;
    Image u = input;
    Image next = input;

    auto edge_weight = [&](int64_t y0, int64_t x0, int64_t y1, int64_t x1) {
        double diff = 0.0;
        for (int64_t c = 0; c < 3; ++c) diff += std::abs(u.at(y0, x0, c) - u.at(y1, x1, c));
        return std::exp(-(diff / 3.0) / sigma_e);
    };

    for (int it = 0; it < iters; ++it) {
        for (int64_t y = 0; y < H; ++y) {
            for (int64_t x = 0; x < W; ++x) {
                double wsum = 0.0;
                double acc[3] = {0.0, 0.0, 0.0};
                const int64_t ns[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
                for (const auto& n : ns) {
                    if (n[0] < 0 || n[0] >= H || n[1] < 0 || n[1] >= W) continue;
                    const double wgt = edge_weight(y, x, n[0], n[1]);
                    wsum += wgt;
                    for (int64_t c = 0; c < 3; ++c) acc[c] += wgt * u.at(n[0], n[1], c);
                }
                const double denom = 1.0 + lambda * wsum;
                for (int64_t c = 0; c < 3; ++c)
                    next.at(y, x, c) = (u.at(y, x, c) + lambda * acc[c]) / denom;
            }
        }
        std::swap(u.data, next.data);
    }
    return u;
}

inline Image structure_smooth(const Image& input, const SmoothParams& p) {
    return structure_smooth(input, p.lambda, p.iters, p.sigma_e);
}

}  // namespace inpaint
