#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "inpaint/tensor.hpp"

namespace inpaint {

namespace detail {

inline int64_t conv_out_extent(int64_t in, int64_t k, int64_t stride, int64_t pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// Patch matrix in (K x S) orientation, K = Cin*k*k with (c,ky,kx) c-major,
// S = Ho*Wo. Row-contiguous over output positions so W x Pt streams well.
template <typename T>
void im2col_kt(const T* x, int64_t C, int64_t H, int64_t W, int64_t k, int64_t stride,
               int64_t pad, int64_t Ho, int64_t Wo, T* out) {
    for (int64_t c = 0; c < C; ++c) {
        const T* plane = x + c * H * W;
        for (int64_t ky = 0; ky < k; ++ky) {
            for (int64_t kx = 0; kx < k; ++kx) {
                T* row = out + ((c * k + ky) * k + kx) * (Ho * Wo);
                for (int64_t y = 0; y < Ho; ++y) {
                    const int64_t iy = y * stride + ky - pad;
                    T* dst = row + y * Wo;
                    if (iy < 0 || iy >= H) {
                        std::fill(dst, dst + Wo, T(0));
                        continue;
                    }
                    const T* srow = plane + iy * W;
                    if (stride == 1) {
                        const int64_t ix0 = kx - pad;
                        int64_t x0 = std::max<int64_t>(0, -ix0);
                        int64_t x1 = std::min<int64_t>(Wo, W - ix0);
                        if (x0 > 0) std::fill(dst, dst + std::min(x0, Wo), T(0));
                        if (x1 > x0) std::copy(srow + ix0 + x0, srow + ix0 + x1, dst + x0);
                        if (x1 < Wo) std::fill(dst + std::max<int64_t>(x1, 0), dst + Wo, T(0));
                    } else {
                        for (int64_t xo = 0; xo < Wo; ++xo) {
                            const int64_t ix = xo * stride + kx - pad;
                            dst[xo] = (ix >= 0 && ix < W) ? srow[ix] : T(0);
                        }
                    }
                }
            }
        }
    }
}

// Scatter-add of a patch-gradient matrix dP (S x K) back into the input.
template <typename T>
void col2im_accum(const T* dp, int64_t C, int64_t H, int64_t W, int64_t k, int64_t stride,
                  int64_t pad, int64_t Ho, int64_t Wo, T* dx) {
    for (int64_t y = 0; y < Ho; ++y) {
        for (int64_t xo = 0; xo < Wo; ++xo) {
            const T* prow = dp + (y * Wo + xo) * (C * k * k);
            for (int64_t c = 0; c < C; ++c) {
                T* plane = dx + c * H * W;
                for (int64_t ky = 0; ky < k; ++ky) {
                    const int64_t iy = y * stride + ky - pad;
                    if (iy < 0 || iy >= H) continue;
                    for (int64_t kx = 0; kx < k; ++kx) {
                        const int64_t ix = xo * stride + kx - pad;
                        if (ix < 0 || ix >= W) continue;
                        plane[iy * W + ix] += prow[(c * k + ky) * k + kx];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// Standard cross-correlation of NCHW input with OIkk weights.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int64_t stride,
                 int64_t pad) {
    require(x.ndim() == 4, "conv2d: input must be rank-4 NCHW, got ", shape_str(x.shape()));
    require(w.ndim() == 4 && w.dim(2) == w.dim(3), "conv2d: weight must be [O,I,k,k], got ",
            shape_str(w.shape()));
    require(stride >= 1, "conv2d: stride must be >= 1, got ", stride);
    require(pad >= 0, "conv2d: pad must be >= 0, got ", pad);
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t O = w.dim(0), k = w.dim(2);
    require(w.dim(1) == C, "conv2d: weight expects ", w.dim(1), " input channels, input has ", C);
    require(H + 2 * pad >= k && W + 2 * pad >= k, "conv2d: kernel ", k, " does not fit padded ",
            H, "x", W, " input (pad ", pad, ")");
    if (bias.defined())
        require(bias.ndim() == 1 && bias.dim(0) == O, "conv2d: bias shape ",
                shape_str(bias.shape()), " does not match O=", O);

    const int64_t Ho = detail::conv_out_extent(H, k, stride, pad);
    const int64_t Wo = detail::conv_out_extent(W, k, stride, pad);
    const int64_t K = C * k * k, S = Ho * Wo;

    std::vector<T> out(static_cast<size_t>(N * O * S), T(0));
    std::vector<T> pt(static_cast<size_t>(K * S));
    for (int64_t n = 0; n < N; ++n) {
        detail::im2col_kt(x.values().data() + n * C * H * W, C, H, W, k, stride, pad, Ho, Wo,
                          pt.data());
        detail::matmul_accum(w.values().data(), pt.data(), out.data() + n * O * S, O, K, S);
    }
    if (bias.defined()) {
        const auto bv = bias.values();
        for (int64_t n = 0; n < N; ++n)
            for (int64_t o = 0; o < O; ++o) {
                T* row = out.data() + (n * O + o) * S;
                for (int64_t i = 0; i < S; ++i) row[i] += bv[o];
            }
    }

    auto px = x.node();
    auto pw = w.node();
    auto pb = bias.defined() ? bias.node() : nullptr;
    std::vector<Tensor<T>> parents = {x, w};
    if (bias.defined()) parents.push_back(bias);

    auto bw = [px, pw, pb, N, C, H, W, O, k, stride, pad, Ho, Wo, K, S](detail::Node<T>& self) {
        std::vector<T> pt2(static_cast<size_t>(K * S));
        std::vector<T> p_sk;   // (S x K), built on demand
        std::vector<T> gout_t; // (S x O)
        for (int64_t n = 0; n < N; ++n) {
            const T* gout = self.grad.data() + n * O * S;
            if (pw->requires_grad || px->requires_grad)
                detail::im2col_kt(px->value.data() + n * C * H * W, C, H, W, k, stride, pad, Ho,
                                  Wo, pt2.data());
            if (pw->requires_grad) {
                p_sk = detail::transpose_data(pt2.data(), K, S);
                detail::matmul_accum(gout, p_sk.data(), pw->ensure_grad().data(), O, S, K);
            }
            if (px->requires_grad) {
                gout_t = detail::transpose_data(gout, O, S);
                std::vector<T> dp(static_cast<size_t>(S * K), T(0));
                detail::matmul_accum(gout_t.data(), pw->value.data(), dp.data(), S, O, K);
                detail::col2im_accum(dp.data(), C, H, W, k, stride, pad, Ho, Wo,
                                     px->ensure_grad().data() + n * C * H * W);
            }
            if (pb && pb->requires_grad) {
                auto& g = pb->ensure_grad();
                for (int64_t o = 0; o < O; ++o) {
                    T acc = T(0);
                    const T* row = gout + o * S;
                    for (int64_t i = 0; i < S; ++i) acc += row[i];
                    g[o] += acc;
                }
            }
        }
    };
    return detail::make_op<T>({N, O, Ho, Wo}, std::move(out), parents, std::move(bw));
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int64_t stride, int64_t pad) {
    return conv2d(x, w, Tensor<T>(), stride, pad);
}

// ---------------------------------------------------------------------------
// patch views
//
// Row r holds the k x k x C neighborhood of spatial position r in row-major
// order, i.e. index ((ky*k)+kx)*C + c with the channel fastest. Two modes:
// stride == k extracts non-overlapping tiles (extents must divide), stride == 1
// extracts one patch per position with (k-1)/2 zero padding.

namespace detail {

template <typename T>
void patch_loop(int64_t N, int64_t C, int64_t H, int64_t W, int64_t k, int64_t stride,
                int64_t pad, const std::function<void(int64_t row, int64_t col, int64_t n,
                                                      int64_t c, int64_t y, int64_t x)>& fn) {
    const int64_t Py = (H + 2 * pad - k) / stride + 1;
    const int64_t Px = (W + 2 * pad - k) / stride + 1;
    for (int64_t n = 0; n < N; ++n)
        for (int64_t py = 0; py < Py; ++py)
            for (int64_t px = 0; px < Px; ++px) {
                const int64_t row = (n * Py + py) * Px + px;
                for (int64_t ky = 0; ky < k; ++ky)
                    for (int64_t kx = 0; kx < k; ++kx) {
                        const int64_t y = py * stride + ky - pad;
                        const int64_t x = px * stride + kx - pad;
                        if (y < 0 || y >= H || x < 0 || x >= W) continue;
                        for (int64_t c = 0; c < C; ++c)
                            fn(row, (ky * k + kx) * C + c, n, c, y, x);
                    }
            }
}

inline void check_patch_mode(int64_t H, int64_t W, int64_t k, int64_t stride) {
    require(k >= 1, "extract_patches: k must be >= 1, got ", k);
    if (stride == k) {
        require(H % k == 0, "extract_patches: H=", H, " not divisible by patch size k=", k);
        require(W % k == 0, "extract_patches: W=", W, " not divisible by patch size k=", k);
    } else if (stride == 1) {
        require(k % 2 == 1, "extract_patches: stride-1 mode needs odd k, got ", k);
    } else {
        require(false, "extract_patches: stride must be 1 or k, got stride=", stride, " k=", k);
    }
}

}  // namespace detail

template <typename T>
Tensor<T> extract_patches(const Tensor<T>& x, int64_t k, int64_t stride) {
    require(x.ndim() == 4, "extract_patches: input must be rank-4 NCHW");
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    detail::check_patch_mode(H, W, k, stride);
    const int64_t pad = stride == 1 ? (k - 1) / 2 : 0;
    const int64_t rows = N * ((H + 2 * pad - k) / stride + 1) * ((W + 2 * pad - k) / stride + 1);
    const int64_t cols = k * k * C;

    std::vector<T> v(static_cast<size_t>(rows * cols), T(0));
    const auto xv = x.values();
    detail::patch_loop<T>(N, C, H, W, k, stride, pad,
                          [&](int64_t row, int64_t col, int64_t n, int64_t c, int64_t y,
                              int64_t x2) { v[row * cols + col] = xv[((n * C + c) * H + y) * W + x2]; });
    auto px = x.node();
    return detail::make_op<T>({rows, cols}, std::move(v), {x},
                              [px, N, C, H, W, k, stride, pad, cols](detail::Node<T>& self) {
                                  auto& g = px->ensure_grad();
                                  detail::patch_loop<T>(
                                      N, C, H, W, k, stride, pad,
                                      [&](int64_t row, int64_t col, int64_t n, int64_t c,
                                          int64_t y, int64_t x2) {
                                          g[((n * C + c) * H + y) * W + x2] +=
                                              self.grad[row * cols + col];
                                      });
                              });
}

// Exact adjoint of extract_patches: overlapping contributions accumulate.
template <typename T>
Tensor<T> fold_patches(const Tensor<T>& rows, int64_t N, int64_t C, int64_t H, int64_t W,
                       int64_t k, int64_t stride) {
    detail::check_patch_mode(H, W, k, stride);
    const int64_t pad = stride == 1 ? (k - 1) / 2 : 0;
    const int64_t nrows = N * ((H + 2 * pad - k) / stride + 1) * ((W + 2 * pad - k) / stride + 1);
    const int64_t cols = k * k * C;
    require(rows.ndim() == 2 && rows.dim(0) == nrows && rows.dim(1) == cols,
            "fold_patches: expected [", nrows, ",", cols, "], got ", shape_str(rows.shape()));

    std::vector<T> v(static_cast<size_t>(N * C * H * W), T(0));
    const auto rv = rows.values();
    detail::patch_loop<T>(N, C, H, W, k, stride, pad,
                          [&](int64_t row, int64_t col, int64_t n, int64_t c, int64_t y,
                              int64_t x2) { v[((n * C + c) * H + y) * W + x2] += rv[row * cols + col]; });
    auto pr = rows.node();
    return detail::make_op<T>({N, C, H, W}, std::move(v), {rows},
                              [pr, N, C, H, W, k, stride, pad, cols](detail::Node<T>& self) {
                                  auto& g = pr->ensure_grad();
                                  detail::patch_loop<T>(
                                      N, C, H, W, k, stride, pad,
                                      [&](int64_t row, int64_t col, int64_t n, int64_t c,
                                          int64_t y, int64_t x2) {
                                          g[row * cols + col] +=
                                              self.grad[((n * C + c) * H + y) * W + x2];
                                      });
                              });
}

// ---------------------------------------------------------------------------
// resizing

// Half-pixel bilinear resampling with edge clamping; differentiable through
// its fixed interpolation weights.
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& x, int64_t oh, int64_t ow) {
    require(x.ndim() == 4, "bilinear_resize: input must be rank-4 NCHW");
    require(oh >= 1 && ow >= 1, "bilinear_resize: bad target ", oh, "x", ow);
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (oh == H && ow == W) {
        // straight copy keeps the graph simple
        std::vector<T> v(x.values().begin(), x.values().end());
        auto px = x.node();
        return detail::make_op<T>(x.shape(), std::move(v), {x}, [px](detail::Node<T>& self) {
            auto& g = px->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        });
    }

    struct Tap {
        int64_t lo, hi;
        T frac;
    };
    auto make_taps = [](int64_t out, int64_t in) {
        std::vector<Tap> taps(static_cast<size_t>(out));
        const double scale = static_cast<double>(in) / static_cast<double>(out);
        for (int64_t o = 0; o < out; ++o) {
            double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
            double fl = std::floor(src);
            int64_t lo = static_cast<int64_t>(fl);
            T frac = static_cast<T>(src - fl);
            int64_t hi = lo + 1;
            lo = std::clamp<int64_t>(lo, 0, in - 1);
            hi = std::clamp<int64_t>(hi, 0, in - 1);
            taps[static_cast<size_t>(o)] = {lo, hi, frac};
        }
        return taps;
    };
    auto ytaps = make_taps(oh, H);
    auto xtaps = make_taps(ow, W);

    std::vector<T> v(static_cast<size_t>(N * C * oh * ow));
    const auto xv = x.values();
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const T* plane = xv.data() + nc * H * W;
        T* dst = v.data() + nc * oh * ow;
        for (int64_t y = 0; y < oh; ++y) {
            const Tap& ty = ytaps[static_cast<size_t>(y)];
            for (int64_t x2 = 0; x2 < ow; ++x2) {
                const Tap& tx = xtaps[static_cast<size_t>(x2)];
                const T top = plane[ty.lo * W + tx.lo] * (T(1) - tx.frac) +
                              plane[ty.lo * W + tx.hi] * tx.frac;
                const T bot = plane[ty.hi * W + tx.lo] * (T(1) - tx.frac) +
                              plane[ty.hi * W + tx.hi] * tx.frac;
                dst[y * ow + x2] = top * (T(1) - ty.frac) + bot * ty.frac;
            }
        }
    }
    auto px = x.node();
    return detail::make_op<T>(
        {N, C, oh, ow}, std::move(v), {x},
        [px, N, C, H, W, oh, ow, ytaps, xtaps](detail::Node<T>& self) {
            auto& g = px->ensure_grad();
            for (int64_t nc = 0; nc < N * C; ++nc) {
                T* plane = g.data() + nc * H * W;
                const T* src = self.grad.data() + nc * oh * ow;
                for (int64_t y = 0; y < oh; ++y) {
                    const auto& ty = ytaps[static_cast<size_t>(y)];
                    for (int64_t x2 = 0; x2 < ow; ++x2) {
                        const auto& tx = xtaps[static_cast<size_t>(x2)];
                        const T gv = src[y * ow + x2];
                        plane[ty.lo * W + tx.lo] += gv * (T(1) - ty.frac) * (T(1) - tx.frac);
                        plane[ty.lo * W + tx.hi] += gv * (T(1) - ty.frac) * tx.frac;
                        plane[ty.hi * W + tx.lo] += gv * ty.frac * (T(1) - tx.frac);
                        plane[ty.hi * W + tx.hi] += gv * ty.frac * tx.frac;
                    }
                }
            }
        });
}

template <typename T>
Tensor<T> nearest_upsample(const Tensor<T>& x, int64_t factor) {
    require(x.ndim() == 4, "nearest_upsample: input must be rank-4 NCHW");
    require(factor >= 1, "nearest_upsample: factor must be >= 1");
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t oh = H * factor, ow = W * factor;
    std::vector<T> v(static_cast<size_t>(N * C * oh * ow));
    const auto xv = x.values();
    for (int64_t nc = 0; nc < N * C; ++nc) {
        const T* plane = xv.data() + nc * H * W;
        T* dst = v.data() + nc * oh * ow;
        for (int64_t y = 0; y < oh; ++y)
            for (int64_t x2 = 0; x2 < ow; ++x2)
                dst[y * ow + x2] = plane[(y / factor) * W + (x2 / factor)];
    }
    auto px = x.node();
    return detail::make_op<T>({N, C, oh, ow}, std::move(v), {x},
                              [px, N, C, H, W, factor, oh, ow](detail::Node<T>& self) {
                                  auto& g = px->ensure_grad();
                                  for (int64_t nc = 0; nc < N * C; ++nc) {
                                      T* plane = g.data() + nc * H * W;
                                      const T* src = self.grad.data() + nc * oh * ow;
                                      for (int64_t y = 0; y < oh; ++y)
                                          for (int64_t x2 = 0; x2 < ow; ++x2)
                                              plane[(y / factor) * W + (x2 / factor)] +=
                                                  src[y * ow + x2];
                                  }
                              });
}

// ---------------------------------------------------------------------------
// neighborhood ops for the range-domain propagation

// Dot products between each position's channel vector and its k x k
// neighborhood: out[(n*H+y)*W+x, j] = <x[n,:,y,x], x[n,:,y+dy,x+dx]>.
// Out-of-image neighbors produce 0 (mask them via neighborhood_bias).
template <typename T>
Tensor<T> neighborhood_dot(const Tensor<T>& x, int64_t k) {
    require(x.ndim() == 4, "neighborhood_dot: input must be rank-4 NCHW");
    require(k >= 1 && k % 2 == 1, "neighborhood_dot: k must be odd, got ", k);
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t r = k / 2, K2 = k * k, HW = H * W;
    std::vector<T> v(static_cast<size_t>(N * HW * K2), T(0));
    const auto xv = x.values();
    for (int64_t n = 0; n < N; ++n)
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x2 = 0; x2 < W; ++x2) {
                T* row = v.data() + ((n * H + y) * W + x2) * K2;
                for (int64_t dy = -r; dy <= r; ++dy)
                    for (int64_t dx = -r; dx <= r; ++dx) {
                        const int64_t ny = y + dy, nx = x2 + dx;
                        if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
                        T acc = T(0);
                        for (int64_t c = 0; c < C; ++c)
                            acc += xv[((n * C + c) * H + y) * W + x2] *
                                   xv[((n * C + c) * H + ny) * W + nx];
                        row[(dy + r) * k + (dx + r)] = acc;
                    }
            }
    auto px = x.node();
    return detail::make_op<T>(
        {N * HW, K2}, std::move(v), {x}, [px, N, C, H, W, k, r, K2](detail::Node<T>& self) {
            auto& g = px->ensure_grad();
            for (int64_t n = 0; n < N; ++n)
                for (int64_t y = 0; y < H; ++y)
                    for (int64_t x2 = 0; x2 < W; ++x2) {
                        const T* grow = self.grad.data() + ((n * H + y) * W + x2) * K2;
                        for (int64_t dy = -r; dy <= r; ++dy)
                            for (int64_t dx = -r; dx <= r; ++dx) {
                                const int64_t ny = y + dy, nx = x2 + dx;
                                if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
                                const T gv = grow[(dy + r) * k + (dx + r)];
                                if (gv == T(0)) continue;
                                for (int64_t c = 0; c < C; ++c) {
                                    const int64_t ci = ((n * C + c) * H + y) * W + x2;
                                    const int64_t cj = ((n * C + c) * H + ny) * W + nx;
                                    g[ci] += gv * px->value[cj];
                                    g[cj] += gv * px->value[ci];
                                }
                            }
                    }
        });
}

// Additive bias masking out-of-image neighbors before a row softmax.
template <typename T>
Tensor<T> neighborhood_bias(int64_t N, int64_t H, int64_t W, int64_t k) {
    const int64_t r = k / 2, K2 = k * k;
    std::vector<T> v(static_cast<size_t>(N * H * W * K2), T(0));
    for (int64_t n = 0; n < N; ++n)
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x) {
                T* row = v.data() + ((n * H + y) * W + x) * K2;
                for (int64_t dy = -r; dy <= r; ++dy)
                    for (int64_t dx = -r; dx <= r; ++dx) {
                        const int64_t ny = y + dy, nx = x + dx;
                        if (ny < 0 || ny >= H || nx < 0 || nx >= W)
                            row[(dy + r) * k + (dx + r)] = T(-1e30);
                    }
            }
    return Tensor<T>::from({N * H * W, K2}, std::move(v));
}

// Weighted neighborhood mix: out[n,c,y,x] = sum_j w[pos,j] * x[n,c,y+dy,x+dx].
template <typename T>
Tensor<T> neighborhood_mix(const Tensor<T>& x, const Tensor<T>& w, int64_t k) {
    require(x.ndim() == 4, "neighborhood_mix: input must be rank-4 NCHW");
    require(k >= 1 && k % 2 == 1, "neighborhood_mix: k must be odd, got ", k);
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t r = k / 2, K2 = k * k, HW = H * W;
    require(w.ndim() == 2 && w.dim(0) == N * HW && w.dim(1) == K2,
            "neighborhood_mix: weights must be [", N * HW, ",", K2, "], got ",
            shape_str(w.shape()));
    std::vector<T> v(static_cast<size_t>(N * C * HW), T(0));
    const auto xv = x.values();
    const auto wv = w.values();
    for (int64_t n = 0; n < N; ++n)
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x2 = 0; x2 < W; ++x2) {
                const T* wrow = wv.data() + ((n * H + y) * W + x2) * K2;
                for (int64_t dy = -r; dy <= r; ++dy)
                    for (int64_t dx = -r; dx <= r; ++dx) {
                        const int64_t ny = y + dy, nx = x2 + dx;
                        if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
                        const T wj = wrow[(dy + r) * k + (dx + r)];
                        if (wj == T(0)) continue;
                        for (int64_t c = 0; c < C; ++c)
                            v[((n * C + c) * H + y) * W + x2] +=
                                wj * xv[((n * C + c) * H + ny) * W + nx];
                    }
            }
    auto px = x.node();
    auto pw = w.node();
    return detail::make_op<T>(
        {N, C, H, W}, std::move(v), {x, w}, [px, pw, N, C, H, W, k, r, K2](detail::Node<T>& self) {
            for (int64_t n = 0; n < N; ++n)
                for (int64_t y = 0; y < H; ++y)
                    for (int64_t x2 = 0; x2 < W; ++x2) {
                        const int64_t pos = (n * H + y) * W + x2;
                        for (int64_t dy = -r; dy <= r; ++dy)
                            for (int64_t dx = -r; dx <= r; ++dx) {
                                const int64_t ny = y + dy, nx = x2 + dx;
                                if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
                                const int64_t j = (dy + r) * k + (dx + r);
                                if (pw->requires_grad) {
                                    T acc = T(0);
                                    for (int64_t c = 0; c < C; ++c)
                                        acc += self.grad[((n * C + c) * H + y) * W + x2] *
                                               px->value[((n * C + c) * H + ny) * W + nx];
                                    pw->ensure_grad()[pos * K2 + j] += acc;
                                }
                                if (px->requires_grad) {
                                    auto& g = px->ensure_grad();
                                    const T wj = pw->value[pos * K2 + j];
                                    if (wj == T(0)) continue;
                                    for (int64_t c = 0; c < C; ++c)
                                        g[((n * C + c) * H + ny) * W + nx] +=
                                            wj * self.grad[((n * C + c) * H + y) * W + x2];
                                }
                            }
                    }
        });
}

// Row-normalized Gaussian-of-L1-distance mixing weights over a whole H x W
// map; each row sums to 1.
template <typename T>
std::vector<T> spatial_mix_weights(int64_t h, int64_t w, double sigma) {
    require<NumericError>(sigma > 0, "spatial mixing sigma must be positive, got ", sigma);
    const int64_t HW = h * w;
    std::vector<T> m(static_cast<size_t>(HW * HW));
    for (int64_t yi = 0; yi < h; ++yi)
        for (int64_t xi = 0; xi < w; ++xi) {
            T* row = m.data() + (yi * w + xi) * HW;
            double denom = 0.0;
            for (int64_t yj = 0; yj < h; ++yj)
                for (int64_t xj = 0; xj < w; ++xj) {
                    const double d = std::abs(static_cast<double>(yj - yi)) +
                                     std::abs(static_cast<double>(xj - xi));
                    const double g = std::exp(-d * d / (2.0 * sigma * sigma));
                    row[yj * w + xj] = static_cast<T>(g);
                    denom += g;
                }
            for (int64_t j = 0; j < HW; ++j) row[j] = static_cast<T>(row[j] / denom);
        }
    return m;
}

// ---------------------------------------------------------------------------
// non-differentiable mask helpers (masks are constants in every graph)

// Number of valid mask pixels under each k x k window position.
template <typename T>
Tensor<T> mask_window_counts(const Tensor<T>& m, int64_t k, int64_t stride, int64_t pad) {
    require(m.ndim() == 4 && m.dim(1) == 1, "mask_window_counts: mask must be [N,1,H,W]");
    const int64_t N = m.dim(0), H = m.dim(2), W = m.dim(3);
    const int64_t Ho = detail::conv_out_extent(H, k, stride, pad);
    const int64_t Wo = detail::conv_out_extent(W, k, stride, pad);
    std::vector<T> v(static_cast<size_t>(N * Ho * Wo), T(0));
    const auto mv = m.values();
    for (int64_t n = 0; n < N; ++n)
        for (int64_t y = 0; y < Ho; ++y)
            for (int64_t x = 0; x < Wo; ++x) {
                T acc = T(0);
                for (int64_t ky = 0; ky < k; ++ky) {
                    const int64_t iy = y * stride + ky - pad;
                    if (iy < 0 || iy >= H) continue;
                    for (int64_t kx = 0; kx < k; ++kx) {
                        const int64_t ix = x * stride + kx - pad;
                        if (ix < 0 || ix >= W) continue;
                        acc += mv[(n * H + iy) * W + ix];
                    }
                }
                v[(n * Ho + y) * Wo + x] = acc;
            }
    return Tensor<T>::from({N, 1, Ho, Wo}, std::move(v));
}

// Min-pooling downsample of a binary mask by an integer factor.
template <typename T>
Tensor<T> mask_min_downsample(const Tensor<T>& m, int64_t factor) {
    require(m.ndim() == 4 && m.dim(1) == 1, "mask_min_downsample: mask must be [N,1,H,W]");
    require(factor >= 1 && m.dim(2) % factor == 0 && m.dim(3) % factor == 0,
            "mask_min_downsample: ", m.dim(2), "x", m.dim(3), " not divisible by ", factor);
    const int64_t N = m.dim(0), H = m.dim(2), W = m.dim(3);
    const int64_t oh = H / factor, ow = W / factor;
    std::vector<T> v(static_cast<size_t>(N * oh * ow));
    const auto mv = m.values();
    for (int64_t n = 0; n < N; ++n)
        for (int64_t y = 0; y < oh; ++y)
            for (int64_t x = 0; x < ow; ++x) {
                T mn = mv[(n * H + y * factor) * W + x * factor];
                for (int64_t dy = 0; dy < factor; ++dy)
                    for (int64_t dx = 0; dx < factor; ++dx)
                        mn = std::min(mn, mv[(n * H + y * factor + dy) * W + x * factor + dx]);
                v[(n * oh + y) * ow + x] = mn;
            }
    return Tensor<T>::from({N, 1, oh, ow}, std::move(v));
}

// ---------------------------------------------------------------------------
// composite attention / propagation blocks (parameter-free)

// Cosine-similarity attention over non-overlapping patch tiles, recombined by
// a row softmax. Patch norms are clamped below at `eps` so zero patches are
// legal inputs.
template <typename T>
Tensor<T> contextual_attention(const Tensor<T>& x, int64_t patch, T eps = T(1e-8)) {
    require(x.ndim() == 4, "contextual_attention: input must be rank-4 NCHW");
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    require(H % patch == 0 && W % patch == 0, "contextual_attention: ", H, "x", W,
            " not divisible by patch size ", patch);
    std::vector<Tensor<T>> items;
    items.reserve(static_cast<size_t>(N));
    for (int64_t n = 0; n < N; ++n) {
        Tensor<T> one = N == 1 ? x : select_batch(x, n);
        Tensor<T> p = extract_patches(one, patch, patch);
        Tensor<T> norms = sqrt_clamped(sum_axis2d(mul(p, p), 1), eps);
        Tensor<T> unit = row_scale(p, reciprocal(norms));
        Tensor<T> scores = matmul(unit, transpose2d(unit));
        Tensor<T> attn = softmax(scores, 1);
        Tensor<T> mixed = matmul(attn, p);
        items.push_back(fold_patches(mixed, 1, C, H, W, patch, patch));
    }
    return N == 1 ? items[0] : concat(items, 0);
}

// Range-domain propagation: per position, softmax over the k x k neighborhood
// of channel dot products, then a weighted mix of neighbor vectors. In-image
// neighbors only.
template <typename T>
Tensor<T> range_propagation(const Tensor<T>& x, int64_t k) {
    const int64_t N = x.dim(0), H = x.dim(2), W = x.dim(3);
    Tensor<T> logits = add(neighborhood_dot(x, k), neighborhood_bias<T>(N, H, W, k));
    Tensor<T> weights = softmax(logits, 1);
    return neighborhood_mix(x, weights, k);
}

// Spatial-domain propagation: Gaussian-of-distance average over the whole
// map, per channel, with weights normalized to sum 1 per position.
// `weights` comes from spatial_mix_weights (cacheable per H,W,sigma).
template <typename T>
Tensor<T> spatial_propagation(const Tensor<T>& x, const Tensor<T>& weights) {
    require(x.ndim() == 4, "spatial_propagation: input must be rank-4 NCHW");
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t HW = H * W;
    require(weights.ndim() == 2 && weights.dim(0) == HW && weights.dim(1) == HW,
            "spatial_propagation: weights must be [", HW, ",", HW, "]");
    std::vector<Tensor<T>> items;
    items.reserve(static_cast<size_t>(N));
    for (int64_t n = 0; n < N; ++n) {
        Tensor<T> one = N == 1 ? x : select_batch(x, n);
        Tensor<T> cols = transpose2d(reshape(one, {C, HW}));  // HW x C
        Tensor<T> mixed = matmul(weights, cols);
        items.push_back(reshape(transpose2d(mixed), {1, C, H, W}));
    }
    return N == 1 ? items[0] : concat(items, 0);
}

}  // namespace inpaint
