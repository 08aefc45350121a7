#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "inpaint/image.hpp"
#include "inpaint/random.hpp"
#include "inpaint/tensor.hpp"

namespace inpaint {

// Binary validity mask: 1 = valid pixel, 0 = hole.
struct Mask {
    int64_t height = 0;
    int64_t width = 0;
    std::vector<uint8_t> data;  // exactly 0 or 1

    uint8_t at(int64_t y, int64_t x) const { return data[y * width + x]; }
    uint8_t& at(int64_t y, int64_t x) { return data[y * width + x]; }

    double hole_ratio() const {
        int64_t holes = 0;
        for (uint8_t v : data) holes += v == 0;
        return static_cast<double>(holes) / static_cast<double>(height * width);
    }

    bool has_hole() const {
        for (uint8_t v : data)
            if (v == 0) return true;
        return false;
    }
};

template <typename T>
Tensor<T> mask_to_tensor(const Mask& m) {
    std::vector<T> v(m.data.size());
    for (size_t i = 0; i < m.data.size(); ++i) v[i] = static_cast<T>(m.data[i]);
    return Tensor<T>::from({1, 1, m.height, m.width}, std::move(v));
}

// Hole-ratio class, 10% steps.
enum class MaskBucket { B10_20 = 0, B20_30 = 1, B30_40 = 2, B40_50 = 3 };

inline const std::array<MaskBucket, 4>& all_buckets() {
    static const std::array<MaskBucket, 4> buckets = {MaskBucket::B10_20, MaskBucket::B20_30,
                                                      MaskBucket::B30_40, MaskBucket::B40_50};
    return buckets;
}

inline std::string bucket_name(MaskBucket b) {
    switch (b) {
        case MaskBucket::B10_20: return "10-20";
        case MaskBucket::B20_30: return "20-30";
        case MaskBucket::B30_40: return "30-40";
        case MaskBucket::B40_50: return "40-50";
    }
    return "?";
}

inline MaskBucket parse_bucket(const std::string& s) {
    for (MaskBucket b : all_buckets())
        if (bucket_name(b) == s) return b;
    throw ConfigError("unknown mask bucket '" + s + "' (expected 10-20, 20-30, 30-40 or 40-50)");
}

inline std::pair<double, double> bucket_range(MaskBucket b) {
    const double lo = 0.1 * (static_cast<int>(b) + 1);
    return {lo, lo + 0.1};
}

// Centered square hole covering a quarter of the image (side h/2).
inline Mask generate_center_mask(int64_t h, int64_t w) {
    require<ConfigError>(h % 2 == 0 && w % 2 == 0, "center mask needs even dimensions, got ", h,
                         "x", w);
    Mask m{h, w, std::vector<uint8_t>(static_cast<size_t>(h * w), 1)};
    for (int64_t y = h / 4; y < h - h / 4; ++y)
        for (int64_t x = w / 4; x < w - w / 4; ++x) m.at(y, x) = 0;
    return m;
}

namespace detail {

// paints a disc of holes, returns how many valid pixels it flipped
inline int64_t paint_disc(Mask& m, double cy, double cx, double radius) {
    int64_t flipped = 0;
    const int64_t r = static_cast<int64_t>(std::ceil(radius));
    const int64_t y0 = std::max<int64_t>(0, static_cast<int64_t>(cy) - r);
    const int64_t y1 = std::min<int64_t>(m.height - 1, static_cast<int64_t>(cy) + r);
    const int64_t x0 = std::max<int64_t>(0, static_cast<int64_t>(cx) - r);
    const int64_t x1 = std::min<int64_t>(m.width - 1, static_cast<int64_t>(cx) + r);
    for (int64_t y = y0; y <= y1; ++y)
        for (int64_t x = x0; x <= x1; ++x) {
            const double dy = y - cy, dx = x - cx;
            if (dy * dy + dx * dx <= radius * radius && m.at(y, x) == 1) {
                m.at(y, x) = 0;
                ++flipped;
            }
        }
    return flipped;
}

}  // namespace detail

// Union of random thick strokes (random-walk brush). Painting stops the
// moment the hole ratio crosses a target 35% into the bucket, which keeps the
// realized ratio strictly inside it: a single brush disc covers at most
// ~3.2% of the image, less than the remaining 6.5% headroom. Deterministic
// per (h, w, bucket, seed); retries with fresh draws up to `max_attempts`
// before giving up.
inline Mask generate_irregular_mask(int64_t h, int64_t w, MaskBucket bucket, uint64_t seed,
                                    int max_attempts = 100) {
    require<ConfigError>(h >= 8 && w >= 8, "irregular mask needs dimensions >= 8, got ", h, "x", w);
    const auto [lo, hi] = bucket_range(bucket);
    const double target = lo + 0.35 * (hi - lo);
    const double total = static_cast<double>(h * w);
    Rng rng(mix64(static_cast<uint64_t>(h), static_cast<uint64_t>(w),
                  static_cast<uint64_t>(bucket), seed));

    const double min_side = static_cast<double>(std::min(h, w));
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        Mask m{h, w, std::vector<uint8_t>(static_cast<size_t>(h * w), 1)};
        int64_t holes = 0;
        const int64_t walks = uniform_int(rng, 6, 14);
        for (int64_t walk = 0; walk < walks; ++walk) {
            double y = uniform<double>(rng, 0, static_cast<double>(h - 1));
            double x = uniform<double>(rng, 0, static_cast<double>(w - 1));
            double angle = uniform<double>(rng, 0, 2 * M_PI);
            const double radius = uniform<double>(rng, 0.04 * min_side, 0.10 * min_side);
            const int64_t steps = uniform_int(rng, 40, 120);
            for (int64_t s = 0; s < steps; ++s) {
                holes += detail::paint_disc(m, y, x, radius);
                if (holes / total >= target) return m;
                angle += uniform<double>(rng, -0.7, 0.7);
                const double stride = uniform<double>(rng, 1.0, radius + 1.0);
                y = std::clamp(y + stride * std::sin(angle), 0.0, static_cast<double>(h - 1));
                x = std::clamp(x + stride * std::cos(angle), 0.0, static_cast<double>(w - 1));
            }
        }
        // not enough coverage this attempt; redraw everything
    }
    throw NumericError(cat("irregular mask: could not reach bucket ", bucket_name(bucket), " on ",
                           h, "x", w, " after ", max_attempts, " attempts"));
}

// Masks travel as PPM images: hole pixels black, valid pixels white.
inline void save_mask(const Mask& m, const std::string& path) {
    Image img{m.height, m.width, std::vector<double>(static_cast<size_t>(m.height * m.width * 3))};
    for (int64_t y = 0; y < m.height; ++y)
        for (int64_t x = 0; x < m.width; ++x)
            for (int64_t c = 0; c < 3; ++c) img.at(y, x, c) = m.at(y, x) ? 1.0 : 0.0;
    save_image(img, path);
}

inline Mask load_mask(const std::string& path) {
    Image img = load_image(path);
    Mask m{img.height, img.width,
           std::vector<uint8_t>(static_cast<size_t>(img.height * img.width))};
    for (int64_t y = 0; y < img.height; ++y)
        for (int64_t x = 0; x < img.width; ++x) {
            const double v = img.at(y, x, 0);
            require<DataError>((v == 0.0 || v == 1.0) && img.at(y, x, 1) == v &&
                                   img.at(y, x, 2) == v,
                               path, ": mask pixel at (", y, ",", x,
                               ") is not pure black or white");
            m.at(y, x) = v == 1.0 ? 1 : 0;
        }
    return m;
}

// Nearest-neighbor resize; keeps the mask binary.
inline Mask resize_mask(const Mask& m, int64_t h, int64_t w) {
    if (m.height == h && m.width == w) return m;
    Mask out{h, w, std::vector<uint8_t>(static_cast<size_t>(h * w))};
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            const int64_t sy = std::min(m.height - 1, y * m.height / h);
            const int64_t sx = std::min(m.width - 1, x * m.width / w);
            out.at(y, x) = m.at(sy, sx);
        }
    return out;
}

}  // namespace inpaint
