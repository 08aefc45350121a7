#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "inpaint/ops.hpp"
#include "inpaint/tensor.hpp"

#ifdef INPAINT_WITH_PNG
#include <png.h>
#endif

namespace inpaint {

// 3-channel image with values in [0,1], interleaved RGB rows.
struct Image {
    int64_t height = 0;
    int64_t width = 0;
    std::vector<double> data;  // height * width * 3

    double& at(int64_t y, int64_t x, int64_t c) { return data[(y * width + x) * 3 + c]; }
    double at(int64_t y, int64_t x, int64_t c) const { return data[(y * width + x) * 3 + c]; }

    static Image filled(int64_t h, int64_t w, double v) {
        return Image{h, w, std::vector<double>(static_cast<size_t>(h * w * 3), v)};
    }
};

// planar [1,3,H,W] tensor from an interleaved image
template <typename T>
Tensor<T> image_to_tensor(const Image& img) {
    std::vector<T> v(static_cast<size_t>(3 * img.height * img.width));
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < img.height; ++y)
            for (int64_t x = 0; x < img.width; ++x)
                v[(c * img.height + y) * img.width + x] = static_cast<T>(img.at(y, x, c));
    return Tensor<T>::from({1, 3, img.height, img.width}, std::move(v));
}

// first batch item of a [N,3,H,W] tensor back to an interleaved image
template <typename T>
Image tensor_to_image(const Tensor<T>& t, int64_t n = 0) {
    require(t.ndim() == 4 && t.dim(1) == 3, "tensor_to_image: need [N,3,H,W], got ",
            shape_str(t.shape()));
    const int64_t H = t.dim(2), W = t.dim(3);
    Image img{H, W, std::vector<double>(static_cast<size_t>(H * W * 3))};
    for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x)
                img.at(y, x, c) = static_cast<double>(t.at4(n, c, y, x));
    return img;
}

inline Image resize_image(const Image& img, int64_t h, int64_t w) {
    if (img.height == h && img.width == w) return img;
    return tensor_to_image(bilinear_resize(image_to_tensor<double>(img), h, w));
}

// ---------------------------------------------------------------------------
// PPM P6, 8-bit, maxval 255. The mandatory on-disk format: byte-exact
// round-trips, no codec dependencies.

namespace detail {

// one whitespace-delimited token, skipping '#' comments; returns false at EOF
inline bool ppm_token(const std::vector<unsigned char>& bytes, size_t& pos, std::string& out) {
    out.clear();
    while (pos < bytes.size()) {
        const unsigned char c = bytes[pos];
        if (c == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else if (std::isspace(c)) {
            ++pos;
        } else {
            break;
        }
    }
    while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#')
        out.push_back(static_cast<char>(bytes[pos++]));
    return !out.empty();
}

inline int64_t ppm_int(const std::vector<unsigned char>& bytes, size_t& pos, const char* what,
                       const std::string& path) {
    std::string tok;
    const size_t at = pos;
    require<DataError>(ppm_token(bytes, pos, tok), path, ": unexpected end of header at byte ", at,
                       " while reading ", what);
    int64_t value = 0;
    for (char c : tok) {
        require<DataError>(c >= '0' && c <= '9', path, ": malformed ", what, " '", tok,
                           "' at byte ", at);
        value = value * 10 + (c - '0');
    }
    return value;
}

}  // namespace detail

inline Image load_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require<DataError>(in.good(), path, ": cannot open file");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    size_t pos = 0;
    std::string magic;
    require<DataError>(detail::ppm_token(bytes, pos, magic) && magic == "P6", path,
                       ": not a P6 ppm (magic '", magic, "' at byte 0)");
    const int64_t w = detail::ppm_int(bytes, pos, "width", path);
    const int64_t h = detail::ppm_int(bytes, pos, "height", path);
    const int64_t maxval = detail::ppm_int(bytes, pos, "maxval", path);
    require<DataError>(w >= 1 && h >= 1, path, ": bad dimensions ", w, "x", h);
    require<DataError>(maxval == 255, path, ": only maxval 255 supported, got ", maxval);
    require<DataError>(pos < bytes.size() && std::isspace(bytes[pos]), path,
                       ": missing whitespace after maxval at byte ", pos);
    ++pos;  // exactly one whitespace byte before payload
    const size_t need = static_cast<size_t>(w * h * 3);
    require<DataError>(bytes.size() - pos >= need, path, ": truncated payload at byte ",
                       bytes.size(), ", need ", pos + need, " bytes");

    Image img{h, w, std::vector<double>(need)};
    for (size_t i = 0; i < need; ++i) img.data[i] = bytes[pos + i] / 255.0;
    return img;
}

inline void save_ppm(const Image& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require<DataError>(out.good(), path, ": cannot open for writing");
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> bytes(img.data.size());
    for (size_t i = 0; i < img.data.size(); ++i) {
        const double v = std::clamp(img.data[i], 0.0, 1.0);
        bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require<DataError>(out.good(), path, ": write failed");
}

#ifdef INPAINT_WITH_PNG
inline Image load_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    require<DataError>(fp != nullptr, path, ": cannot open file");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw DataError(path + ": png decode failed");
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    const int64_t w = png_get_image_width(png, info);
    const int64_t h = png_get_image_height(png, info);
    std::vector<unsigned char> row(static_cast<size_t>(w * 3));
    Image img{h, w, std::vector<double>(static_cast<size_t>(h * w * 3))};
    for (int64_t y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int64_t i = 0; i < w * 3; ++i) img.data[y * w * 3 + i] = row[i] / 255.0;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

inline void save_png(const Image& img, const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    require<DataError>(fp != nullptr, path, ": cannot open for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw DataError(path + ": png encode failed");
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<unsigned char> row(static_cast<size_t>(img.width * 3));
    for (int64_t y = 0; y < img.height; ++y) {
        for (int64_t i = 0; i < img.width * 3; ++i)
            row[i] = static_cast<unsigned char>(
                std::lround(std::clamp(img.data[y * img.width * 3 + i], 0.0, 1.0) * 255.0));
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}
#endif

inline bool has_image_extension(const std::filesystem::path& p) {
    auto ext = p.extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(c));
    if (ext == ".ppm") return true;
#ifdef INPAINT_WITH_PNG
    if (ext == ".png") return true;
#endif
    return false;
}

inline Image load_image(const std::string& path) {
    auto ext = std::filesystem::path(path).extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(c));
#ifdef INPAINT_WITH_PNG
    if (ext == ".png") return load_png(path);
#else
    require<DataError>(ext != ".png", path, ": png support is not compiled in");
#endif
    return load_ppm(path);
}

inline void save_image(const Image& img, const std::string& path) {
    auto ext = std::filesystem::path(path).extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(c));
#ifdef INPAINT_WITH_PNG
    if (ext == ".png") {
        save_png(img, path);
        return;
    }
#else
    require<DataError>(ext != ".png", path, ": png support is not compiled in");
#endif
    save_ppm(img, path);
}

}  // namespace inpaint
