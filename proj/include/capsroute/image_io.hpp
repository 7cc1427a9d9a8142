// 8-bit grayscale mask I/O: PGM (P2/P5) natively, PNG via libpng.
#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <png.h>

#include "capsroute/tensor.hpp"

namespace capsroute {

struct GrayImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> pixels;  // row-major
};

namespace detail {

inline int next_pgm_token(std::istream& in, std::string& token) {
    token.clear();
    char c;
    while (in.get(c)) {
        if (c == '#') {
            std::string line;
            std::getline(in, line);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!token.empty()) return 1;
            continue;
        }
        token.push_back(c);
    }
    return token.empty() ? 0 : 1;
}

inline GrayImage read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_pgm: cannot open " + path.string());
    std::string magic;
    if (!next_pgm_token(in, magic) || (magic != "P5" && magic != "P2")) {
        throw std::runtime_error("read_pgm: unsupported magic in " + path.string());
    }
    std::string tok;
    std::size_t dims[3];
    for (auto& d : dims) {
        if (!next_pgm_token(in, tok)) throw std::runtime_error("read_pgm: truncated header");
        d = static_cast<std::size_t>(std::stoull(tok));
    }
    const std::size_t width = dims[0], height = dims[1], maxval = dims[2];
    if (maxval == 0 || maxval > 255) {
        throw std::runtime_error("read_pgm: only 8-bit images are supported");
    }
    GrayImage img{height, width, std::vector<std::uint8_t>(width * height)};
    if (magic == "P5") {
        in.read(reinterpret_cast<char*>(img.pixels.data()),
                static_cast<std::streamsize>(img.pixels.size()));
        if (static_cast<std::size_t>(in.gcount()) != img.pixels.size()) {
            throw std::runtime_error("read_pgm: truncated pixel data in " + path.string());
        }
    } else {
        for (auto& px : img.pixels) {
            if (!next_pgm_token(in, tok)) throw std::runtime_error("read_pgm: truncated data");
            px = static_cast<std::uint8_t>(std::stoul(tok));
        }
    }
    if (maxval != 255) {
        for (auto& px : img.pixels) {
            px = static_cast<std::uint8_t>(px * 255u / maxval);
        }
    }
    return img;
}

struct PngCloser {
    std::FILE* fp = nullptr;
    ~PngCloser() {
        if (fp) std::fclose(fp);
    }
};

inline GrayImage read_png(const std::filesystem::path& path) {
    PngCloser file{std::fopen(path.string().c_str(), "rb")};
    if (!file.fp) throw std::runtime_error("read_png: cannot open " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("read_png: libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("read_png: failed to decode " + path.string());
    }
    png_init_io(png, file.fp);
    png_read_info(png, info);

    // Normalize anything we might meet to 8-bit grayscale.
    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (depth == 16) png_set_strip_16(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
        color == PNG_COLOR_TYPE_PALETTE) {
        png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    }
    png_read_update_info(png, info);

    GrayImage img;
    img.height = png_get_image_height(png, info);
    img.width = png_get_image_width(png, info);
    img.pixels.resize(img.height * img.width);
    std::vector<png_bytep> rows(img.height);
    for (std::size_t r = 0; r < img.height; ++r) {
        rows[r] = img.pixels.data() + r * img.width;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

}  // namespace detail

inline GrayImage read_gray_image(const std::filesystem::path& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw std::runtime_error("read_gray_image: cannot open " + path.string());
    char magic[2] = {0, 0};
    probe.read(magic, 2);
    probe.close();
    if (magic[0] == 'P' && (magic[1] == '5' || magic[1] == '2')) {
        return detail::read_pgm(path);
    }
    if (static_cast<unsigned char>(magic[0]) == 0x89 && magic[1] == 'P') {
        return detail::read_png(path);
    }
    throw std::runtime_error("read_gray_image: unsupported format in " + path.string());
}

inline void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_pgm: cannot open " + path.string());
    out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()),
              static_cast<std::streamsize>(img.pixels.size()));
}

inline void write_png(const std::filesystem::path& path, const GrayImage& img) {
    detail::PngCloser file{std::fopen(path.string().c_str(), "wb")};
    if (!file.fp) throw std::runtime_error("write_png: cannot open " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("write_png: libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("write_png: failed to encode " + path.string());
    }
    png_init_io(png, file.fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(img.height);
    std::vector<std::uint8_t> pixels = img.pixels;
    for (std::size_t r = 0; r < img.height; ++r) {
        rows[r] = pixels.data() + r * img.width;
    }
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

/// Prediction values on [0, 1].
inline Tensor to_unit_tensor(const GrayImage& img) {
    Tensor t({img.height, img.width});
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        t.data()[i] = static_cast<double>(img.pixels[i]) / 255.0;
    }
    return t;
}

/// Ground-truth binarization: >= 128 maps to 1.
inline Tensor to_binary_tensor(const GrayImage& img) {
    Tensor t({img.height, img.width});
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        t.data()[i] = img.pixels[i] >= 128 ? 1.0 : 0.0;
    }
    return t;
}

inline GrayImage from_unit_tensor(const Tensor& t) {
    if (t.rank() != 2) throw shape_error("from_unit_tensor: expected a 2-D grid");
    GrayImage img{t.dim(0), t.dim(1), std::vector<std::uint8_t>(t.size())};
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double v = std::min(std::max(t.data()[i], 0.0), 1.0);
        img.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    return img;
}

}  // namespace capsroute
