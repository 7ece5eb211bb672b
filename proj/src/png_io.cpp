#include "echoseg/png_io.h"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>
#include <string>

#include "echoseg/errors.h"
#include "echoseg/taxonomy.h"

namespace echoseg {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw IoError("cannot open '" + path.string() + "'");
    return f;
}

void on_png_warning(png_structp, png_const_charp) {}

void on_png_error(png_structp png, png_const_charp msg) {
    auto* buffer = static_cast<std::string*>(png_get_error_ptr(png));
    if (buffer) *buffer = msg;
    png_longjmp(png, 1);
}

// Owns the libpng handles for one read or write.
struct ReadState {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~ReadState() { png_destroy_read_struct(&png, info ? &info : nullptr, nullptr); }
};

struct WriteState {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~WriteState() { png_destroy_write_struct(&png, info ? &info : nullptr); }
};

void write_png(const std::filesystem::path& path, int width, int height, int color_type, const std::uint8_t* data,
               int bytes_per_pixel) {
    if (width <= 0 || height <= 0) throw ValidationError("write_png: empty image");
    FilePtr file = open_file(path, "wb");
    std::string message;
    WriteState st;
    st.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, on_png_error, on_png_warning);
    if (!st.png) throw IoError("png_create_write_struct failed");
    st.info = png_create_info_struct(st.png);
    if (!st.info) throw IoError("png_create_info_struct failed");
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y)
        rows[y] = const_cast<png_bytep>(data + static_cast<std::size_t>(y) * width * bytes_per_pixel);
    if (setjmp(png_jmpbuf(st.png))) throw IoError("failed writing '" + path.string() + "': " + message);
    png_init_io(st.png, file.get());
    png_set_IHDR(st.png, st.info, width, height, 8, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(st.png, st.info);
    png_write_image(st.png, rows.data());
    png_write_end(st.png, nullptr);
}

}  // namespace

GrayPng read_png_gray(const std::filesystem::path& path) {
    FilePtr file = open_file(path, "rb");
    unsigned char sig[8] = {};
    if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw IoError("'" + path.string() + "' is not a PNG file");

    std::string message;
    ReadState st;
    st.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, on_png_error, on_png_warning);
    if (!st.png) throw IoError("png_create_read_struct failed");
    st.info = png_create_info_struct(st.png);
    if (!st.info) throw IoError("png_create_info_struct failed");

    GrayPng out;
    std::vector<png_bytep> rows;
    std::vector<std::uint8_t> raw;
    int color_type = 0;
    if (setjmp(png_jmpbuf(st.png))) throw IoError("failed reading '" + path.string() + "': " + message);
    png_init_io(st.png, file.get());
    png_set_sig_bytes(st.png, 8);
    png_read_info(st.png, st.info);
    color_type = png_get_color_type(st.png, st.info);
    const int depth = png_get_bit_depth(st.png, st.info);
    if (color_type != PNG_COLOR_TYPE_GRAY && color_type != PNG_COLOR_TYPE_GRAY_ALPHA) {
        // Leave the setjmp region before throwing.
        out.bit_depth = -1;
    } else {
        if (depth < 8) png_set_expand_gray_1_2_4_to_8(st.png);
        if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(st.png);
        if (depth == 16) png_set_swap(st.png);
        png_read_update_info(st.png, st.info);
        out.width = static_cast<int>(png_get_image_width(st.png, st.info));
        out.height = static_cast<int>(png_get_image_height(st.png, st.info));
        out.bit_depth = depth == 16 ? 16 : 8;
        const std::size_t stride = png_get_rowbytes(st.png, st.info);
        raw.resize(stride * out.height);
        rows.resize(out.height);
        for (int y = 0; y < out.height; ++y) rows[y] = raw.data() + stride * y;
        png_read_image(st.png, rows.data());
        png_read_end(st.png, nullptr);
    }
    if (out.bit_depth < 0) throw ValidationError("'" + path.string() + "' is not a single-channel PNG");

    out.values.resize(static_cast<std::size_t>(out.width) * out.height);
    if (out.bit_depth == 16) {
        for (std::size_t i = 0; i < out.values.size(); ++i) {
            std::uint16_t v;
            std::memcpy(&v, raw.data() + 2 * i, 2);
            out.values[i] = v;
        }
    } else {
        std::copy(raw.begin(), raw.begin() + out.values.size(), out.values.begin());
    }
    return out;
}

FloatImage read_intensity_png(const std::filesystem::path& path) {
    GrayPng png = read_png_gray(path);
    const float scale = png.bit_depth == 16 ? 1.0f / 65535.0f : 1.0f / 255.0f;
    FloatImage img(png.height, png.width);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = png.values[i] * scale;
    return img;
}

LabelImage read_label_png(const std::filesystem::path& path) {
    GrayPng png = read_png_gray(path);
    if (png.bit_depth != 8) throw ValidationError("label map '" + path.string() + "' must be 8-bit");
    LabelImage img(png.height, png.width);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        if (png.values[i] > kNumForegroundLabels)
            throw ValidationError("label map '" + path.string() + "' has value " + std::to_string(png.values[i]));
        img.pixels[i] = static_cast<std::uint8_t>(png.values[i]);
    }
    return img;
}

void write_png_gray8(const std::filesystem::path& path, const LabelImage& img) {
    write_png(path, img.width, img.height, PNG_COLOR_TYPE_GRAY, img.pixels.data(), 1);
}

std::uint8_t intensity_to_u8(float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

void write_intensity_png(const std::filesystem::path& path, const FloatImage& img) {
    LabelImage bytes(img.height, img.width);
    std::transform(img.pixels.begin(), img.pixels.end(), bytes.pixels.begin(), intensity_to_u8);
    write_png_gray8(path, bytes);
}

void write_png_rgb8(const std::filesystem::path& path, int width, int height, std::span<const std::uint8_t> rgb) {
    if (rgb.size() != static_cast<std::size_t>(width) * height * 3)
        throw ValidationError("write_png_rgb8: buffer size does not match dimensions");
    write_png(path, width, height, PNG_COLOR_TYPE_RGB, rgb.data(), 3);
}

}  // namespace echoseg
