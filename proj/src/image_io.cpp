// Copyright Contributors to the splatlift project
// SPDX-License-Identifier: Apache-2.0

#include "splatlift/image_io.hpp"

#include "splatlift/error.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace splatlift {

namespace {

void check_image(const Image8 &image)
{
    if (image.width <= 0 || image.height <= 0) {
        throw ValidationError("image: dimensions must be positive");
    }
    if (image.channels != 1 && image.channels != 3) {
        throw ValidationError("image: only 1 or 3 channels supported");
    }
    if (image.pixels.size() !=
        static_cast<std::size_t>(image.width) * static_cast<std::size_t>(image.height) * image.channels) {
        throw ValidationError("image: pixel buffer size does not match dimensions");
    }
}

struct ReadCursor {
    const std::vector<std::uint8_t> *bytes;
    std::size_t pos = 0;
};

void png_error_fn(png_structp png, png_const_charp msg)
{
    auto *text = static_cast<std::string *>(png_get_error_ptr(png));
    if (text) {
        *text = msg;
    }
    png_longjmp(png, 1);
}

void png_warning_fn(png_structp, png_const_charp) {}

std::vector<std::uint8_t> slurp(const std::filesystem::path &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "'");
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string lower_extension(const std::filesystem::path &path)
{
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

} // namespace

std::vector<std::uint8_t> encode_png(const Image8 &image)
{
    check_image(image);
    std::string err;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
    if (!png) {
        throw IoError("png: cannot create writer");
    }
    png_infop info = png_create_info_struct(png);
    std::vector<std::uint8_t> out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("png encode failed: " + err);
    }
    png_set_write_fn(
        png, &out,
        [](png_structp p, png_bytep data, png_size_t len) {
            auto *buf = static_cast<std::vector<std::uint8_t> *>(png_get_io_ptr(p));
            buf->insert(buf->end(), data, data + len);
        },
        nullptr);
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                 image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(image.width) * image.channels;
    for (int y = 0; y < image.height; ++y) {
        png_write_row(png, const_cast<png_bytep>(image.pixels.data() + y * stride));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

Image8 decode_png(const std::vector<std::uint8_t> &bytes)
{
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
        throw FormatError("png: missing PNG signature");
    }
    std::string err;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
    if (!png) {
        throw IoError("png: cannot create reader");
    }
    png_infop info = png_create_info_struct(png);
    ReadCursor cursor{&bytes, 0};
    Image8 img;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("png decode failed: " + err);
    }
    png_set_read_fn(png, &cursor, [](png_structp p, png_bytep data, png_size_t len) {
        auto *c = static_cast<ReadCursor *>(png_get_io_ptr(p));
        if (c->pos + len > c->bytes->size()) {
            png_error(p, "truncated data");
        }
        std::memcpy(data, c->bytes->data() + c->pos, len);
        c->pos += len;
    });
    png_read_info(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (bit_depth != 8 && !(color == PNG_COLOR_TYPE_GRAY && bit_depth < 8)) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("png: only 8-bit images are supported (bit depth " + std::to_string(bit_depth) + ")");
    }
    if (color == PNG_COLOR_TYPE_GRAY) {
        if (bit_depth < 8) {
            png_set_expand_gray_1_2_4_to_8(png);
        }
        img.channels = 1;
    } else if (color == PNG_COLOR_TYPE_RGB) {
        img.channels = 3;
    } else if (color == PNG_COLOR_TYPE_PALETTE) {
        png_set_palette_to_rgb(png);
        img.channels = 3;
    } else if (color == PNG_COLOR_TYPE_RGBA) {
        png_set_strip_alpha(png);
        img.channels = 3;
    } else {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("png: unsupported color type " + std::to_string(color));
    }
    png_read_update_info(png, info);
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
    img.pixels.resize(stride * img.height);
    for (int y = 0; y < img.height; ++y) {
        png_read_row(png, img.pixels.data() + y * stride, nullptr);
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png(const std::filesystem::path &path, const Image8 &image)
{
    const std::vector<std::uint8_t> bytes = encode_png(image);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write '" + path.string() + "'");
    }
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("write failed for '" + path.string() + "'");
    }
}

Image8 read_png(const std::filesystem::path &path)
{
    try {
        return decode_png(slurp(path));
    } catch (const FormatError &e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_pgm(const std::filesystem::path &path, const Image8 &image)
{
    check_image(image);
    if (image.channels != 1) {
        throw ValidationError("pgm: only grayscale images can be written");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write '" + path.string() + "'");
    }
    out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
    out.write(reinterpret_cast<const char *>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
    if (!out) {
        throw IoError("write failed for '" + path.string() + "'");
    }
}

Image8 read_pgm(const std::filesystem::path &path)
{
    const std::vector<std::uint8_t> bytes = slurp(path);
    std::size_t pos = 0;
    auto fail = [&](const std::string &what) {
        return FormatError(path.string() + ": " + what + " at byte " + std::to_string(pos));
    };
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') {
                    ++pos;
                }
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&] {
        skip_space();
        if (pos >= bytes.size() || !std::isdigit(bytes[pos])) {
            throw fail("expected integer");
        }
        long v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            if (v > (1L << 30)) {
                throw fail("integer too large");
            }
            ++pos;
        }
        return static_cast<int>(v);
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '2')) {
        if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '6' || bytes[1] == '3')) {
            throw FormatError(path.string() + ": color PPM is not a grayscale mask");
        }
        throw FormatError(path.string() + ": not a PGM file (expected P5 or P2)");
    }
    const bool binary = bytes[1] == '5';
    pos = 2;
    Image8 img;
    img.width = read_int();
    img.height = read_int();
    const int maxval = read_int();
    if (img.width <= 0 || img.height <= 0) {
        throw fail("invalid dimensions");
    }
    if (maxval <= 0 || maxval > 255) {
        throw fail("only 8-bit PGM supported (maxval " + std::to_string(maxval) + ")");
    }
    const std::size_t count = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height);
    img.pixels.resize(count);
    auto rescale = [&](int v) {
        return static_cast<std::uint8_t>(maxval == 255 ? v : std::lround(255.0 * v / maxval));
    };
    if (binary) {
        ++pos; // single whitespace after maxval
        if (bytes.size() < pos + count) {
            throw FormatError(path.string() + ": truncated payload, expected " + std::to_string(count) +
                              " bytes, found " + std::to_string(bytes.size() - std::min(pos, bytes.size())));
        }
        for (std::size_t i = 0; i < count; ++i) {
            const int v = bytes[pos + i];
            if (v > maxval) {
                throw fail("sample exceeds maxval");
            }
            img.pixels[i] = rescale(v);
        }
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            const int v = read_int();
            if (v > maxval) {
                throw fail("sample exceeds maxval");
            }
            img.pixels[i] = rescale(v);
        }
    }
    return img;
}

FeatureMap read_mask(const std::filesystem::path &path)
{
    const std::string ext = lower_extension(path);
    Image8 img;
    if (ext == ".pgm") {
        img = read_pgm(path);
    } else {
        img = read_png(path);
        if (img.channels != 1) {
            throw FormatError(path.string() + ": mask must be a grayscale image");
        }
    }
    FeatureMap map(img.height, img.width, 1);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        map.data[i] = static_cast<float>(img.pixels[i]) / 255.0f;
    }
    map.camera_id = path.stem().string();
    return map;
}

Image8 to_image8(const std::vector<float> &values, int width, int height, int channels)
{
    Image8 img;
    img.width = width;
    img.height = height;
    img.channels = channels;
    img.pixels.resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const float v = std::isfinite(values[i]) ? values[i] : 0.0f;
        img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
    }
    check_image(img);
    return img;
}

Image8 to_image8(const FeatureMap &map) { return to_image8(map.data, map.width, map.height, map.channels); }

void write_mask(const std::filesystem::path &path, const FeatureMap &mask)
{
    if (mask.channels != 1) {
        throw ValidationError("write_mask: mask must have one channel");
    }
    const Image8 img = to_image8(mask);
    if (lower_extension(path) == ".pgm") {
        write_pgm(path, img);
    } else {
        write_png(path, img);
    }
}

} // namespace splatlift
