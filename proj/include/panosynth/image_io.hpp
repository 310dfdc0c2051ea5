#pragma once

// Depth rasters as PFM ("Pf", little-endian, bottom-up scanlines) and color
// panoramas as 8-bit RGB PNG.

#include <png.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "raster.hpp"

namespace panosynth {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline DepthPanorama read_depth_pfm(const std::filesystem::path& path,
                                    std::optional<ImageDims> expected = std::nullopt)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open depth file " + path.string());
    std::string magic;
    int width = 0, height = 0;
    double scale = 0.0;
    in >> magic;
    if (magic != "Pf") throw IoError(path.string() + ": bad PFM magic '" + magic + "' (expected Pf)");
    in >> width >> height >> scale;
    if (!in || width <= 0 || height <= 0 || scale == 0.0)
        throw IoError(path.string() + ": malformed PFM header");
    in.get(); // single whitespace before the raster
    const ImageDims dims{width, height};
    if (expected && !(dims == *expected))
        throw IoError(path.string() + ": dimension mismatch, file is " + std::to_string(width) + "x" +
                      std::to_string(height) + ", expected " + std::to_string(expected->width) + "x" +
                      std::to_string(expected->height));
    std::vector<std::uint32_t> raw(dims.size());
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
    if (in.gcount() != static_cast<std::streamsize>(raw.size() * 4))
        throw IoError(path.string() + ": truncated PFM raster");

    const bool file_little = scale < 0.0;
    const bool host_little = std::endian::native == std::endian::little;
    DepthPanorama out(dims);
    for (int j = 0; j < height; ++j) {
        const int file_row = height - 1 - j;
        for (int i = 0; i < width; ++i) {
            std::uint32_t bits = raw[static_cast<size_t>(file_row) * width + i];
            if (file_little != host_little) bits = __builtin_bswap32(bits);
            const float v = std::bit_cast<float>(bits);
            out(i, j) = (std::isfinite(v) && v > 0.0f) ? v : kMissingDepth;
        }
    }
    return out;
}

/// Missing depths are stored as 0.
inline void write_depth_pfm(const DepthPanorama& depth, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write depth file " + path.string());
    const bool host_little = std::endian::native == std::endian::little;
    out << "Pf\n" << depth.width() << " " << depth.height() << "\n" << "-1.0\n";
    std::vector<std::uint32_t> raw(depth.size());
    for (int j = 0; j < depth.height(); ++j) {
        const int file_row = depth.height() - 1 - j;
        for (int i = 0; i < depth.width(); ++i) {
            const float v = depth(i, j);
            std::uint32_t bits = std::bit_cast<std::uint32_t>(has_depth(v) ? v : 0.0f);
            if (!host_little) bits = __builtin_bswap32(bits);
            raw[static_cast<size_t>(file_row) * depth.width() + i] = bits;
        }
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
    if (!out) throw IoError("failed writing " + path.string());
}

inline std::uint8_t quantize_channel(float v)
{
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

namespace detail {

inline RgbPanorama decode_rgb(png_image& image, const std::string& what, bool require_equirect)
{
    struct Guard {
        png_image* img;
        ~Guard() { png_image_free(img); }
    } guard{&image};
    if (image.format != PNG_FORMAT_RGB)
        throw IoError(what + ": only 8-bit RGB PNG is supported");
    const ImageDims dims{static_cast<int>(image.width), static_cast<int>(image.height)};
    if (require_equirect && !dims.is_equirect())
        throw IoError(what + ": panorama must be 2:1, got " + std::to_string(dims.width) + "x" +
                      std::to_string(dims.height));
    std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr))
        throw IoError(what + ": " + image.message);
    RgbPanorama out(dims);
    auto px = out.pixels();
    for (size_t k = 0; k < px.size(); ++k)
        px[k] = {buffer[3 * k] / 255.0f, buffer[3 * k + 1] / 255.0f, buffer[3 * k + 2] / 255.0f};
    return out;
}

inline std::vector<png_byte> pack_rgb(const RgbPanorama& p)
{
    std::vector<png_byte> buffer(p.size() * 3);
    auto px = p.pixels();
    for (size_t k = 0; k < px.size(); ++k) {
        buffer[3 * k] = quantize_channel(px[k].r);
        buffer[3 * k + 1] = quantize_channel(px[k].g);
        buffer[3 * k + 2] = quantize_channel(px[k].b);
    }
    return buffer;
}

inline png_image make_image(const RgbPanorama& p)
{
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(p.width());
    image.height = static_cast<png_uint_32>(p.height());
    image.format = PNG_FORMAT_RGB;
    return image;
}

} // namespace detail

/// Reads an 8-bit RGB PNG into [0,1] floats (value / 255).
inline RgbPanorama read_rgb_png(const std::filesystem::path& path, bool require_equirect = true)
{
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw IoError(path.string() + ": " + image.message);
    return detail::decode_rgb(image, path.string(), require_equirect);
}

inline RgbPanorama decode_rgb_png(std::span<const std::uint8_t> bytes, bool require_equirect = true)
{
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
        throw IoError(std::string("png decode: ") + image.message);
    return detail::decode_rgb(image, "png buffer", require_equirect);
}

inline std::vector<std::uint8_t> encode_rgb_png(const RgbPanorama& p)
{
    png_image image = detail::make_image(p);
    const auto buffer = detail::pack_rgb(p);
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&image, nullptr, &size, 0, buffer.data(), 0, nullptr))
        throw IoError(std::string("png encode: ") + image.message);
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&image, out.data(), &size, 0, buffer.data(), 0, nullptr))
        throw IoError(std::string("png encode: ") + image.message);
    out.resize(size);
    png_image_free(&image);
    return out;
}

inline void write_rgb_png(const RgbPanorama& p, const std::filesystem::path& path)
{
    const auto bytes = encode_rgb_png(p);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

/// Binary mask as 8-bit RGB PNG (white = set).
inline Mask read_mask_png(const std::filesystem::path& path)
{
    const RgbPanorama img = read_rgb_png(path, false);
    Mask m(img.dims());
    auto src = img.pixels();
    auto dst = m.pixels();
    for (size_t k = 0; k < src.size(); ++k) dst[k] = luma(src[k]) >= 0.5f ? 1 : 0;
    return m;
}

inline void write_mask_png(const Mask& m, const std::filesystem::path& path)
{
    RgbPanorama img(m.dims());
    auto src = m.pixels();
    auto dst = img.pixels();
    for (size_t k = 0; k < src.size(); ++k) {
        const float v = src[k] ? 1.0f : 0.0f;
        dst[k] = {v, v, v};
    }
    write_rgb_png(img, path);
}

} // namespace panosynth
