#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "geometry.hpp"

namespace panosynth {

struct Rgb {
    float r = 0.0f;
    float g = 0.0f;
    float b = 0.0f;

    constexpr bool operator==(const Rgb&) const = default;
};

/// Rec.601 luma.
inline constexpr float luma(const Rgb& c) { return 0.299f * c.r + 0.587f * c.g + 0.114f * c.b; }

/// Row-major image with (column, row) indexing.
template <class T>
class Raster {
public:
    using value_type = T;

    Raster() = default;
    explicit Raster(ImageDims dims, T fill = T{}) : dims_(checked(dims)), data_(dims.size(), fill) {}
    Raster(int width, int height, T fill = T{}) : Raster(ImageDims{width, height}, fill) {}

    [[nodiscard]] const ImageDims& dims() const { return dims_; }
    [[nodiscard]] int width() const { return dims_.width; }
    [[nodiscard]] int height() const { return dims_.height; }
    [[nodiscard]] size_t size() const { return data_.size(); }
    [[nodiscard]] bool empty() const { return data_.empty(); }

    T& operator()(int i, int j) { return data_[index(i, j)]; }
    const T& operator()(int i, int j) const { return data_[index(i, j)]; }

    [[nodiscard]] std::span<T> row(int j)
    {
        return {data_.data() + static_cast<size_t>(j) * static_cast<size_t>(dims_.width),
                static_cast<size_t>(dims_.width)};
    }
    [[nodiscard]] std::span<const T> row(int j) const
    {
        return {data_.data() + static_cast<size_t>(j) * static_cast<size_t>(dims_.width),
                static_cast<size_t>(dims_.width)};
    }

    [[nodiscard]] std::span<T> pixels() { return data_; }
    [[nodiscard]] std::span<const T> pixels() const { return data_; }

    /// Column index with horizontal wrap-around.
    [[nodiscard]] int wrap_column(int i) const
    {
        const int w = dims_.width;
        i %= w;
        return i < 0 ? i + w : i;
    }
    [[nodiscard]] int clamp_row(int j) const { return std::clamp(j, 0, dims_.height - 1); }

    /// Access with horizontal wrap and vertical clamp.
    [[nodiscard]] const T& at_wrapped(int i, int j) const { return (*this)(wrap_column(i), clamp_row(j)); }

    bool operator==(const Raster&) const = default;

private:
    static ImageDims checked(ImageDims dims)
    {
        if (dims.width <= 0 || dims.height <= 0) throw DomainError("raster dimensions must be positive");
        return dims;
    }

    [[nodiscard]] size_t index(int i, int j) const
    {
        return static_cast<size_t>(j) * static_cast<size_t>(dims_.width) + static_cast<size_t>(i);
    }

    ImageDims dims_{};
    std::vector<T> data_;
};

using RgbPanorama = Raster<Rgb>;
using DepthPanorama = Raster<float>;
using Mask = Raster<std::uint8_t>;

inline constexpr float kMissingDepth = std::numeric_limits<float>::quiet_NaN();

inline bool is_missing(float d) { return !std::isfinite(d); }
inline bool has_depth(float d) { return std::isfinite(d) && d > 0.0f; }

inline Raster<float> luma_of(const RgbPanorama& p)
{
    Raster<float> out(p.dims());
    auto src = p.pixels();
    auto dst = out.pixels();
    for (size_t k = 0; k < src.size(); ++k) dst[k] = luma(src[k]);
    return out;
}

/// Bilinear color lookup at a continuous pixel position, wrapping columns and
/// clamping rows.
inline Rgb sample_bilinear(const RgbPanorama& img, const PixelCoord& p)
{
    const double fi = std::floor(p.i);
    const double fj = std::floor(p.j);
    const float ai = static_cast<float>(p.i - fi);
    const float aj = static_cast<float>(p.j - fj);
    const int i0 = static_cast<int>(fi);
    const int j0 = static_cast<int>(fj);
    const Rgb& c00 = img.at_wrapped(i0, j0);
    const Rgb& c10 = img.at_wrapped(i0 + 1, j0);
    const Rgb& c01 = img.at_wrapped(i0, j0 + 1);
    const Rgb& c11 = img.at_wrapped(i0 + 1, j0 + 1);
    const float w00 = (1.0f - ai) * (1.0f - aj), w10 = ai * (1.0f - aj);
    const float w01 = (1.0f - ai) * aj, w11 = ai * aj;
    return {w00 * c00.r + w10 * c10.r + w01 * c01.r + w11 * c11.r,
            w00 * c00.g + w10 * c10.g + w01 * c01.g + w11 * c11.g,
            w00 * c00.b + w10 * c10.b + w01 * c01.b + w11 * c11.b};
}

inline float sample_bilinear(const Raster<float>& img, const PixelCoord& p)
{
    const double fi = std::floor(p.i);
    const double fj = std::floor(p.j);
    const double ai = p.i - fi;
    const double aj = p.j - fj;
    const int i0 = static_cast<int>(fi);
    const int j0 = static_cast<int>(fj);
    return static_cast<float>((1 - ai) * (1 - aj) * img.at_wrapped(i0, j0) +
                              ai * (1 - aj) * img.at_wrapped(i0 + 1, j0) +
                              (1 - ai) * aj * img.at_wrapped(i0, j0 + 1) +
                              ai * aj * img.at_wrapped(i0 + 1, j0 + 1));
}

/// Nearest pixel (column wrapped, row clamped) for a continuous position.
struct PixelIndex {
    int i = 0;
    int j = 0;
};

template <class T>
PixelIndex nearest_pixel(const Raster<T>& img, const PixelCoord& p)
{
    return {img.wrap_column(static_cast<int>(std::lround(p.i))),
            img.clamp_row(static_cast<int>(std::lround(p.j)))};
}

inline float sample_nearest(const DepthPanorama& depth, const PixelCoord& p)
{
    const PixelIndex n = nearest_pixel(depth, p);
    return depth(n.i, n.j);
}

/// Depth lookup that interpolates bilinearly only across a smooth surface.
/// When a tap is missing or the four taps spread by more than `edge_ratio`,
/// the nearest pixel is returned instead so no intermediate surface is made up.
inline float sample_depth(const DepthPanorama& depth, const PixelCoord& p, float edge_ratio = 1.1f)
{
    const double fi = std::floor(p.i);
    const double fj = std::floor(p.j);
    const int i0 = static_cast<int>(fi);
    const int j0 = static_cast<int>(fj);
    const float d00 = depth.at_wrapped(i0, j0);
    const float d10 = depth.at_wrapped(i0 + 1, j0);
    const float d01 = depth.at_wrapped(i0, j0 + 1);
    const float d11 = depth.at_wrapped(i0 + 1, j0 + 1);
    if (has_depth(d00) && has_depth(d10) && has_depth(d01) && has_depth(d11)) {
        const float lo = std::min({d00, d10, d01, d11});
        const float hi = std::max({d00, d10, d01, d11});
        if (hi <= lo * edge_ratio) {
            const double ai = p.i - fi;
            const double aj = p.j - fj;
            return static_cast<float>((1 - ai) * (1 - aj) * d00 + ai * (1 - aj) * d10 +
                                      (1 - ai) * aj * d01 + ai * aj * d11);
        }
    }
    return sample_nearest(depth, p);
}

inline size_t count_missing(const DepthPanorama& d)
{
    return static_cast<size_t>(std::count_if(d.pixels().begin(), d.pixels().end(),
                                             [](float v) { return !has_depth(v); }));
}

} // namespace panosynth
