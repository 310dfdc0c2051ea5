#pragma once

// Full-reference image quality: PSNR over RGB, SSIM and MS-SSIM over luma.
// Channel values are clamped to [0, 1] before any comparison. All metrics
// accept an optional pixel mask; SSIM statistics are averaged over the
// 'valid' windows (no padding) whose center pixel is in the mask.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "raster.hpp"

namespace panosynth {

inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

class MetricError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

namespace detail {

inline void require_same_dims(const ImageDims& a, const ImageDims& b)
{
    if (!(a == b)) throw MetricError("images differ in size");
}

inline float clamp01(float v) { return std::clamp(v, 0.0f, 1.0f); }

} // namespace detail

/// 10 log10(1 / MSE) over all channels of the masked pixels; identical inputs
/// give kPsnrIdentical.
inline double psnr(const RgbPanorama& a, const RgbPanorama& b, const Mask* mask = nullptr)
{
    detail::require_same_dims(a.dims(), b.dims());
    if (mask) detail::require_same_dims(a.dims(), mask->dims());
    double sum = 0.0;
    size_t count = 0;
    for (size_t k = 0; k < a.size(); ++k) {
        if (mask && !mask->pixels()[k]) continue;
        const Rgb& x = a.pixels()[k];
        const Rgb& y = b.pixels()[k];
        for (const auto& [u, v] : {std::pair{x.r, y.r}, std::pair{x.g, y.g}, std::pair{x.b, y.b}}) {
            const double d = static_cast<double>(detail::clamp01(u)) - detail::clamp01(v);
            sum += d * d;
        }
        count += 3;
    }
    if (count == 0) throw MetricError("psnr: empty mask");
    if (sum == 0.0) return kPsnrIdentical;
    return 10.0 * std::log10(1.0 / (sum / static_cast<double>(count)));
}

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
};

/// Normalized 1-D Gaussian taps.
inline std::vector<double> gaussian_kernel(int size, double sigma)
{
    if (size < 1 || size % 2 == 0) throw MetricError("window size must be odd");
    std::vector<double> k(static_cast<size_t>(size));
    const int r = size / 2;
    double total = 0.0;
    for (int x = -r; x <= r; ++x) total += k[static_cast<size_t>(x + r)] = std::exp(-(x * x) / (2.0 * sigma * sigma));
    for (double& v : k) v /= total;
    return k;
}

/// Mean SSIM and mean contrast-structure term over masked valid windows.
struct SsimTerms {
    double ssim = 0.0;
    double cs = 0.0;
    size_t windows = 0;
};

namespace detail {

struct Plane {
    int width = 0;
    int height = 0;
    std::vector<double> v;

    [[nodiscard]] double at(int i, int j) const { return v[static_cast<size_t>(j) * width + i]; }
};

inline Plane luma_plane(const RgbPanorama& p)
{
    Plane out{p.width(), p.height(), std::vector<double>(p.size())};
    for (size_t k = 0; k < p.size(); ++k) {
        const Rgb& c = p.pixels()[k];
        out.v[k] = luma({clamp01(c.r), clamp01(c.g), clamp01(c.b)});
    }
    return out;
}

/// Separable 'valid' correlation with a symmetric kernel.
inline Plane filter_valid(const Plane& src, const std::vector<double>& k)
{
    const int n = static_cast<int>(k.size());
    const int w = src.width - n + 1, h = src.height - n + 1;
    Plane tmp{w, src.height, std::vector<double>(static_cast<size_t>(w) * src.height)};
    for (int j = 0; j < src.height; ++j)
        for (int i = 0; i < w; ++i) {
            double s = 0.0;
            for (int t = 0; t < n; ++t) s += k[static_cast<size_t>(t)] * src.at(i + t, j);
            tmp.v[static_cast<size_t>(j) * w + i] = s;
        }
    Plane out{w, h, std::vector<double>(static_cast<size_t>(w) * h)};
    for (int j = 0; j < h; ++j)
        for (int i = 0; i < w; ++i) {
            double s = 0.0;
            for (int t = 0; t < n; ++t) s += k[static_cast<size_t>(t)] * tmp.at(i, j + t);
            out.v[static_cast<size_t>(j) * w + i] = s;
        }
    return out;
}

inline Plane product(const Plane& a, const Plane& b)
{
    Plane out{a.width, a.height, std::vector<double>(a.v.size())};
    for (size_t k = 0; k < a.v.size(); ++k) out.v[k] = a.v[k] * b.v[k];
    return out;
}

inline SsimTerms ssim_terms(const Plane& x, const Plane& y, const std::vector<std::uint8_t>* mask,
                            const SsimParams& p)
{
    if (x.width < p.window || x.height < p.window) throw MetricError("image smaller than the SSIM window");
    const auto k = gaussian_kernel(p.window, p.sigma);
    const Plane mx = filter_valid(x, k), my = filter_valid(y, k);
    const Plane xx = filter_valid(product(x, x), k), yy = filter_valid(product(y, y), k);
    const Plane xy = filter_valid(product(x, y), k);
    const double c1 = (p.k1) * (p.k1), c2 = (p.k2) * (p.k2);
    const int r = p.window / 2;
    SsimTerms t;
    for (int j = 0; j < mx.height; ++j) {
        for (int i = 0; i < mx.width; ++i) {
            if (mask && !(*mask)[static_cast<size_t>(j + r) * x.width + (i + r)]) continue;
            const size_t q = static_cast<size_t>(j) * mx.width + i;
            const double mux = mx.v[q], muy = my.v[q];
            const double vx = xx.v[q] - mux * mux, vy = yy.v[q] - muy * muy, cov = xy.v[q] - mux * muy;
            const double cs = (2.0 * cov + c2) / (vx + vy + c2);
            const double l = (2.0 * mux * muy + c1) / (mux * mux + muy * muy + c1);
            t.ssim += l * cs;
            t.cs += cs;
            ++t.windows;
        }
    }
    if (t.windows == 0) throw MetricError("ssim: no window centered in the mask");
    t.ssim /= static_cast<double>(t.windows);
    t.cs /= static_cast<double>(t.windows);
    return t;
}

inline Plane downsample(const Plane& p)
{
    Plane out{p.width / 2, p.height / 2, {}};
    out.v.resize(static_cast<size_t>(out.width) * out.height);
    for (int j = 0; j < out.height; ++j)
        for (int i = 0; i < out.width; ++i)
            out.v[static_cast<size_t>(j) * out.width + i] =
                0.25 * (p.at(2 * i, 2 * j) + p.at(2 * i + 1, 2 * j) + p.at(2 * i, 2 * j + 1) +
                        p.at(2 * i + 1, 2 * j + 1));
    return out;
}

/// A coarse pixel stays in the mask only when all four children are.
inline std::vector<std::uint8_t> downsample_mask(const std::vector<std::uint8_t>& m, int width, int height)
{
    const int w = width / 2, h = height / 2;
    std::vector<std::uint8_t> out(static_cast<size_t>(w) * h);
    const auto at = [&](int i, int j) { return m[static_cast<size_t>(j) * width + i] != 0; };
    for (int j = 0; j < h; ++j)
        for (int i = 0; i < w; ++i)
            out[static_cast<size_t>(j) * w + i] =
                at(2 * i, 2 * j) && at(2 * i + 1, 2 * j) && at(2 * i, 2 * j + 1) && at(2 * i + 1, 2 * j + 1);
    return out;
}

inline std::optional<std::vector<std::uint8_t>> mask_vector(const Mask* mask, const ImageDims& dims)
{
    if (!mask) return std::nullopt;
    require_same_dims(dims, mask->dims());
    return std::vector<std::uint8_t>(mask->pixels().begin(), mask->pixels().end());
}

} // namespace detail

inline double ssim(const RgbPanorama& a, const RgbPanorama& b, const Mask* mask = nullptr,
                   const SsimParams& params = {})
{
    detail::require_same_dims(a.dims(), b.dims());
    const auto m = detail::mask_vector(mask, a.dims());
    return detail::ssim_terms(detail::luma_plane(a), detail::luma_plane(b), m ? &*m : nullptr, params).ssim;
}

inline constexpr std::array<double, 5> kMsSsimWeights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

struct MsSsimResult {
    double value = 0.0;
    int scales = 0;  ///< fewer than 5 when the image is too small; weights are renormalized
};

/// Largest scale count (up to 5) whose coarsest level still fits the window.
inline int ms_ssim_scales(const ImageDims& dims, int window = 11)
{
    int scales = 0;
    int w = dims.width, h = dims.height;
    while (scales < 5 && w >= window && h >= window) {
        ++scales;
        w /= 2;
        h /= 2;
    }
    return scales;
}

/// prod_{s < S} cs_s^{w_s} * ssim_S^{w_S} with 2x2 mean downsampling between
/// scales. Negative terms are clamped to zero.
inline MsSsimResult ms_ssim(const RgbPanorama& a, const RgbPanorama& b, const Mask* mask = nullptr,
                            const SsimParams& params = {})
{
    detail::require_same_dims(a.dims(), b.dims());
    const int scales = ms_ssim_scales(a.dims(), params.window);
    if (scales == 0) throw MetricError("image smaller than the SSIM window");
    double weight_sum = 0.0;
    for (int s = 0; s < scales; ++s) weight_sum += kMsSsimWeights[static_cast<size_t>(s)];

    detail::Plane x = detail::luma_plane(a), y = detail::luma_plane(b);
    auto m = detail::mask_vector(mask, a.dims());
    double value = 1.0;
    for (int s = 0; s < scales; ++s) {
        const auto t = detail::ssim_terms(x, y, m ? &*m : nullptr, params);
        const double term = std::max(0.0, s + 1 == scales ? t.ssim : t.cs);
        value *= std::pow(term, kMsSsimWeights[static_cast<size_t>(s)] / weight_sum);
        if (s + 1 < scales) {
            if (m) *m = detail::downsample_mask(*m, x.width, x.height);
            x = detail::downsample(x);
            y = detail::downsample(y);
        }
    }
    return {value, scales};
}

/// Pixels whose center latitude satisfies |phi| <= max_abs_phi.
inline Mask latitude_band_mask(const ImageDims& dims, double max_abs_phi = kPi / 3.0)
{
    Mask m(dims, 0);
    for (int j = 0; j < dims.height; ++j) {
        const double phi = kHalfPi - kPi * (j + 0.5) / dims.height;
        if (std::abs(phi) <= max_abs_phi)
            for (int i = 0; i < dims.width; ++i) m(i, j) = 1;
    }
    return m;
}

inline Mask mask_and(const Mask& a, const Mask& b)
{
    detail::require_same_dims(a.dims(), b.dims());
    Mask out(a.dims(), 0);
    for (size_t k = 0; k < a.size(); ++k) out.pixels()[k] = a.pixels()[k] && b.pixels()[k];
    return out;
}

inline Mask mask_not(const Mask& a)
{
    Mask out(a.dims(), 0);
    for (size_t k = 0; k < a.size(); ++k) out.pixels()[k] = !a.pixels()[k];
    return out;
}

inline size_t mask_count(const Mask& m)
{
    return static_cast<size_t>(std::count_if(m.pixels().begin(), m.pixels().end(), [](auto v) { return v != 0; }));
}

struct MetricReport {
    double psnr = 0.0;
    double ssim = 0.0;
    double ms_ssim = 0.0;
    int ms_ssim_scales = 0;
    size_t pixels = 0;
    std::string mask = "none";
};

inline MetricReport evaluate_images(const RgbPanorama& pred, const RgbPanorama& truth, const Mask* mask = nullptr,
                                    std::string mask_description = "none")
{
    MetricReport r;
    r.psnr = psnr(pred, truth, mask);
    r.ssim = ssim(pred, truth, mask);
    const auto ms = ms_ssim(pred, truth, mask);
    r.ms_ssim = ms.value;
    r.ms_ssim_scales = ms.scales;
    r.pixels = mask ? mask_count(*mask) : pred.size();
    r.mask = std::move(mask_description);
    return r;
}

/// PSNR is written as the string "inf" for identical images.
inline nlohmann::json to_json(const MetricReport& r)
{
    nlohmann::json j;
    if (std::isinf(r.psnr))
        j["psnr"] = "inf";
    else
        j["psnr"] = r.psnr;
    j["ssim"] = r.ssim;
    j["ms_ssim"] = r.ms_ssim;
    j["ms_ssim_scales"] = r.ms_ssim_scales;
    j["pixels"] = r.pixels;
    j["mask"] = r.mask;
    j["lpips"] = nullptr;
    return j;
}

} // namespace panosynth
