#pragma once

// Sphere-sweep stereo for equirectangular panoramas: each reference pixel is
// lifted to a set of depth shells, looked up in the nearest neighbor
// panoramas, scored with the AD-census cost, aggregated with a guided filter
// and resolved winner-takes-all.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "capture.hpp"
#include "parallel.hpp"
#include "raster.hpp"

namespace panosynth {

/// Depth shells sampled uniformly in inverse depth, ascending.
struct DepthHypothesisSet {
    std::vector<double> values;

    static DepthHypothesisSet inverse_uniform(double d_min, double d_max, int count)
    {
        if (!(d_min > 0.0) || !(d_max > d_min)) throw std::invalid_argument("need 0 < d_min < d_max");
        if (count < 2) throw std::invalid_argument("need at least two depth hypotheses");
        DepthHypothesisSet h;
        const double inv_near = 1.0 / d_min, inv_far = 1.0 / d_max;
        for (int m = 0; m < count; ++m)
            h.values.push_back(1.0 / (inv_near + (inv_far - inv_near) * m / (count - 1)));
        h.values.front() = d_min;
        h.values.back() = d_max;
        return h;
    }

    [[nodiscard]] size_t size() const { return values.size(); }

    void validate() const
    {
        if (values.empty()) throw std::invalid_argument("empty hypothesis set");
        for (size_t m = 0; m < values.size(); ++m) {
            if (!(values[m] > 0.0)) throw std::invalid_argument("hypothesis depths must be > 0");
            if (m > 0 && !(values[m] > values[m - 1]))
                throw std::invalid_argument("hypothesis depths must be strictly increasing");
        }
    }
};

struct AdCensusParams {
    int census_width = 9;
    int census_height = 7;
    double lambda_ad = 10.0 / 255.0;
    double lambda_census = 30.0;
    int guided_radius = 8;
    double guided_epsilon = 1e-4;

    void validate() const
    {
        if (census_width % 2 == 0 || census_height % 2 == 0 || census_width < 1 || census_height < 1)
            throw std::invalid_argument("census window must be odd in both dimensions");
        if (census_width * census_height - 1 > 64) throw std::invalid_argument("census window exceeds 64 bits");
        if (!(lambda_ad > 0.0) || !(lambda_census > 0.0)) throw std::invalid_argument("lambdas must be > 0");
        if (guided_radius < 0 || !(guided_epsilon > 0.0)) throw std::invalid_argument("bad guided filter settings");
    }
};

inline constexpr float kMaxMatchCost = 2.0f;

using CensusRaster = Raster<std::uint64_t>;

/// Census descriptor per pixel: one bit per window neighbor (row-major,
/// center skipped), set when the neighbor is darker than the center. Columns
/// wrap across the seam, rows clamp.
inline CensusRaster census_transform(const Raster<float>& luma, int window_width, int window_height,
                                     int threads = 0)
{
    if (window_width % 2 == 0 || window_height % 2 == 0 || window_width < 1 || window_height < 1)
        throw std::invalid_argument("census window must be odd");
    if (window_width * window_height - 1 > 64) throw std::invalid_argument("census window exceeds 64 bits");
    if (window_width > luma.width() || window_height > luma.height())
        throw std::invalid_argument("census window larger than image");
    const int rx = window_width / 2, ry = window_height / 2;
    CensusRaster out(luma.dims(), 0);
    parallel_chunks(luma.height(), threads, [&](int begin, int end, int) {
        for (int j = begin; j < end; ++j) {
            for (int i = 0; i < luma.width(); ++i) {
                const float center = luma(i, j);
                std::uint64_t bits = 0;
                int bit = 0;
                for (int dj = -ry; dj <= ry; ++dj) {
                    for (int di = -rx; di <= rx; ++di) {
                        if (di == 0 && dj == 0) continue;
                        if (luma.at_wrapped(i + di, j + dj) < center) bits |= std::uint64_t{1} << bit;
                        ++bit;
                    }
                }
                out(i, j) = bits;
            }
        }
    });
    return out;
}

inline CensusRaster census_transform(const RgbPanorama& p, int window_width, int window_height, int threads = 0)
{
    return census_transform(luma_of(p), window_width, window_height, threads);
}

/// Color seen by `neighbor` at the world point `depth` meters along the ray of
/// reference pixel (i, j); nullopt when the point sits on the neighbor center.
inline std::optional<Rgb> sweep_sample(const Pose& ref_pose, const RgbPanorama& neighbor, const Pose& neighbor_pose,
                                       double depth, int i, int j, const ImageDims& ref_dims)
{
    const Angles a = pixel_to_angles(i, j, ref_dims);
    const auto rep = try_reproject(direction(a.theta, a.phi) * depth, RelativeTransform(ref_pose, neighbor_pose));
    if (!rep) return std::nullopt;
    return sample_bilinear(neighbor, angles_to_pixel(rep->theta, rep->phi, neighbor.dims()));
}

/// rho(c_AD, lambda_ad) + rho(c_census, lambda_census), rho(c, l) = 1 - exp(-c / l).
/// A missing sample costs kMaxMatchCost.
inline double ad_census_cost(const Rgb& ref, std::uint64_t ref_descriptor, const std::optional<Rgb>& sample,
                             std::uint64_t sample_descriptor, const AdCensusParams& params)
{
    if (!sample) return kMaxMatchCost;
    const double c_ad = (std::abs(static_cast<double>(ref.r) - sample->r) +
                         std::abs(static_cast<double>(ref.g) - sample->g) +
                         std::abs(static_cast<double>(ref.b) - sample->b)) /
                        3.0;
    const double c_census = std::popcount(ref_descriptor ^ sample_descriptor);
    return (1.0 - std::exp(-c_ad / params.lambda_ad)) + (1.0 - std::exp(-c_census / params.lambda_census));
}

namespace detail {

/// Box mean of radius r: columns wrap, rows reflect about the border
/// (row -1 mirrors row 0). The reflected vertical operator is symmetric, so
/// box filtering preserves the raster mean.
inline std::vector<double> box_mean(std::span<const double> src, int width, int height, int r)
{
    const int n = 2 * r + 1;
    std::vector<double> horiz(src.size());
    for (int j = 0; j < height; ++j) {
        const double* row = src.data() + static_cast<size_t>(j) * width;
        double acc = 0.0;
        for (int di = -r; di <= r; ++di) acc += row[((di % width) + width) % width];
        for (int i = 0; i < width; ++i) {
            horiz[static_cast<size_t>(j) * width + i] = acc;
            acc += row[((i + r + 1) % width + width) % width] - row[((i - r) % width + width) % width];
        }
    }
    const auto reflect = [height](int jj) {
        if (jj < 0) return -jj - 1;
        if (jj >= height) return 2 * height - jj - 1;
        return jj;
    };
    std::vector<double> out(src.size());
    const double norm = 1.0 / (static_cast<double>(n) * n);
    std::vector<double> acc(static_cast<size_t>(width), 0.0);
    for (int dj = -r; dj <= r; ++dj) {
        const double* row = horiz.data() + static_cast<size_t>(reflect(dj)) * width;
        for (int i = 0; i < width; ++i) acc[static_cast<size_t>(i)] += row[i];
    }
    for (int j = 0; j < height; ++j) {
        double* dst = out.data() + static_cast<size_t>(j) * width;
        for (int i = 0; i < width; ++i) dst[i] = acc[static_cast<size_t>(i)] * norm;
        if (j + 1 == height) break;
        const double* add = horiz.data() + static_cast<size_t>(reflect(j + r + 1)) * width;
        const double* sub = horiz.data() + static_cast<size_t>(reflect(j - r)) * width;
        for (int i = 0; i < width; ++i) acc[static_cast<size_t>(i)] += add[i] - sub[i];
    }
    return out;
}

} // namespace detail

/// Guided filter q = mean(a) * I + mean(b), a = cov(I, p) / (var(I) + eps),
/// b = mean(p) - a * mean(I), with box windows of the given radius.
template <class T>
Raster<T> guided_filter(const Raster<T>& cost, const Raster<T>& guide, int radius, double epsilon)
{
    if (!(cost.dims() == guide.dims())) throw std::invalid_argument("guided_filter: dimension mismatch");
    if (radius < 0 || radius >= cost.height()) throw std::invalid_argument("guided_filter: radius must be < height");
    const int w = cost.width(), h = cost.height();
    const size_t n = cost.size();
    std::vector<double> p(n), I(n), Ip(n), II(n);
    for (size_t k = 0; k < n; ++k) {
        p[k] = cost.pixels()[k];
        I[k] = guide.pixels()[k];
        Ip[k] = I[k] * p[k];
        II[k] = I[k] * I[k];
    }
    const auto mean_I = detail::box_mean(I, w, h, radius);
    const auto mean_p = detail::box_mean(p, w, h, radius);
    const auto corr_Ip = detail::box_mean(Ip, w, h, radius);
    const auto corr_II = detail::box_mean(II, w, h, radius);
    std::vector<double> a(n), b(n);
    for (size_t k = 0; k < n; ++k) {
        const double var = std::max(0.0, corr_II[k] - mean_I[k] * mean_I[k]);
        const double cov = corr_Ip[k] - mean_I[k] * mean_p[k];
        a[k] = cov / (var + epsilon);
        b[k] = mean_p[k] - a[k] * mean_I[k];
    }
    const auto mean_a = detail::box_mean(a, w, h, radius);
    const auto mean_b = detail::box_mean(b, w, h, radius);
    Raster<T> out(cost.dims());
    for (size_t k = 0; k < n; ++k) out.pixels()[k] = static_cast<T>(mean_a[k] * I[k] + mean_b[k]);
    return out;
}

/// Matching cost per pixel for each depth hypothesis.
struct CostVolume {
    ImageDims dims;
    int slices = 0;
    std::vector<float> data;

    CostVolume() = default;
    CostVolume(ImageDims d, int m, float fill = kMaxMatchCost) : dims(d), slices(m), data(d.size() * m, fill) {}

    [[nodiscard]] std::span<float> slice(int m) { return {data.data() + dims.size() * m, dims.size()}; }
    [[nodiscard]] std::span<const float> slice(int m) const { return {data.data() + dims.size() * m, dims.size()}; }
    [[nodiscard]] float at(int m, int i, int j) const
    {
        return data[dims.size() * m + static_cast<size_t>(j) * dims.width + i];
    }
    float& at(int m, int i, int j) { return data[dims.size() * m + static_cast<size_t>(j) * dims.width + i]; }
};

/// Minimum-cost hypothesis per pixel; ties go to the nearer depth and pixels
/// whose best cost is still the maximum become missing.
inline DepthPanorama winner_takes_all(const CostVolume& cv, const DepthHypothesisSet& hyp)
{
    if (static_cast<size_t>(cv.slices) != hyp.size())
        throw std::invalid_argument("winner_takes_all: slice count differs from hypothesis count");
    DepthPanorama out(cv.dims, kMissingDepth);
    auto dst = out.pixels();
    for (size_t p = 0; p < dst.size(); ++p) {
        float best = cv.data[p];
        int arg = 0;
        for (int m = 1; m < cv.slices; ++m) {
            const float c = cv.data[cv.dims.size() * m + p];
            if (c < best) {
                best = c;
                arg = m;
            }
        }
        if (best < kMaxMatchCost) dst[p] = static_cast<float>(hyp.values[static_cast<size_t>(arg)]);
    }
    return out;
}

struct PosedImage {
    const RgbPanorama* rgb = nullptr;
    Pose pose;
};

struct SweepResult {
    CostVolume raw;       ///< neighbor-averaged matching cost
    Mask observed;        ///< at least one valid neighbor sample for some hypothesis
};

/// Averages AD-census costs over the neighbors for every hypothesis. Samples
/// that degenerate are left out of the average; a pixel without any valid
/// sample keeps kMaxMatchCost.
inline SweepResult build_cost_volume(const RgbPanorama& ref, const Pose& ref_pose,
                                     std::span<const PosedImage> neighbors, const DepthHypothesisSet& hyp,
                                     const AdCensusParams& params, int threads = 0)
{
    params.validate();
    hyp.validate();
    const ImageDims dims = ref.dims();
    const int slices = static_cast<int>(hyp.size());
    SweepResult res{CostVolume(dims, slices), Mask(dims, 0)};
    const CensusRaster ref_census = census_transform(ref, params.census_width, params.census_height, threads);
    const DirectionTable dirs(dims);
    std::vector<RelativeTransform> xf;
    for (const auto& nb : neighbors) xf.emplace_back(ref_pose, nb.pose);

    RgbPanorama warped(dims);
    Raster<float> warped_luma(dims);
    Mask valid(dims, 0);
    std::vector<float> sum(dims.size()), count(dims.size());
    for (int m = 0; m < slices; ++m) {
        std::fill(sum.begin(), sum.end(), 0.0f);
        std::fill(count.begin(), count.end(), 0.0f);
        const double depth = hyp.values[static_cast<size_t>(m)];
        for (size_t n = 0; n < neighbors.size(); ++n) {
            const RgbPanorama& img = *neighbors[n].rgb;
            parallel_chunks(dims.height, threads, [&](int begin, int end, int) {
                for (int j = begin; j < end; ++j) {
                    for (int i = 0; i < dims.width; ++i) {
                        const auto rep = try_reproject(dirs(i, j) * depth, xf[n]);
                        if (rep) {
                            const Rgb c = sample_bilinear(img, angles_to_pixel(rep->theta, rep->phi, img.dims()));
                            warped(i, j) = c;
                            warped_luma(i, j) = luma(c);
                            valid(i, j) = 1;
                        } else {
                            warped(i, j) = {};
                            warped_luma(i, j) = 0.0f;
                            valid(i, j) = 0;
                        }
                    }
                }
            });
            const CensusRaster sample_census =
                census_transform(warped_luma, params.census_width, params.census_height, threads);
            parallel_chunks(dims.height, threads, [&](int begin, int end, int) {
                for (int j = begin; j < end; ++j) {
                    for (int i = 0; i < dims.width; ++i) {
                        if (!valid(i, j)) continue;
                        const size_t p = static_cast<size_t>(j) * dims.width + i;
                        sum[p] += static_cast<float>(
                            ad_census_cost(ref(i, j), ref_census(i, j), warped(i, j), sample_census(i, j), params));
                        count[p] += 1.0f;
                    }
                }
            });
        }
        auto slice = res.raw.slice(m);
        auto seen = res.observed.pixels();
        for (size_t p = 0; p < slice.size(); ++p) {
            if (count[p] > 0.0f) {
                slice[p] = sum[p] / count[p];
                seen[p] = 1;
            }
        }
    }
    return res;
}

/// Guided-filters every slice with the reference luma as guide.
inline CostVolume filter_cost_volume(const CostVolume& cv, const Raster<float>& guide, int radius, double epsilon,
                                     int threads = 0)
{
    CostVolume out(cv.dims, cv.slices);
    parallel_for(cv.slices, threads, [&](int m) {
        Raster<float> slice(cv.dims);
        std::copy(cv.slice(m).begin(), cv.slice(m).end(), slice.pixels().begin());
        const Raster<float> filtered = guided_filter(slice, guide, radius, epsilon);
        std::copy(filtered.pixels().begin(), filtered.pixels().end(), out.slice(m).begin());
    });
    return out;
}

/// Dense depth for frame `ref_index` from its `n_neighbors` nearest frames.
inline DepthPanorama estimate_dense_depth(size_t ref_index, std::span<const PosedImage> frames, int n_neighbors,
                                          const DepthHypothesisSet& hyp, const AdCensusParams& params,
                                          int threads = 0)
{
    if (ref_index >= frames.size()) throw std::out_of_range("estimate_dense_depth: bad reference index");
    if (n_neighbors < 1 || frames.size() < 2)
        throw std::invalid_argument("estimate_dense_depth: need at least one neighbor");
    std::vector<Vec3> positions;
    for (const auto& f : frames) positions.push_back(f.pose.position);
    std::vector<PosedImage> nb;
    for (size_t k : nearest_of(positions, positions[ref_index], frames.size()))
        if (k != ref_index && static_cast<int>(nb.size()) < n_neighbors) nb.push_back(frames[k]);

    const RgbPanorama& ref = *frames[ref_index].rgb;
    const SweepResult sweep = build_cost_volume(ref, frames[ref_index].pose, nb, hyp, params, threads);
    const CostVolume filtered =
        filter_cost_volume(sweep.raw, luma_of(ref), params.guided_radius, params.guided_epsilon, threads);
    DepthPanorama depth = winner_takes_all(filtered, hyp);
    auto px = depth.pixels();
    for (size_t p = 0; p < px.size(); ++p)
        if (!sweep.observed.pixels()[p]) px[p] = kMissingDepth;
    return depth;
}

} // namespace panosynth
