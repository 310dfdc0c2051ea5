#pragma once

// Novel-view synthesis: build a depth panorama at the target position, warp
// it backwards into the nearest inputs and blend the fetched colors with
// depth, camera-distance and view-angle weights.

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "capture.hpp"
#include "morphology.hpp"
#include "parallel.hpp"
#include "raster.hpp"
#include "refinement.hpp"
#include "views.hpp"

namespace panosynth {

enum class WeightMode {
    Uniform,     ///< plain average of the fetched samples
    Depth,       ///< w_d
    DepthCamera, ///< w_d * w_cam
    Full,        ///< w_d * w_cam * w_ang
};

struct SynthesisConfig {
    int k_blend = 4;
    double camera_scale = 10.0;
    double suitability_tau = 0.05;
    /// Extra frames tried after the K nearest; negative means all remaining.
    int fallback_max = -1;
    double min_camera_distance = 1e-6;
    WeightMode weights = WeightMode::Full;
    /// Blend only depth-consistent samples when any exist.
    bool restrict_to_suitable = true;
    /// Source depth lookups interpolate only across taps within this ratio.
    float depth_edge_ratio = 1.1f;
    Rgb hole_color{0.0f, 0.0f, 0.0f};
    RefinementConfig depth; ///< raymarch and closing settings for the target depth
    int threads = 0;

    void validate() const
    {
        if (k_blend < 1) throw std::invalid_argument("K must be >= 1");
        if (!(camera_scale > 0.0)) throw std::invalid_argument("camera scale s must be > 0");
        if (!(suitability_tau > 0.0)) throw std::invalid_argument("suitability tau must be > 0");
        if (!(min_camera_distance > 0.0)) throw std::invalid_argument("min camera distance must be > 0");
        depth.validate();
    }
};

/// (|d_rep - d| + 1)^-1
inline double weight_depth(double d_rep, double d) { return 1.0 / (std::abs(d_rep - d) + 1.0); }

/// s / ||t||, capped at s / min_distance near the source center.
inline double weight_camera(const Vec3& t, double s, double min_distance = 1e-6)
{
    return s / std::max(t.norm(), min_distance);
}

/// pi - angle(t, v); pi when t vanishes.
inline double weight_angle(const Vec3& t, const Vec3& v)
{
    const double nt = t.norm();
    const double nv = v.norm();
    if (!(nv > 0.0)) throw DomainError("weight_angle: zero view vector");
    if (nt == 0.0) return kPi;
    return kPi - std::acos(std::clamp(t.dot(v) / (nt * nv), -1.0, 1.0));
}

struct BlendSample {
    Rgb color;
    double w_d = 0.0;
    double w_cam = 0.0;
    double w_ang = 0.0;
    double W = 0.0;
    size_t frame = 0;
    bool suitable = false;
    bool has_depth = false;
};

inline double combined_weight(WeightMode mode, double w_d, double w_cam, double w_ang)
{
    switch (mode) {
    case WeightMode::Uniform: return 1.0;
    case WeightMode::Depth: return w_d;
    case WeightMode::DepthCamera: return w_d * w_cam;
    case WeightMode::Full: break;
    }
    return w_d * w_cam * w_ang;
}

struct BlendResult {
    Rgb color;
    bool hole = false;
};

/// Weighted average over suitable samples when there are any (and
/// `restrict_to_suitable`), otherwise over every sample with positive weight.
inline BlendResult blend(std::span<const BlendSample> samples, bool restrict_to_suitable = true,
                         Rgb hole_color = {})
{
    bool use_suitable = false;
    if (restrict_to_suitable)
        for (const auto& s : samples) use_suitable = use_suitable || (s.suitable && s.W > 0.0);
    double sw = 0.0, r = 0.0, g = 0.0, b = 0.0;
    for (const auto& s : samples) {
        if (!(s.W > 0.0) || (use_suitable && !s.suitable)) continue;
        sw += s.W;
        r += s.W * s.color.r;
        g += s.W * s.color.g;
        b += s.W * s.color.b;
    }
    if (!(sw > 0.0)) return {hole_color, true};
    return {{static_cast<float>(r / sw), static_cast<float>(g / sw), static_cast<float>(b / sw)}, false};
}

/// Per-synthesis state shared by every pixel: neighbor order and per-frame weights.
struct SynthesisContext {
    const std::vector<View>* views = nullptr;
    Pose target;
    std::vector<size_t> order;    ///< all frames, nearest first
    std::vector<double> w_cam;    ///< indexed by frame
    std::vector<Vec3> t;          ///< target - frame position, indexed by frame

    SynthesisContext(const std::vector<View>& v, const Pose& target_pose, const SynthesisConfig& cfg)
        : views(&v), target(target_pose)
    {
        order = nearest_of(positions_of(v), target.position, v.size());
        for (const auto& view : v) {
            t.push_back(target.position - view.pose.position);
            w_cam.push_back(weight_camera(t.back(), cfg.camera_scale, cfg.min_camera_distance));
        }
    }
};

struct GatherStats {
    bool extended = false;  ///< looked beyond the K nearest frames
    bool exhausted = false; ///< no suitable sample in any frame tried
};

/// Fetches the samples for one world point seen from the target. The K nearest
/// frames are always sampled; when none of them is depth-consistent the search
/// continues outward until one suitable sample is found or frames run out.
inline GatherStats gather_samples(const Vec3& world_point, const SynthesisContext& ctx,
                                  const SynthesisConfig& cfg, std::vector<BlendSample>& out)
{
    out.clear();
    const auto& views = *ctx.views;
    const size_t n = ctx.order.size();
    const size_t k = std::min(static_cast<size_t>(cfg.k_blend), n);
    const size_t limit =
        cfg.fallback_max < 0 ? n : std::min(n, k + static_cast<size_t>(cfg.fallback_max));
    GatherStats stats;
    bool found = false;
    for (size_t rank = 0; rank < limit; ++rank) {
        if (rank >= k) {
            if (found) break;
            stats.extended = true;
        }
        const size_t f = ctx.order[rank];
        const View& view = views[f];
        const Vec3 v = world_point - view.pose.position;
        const Vec3 local = view.pose.rotation.transposed() * v;
        const double d_rep = local.norm();
        if (!(d_rep > kDegenerateDistance)) continue;
        const SphericalCoord s = cartesian_to_spherical(local);
        const PixelCoord px = angles_to_pixel(s.theta, s.phi, view.rgb.dims());
        BlendSample smp;
        smp.frame = f;
        smp.color = sample_bilinear(view.rgb, px);
        const PixelCoord dpx = view.depth.dims() == view.rgb.dims()
                                   ? px
                                   : angles_to_pixel(s.theta, s.phi, view.depth.dims());
        const float d = sample_depth(view.depth, dpx, cfg.depth_edge_ratio);
        smp.w_cam = ctx.w_cam[f];
        smp.w_ang = weight_angle(ctx.t[f], v);
        if (has_depth(d)) {
            smp.has_depth = true;
            smp.w_d = weight_depth(d_rep, d);
            smp.suitable = std::abs(d_rep - d) / d <= cfg.suitability_tau;
        }
        smp.W = cfg.weights == WeightMode::Uniform || smp.has_depth
                    ? combined_weight(cfg.weights, smp.w_d, smp.w_cam, smp.w_ang)
                    : 0.0;
        found = found || smp.suitable;
        out.push_back(smp);
    }
    stats.exhausted = !found;
    return stats;
}

struct TargetDepth {
    DepthPanorama depth;
    Mask uncovered;       ///< no input covered the pixel; filled with the max depth
    size_t marched = 0;
};

/// Depth panorama at the target: forward projection of the nearest inputs,
/// morphological closing, then raymarch correction against the same inputs.
inline TargetDepth synthesize_target_depth(const Pose& target, const ImageDims& dims,
                                           const std::vector<View>& views, const SynthesisConfig& cfg)
{
    if (views.empty()) throw std::invalid_argument("synthesize_target_depth: no input depths");
    const auto order = nearest_of(positions_of(views), target.position, views.size());
    std::vector<PosedDepth> nb;
    for (size_t f : order) nb.push_back({&views[f].depth, views[f].pose});

    const int k_fp = std::min<int>(cfg.depth.k_projection, static_cast<int>(nb.size()));
    const int k_rm = std::min<int>(cfg.depth.k_raymarch, static_cast<int>(nb.size()));
    DepthPanorama splat = forward_project(target, dims, nb, k_fp, cfg.threads);
    DepthPanorama closed = morphological_close_depth(splat, cfg.depth.closing_radius, cfg.threads);
    RaymarchResult rm = raymarch_correct(closed, target, nb, k_rm, cfg.depth.rate, cfg.depth.max_march_steps,
                                         cfg.threads, cfg.depth.lookup_edge_ratio);

    TargetDepth out{std::move(rm.depth), Mask(dims, 0), rm.marched};
    float max_depth = 0.0f;
    for (float d : out.depth.pixels())
        if (has_depth(d)) max_depth = std::max(max_depth, d);
    if (max_depth == 0.0f) throw std::runtime_error("synthesize_target_depth: inputs cover no pixel");
    auto px = out.depth.pixels();
    auto un = out.uncovered.pixels();
    for (size_t p = 0; p < px.size(); ++p) {
        if (!has_depth(px[p])) {
            px[p] = max_depth;
            un[p] = 1;
        }
    }
    return out;
}

struct SynthesisResult {
    RgbPanorama rgb;
    DepthPanorama depth;
    Mask holes;     ///< no depth-consistent sample, or no input covered the pixel
    Mask uncovered;
    size_t extended_pixels = 0;

    [[nodiscard]] double hole_fraction() const
    {
        const auto h = holes.pixels();
        return static_cast<double>(std::count(h.begin(), h.end(), std::uint8_t{1})) /
               static_cast<double>(h.size());
    }
};

inline SynthesisResult synthesize_view(const Pose& target, const ImageDims& dims, const std::vector<View>& views,
                                       const SynthesisConfig& cfg)
{
    cfg.validate();
    TargetDepth td = synthesize_target_depth(target, dims, views, cfg);
    SynthesisResult res{RgbPanorama(dims), std::move(td.depth), Mask(dims, 0), std::move(td.uncovered)};
    const SynthesisContext ctx(views, target, cfg);
    const DirectionTable dirs(dims);
    const int workers = std::clamp(resolve_threads(cfg.threads), 1, dims.height);
    std::vector<size_t> extended(static_cast<size_t>(workers), 0);

    parallel_chunks(dims.height, workers, [&](int begin, int end, int w) {
        std::vector<BlendSample> samples;
        samples.reserve(views.size());
        for (int j = begin; j < end; ++j) {
            for (int i = 0; i < dims.width; ++i) {
                const double d = res.depth(i, j);
                const Vec3 world = target.to_world(dirs(i, j) * d);
                const GatherStats st = gather_samples(world, ctx, cfg, samples);
                const BlendResult b = blend(samples, cfg.restrict_to_suitable, cfg.hole_color);
                res.rgb(i, j) = b.color;
                const bool hole = b.hole || st.exhausted || res.uncovered(i, j);
                res.holes(i, j) = hole ? 1 : 0;
                if (st.extended) ++extended[static_cast<size_t>(w)];
            }
        }
    });
    for (size_t e : extended) res.extended_pixels += e;
    return res;
}

/// Pinhole view cut out of an equirectangular panorama; yaw/pitch/roll follow
/// Mat3::from_yaw_pitch_roll and the camera looks along local +x.
inline RgbPanorama render_perspective(const RgbPanorama& pano, double yaw, double pitch, double roll,
                                      double hfov_rad, int width, int height)
{
    if (width < 1 || height < 1 || !(hfov_rad > 0.0) || !(hfov_rad < kPi))
        throw std::invalid_argument("render_perspective: bad output size or field of view");
    const Mat3 rot = Mat3::from_yaw_pitch_roll(yaw, pitch, roll);
    const double f = 0.5 * width / std::tan(0.5 * hfov_rad);
    RgbPanorama out(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            // camera frame: forward +x, up +y, so image right is +z
            const Vec3 ray{f, 0.5 * height - (y + 0.5), (x + 0.5) - 0.5 * width};
            const SphericalCoord s = cartesian_to_spherical(rot * ray);
            out(x, y) = sample_bilinear(pano, angles_to_pixel(s.theta, s.phi, pano.dims()));
        }
    }
    return out;
}

} // namespace panosynth
