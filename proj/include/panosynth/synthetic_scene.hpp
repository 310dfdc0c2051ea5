#pragma once

// Analytic RGBD panorama renderer. Scenes are unions of spheres, axis-aligned
// boxes and a ground plane with unshaded procedural albedo, so every view of a
// surface point has exactly the same color and depth is known in closed form.

#include <array>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "capture.hpp"
#include "geometry.hpp"
#include "image_io.hpp"
#include "manifest.hpp"
#include "parallel.hpp"
#include "raster.hpp"

namespace panosynth {

enum class Pattern { Plain, Stripes, Checker, Noise };

/// Albedo blending between `a` and `b` with a smooth solid texture of the
/// world position; `axis` is the stripe direction or the checker plane normal.
struct Material {
    Rgb a{0.5f, 0.5f, 0.5f};
    Rgb b{0.5f, 0.5f, 0.5f};
    Pattern pattern = Pattern::Plain;
    double period = 1.0;
    int axis = 0;

    [[nodiscard]] Rgb at(const Vec3& p) const;
};

struct Sphere {
    Vec3 center;
    double radius = 1.0;
    Material material;
};

struct Box {
    Vec3 lo;
    Vec3 hi;
    Material material;
};

struct GroundPlane {
    double height = -1.5;
    double period = 1.0;
    Rgb a{0.25f, 0.25f, 0.25f};
    Rgb b{0.75f, 0.75f, 0.75f};
};

struct SceneSpec {
    std::vector<Sphere> spheres;
    std::vector<Box> boxes;
    std::optional<GroundPlane> ground;
    Rgb sky{0.55f, 0.7f, 0.9f};

    void validate() const
    {
        for (const auto& s : spheres)
            if (!(s.radius > 0.0) || !s.center.finite()) throw std::invalid_argument("sphere radius must be > 0");
        for (const auto& b : boxes)
            if (!(b.hi.x > b.lo.x && b.hi.y > b.lo.y && b.hi.z > b.lo.z))
                throw std::invalid_argument("box must have positive extent");
        if (ground && !(ground->period > 0.0)) throw std::invalid_argument("ground period must be > 0");
    }
};

namespace detail {

inline double component(const Vec3& v, int axis) { return axis == 0 ? v.x : axis == 1 ? v.y : v.z; }

struct Wave {
    Vec3 k;
    double scale;
    double phase;
};

// Fixed plane waves; the directions are deliberately not axis aligned so the
// texture never degenerates to stripes on any wall.
inline constexpr std::array<Wave, 6> kNoiseWaves{{
    {{0.80, 0.36, 0.48}, 1.00, 0.3},
    {{-0.28, 0.91, 0.30}, 0.71, 1.7},
    {{0.45, -0.22, 0.87}, 0.53, 4.1},
    {{-0.66, -0.49, 0.57}, 1.37, 2.6},
    {{0.12, 0.64, -0.76}, 0.41, 5.3},
    {{0.93, -0.31, -0.19}, 0.83, 0.9},
}};

} // namespace detail

inline Rgb Material::at(const Vec3& p) const
{
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double m = 0.0;
    switch (pattern) {
    case Pattern::Plain: return a;
    case Pattern::Stripes: m = 0.5 + 0.5 * std::sin(two_pi * detail::component(p, axis) / period); break;
    case Pattern::Checker: {
        const double u = detail::component(p, (axis + 1) % 3), v = detail::component(p, (axis + 2) % 3);
        m = 0.5 + 0.5 * std::sin(two_pi * u / period) * std::sin(two_pi * v / period);
        break;
    }
    case Pattern::Noise: {
        double s = 0.0;
        for (const auto& w : detail::kNoiseWaves)
            s += std::sin(two_pi * w.k.dot(p) / (period * w.scale) + w.phase);
        m = 0.5 + 0.5 * s / static_cast<double>(detail::kNoiseWaves.size()) * 2.0;
        m = std::clamp(m, 0.0, 1.0);
        break;
    }
    }
    const auto mix = [m](float x, float y) { return static_cast<float>(x * (1.0 - m) + y * m); };
    return {mix(a.r, b.r), mix(a.g, b.g), mix(a.b, b.b)};
}

struct Hit {
    double distance;
    Rgb color;
};

inline std::optional<double> intersect(const Sphere& s, const Vec3& origin, const Vec3& dir)
{
    const Vec3 oc = origin - s.center;
    const double b = oc.dot(dir);
    const double c = oc.dot(oc) - s.radius * s.radius;
    const double disc = b * b - c;
    if (disc < 0.0) return std::nullopt;
    const double root = std::sqrt(disc);
    if (const double t = -b - root; t > 0.0) return t;
    if (const double t = -b + root; t > 0.0) return t;
    return std::nullopt;
}

inline std::optional<double> intersect(const Box& box, const Vec3& origin, const Vec3& dir)
{
    double t_near = -std::numeric_limits<double>::infinity(), t_far = std::numeric_limits<double>::infinity();
    for (int axis = 0; axis < 3; ++axis) {
        const double o = detail::component(origin, axis), d = detail::component(dir, axis);
        const double lo = detail::component(box.lo, axis), hi = detail::component(box.hi, axis);
        if (d == 0.0) {
            if (o < lo || o > hi) return std::nullopt;
            continue;
        }
        double t0 = (lo - o) / d, t1 = (hi - o) / d;
        if (t0 > t1) std::swap(t0, t1);
        t_near = std::max(t_near, t0);
        t_far = std::min(t_far, t1);
    }
    if (t_near > t_far) return std::nullopt;
    if (t_near > 0.0) return t_near;
    if (t_far > 0.0) return t_far;
    return std::nullopt;
}

inline std::optional<double> intersect(const GroundPlane& g, const Vec3& origin, const Vec3& dir)
{
    if (dir.y == 0.0) return std::nullopt;
    const double t = (g.height - origin.y) / dir.y;
    return t > 0.0 ? std::optional<double>(t) : std::nullopt;
}

/// Nearest surface along a unit-direction ray.
inline std::optional<Hit> trace(const SceneSpec& spec, const Vec3& origin, const Vec3& dir)
{
    std::optional<Hit> best;
    const auto consider = [&](std::optional<double> t, const auto& color_at) {
        if (t && (!best || *t < best->distance)) best = Hit{*t, color_at(origin + dir * *t)};
    };
    for (const auto& s : spec.spheres)
        consider(intersect(s, origin, dir), [&](const Vec3& p) { return s.material.at(p); });
    for (const auto& b : spec.boxes)
        consider(intersect(b, origin, dir), [&](const Vec3& p) { return b.material.at(p); });
    if (spec.ground) {
        const GroundPlane& g = *spec.ground;
        consider(intersect(g, origin, dir), [&](const Vec3& p) {
            const Material m{g.a, g.b, Pattern::Checker, g.period, 1};
            return m.at(p);
        });
    }
    return best;
}

struct RgbdPanorama {
    RgbPanorama rgb;
    DepthPanorama depth;
};

/// Snaps a color to the 8-bit grid so rendered rasters survive a PNG round trip.
inline Rgb quantized(const Rgb& c)
{
    const auto q = [](float v) { return static_cast<float>(quantize_channel(v)) / 255.0f; };
    return {q(c.r), q(c.g), q(c.b)};
}

/// Renders the scene from `pose`; rays that hit nothing get the sky color and
/// missing depth. Colors are quantized to 8 bits.
inline RgbdPanorama render_rgbd(const SceneSpec& spec, const Pose& pose, const ImageDims& dims, int threads = 0)
{
    spec.validate();
    dims.require_equirect();
    if (!pose.valid()) throw DomainError("render_rgbd: invalid pose");
    RgbdPanorama out{RgbPanorama(dims), DepthPanorama(dims, kMissingDepth)};
    const DirectionTable dirs(dims);
    parallel_chunks(dims.height, threads, [&](int begin, int end, int) {
        for (int j = begin; j < end; ++j) {
            for (int i = 0; i < dims.width; ++i) {
                const Vec3 dir = pose.rotation * dirs(i, j);
                if (const auto hit = trace(spec, pose.position, dir)) {
                    out.rgb(i, j) = quantized(hit->color);
                    out.depth(i, j) = static_cast<float>(hit->distance);
                } else {
                    out.rgb(i, j) = quantized(spec.sky);
                }
            }
        }
    });
    return out;
}

/// 1 where the surface seen by the target pixel is also directly visible from
/// at least one source position (or where the target sees only sky).
inline Mask visibility_mask(const SceneSpec& spec, const Pose& target, const ImageDims& dims,
                            const std::vector<Vec3>& sources, int threads = 0)
{
    Mask out(dims, 0);
    const DirectionTable dirs(dims);
    parallel_chunks(dims.height, threads, [&](int begin, int end, int) {
        for (int j = begin; j < end; ++j) {
            for (int i = 0; i < dims.width; ++i) {
                const auto hit = trace(spec, target.position, target.rotation * dirs(i, j));
                if (!hit) {
                    out(i, j) = 1;
                    continue;
                }
                const Vec3 x = target.position + target.rotation * dirs(i, j) * hit->distance;
                for (const Vec3& s : sources) {
                    const Vec3 to = x - s;
                    const double dist = to.norm();
                    const auto seen = trace(spec, s, to / dist);
                    if (seen && seen->distance >= dist * (1.0 - 1e-6)) {
                        out(i, j) = 1;
                        break;
                    }
                }
            }
        }
    });
    return out;
}

/// Indoor room with textured walls, a soft checker floor, one plain wall and a
/// few free-standing objects.
inline SceneSpec room_scene()
{
    SceneSpec s;
    const Rgb warm_a{0.62f, 0.45f, 0.32f}, warm_b{0.86f, 0.74f, 0.55f};
    const Rgb cool_a{0.28f, 0.38f, 0.52f}, cool_b{0.62f, 0.72f, 0.80f};
    s.ground = GroundPlane{-1.5, 0.9, {0.35f, 0.30f, 0.26f}, {0.70f, 0.64f, 0.55f}};
    const double t = 0.1;
    s.boxes.push_back({{-4.0 - t, -1.6, -4.0}, {-4.0, 2.6, 4.0}, {warm_a, warm_b, Pattern::Noise, 0.8}});
    s.boxes.push_back({{4.0, -1.6, -4.0}, {4.0 + t, 2.6, 4.0}, {cool_a, cool_b, Pattern::Noise, 0.7}});
    s.boxes.push_back({{-4.0, -1.6, -4.0 - t}, {4.0, 2.6, -4.0}, {{0.40f, 0.52f, 0.36f}, {0.78f, 0.82f, 0.62f},
                                                                 Pattern::Noise, 0.9}});
    s.boxes.push_back({{-4.0, -1.6, 4.0}, {4.0, 2.6, 4.0 + t}, {{0.80f, 0.78f, 0.72f}, {0.80f, 0.78f, 0.72f}}});
    s.boxes.push_back({{-4.0, 2.5, -4.0}, {4.0, 2.6, 4.0}, {{0.70f, 0.70f, 0.68f}, {0.90f, 0.88f, 0.84f},
                                                            Pattern::Stripes, 1.1, 0}});
    s.boxes.push_back({{1.3, -1.5, -2.3}, {1.8, 0.9, -1.8}, {{0.55f, 0.25f, 0.22f}, {0.85f, 0.55f, 0.40f},
                                                             Pattern::Stripes, 0.45, 1}});
    s.spheres.push_back({{-1.6, -0.6, -2.2}, 0.65, {{0.20f, 0.35f, 0.60f}, {0.55f, 0.70f, 0.85f}, Pattern::Noise, 0.5}});
    s.spheres.push_back({{2.1, -0.2, 1.7}, 0.7, {{0.60f, 0.55f, 0.20f}, {0.90f, 0.85f, 0.50f}, Pattern::Noise, 0.6}});
    s.spheres.push_back({{-2.0, -1.0, 2.1}, 0.5, {{0.35f, 0.55f, 0.30f}, {0.70f, 0.85f, 0.60f}, Pattern::Checker, 0.5, 1}});
    return s;
}

/// Open-air scene: checker ground, spheres and pillars under a flat sky.
inline SceneSpec open_scene()
{
    SceneSpec s;
    s.ground = GroundPlane{-1.5, 1.2, {0.30f, 0.40f, 0.25f}, {0.60f, 0.70f, 0.45f}};
    s.spheres.push_back({{0.0, 0.0, -5.0}, 1.0, {{0.70f, 0.30f, 0.25f}, {0.95f, 0.70f, 0.50f}, Pattern::Noise, 0.6}});
    s.spheres.push_back({{4.0, 0.5, 2.0}, 1.4, {{0.25f, 0.35f, 0.70f}, {0.60f, 0.75f, 0.90f}, Pattern::Noise, 0.8}});
    s.spheres.push_back({{-3.5, -0.7, 1.5}, 0.8, {{0.65f, 0.60f, 0.25f}, {0.90f, 0.90f, 0.60f}, Pattern::Stripes, 0.5, 1}});
    s.boxes.push_back({{-5.0, -1.5, -6.0}, {-4.0, 2.0, -5.0}, {{0.45f, 0.40f, 0.35f}, {0.80f, 0.75f, 0.65f},
                                                              Pattern::Noise, 0.7}});
    s.boxes.push_back({{2.5, -1.5, -4.5}, {3.2, 1.0, -3.8}, {{0.50f, 0.30f, 0.50f}, {0.80f, 0.65f, 0.85f},
                                                             Pattern::Stripes, 0.5, 1}});
    return s;
}

inline SceneSpec scene_preset(const std::string& name)
{
    if (name == "room") return room_scene();
    if (name == "open") return open_scene();
    if (name == "empty") return {};
    throw std::invalid_argument("unknown scene preset '" + name + "' (expected room, open or empty)");
}

struct GridOptions {
    int rows = 3;
    int cols = 3;
    double spacing = 0.5;
    Vec3 center{0.0, 0.0, 0.0};
    ImageDims dims{512, 256};
    bool hold_out_center = true;
    int threads = 0;
};

/// In-memory capture grid: frame k sits at row k / cols, column k % cols,
/// offset along x (columns) and z (rows) from the grid center.
struct GridFixture {
    SceneManifest manifest;
    std::vector<RgbPanorama> rgb;
    std::vector<DepthPanorama> depth;
    std::optional<size_t> held_out;
};

inline std::string grid_frame_id(int row, int col) { return "f" + std::to_string(row) + std::to_string(col); }

inline GridFixture render_grid(const SceneSpec& spec, const GridOptions& opt)
{
    if (opt.rows < 1 || opt.cols < 1 || opt.rows > 9 || opt.cols > 9)
        throw std::invalid_argument("grid rows and cols must be in [1, 9]");
    if (!(opt.spacing > 0.0)) throw std::invalid_argument("grid spacing must be > 0");
    GridFixture fx;
    for (int r = 0; r < opt.rows; ++r) {
        for (int c = 0; c < opt.cols; ++c) {
            const Vec3 pos = opt.center + Vec3{(c - (opt.cols - 1) / 2.0) * opt.spacing, 0.0,
                                               (r - (opt.rows - 1) / 2.0) * opt.spacing};
            CaptureFrame f;
            f.id = grid_frame_id(r, c);
            f.rgb_path = f.id + ".png";
            f.refined_depth_path = f.id + "_gt_depth.pfm";
            f.pose = Pose::at(pos);
            const bool center = opt.rows % 2 == 1 && opt.cols % 2 == 1 && r == opt.rows / 2 && c == opt.cols / 2;
            if (center && opt.hold_out_center) {
                f.held_out = true;
                fx.held_out = fx.manifest.frames.size();
            }
            auto rgbd = render_rgbd(spec, f.pose, opt.dims, opt.threads);
            f.blur_score = blur_score(rgbd.rgb);
            fx.rgb.push_back(std::move(rgbd.rgb));
            fx.depth.push_back(std::move(rgbd.depth));
            fx.manifest.frames.push_back(std::move(f));
        }
    }
    fx.manifest.validate();
    return fx;
}

/// Writes every frame's PNG and ground-truth PFM plus manifest.json into `dir`.
inline std::filesystem::path write_fixture(GridFixture& fx, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    for (size_t k = 0; k < fx.manifest.frames.size(); ++k) {
        const CaptureFrame& f = fx.manifest.frames[k];
        write_rgb_png(fx.rgb[k], dir / f.rgb_path);
        write_depth_pfm(fx.depth[k], dir / *f.refined_depth_path);
    }
    fx.manifest.base_dir = dir;
    const auto path = dir / "manifest.json";
    save_manifest(fx.manifest, path);
    return path;
}

} // namespace panosynth
