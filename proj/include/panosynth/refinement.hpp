#pragma once

// Iterative depth refinement: sparse/dense fusion, raymarching correction of
// depths that float in front of what neighboring views see, and forward
// projection of neighbor depths with a nearest-surface rule.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "capture.hpp"
#include "morphology.hpp"
#include "parallel.hpp"
#include "raster.hpp"
#include "views.hpp"

namespace panosynth {

struct RefinementConfig {
    double rate = 0.005;       ///< relative depth step per march
    int k_raymarch = 4;
    int k_projection = 6;      ///< usually k_raymarch + 2
    int iterations = 3;
    int k_increment = 2;       ///< added to both neighbor counts after each iteration
    int max_march_steps = 2000;
    int closing_radius = 2;
    int opening_radius = 1;
    float lookup_edge_ratio = 1.1f; ///< neighbor depth lookups, see sample_depth
    int threads = 0;

    void validate() const
    {
        if (!(rate > 0.0)) throw std::invalid_argument("refinement rate must be > 0");
        if (k_raymarch < 1) throw std::invalid_argument("k_raymarch must be >= 1");
        if (k_projection < k_raymarch) throw std::invalid_argument("k_projection must be >= k_raymarch");
        if (iterations < 1) throw std::invalid_argument("iterations must be >= 1");
        if (k_increment < 0) throw std::invalid_argument("k_increment must be >= 0");
        if (max_march_steps < 1) throw std::invalid_argument("max_march_steps must be >= 1");
    }
};

/// Sparse depth where present, dense elsewhere, then an opening to drop
/// isolated near-depth speckles.
inline DepthPanorama fuse_depths(const DepthPanorama* sparse, const DepthPanorama* dense, int opening_radius,
                                 int threads = 0)
{
    if (!sparse && !dense) throw std::invalid_argument("fuse_depths needs at least one depth map");
    if (sparse && dense && !(sparse->dims() == dense->dims()))
        throw std::invalid_argument("fuse_depths: sparse and dense dimensions differ");
    DepthPanorama combined(sparse ? sparse->dims() : dense->dims(), kMissingDepth);
    auto out = combined.pixels();
    for (size_t k = 0; k < out.size(); ++k) {
        if (sparse && has_depth(sparse->pixels()[k]))
            out[k] = sparse->pixels()[k];
        else if (dense && has_depth(dense->pixels()[k]))
            out[k] = dense->pixels()[k];
    }
    return morphological_open_depth(combined, opening_radius, threads);
}

inline DepthPanorama fuse_depths(const DepthPanorama& sparse, const DepthPanorama& dense,
                                 const RefinementConfig& cfg)
{
    return fuse_depths(&sparse, &dense, cfg.opening_radius, cfg.threads);
}

struct RaymarchResult {
    DepthPanorama depth;
    Mask flagged;        ///< pixels that hit the step cap and kept their input depth
    size_t marched = 0;  ///< pixels whose depth was pushed back
    size_t flagged_count = 0;
};

/// Pushes each depth outward by `rate` until none of the first `k` neighbors
/// sees the point in front of its own recorded surface. The neighbor scan
/// restarts from the first neighbor after every push. Missing neighbor depths
/// and degenerate reprojections count as agreement. After `max_steps` pushes
/// the input depth is kept and the pixel is flagged. Neighbor depths are read
/// with sample_depth, which falls back to the closest pixel across silhouettes.
inline RaymarchResult raymarch_correct(const DepthPanorama& depth, const Pose& pose,
                                       std::span<const PosedDepth> neighbors, int k, double rate,
                                       int max_steps, int threads = 0, float edge_ratio = 1.1f)
{
    if (k < 0 || static_cast<size_t>(k) > neighbors.size())
        throw std::invalid_argument("raymarch_correct: K_rm exceeds the number of neighbors");
    RaymarchResult res{depth, Mask(depth.dims(), 0)};
    if (k == 0) return res;

    std::vector<RelativeTransform> xf;
    for (int n = 0; n < k; ++n) xf.emplace_back(pose, neighbors[static_cast<size_t>(n)].pose);
    const DirectionTable dirs(depth.dims());
    const int rows = depth.height();
    const int workers = std::clamp(resolve_threads(threads), 1, std::max(rows, 1));
    std::vector<size_t> marched(static_cast<size_t>(workers), 0), flagged(static_cast<size_t>(workers), 0);

    parallel_chunks(rows, workers, [&](int begin, int end, int w) {
        for (int j = begin; j < end; ++j) {
            for (int i = 0; i < depth.width(); ++i) {
                const float input = depth(i, j);
                if (!has_depth(input)) continue;
                const Vec3 dir = dirs(i, j);
                double d = input;
                int steps = 0;
                bool capped = false;
                for (int n = 0; n < k;) {
                    const auto rep = try_reproject(dir * d, xf[static_cast<size_t>(n)]);
                    bool in_front = false;
                    if (rep) {
                        const DepthPanorama& nd = *neighbors[static_cast<size_t>(n)].depth;
                        const float seen =
                            sample_depth(nd, angles_to_pixel(rep->theta, rep->phi, nd.dims()), edge_ratio);
                        in_front = has_depth(seen) && static_cast<float>(rep->d) < seen;
                    }
                    if (!in_front) {
                        ++n;
                        continue;
                    }
                    if (++steps > max_steps) {
                        capped = true;
                        break;
                    }
                    d += rate * d;
                    n = 0;
                }
                if (capped) {
                    res.flagged(i, j) = 1;
                    ++flagged[static_cast<size_t>(w)];
                } else if (steps > 0) {
                    res.depth(i, j) = static_cast<float>(d);
                    ++marched[static_cast<size_t>(w)];
                }
            }
        }
    });
    for (int w = 0; w < workers; ++w) {
        res.marched += marched[static_cast<size_t>(w)];
        res.flagged_count += flagged[static_cast<size_t>(w)];
    }
    return res;
}

/// Splats every valid pixel of the first `k` sources into the target panorama,
/// rounding to the nearest target pixel and keeping the smallest depth.
/// Pixels nobody writes stay missing.
inline DepthPanorama forward_project(const Pose& target, const ImageDims& dims,
                                     std::span<const PosedDepth> sources, int k, int threads = 0)
{
    if (k < 1) throw std::invalid_argument("forward_project: K_fp must be >= 1");
    const size_t used = std::min(static_cast<size_t>(k), sources.size());
    constexpr float kUnwritten = std::numeric_limits<float>::infinity();

    // Work items are (source, row) pairs; each worker splats into its own buffer.
    std::vector<int> row_offset{0};
    for (size_t s = 0; s < used; ++s) row_offset.push_back(row_offset.back() + sources[s].depth->height());
    const int items = row_offset.back();
    const int workers = std::clamp(resolve_threads(threads), 1, std::max(items, 1));
    std::vector<DepthPanorama> buffers(static_cast<size_t>(workers), DepthPanorama(dims, kUnwritten));
    std::vector<RelativeTransform> xf;
    std::vector<DirectionTable> dirs;
    for (size_t s = 0; s < used; ++s) {
        xf.emplace_back(sources[s].pose, target);
        dirs.emplace_back(sources[s].depth->dims());
    }

    parallel_chunks(items, workers, [&](int begin, int end, int w) {
        DepthPanorama& buf = buffers[static_cast<size_t>(w)];
        for (int item = begin; item < end; ++item) {
            const auto s = static_cast<size_t>(
                std::upper_bound(row_offset.begin(), row_offset.end(), item) - row_offset.begin() - 1);
            const int j = item - row_offset[s];
            const DepthPanorama& src = *sources[s].depth;
            for (int i = 0; i < src.width(); ++i) {
                const float d = src(i, j);
                if (!has_depth(d)) continue;
                const auto rep = try_reproject(dirs[s](i, j) * static_cast<double>(d), xf[s]);
                if (!rep) continue;
                const PixelIndex px = nearest_pixel(buf, angles_to_pixel(rep->theta, rep->phi, dims));
                float& slot = buf(px.i, px.j);
                slot = std::min(slot, static_cast<float>(rep->d));
            }
        }
    });

    DepthPanorama out(dims, kMissingDepth);
    auto dst = out.pixels();
    for (size_t p = 0; p < dst.size(); ++p) {
        float best = kUnwritten;
        for (const auto& b : buffers) best = std::min(best, b.pixels()[p]);
        if (best < kUnwritten) dst[p] = best;
    }
    return out;
}

struct FrameDepths {
    Pose pose;
    std::optional<DepthPanorama> sparse;
    std::optional<DepthPanorama> dense;
};

struct IterationReport {
    int iteration = 0;
    int k_raymarch = 0;
    int k_projection = 0;
    size_t marched = 0;
    size_t flagged = 0;
    size_t missing_after_projection = 0;
};

struct RefinementResult {
    std::vector<DepthPanorama> refined;
    std::vector<IterationReport> iterations;
};

/// Runs fusion -> raymarch correction -> forward projection for the configured
/// number of iterations, widening the neighbor counts each time, and finishes
/// with one more fusion of the sparse depths with the projected depths.
inline RefinementResult refine_all(const std::vector<FrameDepths>& frames, const RefinementConfig& cfg)
{
    cfg.validate();
    if (frames.empty()) throw std::invalid_argument("refine_all: no frames");
    for (const auto& f : frames)
        if (!f.sparse && !f.dense) throw std::invalid_argument("refine_all: frame without sparse or dense depth");

    const size_t n = frames.size();
    std::vector<Vec3> positions;
    for (const auto& f : frames) positions.push_back(f.pose.position);
    std::vector<std::vector<size_t>> order(n);
    for (size_t f = 0; f < n; ++f) order[f] = nearest_of(positions, positions[f], n);

    std::vector<std::optional<DepthPanorama>> dense(n);
    for (size_t f = 0; f < n; ++f) dense[f] = frames[f].dense;

    const auto fuse = [&](size_t f) {
        const DepthPanorama* sp = frames[f].sparse ? &*frames[f].sparse : nullptr;
        const DepthPanorama* de = dense[f] ? &*dense[f] : nullptr;
        return fuse_depths(sp, de, cfg.opening_radius, cfg.threads);
    };

    RefinementResult result;
    int k_rm = cfg.k_raymarch;
    const int fp_offset = cfg.k_projection - cfg.k_raymarch;
    for (int it = 0; it < cfg.iterations; ++it) {
        const int k_rm_used = std::min<int>(k_rm, static_cast<int>(n) - 1);
        const int k_fp_used = std::min<int>(k_rm + fp_offset, static_cast<int>(n));
        IterationReport rep{it, k_rm_used, k_fp_used};

        std::vector<DepthPanorama> fused(n);
        for (size_t f = 0; f < n; ++f) fused[f] = fuse(f);

        std::vector<DepthPanorama> corrected(n);
        for (size_t f = 0; f < n; ++f) {
            std::vector<PosedDepth> nb;
            for (size_t o : order[f])
                if (o != f && static_cast<int>(nb.size()) < k_rm_used) nb.push_back({&fused[o], frames[o].pose});
            auto rm = raymarch_correct(fused[f], frames[f].pose, nb, static_cast<int>(nb.size()), cfg.rate,
                                       cfg.max_march_steps, cfg.threads, cfg.lookup_edge_ratio);
            rep.marched += rm.marched;
            rep.flagged += rm.flagged_count;
            corrected[f] = std::move(rm.depth);
        }

        for (size_t f = 0; f < n; ++f) {
            std::vector<PosedDepth> src;
            for (size_t o : order[f]) src.push_back({&corrected[o], frames[o].pose});
            dense[f] = forward_project(frames[f].pose, corrected[f].dims(), src, k_fp_used, cfg.threads);
            rep.missing_after_projection += count_missing(*dense[f]);
        }
        result.iterations.push_back(rep);
        k_rm += cfg.k_increment;
    }
    for (size_t f = 0; f < n; ++f) result.refined.push_back(fuse(f));
    return result;
}

} // namespace panosynth
