#pragma once

// Capture-side utilities: sharpness scoring, frame sampling with blur
// substitution, neighbor queries and orientation alignment.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "manifest.hpp"
#include "parallel.hpp"
#include "raster.hpp"

namespace panosynth {

/// Variance of the 4-neighbor Laplacian of luma. Columns wrap, rows clamp.
inline double blur_score(const RgbPanorama& p)
{
    const Raster<float> y = luma_of(p);
    double sum = 0.0, sum_sq = 0.0;
    for (int j = 0; j < y.height(); ++j) {
        for (int i = 0; i < y.width(); ++i) {
            const double lap = static_cast<double>(y.at_wrapped(i - 1, j)) + y.at_wrapped(i + 1, j) +
                               y.at_wrapped(i, j - 1) + y.at_wrapped(i, j + 1) - 4.0 * y(i, j);
            sum += lap;
            sum_sq += lap * lap;
        }
    }
    const double n = static_cast<double>(y.size());
    const double mean = sum / n;
    return std::max(0.0, sum_sq / n - mean * mean);
}

struct FrameSelectionOptions {
    int stride = 10;
    /// Frames scoring below this quantile of all scores count as blurred.
    double blur_quantile = 0.1;
    /// Frames scoring at or below this are blurred regardless of the quantile.
    double min_score = 0.0;
};

/// Blur threshold: nearest-rank quantile of the scores.
inline double blur_threshold(std::vector<double> scores, double quantile)
{
    if (scores.empty()) throw std::invalid_argument("no blur scores");
    std::sort(scores.begin(), scores.end());
    const double q = std::clamp(quantile, 0.0, 1.0);
    const auto rank = static_cast<size_t>(std::floor(q * static_cast<double>(scores.size() - 1)));
    return scores[rank];
}

/// Indices of every stride-th frame, with blurred picks replaced by the
/// nearest sharp frame (later frame on a tie).
inline std::vector<size_t> select_frames(const std::vector<CaptureFrame>& frames,
                                         const FrameSelectionOptions& opt = {})
{
    if (frames.empty()) throw std::invalid_argument("select_frames: no frames");
    if (opt.stride < 1) throw std::invalid_argument("select_frames: stride must be >= 1");
    std::vector<double> scores;
    scores.reserve(frames.size());
    for (const auto& f : frames) scores.push_back(f.blur_score);
    const double threshold = blur_threshold(scores, opt.blur_quantile);
    const auto sharp = [&](size_t k) { return scores[k] >= threshold && scores[k] > opt.min_score; };

    bool any_sharp = false;
    for (size_t k = 0; k < frames.size(); ++k) any_sharp = any_sharp || sharp(k);
    if (!any_sharp) throw std::runtime_error("select_frames: every frame is blurred");

    std::vector<size_t> out;
    const auto n = static_cast<long long>(frames.size());
    for (long long k = 0; k < n; k += opt.stride) {
        if (sharp(static_cast<size_t>(k))) {
            out.push_back(static_cast<size_t>(k));
            continue;
        }
        for (long long off = 1; off < n; ++off) {
            if (k + off < n && sharp(static_cast<size_t>(k + off))) {
                out.push_back(static_cast<size_t>(k + off));
                break;
            }
            if (k - off >= 0 && sharp(static_cast<size_t>(k - off))) {
                out.push_back(static_cast<size_t>(k - off));
                break;
            }
        }
    }
    return out;
}

/// Up to `count` candidate indices ordered by distance to `target`, ties by index.
inline std::vector<size_t> nearest_of(const std::vector<Vec3>& positions, const Vec3& target, size_t count,
                                      const std::vector<size_t>* candidates = nullptr)
{
    std::vector<size_t> idx;
    if (candidates) {
        idx = *candidates;
    } else {
        idx.resize(positions.size());
        std::iota(idx.begin(), idx.end(), size_t{0});
    }
    std::vector<double> dist(positions.size(), 0.0);
    for (size_t k : idx) dist[k] = (positions[k] - target).norm();
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
        if (dist[a] != dist[b]) return dist[a] < dist[b];
        return a < b;
    });
    if (idx.size() > count) idx.resize(count);
    return idx;
}

/// The K frames closest to `target` (all frames when fewer), nearest first.
inline std::vector<size_t> k_nearest(const SceneManifest& m, const Vec3& target, size_t k)
{
    if (k < 1) throw std::invalid_argument("k_nearest: K must be >= 1");
    std::vector<Vec3> positions;
    positions.reserve(m.frames.size());
    for (const auto& f : m.frames) positions.push_back(f.pose.position);
    return nearest_of(positions, target, k);
}

/// Resamples a panorama so that its local frame becomes world-aligned, i.e.
/// the returned image is what a camera with identity rotation would record.
inline RgbPanorama align_to_world(const RgbPanorama& p, const Mat3& world_from_local, int threads = 0)
{
    RgbPanorama out(p.dims());
    const DirectionTable dirs(p.dims());
    const Mat3 local_from_world = world_from_local.transposed();
    parallel_chunks(p.height(), threads, [&](int begin, int end, int) {
        for (int j = begin; j < end; ++j) {
            for (int i = 0; i < p.width(); ++i) {
                const SphericalCoord s = cartesian_to_spherical(local_from_world * dirs(i, j));
                out(i, j) = sample_bilinear(p, angles_to_pixel(s.theta, s.phi, p.dims()));
            }
        }
    });
    return out;
}

} // namespace panosynth
