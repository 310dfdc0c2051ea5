#pragma once

// Missing-aware grayscale morphology on depth rasters with a disk element.
// Columns wrap around the panorama seam; rows outside the image are skipped.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "parallel.hpp"
#include "raster.hpp"

namespace panosynth {

struct Offset {
    int di = 0;
    int dj = 0;
};

inline std::vector<Offset> disk_offsets(int radius)
{
    std::vector<Offset> out;
    for (int dj = -radius; dj <= radius; ++dj)
        for (int di = -radius; di <= radius; ++di)
            if (di * di + dj * dj <= radius * radius) out.push_back({di, dj});
    return out;
}

namespace detail {

/// Min (or max) over the disk. Missing neighbors are skipped, or poison the
/// result when `missing_poisons` is set. Pixels missing in `src` stay missing
/// unless `fill_missing` is set.
template <bool TakeMin>
DepthPanorama disk_extremum(const DepthPanorama& src, int radius, bool missing_poisons, bool fill_missing,
                            int threads)
{
    const auto offsets = disk_offsets(radius);
    DepthPanorama out(src.dims(), kMissingDepth);
    parallel_chunks(src.height(), threads, [&](int begin, int end, int) {
        for (int j = begin; j < end; ++j) {
            for (int i = 0; i < src.width(); ++i) {
                if (!fill_missing && !has_depth(src(i, j))) continue;
                float best = TakeMin ? std::numeric_limits<float>::infinity()
                                     : -std::numeric_limits<float>::infinity();
                bool any = false;
                bool poisoned = false;
                for (const Offset& o : offsets) {
                    const int jj = j + o.dj;
                    if (jj < 0 || jj >= src.height()) continue;
                    const float v = src(src.wrap_column(i + o.di), jj);
                    if (!has_depth(v)) {
                        if (missing_poisons) {
                            poisoned = true;
                            break;
                        }
                        continue;
                    }
                    any = true;
                    best = TakeMin ? std::min(best, v) : std::max(best, v);
                }
                if (any && !poisoned) out(i, j) = best;
            }
        }
    });
    return out;
}

} // namespace detail

/// Closing in nearness: min-depth dilation (missing skipped, so small holes
/// are filled) followed by max-depth erosion (missing treated as +inf). Holes
/// take the farther surrounding depth and foreground edges keep their place.
inline DepthPanorama morphological_close_depth(const DepthPanorama& d, int radius, int threads = 0)
{
    if (radius < 1) throw std::invalid_argument("closing radius must be >= 1");
    const DepthPanorama dilated = detail::disk_extremum<true>(d, radius, false, true, threads);
    return detail::disk_extremum<false>(dilated, radius, true, false, threads);
}

/// Opening in nearness: max-depth erosion then min-depth dilation, both over
/// valid pixels only. Removes isolated near-depth speckles; missing pixels stay
/// missing and depths never decrease.
inline DepthPanorama morphological_open_depth(const DepthPanorama& d, int radius, int threads = 0)
{
    if (radius < 1) return d;
    const DepthPanorama eroded = detail::disk_extremum<false>(d, radius, false, false, threads);
    return detail::disk_extremum<true>(eroded, radius, false, false, threads);
}

} // namespace panosynth
