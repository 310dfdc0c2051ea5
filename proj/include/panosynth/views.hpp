#pragma once

#include <optional>
#include <string>
#include <vector>

#include "capture.hpp"
#include "image_io.hpp"
#include "manifest.hpp"

namespace panosynth {

/// A depth raster together with the pose it was captured from.
struct PosedDepth {
    const DepthPanorama* depth = nullptr;
    Pose pose;
};

/// A loaded input panorama: color plus the depth used for synthesis.
struct View {
    std::string id;
    Pose pose;
    RgbPanorama rgb;
    DepthPanorama depth;
};

enum class DepthKind { Sparse, Dense, Refined };

inline const std::optional<std::string>& depth_path(const CaptureFrame& f, DepthKind kind)
{
    switch (kind) {
    case DepthKind::Sparse: return f.sparse_depth_path;
    case DepthKind::Dense: return f.dense_depth_path;
    case DepthKind::Refined: break;
    }
    return f.refined_depth_path;
}

inline const char* to_string(DepthKind kind)
{
    switch (kind) {
    case DepthKind::Sparse: return "sparse_depth";
    case DepthKind::Dense: return "dense_depth";
    case DepthKind::Refined: break;
    }
    return "refined_depth";
}

/// Loads color and the requested depth of every non-held-out frame.
inline std::vector<View> load_views(const SceneManifest& m, DepthKind kind = DepthKind::Refined)
{
    std::vector<View> views;
    for (size_t k : m.active_frames()) {
        const CaptureFrame& f = m.frames[k];
        const auto& path = depth_path(f, kind);
        if (!path) throw ManifestError("frame '" + f.id + "' has no " + to_string(kind));
        View v;
        v.id = f.id;
        v.pose = f.pose;
        v.rgb = read_rgb_png(m.resolve(f.rgb_path));
        v.depth = read_depth_pfm(m.resolve(*path), v.rgb.dims());
        views.push_back(std::move(v));
    }
    if (views.empty()) throw ManifestError("manifest has no frames available for synthesis");
    return views;
}

inline std::vector<Vec3> positions_of(const std::vector<View>& views)
{
    std::vector<Vec3> out;
    out.reserve(views.size());
    for (const auto& v : views) out.push_back(v.pose.position);
    return out;
}

} // namespace panosynth
