#pragma once

#include <filesystem>
#include <map>
#include <random>
#include <string>

#include <panosynth/panosynth.hpp>

namespace panosynth::test {

inline std::filesystem::path fresh_dir(const std::string& name)
{
    const auto dir = std::filesystem::path(PANOSYNTH_TEST_TMP) / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline RgbPanorama random_rgb(ImageDims dims, std::mt19937_64& rng, bool quantize = false)
{
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    RgbPanorama p(dims);
    for (auto& c : p.pixels()) {
        c = {u(rng), u(rng), u(rng)};
        if (quantize) c = quantized(c);
    }
    return p;
}

inline Pose random_pose(std::mt19937_64& rng, double extent = 2.0)
{
    std::uniform_real_distribution<double> pos(-extent, extent), ang(-kPi, kPi);
    return {{pos(rng), pos(rng), pos(rng)}, Mat3::from_yaw_pitch_roll(ang(rng), ang(rng) / 2, ang(rng))};
}

/// 3x3 room grid at reduced resolution, shared by tests that only need a
/// consistent multi-view set.
inline const GridFixture& small_room(int width = 128)
{
    static std::map<int, GridFixture> cache;
    auto it = cache.find(width);
    if (it == cache.end()) {
        GridOptions opt;
        opt.dims = ImageDims::equirect(width);
        it = cache.emplace(width, render_grid(room_scene(), opt)).first;
    }
    return it->second;
}

inline std::vector<View> views_of(const GridFixture& fx, bool skip_held_out = true)
{
    std::vector<View> v;
    for (size_t k = 0; k < fx.manifest.frames.size(); ++k) {
        if (skip_held_out && fx.held_out && *fx.held_out == k) continue;
        v.push_back({fx.manifest.frames[k].id, fx.manifest.frames[k].pose, fx.rgb[k], fx.depth[k]});
    }
    return v;
}

} // namespace panosynth::test
