#pragma once

// Scene manifest: ordered capture frames with asset paths and poses.
//
// Schema (JSON):
//   {
//     "world_unit": 1.0,
//     "frames": [
//       { "id": "f000", "rgb": "f000.png",
//         "sparse_depth": "...", "dense_depth": "...", "refined_depth": "...",   (optional)
//         "position": [x, y, z],
//         "rotation": [r00, r01, r02, r10, ..., r22],                          (optional, row-major)
//         "blur_score": 0.0, "held_out": false }                                (optional)
//     ]
//   }
// Asset paths are relative to the manifest's directory unless absolute.

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "geometry.hpp"

namespace panosynth {

class ManifestError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CaptureFrame {
    std::string id;
    std::string rgb_path;
    std::optional<std::string> sparse_depth_path;
    std::optional<std::string> dense_depth_path;
    std::optional<std::string> refined_depth_path;
    Pose pose;
    double blur_score = 0.0;
    bool held_out = false;

    bool operator==(const CaptureFrame&) const = default;
};

struct SceneManifest {
    std::vector<CaptureFrame> frames;
    double world_unit = 1.0;
    std::filesystem::path base_dir; ///< not serialized

    [[nodiscard]] std::filesystem::path resolve(const std::string& p) const
    {
        const std::filesystem::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    }

    /// Frames that take part in synthesis (not reserved as held-out truth).
    [[nodiscard]] std::vector<size_t> active_frames() const
    {
        std::vector<size_t> out;
        for (size_t k = 0; k < frames.size(); ++k)
            if (!frames[k].held_out) out.push_back(k);
        return out;
    }

    void validate() const
    {
        if (frames.empty()) throw ManifestError("manifest has no frames");
        std::set<std::string> ids;
        for (const auto& f : frames) {
            if (f.id.empty()) throw ManifestError("frame with empty id");
            if (!ids.insert(f.id).second) throw ManifestError("duplicate frame id '" + f.id + "'");
            if (f.rgb_path.empty()) throw ManifestError("frame '" + f.id + "' has no rgb path");
            if (!f.pose.valid()) throw ManifestError("frame '" + f.id + "' has an invalid pose");
            if (!(f.blur_score >= 0.0)) throw ManifestError("frame '" + f.id + "' has a negative blur score");
        }
        if (!(world_unit > 0.0)) throw ManifestError("world_unit must be positive");
    }
};

inline nlohmann::json manifest_to_json(const SceneManifest& m)
{
    nlohmann::json frames = nlohmann::json::array();
    for (const auto& f : m.frames) {
        nlohmann::json j;
        j["id"] = f.id;
        j["rgb"] = f.rgb_path;
        if (f.sparse_depth_path) j["sparse_depth"] = *f.sparse_depth_path;
        if (f.dense_depth_path) j["dense_depth"] = *f.dense_depth_path;
        if (f.refined_depth_path) j["refined_depth"] = *f.refined_depth_path;
        j["position"] = {f.pose.position.x, f.pose.position.y, f.pose.position.z};
        j["rotation"] = f.pose.rotation.m;
        j["blur_score"] = f.blur_score;
        if (f.held_out) j["held_out"] = true;
        frames.push_back(std::move(j));
    }
    return {{"world_unit", m.world_unit}, {"frames", std::move(frames)}};
}

inline SceneManifest manifest_from_json(const nlohmann::json& doc)
{
    SceneManifest m;
    try {
        if (!doc.is_object() || !doc.contains("frames") || !doc["frames"].is_array())
            throw ManifestError("manifest must be an object with a 'frames' array");
        m.world_unit = doc.value("world_unit", 1.0);
        for (const auto& j : doc["frames"]) {
            CaptureFrame f;
            f.id = j.at("id").get<std::string>();
            f.rgb_path = j.at("rgb").get<std::string>();
            if (j.contains("sparse_depth")) f.sparse_depth_path = j["sparse_depth"].get<std::string>();
            if (j.contains("dense_depth")) f.dense_depth_path = j["dense_depth"].get<std::string>();
            if (j.contains("refined_depth")) f.refined_depth_path = j["refined_depth"].get<std::string>();
            const auto pos = j.at("position").get<std::vector<double>>();
            if (pos.size() != 3) throw ManifestError("frame '" + f.id + "': position needs 3 values");
            f.pose.position = {pos[0], pos[1], pos[2]};
            if (j.contains("rotation")) {
                const auto rot = j["rotation"].get<std::vector<double>>();
                if (rot.size() != 9) throw ManifestError("frame '" + f.id + "': rotation needs 9 values");
                std::copy(rot.begin(), rot.end(), f.pose.rotation.m.begin());
            }
            f.blur_score = j.value("blur_score", 0.0);
            f.held_out = j.value("held_out", false);
            m.frames.push_back(std::move(f));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ManifestError(std::string("malformed manifest: ") + e.what());
    }
    m.validate();
    return m;
}

inline SceneManifest load_manifest(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ManifestError("cannot open manifest " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ManifestError(path.string() + ": " + e.what());
    }
    SceneManifest m = manifest_from_json(doc);
    m.base_dir = path.parent_path();
    return m;
}

inline void save_manifest(const SceneManifest& m, const std::filesystem::path& path)
{
    m.validate();
    std::ofstream out(path);
    if (!out) throw ManifestError("cannot write manifest " + path.string());
    out << manifest_to_json(m).dump(2) << "\n";
}

} // namespace panosynth
