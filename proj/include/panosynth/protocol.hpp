#pragma once

// Wire protocol of the synthesis service.
//
// A connection carries chunks in both directions. Each chunk is a 4-byte
// big-endian length followed by that many bytes. Client messages are single
// JSON text chunks:
//
//   {"type": "pose", "id": <any JSON, echoed back>,
//    "position": [x, y, z], "yaw": 0, "pitch": 0, "roll": 0,     (radians)
//    "output": "equirect" | "perspective",
//    "fov": 90, "width": 640, "height": 480,                     (perspective only; fov in degrees)
//    "quality": "native" | "low" | "medium" | "high"}            (equirect tiers 512, 1024, 2048 wide)
//   {"type": "health"}
//
// Server messages are a JSON text chunk, optionally followed by one binary
// chunk:
//
//   {"type": "frame", "seq": n, "id": ..., "latency_ms": t, "hole_fraction": h,
//    "width": w, "height": h, "png_bytes": size}   + binary chunk holding the PNG
//   {"type": "health", "frames": n, "width": w, "height": h, "memory_bytes": b, ...}
//   {"type": "error", "message": "...", "id": ...}
//
// Frame sequence numbers start at 1 and strictly increase within a session.
// A pose request that arrives while another is waiting replaces it, so a
// burst is answered with at most the in-flight frame and the latest request.

#include <array>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <sys/socket.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "geometry.hpp"

namespace panosynth {

class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class OutputKind { Equirect, Perspective };

enum class QualityTier { Native, Low, Medium, High };

inline constexpr std::array<int, 4> kTierWidths{0, 512, 1024, 2048};

struct PoseRequest {
    nlohmann::json id;  ///< opaque client tag, echoed in the reply
    Vec3 position;
    double yaw = 0.0;
    double pitch = 0.0;
    double roll = 0.0;
    OutputKind output = OutputKind::Equirect;
    double fov_deg = 90.0;
    int width = 640;
    int height = 480;
    QualityTier quality = QualityTier::Native;

    [[nodiscard]] Pose pose() const { return {position, Mat3::from_yaw_pitch_roll(yaw, pitch, roll)}; }
};

struct FrameResponse {
    std::uint64_t seq = 0;
    nlohmann::json id;
    double latency_ms = 0.0;
    double hole_fraction = 0.0;
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> png;
};

inline const char* to_string(QualityTier q)
{
    switch (q) {
    case QualityTier::Low: return "low";
    case QualityTier::Medium: return "medium";
    case QualityTier::High: return "high";
    case QualityTier::Native: break;
    }
    return "native";
}

inline QualityTier parse_quality(const std::string& s)
{
    if (s == "native") return QualityTier::Native;
    if (s == "low") return QualityTier::Low;
    if (s == "medium") return QualityTier::Medium;
    if (s == "high") return QualityTier::High;
    throw ProtocolError("unknown quality '" + s + "'");
}

namespace detail {

inline double finite_number(const nlohmann::json& j, const char* key, double fallback)
{
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (!v.is_number()) throw ProtocolError(std::string("'") + key + "' must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ProtocolError(std::string("'") + key + "' must be finite");
    return x;
}

} // namespace detail

inline PoseRequest parse_pose_request(const nlohmann::json& j)
{
    if (!j.is_object()) throw ProtocolError("request must be a JSON object");
    PoseRequest r;
    if (j.contains("id")) r.id = j.at("id");
    const auto pos = j.find("position");
    if (pos == j.end() || !pos->is_array() || pos->size() != 3)
        throw ProtocolError("'position' must be an array of three numbers");
    std::array<double, 3> p{};
    for (size_t k = 0; k < 3; ++k) {
        if (!(*pos)[k].is_number()) throw ProtocolError("'position' must be an array of three numbers");
        p[k] = (*pos)[k].get<double>();
        if (!std::isfinite(p[k])) throw ProtocolError("'position' must be finite");
    }
    r.position = {p[0], p[1], p[2]};
    r.yaw = detail::finite_number(j, "yaw", 0.0);
    r.pitch = detail::finite_number(j, "pitch", 0.0);
    r.roll = detail::finite_number(j, "roll", 0.0);
    const std::string output = j.value("output", "equirect");
    if (output == "equirect")
        r.output = OutputKind::Equirect;
    else if (output == "perspective")
        r.output = OutputKind::Perspective;
    else
        throw ProtocolError("unknown output '" + output + "'");
    r.fov_deg = detail::finite_number(j, "fov", 90.0);
    r.width = static_cast<int>(detail::finite_number(j, "width", 640));
    r.height = static_cast<int>(detail::finite_number(j, "height", 480));
    if (r.output == OutputKind::Perspective) {
        if (!(r.fov_deg > 0.0 && r.fov_deg < 180.0)) throw ProtocolError("'fov' must be in (0, 180)");
        if (r.width < 1 || r.height < 1 || r.width > 4096 || r.height > 4096)
            throw ProtocolError("perspective size must be within 1..4096");
    }
    if (j.contains("quality")) {
        if (!j.at("quality").is_string()) throw ProtocolError("'quality' must be a string");
        r.quality = parse_quality(j.at("quality").get<std::string>());
    }
    return r;
}

inline nlohmann::json to_json(const PoseRequest& r)
{
    nlohmann::json j{{"type", "pose"},
                     {"position", {r.position.x, r.position.y, r.position.z}},
                     {"yaw", r.yaw},
                     {"pitch", r.pitch},
                     {"roll", r.roll},
                     {"output", r.output == OutputKind::Equirect ? "equirect" : "perspective"},
                     {"quality", to_string(r.quality)}};
    if (!r.id.is_null()) j["id"] = r.id;
    if (r.output == OutputKind::Perspective) {
        j["fov"] = r.fov_deg;
        j["width"] = r.width;
        j["height"] = r.height;
    }
    return j;
}

inline nlohmann::json frame_header(const FrameResponse& f)
{
    return {{"type", "frame"},         {"seq", f.seq},     {"id", f.id},
            {"latency_ms", f.latency_ms}, {"hole_fraction", f.hole_fraction}, {"width", f.width},
            {"height", f.height},      {"png_bytes", f.png.size()}};
}

inline nlohmann::json error_message(const std::string& message, const nlohmann::json& id = nullptr)
{
    nlohmann::json j{{"type", "error"}, {"message", message}};
    if (!id.is_null()) j["id"] = id;
    return j;
}

inline constexpr std::uint32_t kMaxChunkBytes = 256u << 20;

/// Blocking chunk I/O on a connected socket.
class ChunkStream {
public:
    explicit ChunkStream(int fd) : fd_(fd) {}

    [[nodiscard]] int fd() const { return fd_; }

    void write_chunk(const void* data, size_t size)
    {
        if (size > kMaxChunkBytes) throw ProtocolError("chunk too large");
        const auto n = static_cast<std::uint32_t>(size);
        const std::uint8_t header[4] = {static_cast<std::uint8_t>(n >> 24), static_cast<std::uint8_t>(n >> 16),
                                        static_cast<std::uint8_t>(n >> 8), static_cast<std::uint8_t>(n)};
        write_all(header, 4);
        write_all(data, size);
    }

    void write_json(const nlohmann::json& j)
    {
        const std::string text = j.dump();
        write_chunk(text.data(), text.size());
    }

    /// Next chunk, or nullopt on a clean end of stream before a header.
    /// Chunks longer than `limit` are skipped and reported as ProtocolError.
    std::optional<std::vector<std::uint8_t>> read_chunk(std::uint32_t limit = kMaxChunkBytes)
    {
        std::uint8_t header[4];
        if (!read_all(header, 4, true)) return std::nullopt;
        const std::uint32_t n = (std::uint32_t{header[0]} << 24) | (std::uint32_t{header[1]} << 16) |
                                (std::uint32_t{header[2]} << 8) | std::uint32_t{header[3]};
        if (n > limit) {
            std::vector<std::uint8_t> sink(64 * 1024);
            for (std::uint32_t left = n; left > 0;) {
                const std::uint32_t take = std::min<std::uint32_t>(left, static_cast<std::uint32_t>(sink.size()));
                read_all(sink.data(), take, false);
                left -= take;
            }
            throw ProtocolError("message of " + std::to_string(n) + " bytes exceeds the limit");
        }
        std::vector<std::uint8_t> out(n);
        read_all(out.data(), n, false);
        return out;
    }

private:
    void write_all(const void* data, size_t size)
    {
        const auto* p = static_cast<const std::uint8_t*>(data);
        while (size > 0) {
            const ssize_t w = ::send(fd_, p, size, MSG_NOSIGNAL);
            if (w < 0 && errno == EINTR) continue;
            if (w <= 0) throw std::runtime_error("socket write failed");
            p += w;
            size -= static_cast<size_t>(w);
        }
    }

    bool read_all(void* data, size_t size, bool eof_ok)
    {
        auto* p = static_cast<std::uint8_t*>(data);
        size_t got = 0;
        while (got < size) {
            const ssize_t r = ::recv(fd_, p + got, size - got, 0);
            if (r < 0 && errno == EINTR) continue;
            if (r <= 0) {
                if (r == 0 && got == 0 && eof_ok) return false;
                throw std::runtime_error("connection closed mid-message");
            }
            got += static_cast<size_t>(r);
        }
        return true;
    }

    int fd_;
};

} // namespace panosynth
