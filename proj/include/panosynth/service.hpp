#pragma once

// Long-running synthesis service: one immutable dataset shared by every
// session, a chunked socket protocol (see protocol.hpp) with latest-wins
// request handling, and a small HTTP side door for health and single frames.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <filesystem>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "image_io.hpp"
#include "manifest.hpp"
#include "protocol.hpp"
#include "synthesis.hpp"
#include "views.hpp"

namespace panosynth {

/// Input views with refined depths, loaded once and never modified.
struct Dataset {
    std::vector<View> views;
    ImageDims dims;
    Vec3 bounds_min;
    Vec3 bounds_max;

    static Dataset from_views(std::vector<View> v)
    {
        if (v.empty()) throw std::invalid_argument("dataset has no views");
        Dataset d;
        d.dims = v.front().rgb.dims();
        d.bounds_min = d.bounds_max = v.front().pose.position;
        for (const auto& view : v) {
            if (!(view.rgb.dims() == d.dims) || !(view.depth.dims() == d.dims))
                throw std::invalid_argument("all views must share one resolution");
            const Vec3& p = view.pose.position;
            d.bounds_min = {std::min(d.bounds_min.x, p.x), std::min(d.bounds_min.y, p.y),
                            std::min(d.bounds_min.z, p.z)};
            d.bounds_max = {std::max(d.bounds_max.x, p.x), std::max(d.bounds_max.y, p.y),
                            std::max(d.bounds_max.z, p.z)};
        }
        d.views = std::move(v);
        return d;
    }

    static Dataset load(const std::filesystem::path& manifest_path)
    {
        return from_views(load_views(load_manifest(manifest_path), DepthKind::Refined));
    }

    [[nodiscard]] size_t memory_bytes() const
    {
        size_t total = 0;
        for (const auto& v : views) total += v.rgb.size() * sizeof(Rgb) + v.depth.size() * sizeof(float);
        return total;
    }
};

struct RenderedFrame {
    RgbPanorama image;
    double hole_fraction = 0.0;
};

inline ImageDims output_dims(const Dataset& ds, QualityTier q)
{
    if (q == QualityTier::Native) return ds.dims;
    const int w = kTierWidths[static_cast<size_t>(q)];
    return {w, w / 2};
}

/// Equirect requests are synthesized at the requested orientation. Perspective
/// requests cut a pinhole view, looking along the rotated +x axis, out of the
/// axis-aligned panorama at the same position.
inline RenderedFrame render_request(const Dataset& ds, const PoseRequest& r, const SynthesisConfig& cfg)
{
    const ImageDims dims = output_dims(ds, r.quality);
    if (r.output == OutputKind::Equirect) {
        SynthesisResult s = synthesize_view(r.pose(), dims, ds.views, cfg);
        return {std::move(s.rgb), s.hole_fraction()};
    }
    SynthesisResult s = synthesize_view(Pose::at(r.position), dims, ds.views, cfg);
    return {render_perspective(s.rgb, r.yaw, r.pitch, r.roll, r.fov_deg * kPi / 180.0, r.width, r.height),
            s.hole_fraction()};
}

inline FrameResponse make_frame(const Dataset& ds, const PoseRequest& r, const SynthesisConfig& cfg,
                                std::uint64_t seq)
{
    const auto start = std::chrono::steady_clock::now();
    RenderedFrame rendered = render_request(ds, r, cfg);
    FrameResponse f;
    f.seq = seq;
    f.id = r.id;
    f.hole_fraction = rendered.hole_fraction;
    f.width = rendered.image.width();
    f.height = rendered.image.height();
    f.png = encode_rgb_png(rendered.image);
    f.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return f;
}

/// Single-slot mailbox: put() overwrites anything not yet taken.
template <class T>
class LatestWins {
public:
    /// Returns true when an untaken item was replaced.
    bool put(T item)
    {
        std::lock_guard lock(mu_);
        const bool replaced = slot_.has_value();
        slot_ = std::move(item);
        cv_.notify_one();
        return replaced;
    }

    /// Blocks for the next item; nullopt once closed and drained.
    std::optional<T> take()
    {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return slot_.has_value() || closed_; });
        std::optional<T> out = std::move(slot_);
        slot_.reset();
        return out;
    }

    void close()
    {
        std::lock_guard lock(mu_);
        closed_ = true;
        slot_.reset();
        cv_.notify_all();
    }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    std::optional<T> slot_;
    bool closed_ = false;
};

struct ServiceConfig {
    SynthesisConfig synthesis;
    QualityTier max_quality = QualityTier::High;
    std::string host = "127.0.0.1";
    int port = 0;       ///< 0 picks a free port
    int http_port = -1; ///< -1 disables HTTP, 0 picks a free port
    std::uint32_t max_request_bytes = 1u << 20;
};

class SynthesisService {
public:
    SynthesisService(std::shared_ptr<const Dataset> dataset, ServiceConfig cfg)
        : dataset_(std::move(dataset)), cfg_(std::move(cfg))
    {
        cfg_.synthesis.validate();
    }

    SynthesisService(const SynthesisService&) = delete;
    SynthesisService& operator=(const SynthesisService&) = delete;
    ~SynthesisService() { stop(); }

    void start()
    {
        listen_fd_ = open_listener(cfg_.host, cfg_.port, port_);
        running_ = true;
        acceptor_ = std::jthread([this] { accept_loop(); });
        if (cfg_.http_port >= 0) start_http();
    }

    void stop()
    {
        if (!running_.exchange(false)) return;
        if (http_) http_->stop();
        if (http_thread_.joinable()) http_thread_.join();
        if (acceptor_.joinable()) acceptor_.join();
        ::close(listen_fd_);
        std::list<std::unique_ptr<Session>> closing;
        {
            std::lock_guard lock(sessions_mu_);
            closing.swap(sessions_);
        }
        for (auto& s : closing) s->shutdown();
    }

    /// Async-signal-safe request for wait() to return.
    void request_stop() { stop_requested_ = true; }

    /// Blocks until request_stop() or stop() is called from elsewhere.
    void wait()
    {
        while (running_ && !stop_requested_) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }

    [[nodiscard]] int port() const { return port_; }
    [[nodiscard]] int http_port() const { return http_port_; }

    [[nodiscard]] nlohmann::json health() const
    {
        const Dataset& ds = *dataset_;
        size_t sessions = 0;
        {
            std::lock_guard lock(sessions_mu_);
            for (const auto& s : sessions_) sessions += s->alive() ? 1 : 0;
        }
        return {{"type", "health"},
                {"status", "ok"},
                {"frames", ds.views.size()},
                {"width", ds.dims.width},
                {"height", ds.dims.height},
                {"memory_bytes", ds.memory_bytes()},
                {"bounds_min", {ds.bounds_min.x, ds.bounds_min.y, ds.bounds_min.z}},
                {"bounds_max", {ds.bounds_max.x, ds.bounds_max.y, ds.bounds_max.z}},
                {"sessions", sessions},
                {"frames_served", frames_served_.load()}};
    }

    void check_quality(const PoseRequest& r) const
    {
        if (r.quality != QualityTier::Native && r.quality > cfg_.max_quality)
            throw ProtocolError(std::string("quality '") + to_string(r.quality) + "' exceeds the configured maximum '" +
                                to_string(cfg_.max_quality) + "'");
    }

private:
    class Session {
    public:
        Session(int fd, SynthesisService& owner) : fd_(fd), stream_(fd), owner_(owner)
        {
            worker_ = std::jthread([this] { work(); });
            reader_ = std::jthread([this] { read(); });
        }

        ~Session()
        {
            shutdown();
            if (reader_.joinable()) reader_.join();
            mailbox_.close();
            if (worker_.joinable()) worker_.join();
            ::close(fd_);
        }

        void shutdown() { ::shutdown(fd_, SHUT_RDWR); }
        [[nodiscard]] bool alive() const { return alive_; }

    private:
        void send_json(const nlohmann::json& j)
        {
            std::lock_guard lock(write_mu_);
            stream_.write_json(j);
        }

        void read()
        {
            try {
                for (;;) {
                    std::optional<std::vector<std::uint8_t>> chunk;
                    try {
                        chunk = stream_.read_chunk(owner_.cfg_.max_request_bytes);
                    } catch (const ProtocolError& e) {
                        send_json(error_message(e.what()));
                        continue;
                    }
                    if (!chunk) break;
                    handle(*chunk);
                }
            } catch (const std::exception&) {
                // connection dropped
            }
            alive_ = false;
            mailbox_.close();
        }

        void handle(const std::vector<std::uint8_t>& chunk)
        {
            nlohmann::json msg = nlohmann::json::parse(chunk.begin(), chunk.end(), nullptr, false);
            if (msg.is_discarded() || !msg.is_object()) {
                send_json(error_message("message is not a JSON object"));
                return;
            }
            const nlohmann::json id = msg.value("id", nlohmann::json());
            const std::string type = msg.value("type", "pose");
            if (type == "health") {
                send_json(owner_.health());
                return;
            }
            if (type != "pose") {
                send_json(error_message("unknown message type '" + type + "'", id));
                return;
            }
            try {
                PoseRequest r = parse_pose_request(msg);
                owner_.check_quality(r);
                mailbox_.put(std::move(r));
            } catch (const std::exception& e) {
                send_json(error_message(e.what(), id));
            }
        }

        void work()
        {
            while (auto req = mailbox_.take()) {
                try {
                    FrameResponse f = make_frame(*owner_.dataset_, *req, owner_.cfg_.synthesis, ++seq_);
                    std::lock_guard lock(write_mu_);
                    stream_.write_json(frame_header(f));
                    stream_.write_chunk(f.png.data(), f.png.size());
                    ++owner_.frames_served_;
                } catch (const std::exception& e) {
                    try {
                        send_json(error_message(e.what(), req->id));
                    } catch (const std::exception&) {
                        return;
                    }
                }
            }
        }

        int fd_;
        ChunkStream stream_;
        SynthesisService& owner_;
        std::mutex write_mu_;
        LatestWins<PoseRequest> mailbox_;
        std::uint64_t seq_ = 0;
        std::atomic<bool> alive_{true};
        std::jthread worker_;
        std::jthread reader_;
    };

    static int open_listener(const std::string& host, int port, int& bound_port)
    {
        addrinfo hints{};
        hints.ai_family = AF_UNSPEC;
        hints.ai_socktype = SOCK_STREAM;
        hints.ai_flags = AI_PASSIVE;
        addrinfo* res = nullptr;
        const std::string service = std::to_string(port);
        if (const int rc = ::getaddrinfo(host.empty() ? nullptr : host.c_str(), service.c_str(), &hints, &res); rc != 0)
            throw std::runtime_error("cannot resolve " + host + ": " + ::gai_strerror(rc));
        int fd = -1;
        for (addrinfo* ai = res; ai; ai = ai->ai_next) {
            fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
            if (fd < 0) continue;
            const int one = 1;
            ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
            if (::bind(fd, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd, 16) == 0) break;
            ::close(fd);
            fd = -1;
        }
        ::freeaddrinfo(res);
        if (fd < 0) throw std::runtime_error("cannot listen on " + host + ":" + service);
        sockaddr_storage addr{};
        socklen_t len = sizeof addr;
        ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
        bound_port = addr.ss_family == AF_INET6 ? ntohs(reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port)
                                                : ntohs(reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
        return fd;
    }

    void accept_loop()
    {
        while (running_) {
            pollfd p{listen_fd_, POLLIN, 0};
            if (::poll(&p, 1, 100) <= 0) continue;
            const int fd = ::accept(listen_fd_, nullptr, nullptr);
            if (fd < 0) continue;
            const int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
            std::list<std::unique_ptr<Session>> finished;
            std::lock_guard lock(sessions_mu_);
            for (auto it = sessions_.begin(); it != sessions_.end();) {
                auto next = std::next(it);
                if (!(*it)->alive()) finished.splice(finished.end(), sessions_, it);
                it = next;
            }
            sessions_.push_back(std::make_unique<Session>(fd, *this));
        }
    }

    void start_http()
    {
        http_ = std::make_unique<httplib::Server>();
        http_->Get("/health", [this](const httplib::Request&, httplib::Response& res) {
            res.set_content(health().dump(), "application/json");
        });
        http_->Post("/frame", [this](const httplib::Request& req, httplib::Response& res) {
            const nlohmann::json msg = nlohmann::json::parse(req.body, nullptr, false);
            try {
                if (msg.is_discarded()) throw ProtocolError("body is not JSON");
                const PoseRequest r = parse_pose_request(msg);
                check_quality(r);
                const FrameResponse f = make_frame(*dataset_, r, cfg_.synthesis, ++http_seq_);
                ++frames_served_;
                res.set_header("X-Seq", std::to_string(f.seq));
                res.set_header("X-Latency-Ms", std::to_string(f.latency_ms));
                res.set_header("X-Hole-Fraction", std::to_string(f.hole_fraction));
                res.set_content(std::string(f.png.begin(), f.png.end()), "image/png");
            } catch (const std::exception& e) {
                res.status = 400;
                res.set_content(error_message(e.what()).dump(), "application/json");
            }
        });
        http_port_ = cfg_.http_port == 0 ? http_->bind_to_any_port(cfg_.host)
                                         : (http_->bind_to_port(cfg_.host, cfg_.http_port) ? cfg_.http_port : -1);
        if (http_port_ < 0) throw std::runtime_error("cannot bind HTTP port " + std::to_string(cfg_.http_port));
        http_thread_ = std::jthread([this] { http_->listen_after_bind(); });
        http_->wait_until_ready();
    }

    std::shared_ptr<const Dataset> dataset_;
    ServiceConfig cfg_;
    int listen_fd_ = -1;
    int port_ = 0;
    int http_port_ = -1;
    std::atomic<bool> running_{false};
    std::atomic<bool> stop_requested_{false};
    std::atomic<std::uint64_t> frames_served_{0};
    std::atomic<std::uint64_t> http_seq_{0};
    mutable std::mutex sessions_mu_;
    std::list<std::unique_ptr<Session>> sessions_;
    std::jthread acceptor_;
    std::unique_ptr<httplib::Server> http_;
    std::jthread http_thread_;
};

/// Blocking client for the chunked protocol.
class ServiceClient {
public:
    using Message = std::variant<FrameResponse, nlohmann::json>;

    ServiceClient(const std::string& host, int port) : fd_(connect_to(host, port)), stream_(fd_) {}
    ~ServiceClient() { ::close(fd_); }
    ServiceClient(const ServiceClient&) = delete;
    ServiceClient& operator=(const ServiceClient&) = delete;

    void send(const PoseRequest& r) { stream_.write_json(to_json(r)); }
    void send_json(const nlohmann::json& j) { stream_.write_json(j); }
    void send_raw(const std::string& text) { stream_.write_chunk(text.data(), text.size()); }

    /// Next server message: a decoded frame, or any other JSON message as is.
    Message receive()
    {
        auto chunk = stream_.read_chunk();
        if (!chunk) throw std::runtime_error("server closed the connection");
        nlohmann::json j = nlohmann::json::parse(chunk->begin(), chunk->end());
        if (j.value("type", "") != "frame") return j;
        FrameResponse f;
        f.seq = j.at("seq").get<std::uint64_t>();
        f.id = j.value("id", nlohmann::json());
        f.latency_ms = j.at("latency_ms").get<double>();
        f.hole_fraction = j.at("hole_fraction").get<double>();
        f.width = j.at("width").get<int>();
        f.height = j.at("height").get<int>();
        auto png = stream_.read_chunk();
        if (!png) throw std::runtime_error("frame header without image");
        f.png = std::move(*png);
        return f;
    }

private:
    static int connect_to(const std::string& host, int port)
    {
        addrinfo hints{};
        hints.ai_family = AF_UNSPEC;
        hints.ai_socktype = SOCK_STREAM;
        addrinfo* res = nullptr;
        if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0)
            throw std::runtime_error("cannot resolve " + host);
        int fd = -1;
        for (addrinfo* ai = res; ai; ai = ai->ai_next) {
            fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
            if (fd < 0) continue;
            if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
            ::close(fd);
            fd = -1;
        }
        ::freeaddrinfo(res);
        if (fd < 0) throw std::runtime_error("cannot connect to " + host + ":" + std::to_string(port));
        return fd;
    }

    int fd_;
    ChunkStream stream_;
};

} // namespace panosynth
