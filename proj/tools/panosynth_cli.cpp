// panosynth: offline pipeline drivers and the synthesis service.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <panosynth/panosynth.hpp>

namespace fs = std::filesystem;
using namespace panosynth;

namespace {

/// Missing inputs exit with this status.
constexpr int kMissingInput = 2;

struct MissingInput : std::runtime_error {
    using std::runtime_error::runtime_error;
};

SceneManifest open_manifest(const std::string& path)
{
    if (!fs::exists(path)) throw MissingInput("manifest not found: " + path);
    return load_manifest(path);
}

void require_file(const std::string& path, const char* what)
{
    if (!fs::exists(path)) throw MissingInput(std::string(what) + " not found: " + path);
}

std::vector<double> parse_numbers(const std::string& text)
{
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        size_t used = 0;
        const double v = std::stod(item, &used);
        if (used != item.size()) throw std::invalid_argument("not a number: '" + item + "'");
        out.push_back(v);
    }
    return out;
}

WeightMode parse_weights(const std::string& s)
{
    if (s == "full") return WeightMode::Full;
    if (s == "depth-camera") return WeightMode::DepthCamera;
    if (s == "depth") return WeightMode::Depth;
    if (s == "uniform") return WeightMode::Uniform;
    throw std::invalid_argument("unknown weighting '" + s + "'");
}

std::string frame_asset(const CaptureFrame& f, const char* suffix) { return f.id + suffix; }

struct Globals {
    int threads = 0;
};

struct FixtureArgs {
    std::string scene = "room";
    std::string out;
    int width = 512;
    int rows = 3;
    int cols = 3;
    double spacing = 0.5;
    bool keep_center = false;
};

int run_make_fixture(const FixtureArgs& a, const Globals& g)
{
    GridOptions opt;
    opt.rows = a.rows;
    opt.cols = a.cols;
    opt.spacing = a.spacing;
    opt.dims = ImageDims::equirect(a.width);
    opt.hold_out_center = !a.keep_center;
    opt.threads = g.threads;
    GridFixture fx = render_grid(scene_preset(a.scene), opt);
    const fs::path manifest = write_fixture(fx, a.out);
    std::cout << "wrote " << fx.manifest.frames.size() << " frames to " << manifest.string() << "\n";
    return 0;
}

struct DepthArgs {
    std::string manifest;
    int hypotheses = 64;
    double min_depth = 0.5;
    double max_depth = 20.0;
    int neighbors = 4;
    AdCensusParams params;
};

int run_estimate_depth(const DepthArgs& a, const Globals& g)
{
    SceneManifest m = open_manifest(a.manifest);
    const auto hyp = DepthHypothesisSet::inverse_uniform(a.min_depth, a.max_depth, a.hypotheses);
    a.params.validate();
    const auto active = m.active_frames();
    std::vector<RgbPanorama> rgb;
    std::vector<PosedImage> frames;
    rgb.reserve(active.size());
    for (size_t k : active) rgb.push_back(read_rgb_png(m.resolve(m.frames[k].rgb_path)));
    for (size_t n = 0; n < active.size(); ++n) frames.push_back({&rgb[n], m.frames[active[n]].pose});

    for (size_t n = 0; n < active.size(); ++n) {
        CaptureFrame& f = m.frames[active[n]];
        const DepthPanorama depth = estimate_dense_depth(n, frames, a.neighbors, hyp, a.params, g.threads);
        f.dense_depth_path = frame_asset(f, "_dense.pfm");
        write_depth_pfm(depth, m.resolve(*f.dense_depth_path));
        const nlohmann::json meta{{"frame", f.id},
                                  {"hypotheses", a.hypotheses},
                                  {"min_depth", a.min_depth},
                                  {"max_depth", a.max_depth},
                                  {"sampling", "inverse-uniform"},
                                  {"neighbors", a.neighbors},
                                  {"census_window", {a.params.census_width, a.params.census_height}},
                                  {"lambda_ad", a.params.lambda_ad},
                                  {"lambda_census", a.params.lambda_census},
                                  {"guided_radius", a.params.guided_radius},
                                  {"guided_epsilon", a.params.guided_epsilon},
                                  {"missing_pixels", count_missing(depth)}};
        std::ofstream(m.resolve(frame_asset(f, "_dense.json"))) << meta.dump(2) << "\n";
        std::cout << f.id << ": dense depth written, " << count_missing(depth) << " missing pixels\n";
    }
    save_manifest(m, a.manifest);
    return 0;
}

int run_refine(const std::string& manifest_path, RefinementConfig cfg, const Globals& g)
{
    SceneManifest m = open_manifest(manifest_path);
    cfg.threads = g.threads;
    const auto active = m.active_frames();
    std::vector<FrameDepths> frames;
    for (size_t k : active) {
        const CaptureFrame& f = m.frames[k];
        FrameDepths fd{f.pose, std::nullopt, std::nullopt};
        if (f.sparse_depth_path) fd.sparse = read_depth_pfm(m.resolve(*f.sparse_depth_path));
        if (f.dense_depth_path) fd.dense = read_depth_pfm(m.resolve(*f.dense_depth_path));
        if (!fd.sparse && !fd.dense) throw ManifestError("frame '" + f.id + "' has neither sparse nor dense depth");
        frames.push_back(std::move(fd));
    }
    const RefinementResult res = refine_all(frames, cfg);
    nlohmann::json report = nlohmann::json::array();
    for (const auto& it : res.iterations) {
        std::cout << "iteration " << it.iteration << ": K_rm=" << it.k_raymarch << " K_fp=" << it.k_projection
                  << " marched=" << it.marched << " flagged=" << it.flagged
                  << " missing=" << it.missing_after_projection << "\n";
        report.push_back({{"iteration", it.iteration},
                          {"k_raymarch", it.k_raymarch},
                          {"k_projection", it.k_projection},
                          {"marched", it.marched},
                          {"flagged", it.flagged},
                          {"missing_after_projection", it.missing_after_projection}});
    }
    for (size_t n = 0; n < active.size(); ++n) {
        CaptureFrame& f = m.frames[active[n]];
        f.refined_depth_path = frame_asset(f, "_refined.pfm");
        write_depth_pfm(res.refined[n], m.resolve(*f.refined_depth_path));
    }
    std::ofstream(m.base_dir / "refine_report.json") << report.dump(2) << "\n";
    save_manifest(m, manifest_path);
    return 0;
}

struct SynthArgs {
    std::string manifest;
    std::string pose;
    std::string out;
    std::string depth_out;
    std::string quality = "native";
    std::string perspective;
    std::string weights = "full";
    int k_blend = 4;
};

PoseRequest request_from_args(const SynthArgs& a)
{
    const auto p = parse_numbers(a.pose);
    if (p.size() != 3 && p.size() != 6) throw std::invalid_argument("--pose expects x,y,z or x,y,z,yaw,pitch,roll");
    nlohmann::json j{{"position", {p[0], p[1], p[2]}}, {"quality", a.quality}};
    if (p.size() == 6) {
        j["yaw"] = p[3];
        j["pitch"] = p[4];
        j["roll"] = p[5];
    }
    if (!a.perspective.empty()) {
        const auto v = parse_numbers(a.perspective);
        if (v.size() != 3) throw std::invalid_argument("--perspective expects fov,width,height");
        j["output"] = "perspective";
        j["fov"] = v[0];
        j["width"] = v[1];
        j["height"] = v[2];
    }
    return parse_pose_request(j);
}

int run_synthesize(const SynthArgs& a, const Globals& g)
{
    require_file(a.manifest, "manifest");
    const Dataset ds = Dataset::load(a.manifest);
    SynthesisConfig cfg;
    cfg.threads = g.threads;
    cfg.weights = parse_weights(a.weights);
    cfg.k_blend = a.k_blend;
    const PoseRequest req = request_from_args(a);
    if (!a.depth_out.empty()) {
        const SynthesisResult s = synthesize_view(req.pose(), output_dims(ds, req.quality), ds.views, cfg);
        write_depth_pfm(s.depth, a.depth_out);
    }
    const FrameResponse f = make_frame(ds, req, cfg, 1);
    std::ofstream out(a.out, std::ios::binary);
    if (!out) throw IoError("cannot write " + a.out);
    out.write(reinterpret_cast<const char*>(f.png.data()), static_cast<std::streamsize>(f.png.size()));
    std::cout << nlohmann::json{{"out", a.out},
                                {"width", f.width},
                                {"height", f.height},
                                {"hole_fraction", f.hole_fraction},
                                {"latency_ms", f.latency_ms}}
                     .dump()
              << "\n";
    return 0;
}

struct EvalArgs {
    std::string pred;
    std::string truth;
    std::string mask;
    double band_deg = -1.0;
};

int run_evaluate(const EvalArgs& a)
{
    require_file(a.pred, "prediction");
    require_file(a.truth, "ground truth");
    const RgbPanorama pred = read_rgb_png(a.pred, false);
    const RgbPanorama truth = read_rgb_png(a.truth, false);
    std::optional<Mask> mask;
    std::vector<std::string> parts;
    if (!a.mask.empty()) {
        require_file(a.mask, "mask");
        mask = read_mask_png(a.mask);
        parts.push_back("file:" + a.mask);
    }
    if (a.band_deg >= 0.0) {
        const Mask band = latitude_band_mask(pred.dims(), a.band_deg * kPi / 180.0);
        mask = mask ? mask_and(*mask, band) : band;
        std::ostringstream d;
        d << "latitude<=" << a.band_deg << "deg";
        parts.push_back(d.str());
    }
    std::string description = parts.empty() ? "none" : parts.front();
    if (parts.size() > 1) description += "+" + parts[1];
    std::cout << to_json(evaluate_images(pred, truth, mask ? &*mask : nullptr, description)).dump() << "\n";
    return 0;
}

SynthesisService* g_service = nullptr;

extern "C" void handle_stop_signal(int)
{
    if (g_service) g_service->request_stop();
}

struct ServeArgs {
    std::string manifest;
    std::string bind = "127.0.0.1:8765";
    int http_port = -1;
    std::string max_quality = "high";
};

int run_serve(const ServeArgs& a, const Globals& g)
{
    require_file(a.manifest, "manifest");
    const auto colon = a.bind.rfind(':');
    if (colon == std::string::npos) throw std::invalid_argument("--bind expects host:port");
    ServiceConfig cfg;
    cfg.host = a.bind.substr(0, colon);
    cfg.port = std::stoi(a.bind.substr(colon + 1));
    cfg.http_port = a.http_port;
    cfg.max_quality = parse_quality(a.max_quality);
    cfg.synthesis.threads = g.threads;
    auto ds = std::make_shared<const Dataset>(Dataset::load(a.manifest));
    SynthesisService service(ds, cfg);
    service.start();
    g_service = &service;
    std::signal(SIGINT, handle_stop_signal);
    std::signal(SIGTERM, handle_stop_signal);
    std::cout << "serving " << ds->views.size() << " frames on " << cfg.host << ":" << service.port();
    if (service.http_port() >= 0) std::cout << " (http " << service.http_port() << ")";
    std::cout << std::endl;
    service.wait();
    service.stop();
    g_service = nullptr;
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"panosynth: free-viewpoint 360 panorama synthesis"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--threads", g.threads, "worker threads (0 = all hardware threads)")->check(CLI::NonNegativeNumber);

    FixtureArgs fixture;
    auto* mk = app.add_subcommand("make-fixture", "render a synthetic capture grid with ground-truth depth");
    mk->add_option("--scene", fixture.scene, "scene preset: room, open, empty")->capture_default_str();
    mk->add_option("--out", fixture.out, "output directory")->required();
    mk->add_option("--width", fixture.width, "panorama width (height is width / 2)")->capture_default_str();
    mk->add_option("--rows", fixture.rows)->capture_default_str();
    mk->add_option("--cols", fixture.cols)->capture_default_str();
    mk->add_option("--spacing", fixture.spacing, "grid spacing in meters")->capture_default_str();
    mk->add_flag("--keep-center", fixture.keep_center, "do not mark the center frame as held out");

    DepthArgs depth;
    auto* est = app.add_subcommand("estimate-depth", "sphere-sweep dense depth for every active frame");
    est->add_option("--manifest", depth.manifest)->required();
    est->add_option("--hypotheses", depth.hypotheses)->capture_default_str();
    est->add_option("--min-depth", depth.min_depth)->capture_default_str();
    est->add_option("--max-depth", depth.max_depth)->capture_default_str();
    est->add_option("--neighbors", depth.neighbors)->capture_default_str();
    est->add_option("--lambda-ad", depth.params.lambda_ad)->capture_default_str();
    est->add_option("--lambda-census", depth.params.lambda_census)->capture_default_str();
    est->add_option("--guided-radius", depth.params.guided_radius)->capture_default_str();
    est->add_option("--guided-eps", depth.params.guided_epsilon)->capture_default_str();

    std::string refine_manifest;
    RefinementConfig rcfg;
    auto* ref = app.add_subcommand("refine", "fuse, raymarch-correct and forward-project depths");
    ref->add_option("--manifest", refine_manifest)->required();
    ref->add_option("--rate", rcfg.rate)->capture_default_str();
    ref->add_option("--k-raymarch", rcfg.k_raymarch)->capture_default_str();
    ref->add_option("--k-projection", rcfg.k_projection)->capture_default_str();
    ref->add_option("--iterations", rcfg.iterations)->capture_default_str();

    SynthArgs synth;
    auto* syn = app.add_subcommand("synthesize", "synthesize the panorama at a new position");
    syn->add_option("--manifest", synth.manifest)->required();
    syn->add_option("--pose", synth.pose, "x,y,z[,yaw,pitch,roll] (meters, radians)")->required();
    syn->add_option("--out", synth.out, "output PNG")->required();
    syn->add_option("--depth-out", synth.depth_out, "also write the target depth as PFM");
    syn->add_option("--quality", synth.quality, "native, low, medium or high")->capture_default_str();
    syn->add_option("--perspective", synth.perspective, "fov_deg,width,height for a pinhole cut-out");
    syn->add_option("--weights", synth.weights, "full, depth-camera, depth or uniform")->capture_default_str();
    syn->add_option("--k", synth.k_blend, "blend neighbor count")->capture_default_str();

    EvalArgs eval;
    auto* ev = app.add_subcommand("evaluate", "PSNR / SSIM / MS-SSIM between two images");
    ev->add_option("--pred", eval.pred)->required();
    ev->add_option("--truth", eval.truth)->required();
    ev->add_option("--mask", eval.mask, "PNG mask, white = evaluated");
    ev->add_option("--latitude-band", eval.band_deg, "only rows with |latitude| <= this many degrees");

    ServeArgs serve;
    auto* srv = app.add_subcommand("serve", "run the synthesis service");
    srv->add_option("--manifest", serve.manifest)->required();
    srv->add_option("--bind", serve.bind, "host:port (port 0 picks a free one)")->capture_default_str();
    srv->add_option("--http-port", serve.http_port, "also serve /health and /frame over HTTP")->capture_default_str();
    srv->add_option("--max-quality", serve.max_quality)->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*mk) return run_make_fixture(fixture, g);
        if (*est) return run_estimate_depth(depth, g);
        if (*ref) return run_refine(refine_manifest, rcfg, g);
        if (*syn) return run_synthesize(synth, g);
        if (*ev) return run_evaluate(eval);
        if (*srv) return run_serve(serve, g);
    } catch (const MissingInput& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kMissingInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
