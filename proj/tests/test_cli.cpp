#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <iterator>

#include "support.hpp"

using namespace panosynth;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct CliRun {
    int status = -1;
    std::string out;
    std::string err;
};

CliRun cli(const std::string& args, const fs::path& dir)
{
    const fs::path err_path = dir / "stderr.txt";
    const std::string cmd = std::string("'") + PANOSYNTH_CLI_PATH + "' " + args + " 2>'" + err_path.string() + "'";
    CliRun r;
    FILE* p = ::popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    for (size_t n; (n = std::fread(buf, 1, sizeof buf, p)) > 0;) r.out.append(buf, n);
    const int raw = ::pclose(p);
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    std::ifstream e(err_path);
    r.err.assign(std::istreambuf_iterator<char>(e), {});
    return r;
}

std::vector<std::uint8_t> file_bytes(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

/// A 64-wide room fixture written once per test binary.
const fs::path& fixture_manifest()
{
    static const fs::path path = [] {
        const auto dir = test::fresh_dir("cli_fixture");
        const CliRun r = cli("--threads 1 make-fixture --scene room --width 64 --out '" + dir.string() + "'", dir);
        EXPECT_EQ(r.status, 0) << r.err;
        return dir / "manifest.json";
    }();
    return path;
}

} // namespace

TEST(Cli, MakeFixtureWritesALoadableGrid)
{
    const fs::path& manifest = fixture_manifest();
    ASSERT_TRUE(fs::exists(manifest));
    const SceneManifest m = load_manifest(manifest);
    EXPECT_EQ(m.frames.size(), 9u);
    EXPECT_EQ(m.active_frames().size(), 8u);
    const auto views = load_views(m, DepthKind::Refined);
    EXPECT_EQ(views.front().rgb.width(), 64);
}

TEST(Cli, SynthesizeMatchesTheServiceBytes)
{
    const auto dir = test::fresh_dir("cli_synth");
    const fs::path png = dir / "out.png", pfm = dir / "out.pfm";
    const CliRun r = cli("--threads 2 synthesize --manifest '" + fixture_manifest().string() +
                          "' --pose 0.1,0,0.05,0.3,0,0 --out '" + png.string() + "' --depth-out '" + pfm.string() + "'",
                      dir);
    ASSERT_EQ(r.status, 0) << r.err;
    const json j = json::parse(r.out);
    EXPECT_EQ(j["width"], 64);
    EXPECT_EQ(j["height"], 32);
    EXPECT_EQ(read_depth_pfm(pfm).width(), 64);

    const auto ds = std::make_shared<const Dataset>(Dataset::load(fixture_manifest()));
    SynthesisService service(ds, {});
    service.start();
    ServiceClient c("127.0.0.1", service.port());
    PoseRequest req;
    req.position = {0.1, 0, 0.05};
    req.yaw = 0.3;
    c.send(req);
    auto m = c.receive();
    ASSERT_TRUE(std::holds_alternative<FrameResponse>(m));
    EXPECT_EQ(std::get<FrameResponse>(m).png, file_bytes(png));
}

TEST(Cli, ThreadCountDoesNotChangeTheOutput)
{
    const auto dir = test::fresh_dir("cli_threads");
    std::vector<std::vector<std::uint8_t>> outputs;
    for (int t : {1, 3, 8}) {
        const fs::path png = dir / ("t" + std::to_string(t) + ".png");
        const CliRun r = cli("--threads " + std::to_string(t) + " synthesize --manifest '" +
                              fixture_manifest().string() + "' --pose -0.2,0.05,0.1 --out '" + png.string() + "'",
                          dir);
        ASSERT_EQ(r.status, 0) << r.err;
        outputs.push_back(file_bytes(png));
    }
    EXPECT_EQ(outputs[0], outputs[1]);
    EXPECT_EQ(outputs[0], outputs[2]);
}

TEST(Cli, PerspectiveCutOut)
{
    const auto dir = test::fresh_dir("cli_persp");
    const fs::path png = dir / "p.png";
    const CliRun r = cli("synthesize --manifest '" + fixture_manifest().string() + "' --pose 0,0,0 --perspective 60,40,30 --out '" +
                          png.string() + "'",
                      dir);
    ASSERT_EQ(r.status, 0) << r.err;
    const RgbPanorama img = read_rgb_png(png, false);
    EXPECT_EQ(img.width(), 40);
    EXPECT_EQ(img.height(), 30);
}

TEST(Cli, EvaluateReportsTheLibraryMetrics)
{
    const auto dir = test::fresh_dir("cli_eval");
    const SceneManifest m = load_manifest(fixture_manifest());
    const fs::path truth = m.resolve(m.frames[4].rgb_path), pred = dir / "pred.png";
    const CliRun s = cli("synthesize --manifest '" + fixture_manifest().string() + "' --pose 0,0,0 --out '" +
                          pred.string() + "'",
                      dir);
    ASSERT_EQ(s.status, 0) << s.err;

    const CliRun r = cli("evaluate --pred '" + pred.string() + "' --truth '" + truth.string() + "' --latitude-band 60", dir);
    ASSERT_EQ(r.status, 0) << r.err;
    const json j = json::parse(r.out);
    const RgbPanorama a = read_rgb_png(pred, false), b = read_rgb_png(truth, false);
    const Mask band = latitude_band_mask(a.dims(), 60.0 * kPi / 180.0);
    EXPECT_NEAR(j["psnr"].get<double>(), psnr(a, b, &band), 1e-9);
    EXPECT_NEAR(j["ssim"].get<double>(), ssim(a, b, &band), 1e-9);
    EXPECT_EQ(j["pixels"].get<size_t>(), mask_count(band));
    EXPECT_GT(j["psnr"].get<double>(), 20.0);
}

TEST(Cli, MissingInputsExitWithStatusTwo)
{
    const auto dir = test::fresh_dir("cli_missing");
    const std::string ghost = (dir / "nowhere" / "manifest.json").string();
    for (const std::string& sub : {std::string("refine"), std::string("estimate-depth")}) {
        const CliRun r = cli(sub + " --manifest '" + ghost + "'", dir);
        EXPECT_EQ(r.status, 2) << sub;
        EXPECT_NE(r.err.find(ghost), std::string::npos) << r.err;
    }
    const CliRun s = cli("synthesize --manifest '" + ghost + "' --pose 0,0,0 --out x.png", dir);
    EXPECT_EQ(s.status, 2);
    const CliRun e = cli("evaluate --pred '" + ghost + "' --truth '" + ghost + "'", dir);
    EXPECT_EQ(e.status, 2);
}

TEST(Cli, BadArgumentsFail)
{
    const auto dir = test::fresh_dir("cli_bad");
    EXPECT_NE(cli("", dir).status, 0);
    EXPECT_NE(cli("synthesize --pose 0,0,0", dir).status, 0);
    const CliRun pose = cli("synthesize --manifest '" + fixture_manifest().string() + "' --pose 1,2 --out x.png", dir);
    EXPECT_EQ(pose.status, 1);
    EXPECT_NE(pose.err.find("--pose"), std::string::npos);
    EXPECT_EQ(cli("make-fixture --scene castle --out '" + (dir / "c").string() + "'", dir).status, 1);
}

TEST(Cli, DepthThenRefineThenSynthesize)
{
    const auto dir = test::fresh_dir("cli_pipeline");
    ASSERT_EQ(cli("--threads 1 make-fixture --width 64 --out '" + dir.string() + "'", dir).status, 0);
    const std::string manifest = (dir / "manifest.json").string();
    const CliRun d = cli("estimate-depth --manifest '" + manifest +
                          "' --hypotheses 12 --min-depth 1.25 --max-depth 7 --guided-radius 2",
                      dir);
    ASSERT_EQ(d.status, 0) << d.err;
    const CliRun r = cli("refine --manifest '" + manifest + "' --iterations 2", dir);
    ASSERT_EQ(r.status, 0) << r.err;
    EXPECT_NE(r.out.find("iteration 1: K_rm=6 K_fp=8"), std::string::npos) << r.out;

    const SceneManifest m = load_manifest(manifest);
    for (size_t k : m.active_frames()) {
        ASSERT_TRUE(m.frames[k].dense_depth_path);
        ASSERT_TRUE(m.frames[k].refined_depth_path);
        EXPECT_TRUE(fs::exists(m.resolve(*m.frames[k].dense_depth_path)));
        EXPECT_EQ(*m.frames[k].refined_depth_path, m.frames[k].id + "_refined.pfm");
    }
    EXPECT_TRUE(fs::exists(dir / "refine_report.json"));
    const auto views = load_views(m, DepthKind::Refined);
    for (const View& v : views) EXPECT_LT(count_missing(v.depth), v.depth.size() / 20);

    const CliRun s = cli("synthesize --manifest '" + manifest + "' --pose 0,0,0 --out '" + (dir / "c.png").string() + "'",
                      dir);
    ASSERT_EQ(s.status, 0) << s.err;
    EXPECT_LT(json::parse(s.out)["hole_fraction"].get<double>(), 0.2);
}
