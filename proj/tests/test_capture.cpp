#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace panosynth;

namespace {

std::vector<CaptureFrame> frames_with_scores(const std::vector<double>& scores)
{
    std::vector<CaptureFrame> out;
    for (size_t k = 0; k < scores.size(); ++k) {
        CaptureFrame f;
        f.id = "f" + std::to_string(k);
        f.rgb_path = f.id + ".png";
        f.pose = Pose::at({static_cast<double>(k), 0, 0});
        f.blur_score = scores[k];
        out.push_back(f);
    }
    return out;
}

RgbPanorama single_white(int i, int j)
{
    RgbPanorama p(8, 4);
    p(i, j) = {1, 1, 1};
    return p;
}

RgbPanorama box_blur(const RgbPanorama& p)
{
    RgbPanorama out(p.dims());
    for (int j = 0; j < p.height(); ++j)
        for (int i = 0; i < p.width(); ++i) {
            Rgb s{};
            for (int dj = -1; dj <= 1; ++dj)
                for (int di = -1; di <= 1; ++di) {
                    const Rgb& c = p.at_wrapped(i + di, j + dj);
                    s = {s.r + c.r / 9, s.g + c.g / 9, s.b + c.b / 9};
                }
            out(i, j) = s;
        }
    return out;
}

} // namespace

// Hand-derived: an interior impulse gives Laplacian -4 once and +1 four times,
// so the variance over 32 pixels is 20/32. On the top row the clamped upper
// neighbor is the impulse itself, leaving -3 and three +1 terms.
TEST(BlurScore, ImpulseOracles)
{
    EXPECT_NEAR(blur_score(single_white(3, 1)), 20.0 / 32.0, 1e-6);
    EXPECT_NEAR(blur_score(single_white(0, 1)), 20.0 / 32.0, 1e-6);
    EXPECT_NEAR(blur_score(single_white(3, 0)), 12.0 / 32.0, 1e-6);
    EXPECT_EQ(blur_score(RgbPanorama(8, 4, {0.5f, 0.5f, 0.5f})), 0.0);
}

TEST(BlurScore, BlurringLowersTheScore)
{
    RgbPanorama checker(64, 32);
    for (int j = 0; j < 32; ++j)
        for (int i = 0; i < 64; ++i) {
            const float v = ((i / 2 + j / 2) % 2) ? 1.0f : 0.0f;
            checker(i, j) = {v, v, v};
        }
    const double sharp = blur_score(checker);
    const double soft = blur_score(box_blur(checker));
    EXPECT_GT(sharp, soft);
    EXPECT_GT(soft, blur_score(box_blur(box_blur(checker))));
}

TEST(SelectFrames, PlainStride)
{
    const auto frames = frames_with_scores(std::vector<double>(41, 1.0));
    EXPECT_EQ(select_frames(frames), (std::vector<size_t>{0, 10, 20, 30, 40}));
    FrameSelectionOptions opt;
    opt.stride = 1;
    EXPECT_EQ(select_frames(frames, opt).size(), 41u);
}

TEST(SelectFrames, BlurredFrameIsReplacedByLaterNeighborOnTie)
{
    std::vector<double> scores(41, 1.0);
    scores[10] = 0.01;
    EXPECT_EQ(select_frames(frames_with_scores(scores)), (std::vector<size_t>{0, 11, 20, 30, 40}));
}

TEST(SelectFrames, NearestSharpFrameWins)
{
    std::vector<double> scores(41, 1.0);
    scores[20] = scores[21] = scores[22] = scores[23] = 0.01;
    // the threshold lands on 0.02, which itself counts as sharp
    scores[40] = 0.02;
    const auto sel = select_frames(frames_with_scores(scores));
    EXPECT_EQ(sel, (std::vector<size_t>{0, 10, 19, 30, 40}));
}

TEST(SelectFrames, Errors)
{
    EXPECT_THROW(select_frames({}), std::invalid_argument);
    const auto zeros = frames_with_scores(std::vector<double>(5, 0.0));
    EXPECT_THROW(select_frames(zeros), std::runtime_error);
    FrameSelectionOptions bad;
    bad.stride = 0;
    EXPECT_THROW(select_frames(frames_with_scores({1.0}), bad), std::invalid_argument);
}

TEST(BlurThreshold, NearestRankQuantile)
{
    EXPECT_EQ(blur_threshold({5, 1, 4, 2, 3}, 0.0), 1.0);
    EXPECT_EQ(blur_threshold({5, 1, 4, 2, 3}, 0.5), 3.0);
    EXPECT_EQ(blur_threshold({5, 1, 4, 2, 3}, 1.0), 5.0);
    EXPECT_EQ(blur_threshold({5, 1, 4, 2, 3}, 0.3), 2.0);
}

TEST(KNearest, TiesBreakByIndex)
{
    SceneManifest m;
    m.frames = frames_with_scores(std::vector<double>(7, 1.0));
    for (auto& f : m.frames) f.pose = Pose::at({10, 10, 10});
    m.frames[5].pose = Pose::at({1, 0, 0});
    m.frames[2].pose = Pose::at({-1, 0, 0});
    m.frames[4].pose = Pose::at({0, 0.5, 0});
    EXPECT_EQ(k_nearest(m, {0, 0, 0}, 3), (std::vector<size_t>{4, 2, 5}));
    EXPECT_EQ(k_nearest(m, {0, 0, 0}, 100).size(), 7u);
    EXPECT_THROW(k_nearest(m, {0, 0, 0}, 0), std::invalid_argument);
}

TEST(KNearest, MatchesBruteForceOrdering)
{
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(-5, 5);
    SceneManifest m;
    m.frames = frames_with_scores(std::vector<double>(50, 1.0));
    for (auto& f : m.frames) f.pose = Pose::at({u(rng), u(rng), u(rng)});
    for (int trial = 0; trial < 20; ++trial) {
        const Vec3 t{u(rng), u(rng), u(rng)};
        const auto got = k_nearest(m, t, 8);
        ASSERT_EQ(got.size(), 8u);
        std::vector<bool> used(50, false);
        for (size_t n = 0; n < 8; ++n) {
            size_t best = 0;
            double bd = 1e300;
            for (size_t k = 0; k < 50; ++k) {
                const double d = (m.frames[k].pose.position - t).norm();
                if (!used[k] && d < bd) bd = d, best = k;
            }
            used[best] = true;
            ASSERT_EQ(got[n], best);
        }
    }
}

TEST(NearestOf, RestrictsToCandidates)
{
    const std::vector<Vec3> pos{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
    const std::vector<size_t> cand{3, 2};
    EXPECT_EQ(nearest_of(pos, {0, 0, 0}, 5, &cand), (std::vector<size_t>{2, 3}));
}

TEST(AlignToWorld, PixelMultipleYawIsAColumnShift)
{
    std::mt19937_64 rng(43);
    const RgbPanorama p = test::random_rgb({32, 16}, rng);
    const int k = 5;
    const RgbPanorama a = align_to_world(p, Mat3::rotation_y(kTwoPi * k / 32), 1);
    for (int j = 0; j < 16; ++j)
        for (int i = 0; i < 32; ++i) {
            const Rgb e = p.at_wrapped(i + k, j), g = a(i, j);
            ASSERT_NEAR(g.r, e.r, 1e-5f);
            ASSERT_NEAR(g.g, e.g, 1e-5f);
            ASSERT_NEAR(g.b, e.b, 1e-5f);
        }
}

TEST(AlignToWorld, AlignedRenderMatchesIdentityRender)
{
    // A rotated camera, once aligned, should see what an unrotated one sees.
    const SceneSpec scene = room_scene();
    const ImageDims dims{128, 64};
    const Mat3 r = Mat3::from_yaw_pitch_roll(0.7, 0.2, -0.1);
    const RgbdPanorama rotated = render_rgbd(scene, {{0.2, 0, 0.1}, r}, dims, 1);
    const RgbdPanorama straight = render_rgbd(scene, Pose::at({0.2, 0, 0.1}), dims, 1);
    const RgbPanorama aligned = align_to_world(rotated.rgb, r, 1);
    EXPECT_GT(psnr(aligned, straight.rgb, nullptr), 20.0);
}
