#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "support.hpp"

using namespace panosynth;

namespace {

bool same_depth(float a, float b) { return (is_missing(a) && is_missing(b)) || a == b; }

/// Closing by brute force: min over valid pixels in the disk, then max over the
/// disk with any missing pixel poisoning the result.
DepthPanorama closing_oracle(const DepthPanorama& d, int r)
{
    const int w = d.width(), h = d.height();
    const auto disk = [&](const DepthPanorama& src, int i, int j, auto&& visit) {
        for (int dj = -r; dj <= r; ++dj)
            for (int di = -r; di <= r; ++di) {
                if (di * di + dj * dj > r * r || j + dj < 0 || j + dj >= h) continue;
                visit(src(((i + di) % w + w) % w, j + dj));
            }
    };
    DepthPanorama dil(d.dims(), kMissingDepth), out(d.dims(), kMissingDepth);
    for (int j = 0; j < h; ++j)
        for (int i = 0; i < w; ++i) {
            float best = INFINITY;
            disk(d, i, j, [&](float v) { if (has_depth(v)) best = std::min(best, v); });
            if (best < INFINITY) dil(i, j) = best;
        }
    for (int j = 0; j < h; ++j)
        for (int i = 0; i < w; ++i) {
            if (!has_depth(dil(i, j))) continue;
            float best = -INFINITY;
            bool poisoned = false;
            disk(dil, i, j, [&](float v) {
                if (!has_depth(v)) poisoned = true;
                else best = std::max(best, v);
            });
            if (!poisoned) out(i, j) = best;
        }
    return out;
}

std::vector<FrameDepths> gt_frames(const GridFixture& fx, std::vector<size_t> idx)
{
    std::vector<FrameDepths> out;
    for (size_t k : idx) out.push_back({fx.manifest.frames[k].pose, std::nullopt, fx.depth[k]});
    return out;
}

} // namespace

TEST(Closing, HandCases)
{
    DepthPanorama hole(5, 5, 3.0f);
    hole(2, 2) = kMissingDepth;
    EXPECT_EQ(morphological_close_depth(hole, 1, 1)(2, 2), 3.0f);

    DepthPanorama blob(5, 5, 4.0f);
    blob(2, 2) = 1.0f;
    const DepthPanorama c = morphological_close_depth(blob, 1, 1);
    for (size_t k = 0; k < c.size(); ++k) EXPECT_EQ(c.pixels()[k], blob.pixels()[k]);
    EXPECT_THROW(morphological_close_depth(blob, 0), std::invalid_argument);
}

TEST(Closing, MatchesBruteForceOracle)
{
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<float> u(1.0f, 9.0f);
    std::bernoulli_distribution hole(0.2);
    for (int trial = 0; trial < 20; ++trial) {
        DepthPanorama d(5, 5);
        for (auto& v : d.pixels()) v = hole(rng) ? kMissingDepth : u(rng);
        for (int r : {1, 2}) {
            const DepthPanorama got = morphological_close_depth(d, r, 1);
            const DepthPanorama want = closing_oracle(d, r);
            for (size_t k = 0; k < d.size(); ++k) ASSERT_TRUE(same_depth(got.pixels()[k], want.pixels()[k]));
        }
    }
}

TEST(Opening, RemovesIsolatedNearSpeckles)
{
    DepthPanorama d(8, 8, 5.0f);
    d(3, 3) = 1.0f;
    d(6, 1) = kMissingDepth;
    const DepthPanorama o = morphological_open_depth(d, 1, 1);
    EXPECT_EQ(o(3, 3), 5.0f);
    EXPECT_TRUE(is_missing(o(6, 1)));
    for (size_t k = 0; k < d.size(); ++k)
        if (has_depth(d.pixels()[k])) {
            EXPECT_GE(o.pixels()[k], d.pixels()[k]);
        }
}

TEST(Fusion, SparseTakesPriorityOverDense)
{
    DepthPanorama sparse(8, 4, kMissingDepth), dense(8, 4, 2.0f);
    sparse(1, 1) = 2.5f;
    dense(5, 2) = kMissingDepth;
    const DepthPanorama f = fuse_depths(&sparse, &dense, 0);
    EXPECT_EQ(f(1, 1), 2.5f);
    EXPECT_EQ(f(0, 0), 2.0f);
    EXPECT_TRUE(is_missing(f(5, 2)));
    EXPECT_EQ(fuse_depths(nullptr, &dense, 0)(0, 0), 2.0f);
    EXPECT_THROW(fuse_depths(nullptr, nullptr, 0), std::invalid_argument);
    const DepthPanorama other(16, 8);
    EXPECT_THROW(fuse_depths(&sparse, &other, 0), std::invalid_argument);
}

// A neighbor sharing the reference center sees every ray at the same range,
// so a depth of 1 in front of a recorded 2 is pushed by 0.5% at a time:
// 1.005^139 = 2.00024 is the first value at or beyond 2.
TEST(Raymarch, ScalarCaseStepsOutToTheRecordedSurface)
{
    DepthPanorama ref(8, 4, 1.0f), seen(8, 4, 2.0f);
    const std::vector<PosedDepth> nb{{&seen, Pose::at({0, 0, 0})}};
    const RaymarchResult r = raymarch_correct(ref, Pose::at({0, 0, 0}), nb, 1, 0.005, 2000, 1);
    for (float v : r.depth.pixels()) EXPECT_NEAR(v, 2.0002421936122246, 1e-6);
    EXPECT_EQ(r.marched, ref.size());
    EXPECT_EQ(r.flagged_count, 0u);
}

TEST(Raymarch, StepCapKeepsInputAndFlags)
{
    DepthPanorama ref(8, 4, 1.0f), seen(8, 4, 1e6f);
    ref(0, 0) = kMissingDepth;
    const std::vector<PosedDepth> nb{{&seen, Pose::at({0, 0, 0})}};
    const RaymarchResult r = raymarch_correct(ref, Pose::at({0, 0, 0}), nb, 1, 0.005, 10, 1);
    EXPECT_EQ(r.flagged_count, ref.size() - 1);
    EXPECT_EQ(r.depth(3, 2), 1.0f);
    EXPECT_EQ(r.flagged(0, 0), 0);
    EXPECT_TRUE(is_missing(r.depth(0, 0)));
}

TEST(Raymarch, CoLocatedIdenticalNeighborNeverTriggers)
{
    const GridFixture& fx = test::small_room(128);
    const std::vector<PosedDepth> nb{{&fx.depth[0], fx.manifest.frames[0].pose}};
    const RaymarchResult r = raymarch_correct(fx.depth[0], fx.manifest.frames[0].pose, nb, 1, 0.005, 2000, 1);
    EXPECT_EQ(r.marched, 0u);
    EXPECT_EQ(r.depth, fx.depth[0]);
}

TEST(Raymarch, ConsistentDepthsMoveAtMostOneStep)
{
    // bilinear lookups on slanted surfaces can sit a hair in front of the
    // exact reprojection, which costs one push
    const GridFixture& fx = test::small_room(512);
    std::vector<PosedDepth> nb;
    for (size_t k : {1, 3, 5, 7}) nb.push_back({&fx.depth[k], fx.manifest.frames[k].pose});
    const RaymarchResult r = raymarch_correct(fx.depth[0], fx.manifest.frames[0].pose, nb, 4, 0.005, 2000, 1);
    size_t within = 0;
    for (size_t p = 0; p < r.depth.size(); ++p)
        within += r.depth.pixels()[p] <= fx.depth[0].pixels()[p] * 1.0051f;
    EXPECT_GT(within, r.depth.size() * 99 / 100);
    EXPECT_EQ(r.flagged_count, 0u);
}

TEST(Raymarch, MonotoneAndThreadIndependent)
{
    const GridFixture& fx = test::small_room(128);
    DepthPanorama noisy = fx.depth[0];
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> u(0.5f, 1.2f);
    for (auto& v : noisy.pixels()) v *= u(rng);
    std::vector<PosedDepth> nb;
    for (size_t k : {1, 3, 5, 7}) nb.push_back({&fx.depth[k], fx.manifest.frames[k].pose});
    const RaymarchResult a = raymarch_correct(noisy, fx.manifest.frames[0].pose, nb, 4, 0.005, 2000, 1);
    for (size_t p = 0; p < noisy.size(); ++p) ASSERT_GE(a.depth.pixels()[p], noisy.pixels()[p]);
    for (int t : {4, 8}) {
        const RaymarchResult b = raymarch_correct(noisy, fx.manifest.frames[0].pose, nb, 4, 0.005, 2000, t);
        for (size_t p = 0; p < noisy.size(); ++p) ASSERT_EQ(a.depth.pixels()[p], b.depth.pixels()[p]);
        EXPECT_EQ(a.marched, b.marched);
    }
    EXPECT_THROW(raymarch_correct(noisy, {}, nb, 5, 0.005, 10), std::invalid_argument);
}

TEST(ForwardProjection, SelfProjectionIsIdentity)
{
    const GridFixture& fx = test::small_room(64);
    const std::vector<PosedDepth> src{{&fx.depth[2], fx.manifest.frames[2].pose}};
    const DepthPanorama d = forward_project(fx.manifest.frames[2].pose, fx.depth[2].dims(), src, 1, 1);
    for (size_t p = 0; p < d.size(); ++p) ASSERT_NEAR(d.pixels()[p], fx.depth[2].pixels()[p], 1e-5);
}

TEST(ForwardProjection, KeepsNearestAndLeavesGapsMissing)
{
    DepthPanorama a(8, 4, kMissingDepth), b(8, 4, kMissingDepth);
    a(2, 1) = 3.0f;
    b(2, 1) = 2.0f;
    const std::vector<PosedDepth> src{{&a, Pose::at({0, 0, 0})}, {&b, Pose::at({0, 0, 0})}};
    const DepthPanorama one = forward_project(Pose::at({0, 0, 0}), {8, 4}, src, 1, 1);
    EXPECT_NEAR(one(2, 1), 3.0f, 1e-6);
    const DepthPanorama both = forward_project(Pose::at({0, 0, 0}), {8, 4}, src, 2, 1);
    EXPECT_NEAR(both(2, 1), 2.0f, 1e-6);
    EXPECT_EQ(count_missing(both), both.size() - 1);
    EXPECT_THROW(forward_project(Pose::at({0, 0, 0}), {8, 4}, src, 0), std::invalid_argument);
}

TEST(ForwardProjection, TranslationMovesPointsToTheirTrueRange)
{
    // a point 3 m ahead along +x, seen from 1 m further ahead, is 2 m away
    DepthPanorama a(16, 8, kMissingDepth);
    a(8, 4) = 3.0f; // near theta = 0, phi = 0
    const std::vector<PosedDepth> src{{&a, Pose::at({0, 0, 0})}};
    const DepthPanorama d = forward_project(Pose::at({1, 0, 0}), {16, 8}, src, 1, 1);
    float found = 0.0f;
    for (float v : d.pixels())
        if (has_depth(v)) found = v;
    const Angles ang = pixel_to_angles(8, 4, {16, 8});
    const Vec3 rel = direction(ang.theta, ang.phi) * 3.0 - Vec3{1, 0, 0};
    EXPECT_NEAR(found, rel.norm(), 1e-5);
}

TEST(ForwardProjection, ThreadIndependent)
{
    const GridFixture& fx = test::small_room(64);
    std::vector<PosedDepth> src;
    for (size_t k : {0, 1, 2, 3}) src.push_back({&fx.depth[k], fx.manifest.frames[k].pose});
    const Pose target = fx.manifest.frames[4].pose;
    const DepthPanorama a = forward_project(target, {64, 32}, src, 4, 1);
    for (int t : {4, 8}) {
        const DepthPanorama b = forward_project(target, {64, 32}, src, 4, t);
        for (size_t p = 0; p < a.size(); ++p) ASSERT_TRUE(same_depth(a.pixels()[p], b.pixels()[p]));
    }
}

TEST(RefineAll, GroundTruthIsNearlyAFixedPoint)
{
    // at coarse widths nearest-pixel splatting alone moves steep depths by more
    // than 2%, so this runs at full fixture resolution
    const GridFixture& fx = test::small_room(512);
    RefinementConfig cfg;
    cfg.threads = 1;
    const RefinementResult r = refine_all(gt_frames(fx, {0, 1, 2, 3, 5, 6, 7, 8}), cfg);
    ASSERT_EQ(r.refined.size(), 8u);
    ASSERT_EQ(r.iterations.size(), 3u);
    EXPECT_EQ(r.iterations[0].k_raymarch, 4);
    EXPECT_EQ(r.iterations[0].k_projection, 6);
    EXPECT_EQ(r.iterations[1].k_raymarch, 6);
    EXPECT_EQ(r.iterations[2].k_raymarch, 7);
    EXPECT_EQ(r.iterations[2].k_projection, 8);
    const std::vector<size_t> idx{0, 1, 2, 3, 5, 6, 7, 8};
    for (size_t f = 0; f < 8; ++f) {
        size_t close = 0;
        for (size_t p = 0; p < r.refined[f].size(); ++p) {
            const float got = r.refined[f].pixels()[p], gt = fx.depth[idx[f]].pixels()[p];
            close += has_depth(got) && std::abs(got - gt) <= 0.02f * gt;
        }
        EXPECT_GT(close, 0.97 * r.refined[f].size()) << "frame " << f;
    }
}

TEST(RefineAll, PullsNearOutliersBackToTheSurface)
{
    const GridFixture& fx = test::small_room(128);
    auto frames = gt_frames(fx, {0, 1, 2, 3, 5, 6, 7, 8});
    std::mt19937_64 rng(77);
    std::vector<std::vector<size_t>> outliers(frames.size());
    for (size_t f = 0; f < frames.size(); ++f) {
        auto& d = *frames[f].dense;
        std::uniform_int_distribution<size_t> pick(0, d.size() - 1);
        for (size_t n = 0; n < d.size() / 100; ++n) {
            const size_t p = pick(rng);
            d.pixels()[p] *= 0.5f;
            outliers[f].push_back(p);
        }
    }
    RefinementConfig cfg;
    cfg.threads = 1;
    const RefinementResult r = refine_all(frames, cfg);
    const std::vector<size_t> idx{0, 1, 2, 3, 5, 6, 7, 8};
    std::vector<double> ratio;
    for (size_t f = 0; f < frames.size(); ++f)
        for (size_t p : outliers[f]) {
            const double gt = fx.depth[idx[f]].pixels()[p];
            const double got = r.refined[f].pixels()[p];
            ratio.push_back(has_depth(static_cast<float>(got)) ? std::abs(got - gt) / (0.5 * gt) : 1.0);
        }
    std::nth_element(ratio.begin(), ratio.begin() + ratio.size() / 2, ratio.end());
    EXPECT_LE(ratio[ratio.size() / 2], 0.10);
}

TEST(RefineAll, Validation)
{
    RefinementConfig bad;
    bad.k_projection = 2;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    EXPECT_THROW(refine_all({}, RefinementConfig{}), std::invalid_argument);
    EXPECT_THROW(refine_all({FrameDepths{}}, RefinementConfig{}), std::invalid_argument);
}
