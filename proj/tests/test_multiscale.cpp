#include "bayesmap/eval.hpp"
#include "bayesmap/fmap.hpp"
#include "bayesmap/multiscale.hpp"
#include "bayesmap/synth.hpp"

#include <gtest/gtest.h>

using namespace bayesmap;

namespace {

struct Setup {
    SynthPair pair;
    DistanceField dx, dy;
    PointMap nn;
};

const Setup& setup()
{
    static const Setup s = [] {
        SynthSpec spec;
        spec.kind = ShapeKind::ellipsoid;
        spec.resolution = 1000;
        spec.deform = Deformation::bend;
        spec.amplitude = 0.75;
        spec.permute_seed = 6;
        Setup out{synth_pair(spec), {}, {}, {}};
        out.dx = all_pairs(out.pair.source);
        out.dy = all_pairs(out.pair.target);
        const SpectralBasis bx = eigenbasis(out.pair.source, 20), by = eigenbasis(out.pair.target, 20);
        out.nn = recover_nn(build_fmap(out.pair.groundtruth, bx, by, 20).C, bx, by);
        return out;
    }();
    return s;
}

} // namespace

TEST(Multiscale, SingleLevelEqualsDense)
{
    const auto& s = setup();
    const Index n = s.nn.num_source();
    MultiscaleConfig m;
    m.levels = {n};
    const auto hx = farthest_point_sample(s.dx, m.levels, 0);
    const auto hy = farthest_point_sample(s.dy, m.levels, 0);
    const auto& ax = s.pair.source.vertex_areas();
    const auto& ay = s.pair.target.vertex_areas();
    const auto ms = bayes_denoise_multiscale(s.nn, s.dx, s.dy, ax, ay, hx, hy, m);
    const auto dense = bayes_denoise(s.nn, s.dx, s.dy, ax, ay);
    EXPECT_EQ(ms.map.image(), dense.map.image());
}

TEST(Multiscale, TwoLevelsAreBijectiveAndSparse)
{
    const auto& s = setup();
    const Index n = s.nn.num_source();
    MultiscaleConfig m;
    m.levels = {250, n};
    const auto hx = farthest_point_sample(s.dx, m.levels, 0);
    const auto hy = farthest_point_sample(s.dy, m.levels, 0);
    const auto r = bayes_denoise_multiscale(s.nn, s.dx, s.dy, s.pair.source.vertex_areas(),
                                            s.pair.target.vertex_areas(), hx, hy, m);
    EXPECT_TRUE(r.map.bijective());
    ASSERT_EQ(r.levels.size(), 2u);
    EXPECT_EQ(r.levels[0].density, 1.0);
    EXPECT_LT(r.levels[1].density, 0.2);
    EXPECT_GT(r.levels[1].radius, 0.0);
}

TEST(Multiscale, IterationsFeedBack)
{
    const auto& s = setup();
    const Index n = s.nn.num_source();
    MultiscaleConfig m;
    m.levels = {250, n};
    BayesConfig cfg;
    cfg.iterations = 2;
    const auto hx = farthest_point_sample(s.dx, m.levels, 0);
    const auto hy = farthest_point_sample(s.dy, m.levels, 0);
    const auto r = bayes_denoise_multiscale(s.nn, s.dx, s.dy, s.pair.source.vertex_areas(),
                                            s.pair.target.vertex_areas(), hx, hy, m, cfg);
    ASSERT_EQ(r.iterates.size(), 2u);
    EXPECT_TRUE(r.iterates[0].bijective());
}

TEST(Multiscale, ConfigValidation)
{
    MultiscaleConfig m;
    m.levels = {500, 400};
    m.radius_mult = 0.5;
    try {
        m.validate(1000);
        FAIL();
    } catch (const InvalidInput& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("ascending"), std::string::npos);
        EXPECT_NE(msg.find("last level"), std::string::npos);
        EXPECT_NE(msg.find("radius_mult"), std::string::npos);
    }
}

TEST(Multiscale, HierarchyMismatchIsRejected)
{
    const auto& s = setup();
    const Index n = s.nn.num_source();
    MultiscaleConfig m;
    m.levels = {250, n};
    const auto hx = farthest_point_sample(s.dx, {300, n}, 0);
    const auto hy = farthest_point_sample(s.dy, m.levels, 0);
    EXPECT_THROW(bayes_denoise_multiscale(s.nn, s.dx, s.dy, s.pair.source.vertex_areas(),
                                          s.pair.target.vertex_areas(), hx, hy, m),
                 InvalidInput);
}
