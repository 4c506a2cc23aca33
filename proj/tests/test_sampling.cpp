#include "bayesmap/sampling.hpp"
#include "bayesmap/synth.hpp"

#include <gtest/gtest.h>

using namespace bayesmap;

namespace {

DistanceField square_cycle()
{
    MatrixXd d(4, 4);
    d << 0, 1, 2, 1, 1, 0, 1, 2, 2, 1, 0, 1, 1, 2, 1, 0;
    return DistanceField(d);
}

} // namespace

TEST(Sampling, SecondSampleIsOppositeCorner)
{
    const auto h = farthest_point_sample(square_cycle(), {2}, 0);
    ASSERT_EQ(h.levels[0].size(), 2u);
    EXPECT_EQ(h.levels[0][0], 0);
    EXPECT_EQ(h.levels[0][1], 2);
}

TEST(Sampling, AllCornersGiveZeroRadius)
{
    const auto h = farthest_point_sample(square_cycle(), {4}, 0);
    std::vector<Index> got = h.levels[0];
    std::sort(got.begin(), got.end());
    EXPECT_EQ(got, (std::vector<Index>{0, 1, 2, 3}));
    EXPECT_EQ(h.radii[0], 0.0);
}

TEST(Sampling, NestedLevelsShrinkingRadius)
{
    const TriMesh m = synth_shape(ShapeKind::bumpy_plane, 100, 5);
    const DistanceField f = all_pairs(m);
    const auto h = farthest_point_sample(f, {10, 50}, 3);
    ASSERT_EQ(h.num_levels(), 2u);
    EXPECT_LT(h.radii[1], h.radii[0]);
    for (std::size_t i = 0; i < h.levels[0].size(); ++i)
        EXPECT_EQ(h.levels[1][i], h.levels[0][i]);
    for (std::size_t l = 0; l < 2; ++l)
        for (Index v = 0; v < m.num_vertices(); ++v) {
            const Index p = h.parent_vertex(l, v);
            for (Index s : h.levels[l])
                ASSERT_LE(f(v, p), f(v, s));
            ASSERT_LE(f(v, p), h.radii[l] + 1e-12);
        }
}

TEST(Sampling, RejectsBadCounts)
{
    const DistanceField f = square_cycle();
    EXPECT_THROW(farthest_point_sample(f, {}, 0), InvalidInput);
    EXPECT_THROW(farthest_point_sample(f, {3, 2}, 0), InvalidInput);
    EXPECT_THROW(farthest_point_sample(f, {5}, 0), InvalidInput);
    EXPECT_THROW(farthest_point_sample(f, {2}, 4), InvalidInput);
}
