#include "bayesmap/geodesics.hpp"
#include "bayesmap/synth.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <sstream>

using namespace bayesmap;

TEST(Geodesics, StraightEdgeDistances)
{
    const TriMesh strip = testutil::grid(2, 1);
    for (auto method : {DistanceMethod::fast_marching, DistanceMethod::dijkstra}) {
        const VectorXd d = distance_field(strip, 0, method);
        EXPECT_NEAR(d[0], 0.0, 1e-15);
        EXPECT_NEAR(d[1], 1.0, 1e-12);
        EXPECT_NEAR(d[2], 2.0, 1e-12);
    }
}

TEST(Geodesics, AllPairsOnStrip)
{
    const DistanceField f = all_pairs(testutil::grid(2, 1));
    const double expected[3][3] = {{0, 1, 2}, {1, 0, 1}, {2, 1, 0}};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            EXPECT_NEAR(f(i, j), expected[i][j], 1e-12);
}

TEST(Geodesics, SymmetricNonnegativeAboveChord)
{
    const TriMesh m = synth_shape(ShapeKind::bumpy_plane, 400, 3);
    const DistanceField f = all_pairs(m);
    const MatrixXd& d = f.matrix();
    EXPECT_EQ((d - d.transpose()).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(d.diagonal().cwiseAbs().maxCoeff(), 0.0);
    EXPECT_GE(d.minCoeff(), 0.0);
    for (Index i = 0; i < m.num_vertices(); ++i)
        for (Index j = 0; j < m.num_vertices(); ++j)
            ASSERT_GE(d(i, j), (m.vertex(i) - m.vertex(j)).norm() - 1e-9);
}

namespace {

double antipodal_error(Index resolution)
{
    const TriMesh m = synth_shape(ShapeKind::sphere, resolution);
    // Vertex farthest from vertex 0 in space.
    Index far = 0;
    double best = 0.0;
    for (Index i = 0; i < m.num_vertices(); ++i)
        if (const double c = (m.vertex(i) - m.vertex(0)).norm(); c > best) {
            best = c;
            far = i;
        }
    EXPECT_NEAR(best, 2.0, 1e-6);
    const VectorXd d = distance_field(m, 0, DistanceMethod::fast_marching);
    return std::abs(d[far] - std::numbers::pi) / std::numbers::pi;
}

} // namespace

TEST(Geodesics, SphereAntipodesApproachPi)
{
    const double coarse = antipodal_error(642);
    const double fine = antipodal_error(2562);
    EXPECT_LT(fine, 0.03);
    EXPECT_LT(fine, coarse);
}

TEST(Geodesics, FastMarchingBeatsDijkstraOnFlatGrid)
{
    const TriMesh g = testutil::grid(20, 20, 0.05);
    const VectorXd fmm = distance_field(g, 0, DistanceMethod::fast_marching);
    const VectorXd dij = distance_field(g, 0, DistanceMethod::dijkstra);
    double err_fmm = 0.0, err_dij = 0.0;
    for (Index i = 0; i < g.num_vertices(); ++i) {
        const double exact = g.vertex(i).norm();
        err_fmm = std::max(err_fmm, std::abs(fmm[i] - exact));
        err_dij = std::max(err_dij, std::abs(dij[i] - exact));
    }
    EXPECT_LT(err_fmm, err_dij);
}

TEST(Geodesics, TriangleInequalitySpotCheck)
{
    const TriMesh m = synth_shape(ShapeKind::sphere, 1000);
    const DistanceField f = all_pairs(m);
    const double slack = 2.0 * m.mean_edge_length();
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<Index> pick(0, m.num_vertices() - 1);
    for (int t = 0; t < 1000; ++t) {
        const Index i = pick(rng), j = pick(rng), k = pick(rng);
        ASSERT_LE(f(i, k), f(i, j) + f(j, k) + slack);
    }
}

TEST(Geodesics, CacheRoundTrip)
{
    const DistanceField f = all_pairs(testutil::grid(4, 3), DistanceMethod::dijkstra);
    std::stringstream ss;
    write_distance_cache(ss, f);
    const DistanceField r = read_distance_cache(ss);
    EXPECT_EQ(r.method(), DistanceMethod::dijkstra);
    EXPECT_LT((r.matrix() - f.matrix()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Geodesics, CacheRejectsBadMagic)
{
    std::stringstream ss("XXXX1234");
    EXPECT_THROW(read_distance_cache(ss), ParseError);
}

TEST(Geodesics, AllPairsRespectsCap)
{
    EXPECT_THROW(all_pairs(testutil::grid(4, 4), DistanceMethod::fast_marching, 1, 10), InvalidInput);
}

TEST(Geodesics, SweepRowsMatchField)
{
    const TriMesh m = testutil::grid(5, 4);
    const DistanceField f = all_pairs(m);
    const SweepRows rows(m, DistanceMethod::fast_marching);
    // The field is the symmetrised average of the single sweeps.
    for (Index i = 0; i < m.num_vertices(); ++i) {
        const VectorXd r = rows.row(i);
        EXPECT_EQ(r, distance_field(m, i, DistanceMethod::fast_marching));
        for (Index j = 0; j < m.num_vertices(); ++j)
            if (j != i) {
                EXPECT_NEAR(f(i, j), 0.5 * (r[j] + rows.row(j)[i]), 1e-12);
            }
    }
}
