#include "bayesmap/spectral.hpp"
#include "bayesmap/synth.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace bayesmap;

namespace {

const TriMesh& sphere2562()
{
    static const TriMesh m = synth_shape(ShapeKind::sphere, 2500);
    return m;
}

const SpectralBasis& sphere_basis()
{
    static const SpectralBasis b = eigenbasis(sphere2562(), 10);
    return b;
}

} // namespace

TEST(Spectral, RightAngleDiagonalHasZeroWeight)
{
    const TriMesh sq = testutil::grid(1, 1);
    const Laplacian lap = build_laplacian(sq);
    // Grid(1,1) splits along 0-3.
    EXPECT_NEAR(lap.stiffness.coeff(0, 3), 0.0, 1e-15);
    EXPECT_NEAR(lap.stiffness.coeff(0, 1), -0.5, 1e-15);
}

TEST(Spectral, ConstantsInKernel)
{
    const Laplacian lap = build_laplacian(synth_shape(ShapeKind::bumpy_plane, 300, 1));
    const VectorXd ones = VectorXd::Ones(lap.mass.size());
    EXPECT_LT((lap.stiffness * ones).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Spectral, SphereSpectrum)
{
    const auto& b = sphere_basis();
    ASSERT_EQ(sphere2562().num_vertices(), 2562);
    EXPECT_LT(std::abs(b.eigenvalues[0]), 1e-6 * b.eigenvalues[1]);
    for (int i = 1; i <= 3; ++i)
        EXPECT_NEAR(b.eigenvalues[i], 2.0, 0.1) << i;
    for (int i = 4; i <= 8; ++i)
        EXPECT_NEAR(b.eigenvalues[i], 6.0, 0.3) << i;
    for (int i = 1; i < b.size(); ++i)
        EXPECT_LE(b.eigenvalues[i - 1], b.eigenvalues[i]);
}

TEST(Spectral, ResidualsOrthonormalitySigns)
{
    const auto& b = sphere_basis();
    const Laplacian lap = build_laplacian(sphere2562());
    for (Index i = 0; i < b.size(); ++i) {
        const VectorXd phi = b.phi_mass.col(i);
        const VectorXd mphi = lap.mass.cwiseProduct(phi);
        EXPECT_LT((lap.stiffness * phi - b.eigenvalues[i] * mphi).norm() / mphi.norm(), 1e-6);
    }
    const MatrixXd gram = b.phi_weighted.transpose() * b.phi_weighted;
    EXPECT_LT((gram - MatrixXd::Identity(b.size(), b.size())).cwiseAbs().maxCoeff(), 1e-8);
    for (Index i = 0; i < b.size(); ++i) {
        Index at = 0;
        b.phi_mass.col(i).cwiseAbs().maxCoeff(&at);
        EXPECT_GT(b.phi_mass(at, i), 0.0);
    }
}

TEST(Spectral, FirstEigenfunctionIsConstant)
{
    const TriMesh m = synth_shape(ShapeKind::bumpy_plane, 200, 2);
    const SpectralBasis b = eigenbasis(m, 5);
    const double expected = 1.0 / std::sqrt(m.total_area());
    EXPECT_LT((b.phi_mass.col(0).array() - expected).abs().maxCoeff(), 1e-8);
}

TEST(Spectral, IterativeSolverMatchesDense)
{
    const TriMesh m = synth_shape(ShapeKind::bumpy_plane, 600, 2);
    EigenOptions it;
    it.force_iterative = true;
    const SpectralBasis dense = eigenbasis(m, 12);
    const SpectralBasis iter = eigenbasis(m, 12, it);
    EXPECT_LT((dense.eigenvalues - iter.eigenvalues).cwiseAbs().maxCoeff(), 1e-7 * dense.eigenvalues.maxCoeff());
}

TEST(Spectral, AnalyzeConstantAndEigenfunction)
{
    const TriMesh m = synth_shape(ShapeKind::bumpy_plane, 200, 2);
    const SpectralBasis b = eigenbasis(m, 8);
    const VectorXd c = analyze(b, VectorXd::Constant(m.num_vertices(), 3.0));
    EXPECT_NEAR(c[0], 3.0 * std::sqrt(m.total_area()), 1e-8);
    EXPECT_LT(c.tail(7).cwiseAbs().maxCoeff(), 1e-8);
    const VectorXd e = analyze(b, b.phi_mass.col(2));
    VectorXd unit = VectorXd::Zero(8);
    unit[2] = 1.0;
    EXPECT_LT((e - unit).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Spectral, CompleteBasisReconstructs)
{
    const TriMesh m = testutil::grid(4, 3);
    const Index n = m.num_vertices();
    const SpectralBasis b = eigenbasis(m, n);
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g;
    VectorXd f(n);
    for (Index i = 0; i < n; ++i)
        f[i] = g(rng);
    EXPECT_LT((synthesize(b, analyze(b, f)) - f).cwiseAbs().maxCoeff(), 1e-8);
    // With one eigenpair fewer only the dropped component is lost.
    const SpectralBasis t = b.truncated(n - 1);
    const VectorXd lost = f - synthesize(t, analyze(t, f));
    const double along = b.phi_mass.col(n - 1).dot(b.mass.asDiagonal() * f);
    EXPECT_LT((lost - along * b.phi_mass.col(n - 1)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Spectral, CompressionExactWithCompleteBasis)
{
    const TriMesh m = testutil::grid(4, 3);
    const Index n = m.num_vertices();
    auto b = std::make_shared<SpectralBasis>(eigenbasis(m, n));
    const DistanceField d = all_pairs(m);
    const CompressedDistances cd = compress_distances(b, d);
    for (Index i = 0; i < n; ++i) {
        const VectorXd r = decompress_row(cd, i);
        EXPECT_EQ(r[i], 0.0);
        EXPECT_LT((r - d.row(i)).cwiseAbs().maxCoeff(), 1e-8);
    }
}

TEST(Spectral, CompressionErrorOnSphere)
{
    const TriMesh m = synth_shape(ShapeKind::sphere, 1000);
    auto b = std::make_shared<SpectralBasis>(eigenbasis(m, 30));
    const DistanceField d = all_pairs(m);
    const CompressedDistances cd = compress_distances(b, d);
    double num = 0.0, den = 0.0;
    for (Index i = 0; i < m.num_vertices(); ++i) {
        const VectorXd r = cd.row(i);
        EXPECT_EQ(r[i], 0.0);
        num += (r - d.row(i)).squaredNorm();
        den += d.row(i).squaredNorm();
    }
    EXPECT_LT(std::sqrt(num / den), 0.10);
}

TEST(Spectral, CompressionIsBestInBasis)
{
    // The stored coefficients minimise the mass-weighted residual: any
    // perturbation of them increases it.
    const TriMesh m = synth_shape(ShapeKind::bumpy_plane, 200, 1);
    auto b = std::make_shared<SpectralBasis>(eigenbasis(m, 15));
    const DistanceField d = all_pairs(m);
    const CompressedDistances cd = compress_distances(b, d);
    const VectorXd target = d.row(5);
    VectorXd coeffs = cd.coefficients().col(5);
    auto residual = [&](const VectorXd& c) {
        const VectorXd r = b->phi_mass * c - target;
        return r.dot(b->mass.asDiagonal() * r);
    };
    const double best = residual(coeffs);
    for (Index j = 0; j < coeffs.size(); ++j) {
        VectorXd c = coeffs;
        c[j] += 1e-3;
        EXPECT_GT(residual(c), best);
    }
}

TEST(Spectral, CacheRoundTrip)
{
    const TriMesh m = synth_shape(ShapeKind::bumpy_plane, 100, 1);
    auto b = std::make_shared<SpectralBasis>(eigenbasis(m, 6));
    const MatrixXd coeffs = compress_distances(b, all_pairs(m)).coefficients();
    std::stringstream ss;
    write_spectral_cache(ss, *b, &coeffs);
    const SpectralCache c = read_spectral_cache(ss, m.vertex_areas());
    EXPECT_EQ(c.basis.eigenvalues, b->eigenvalues);
    EXPECT_EQ(c.basis.phi_mass, b->phi_mass);
    ASSERT_TRUE(c.coefficients.has_value());
    EXPECT_EQ(*c.coefficients, coeffs);
}
