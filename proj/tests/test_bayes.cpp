#include "bayesmap/bayes.hpp"
#include "bayesmap/eval.hpp"
#include "bayesmap/fmap.hpp"
#include "bayesmap/synth.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace bayesmap;

namespace {

DistanceField path3()
{
    MatrixXd d(3, 3);
    d << 0, 1, 2, 1, 0, 1, 2, 1, 0;
    return DistanceField(d);
}

// S_ij = a_i sum_l a_l dX(i,l)^p exp(-dY(pi0(l), j)^2 / (2 sigma2)), no truncation.
MatrixXd triple_loop(const MatrixXd& dx, const MatrixXd& dy, const std::vector<Index>& pi0, const VectorXd& a,
                     double sigma2, int p)
{
    const Index n = dx.rows();
    MatrixXd s = MatrixXd::Zero(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j)
            for (Index l = 0; l < n; ++l)
                s(i, j) += a[i] * a[l] * std::pow(dx(i, l), p) *
                           std::exp(-dy(pi0[static_cast<std::size_t>(l)], j) * dy(pi0[static_cast<std::size_t>(l)], j) /
                                    (2.0 * sigma2));
    return s;
}

struct IsoPair {
    SynthPair pair;
    DistanceField dx, dy;
    PointMap nn;
};

// Bent ellipsoid, n = 1002, NN recovery from the k = 20 groundtruth map.
const IsoPair& iso_pair()
{
    static const IsoPair p = [] {
        SynthSpec s;
        s.kind = ShapeKind::ellipsoid;
        s.resolution = 1000;
        s.deform = Deformation::bend;
        s.amplitude = 0.75;
        s.permute_seed = 1;
        IsoPair out{synth_pair(s), {}, {}, {}};
        out.dx = all_pairs(out.pair.source);
        out.dy = all_pairs(out.pair.target);
        const SpectralBasis bx = eigenbasis(out.pair.source, 20), by = eigenbasis(out.pair.target, 20);
        out.nn = recover_nn(build_fmap(out.pair.groundtruth, bx, by, 20).C, bx, by);
        return out;
    }();
    return p;
}

} // namespace

TEST(Bayes, ScoreMatchesTripleLoop)
{
    const DistanceField d = path3();
    VectorXd a(3);
    a << 0.2, 0.5, 0.3;
    for (const std::vector<Index>& pi0 : {std::vector<Index>{0, 1, 2}, std::vector<Index>{2, 2, 0}}) {
        for (int p : {1, 2}) {
            ScoreDomain dom{{0, 1, 2}, {0, 1, 2}, pi0, a};
            const BayesScore s = build_score(dom, d, d, 1.0, p, std::numeric_limits<double>::infinity());
            const MatrixXd got = score_matrix(s);
            const MatrixXd want = triple_loop(d.matrix(), d.matrix(), pi0, a, 1.0, p);
            EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-12) << "p = " << p;
        }
    }
}

TEST(Bayes, ExponentSquaresSourceDistances)
{
    const TriMesh m = testutil::grid(3, 3);
    const DistanceField d = all_pairs(m);
    const auto perm = testutil::random_perm(m.num_vertices(), 2);
    ScoreDomain dom = detail::whole_domain(PointMap(perm, m.num_vertices()), m.vertex_areas());
    const double inf = std::numeric_limits<double>::infinity();
    const BayesScore s1 = build_score(dom, d, d, 0.5, 1, inf);
    const BayesScore s2 = build_score(dom, d, d, 0.5, 2, inf);
    const VectorXd& a = m.vertex_areas();
    const MatrixXd sq = (d.matrix().cwiseAbs2().array() * (a * a.transpose()).array()).matrix();
    EXPECT_LT((s2.gamma - sq).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_LT((s1.gamma - (d.matrix().array() * (a * a.transpose()).array()).matrix()).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_EQ(s1.kernel, s2.kernel);
}

TEST(Bayes, ScoreInvariants)
{
    const auto& p = iso_pair();
    const ScoreDomain dom = detail::whole_domain(p.nn, p.pair.source.vertex_areas());
    const BayesScore s = build_score(dom, p.dx, p.dy, 0.06 * p.pair.target.total_area(), 1, 3.0);
    EXPECT_EQ((s.gamma - s.gamma.transpose()).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(s.gamma.diagonal().cwiseAbs().maxCoeff(), 0.0);
    EXPECT_GE(s.gamma.minCoeff(), 0.0);
    EXPECT_GE(s.kernel.minCoeff(), 0.0);
    EXPECT_LE(s.kernel.maxCoeff(), 1.0);
    for (Index l = 0; l < s.size(); ++l)
        EXPECT_EQ(s.kernel(l, p.nn[l]), 1.0);
    EXPECT_GE(score_rows(s, 10, 20).minCoeff(), 0.0);
}

TEST(Bayes, BlockedAndSparseScoresAgree)
{
    const auto& p = iso_pair();
    const ScoreDomain dom = detail::whole_domain(p.nn, p.pair.source.vertex_areas());
    const BayesScore s = build_score(dom, p.dx, p.dy, 0.06 * p.pair.target.total_area(), 1, 3.0);
    const MatrixXd full = score_matrix(s, 97);
    EXPECT_LT((score_rows(s, 100, 200) - full.middleRows(100, 100)).cwiseAbs().maxCoeff(), 1e-12 * full.maxCoeff());
    std::vector<std::vector<Index>> allowed(static_cast<std::size_t>(s.size()));
    for (Index i = 0; i < s.size(); ++i)
        allowed[static_cast<std::size_t>(i)] = {i, (i * 7) % s.size()};
    const auto rows = score_rows(s, allowed);
    for (Index i = 0; i < s.size(); ++i)
        for (const auto& c : rows[static_cast<std::size_t>(i)])
            ASSERT_NEAR(c.cost, full(i, c.column), 1e-12 * full.maxCoeff());
}

TEST(Bayes, TinySigmaKeepsBijectiveInput)
{
    SynthSpec s;
    s.resolution = 100;
    s.deform = Deformation::bend;
    const SynthPair p = synth_pair(s);
    ASSERT_EQ(p.source.num_vertices(), 100);
    const DistanceField dx = all_pairs(p.source), dy = all_pairs(p.target);
    BayesConfig cfg;
    cfg.sigma2_frac = 1e-9;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const PointMap pi0(testutil::random_perm(100, seed), 100);
        const auto r = bayes_denoise(pi0, dx, dy, p.source.vertex_areas(), p.target.vertex_areas(), cfg);
        EXPECT_EQ(r.map.image(), pi0.image()) << "seed " << seed;
    }
}

TEST(Bayes, IdentityIsFixedOnSameShape)
{
    const TriMesh m = synth_shape(ShapeKind::sphere, 500);
    const DistanceField d = all_pairs(m);
    const Index n = m.num_vertices();
    const auto r = bayes_denoise(PointMap::identity(n), d, d, m.vertex_areas(), m.vertex_areas());
    EXPECT_EQ(r.map.image(), PointMap::identity(n).image());
}

TEST(Bayes, DiagonalIsRowMinimumForSmallSigma)
{
    const TriMesh m = testutil::grid(5, 5);
    const DistanceField d = all_pairs(m);
    const Index n = m.num_vertices();
    const ScoreDomain dom = detail::whole_domain(PointMap::identity(n), m.vertex_areas());
    const MatrixXd s = score_matrix(build_score(dom, d, d, 0.005 * m.total_area(), 1, 3.0));
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            if (j != i) {
                ASSERT_LT(s(i, i), s(i, j));
            }
        }
    }
}

TEST(Bayes, ImprovesNearestNeighbour)
{
    const auto& p = iso_pair();
    const double diam = p.dy.diameter();
    const auto r = bayes_denoise(p.nn, p.dx, p.dy, p.pair.source.vertex_areas(), p.pair.target.vertex_areas());
    EXPECT_TRUE(r.map.bijective());
    EXPECT_LT(geodesic_error(r.map, p.pair.groundtruth, p.dy, diam).mean,
              geodesic_error(p.nn, p.pair.groundtruth, p.dy, diam).mean);
    EXPECT_EQ(coverage(r.map, p.dy, diam).coverage, 1.0);
}

TEST(Bayes, TruncationBarelyChangesObjective)
{
    SynthSpec s;
    s.kind = ShapeKind::ellipsoid;
    s.resolution = 500;
    s.deform = Deformation::bend;
    s.amplitude = 0.75;
    s.permute_seed = 3;
    const SynthPair p = synth_pair(s);
    const DistanceField dx = all_pairs(p.source), dy = all_pairs(p.target);
    const SpectralBasis bx = eigenbasis(p.source, 20), by = eigenbasis(p.target, 20);
    const PointMap nn = recover_nn(build_fmap(p.groundtruth, bx, by, 20).C, bx, by);
    BayesConfig exact;
    exact.kernel_cutoff = std::numeric_limits<double>::infinity();
    BayesConfig cut;
    cut.kernel_cutoff = 3.0;
    const auto a = bayes_denoise(nn, dx, dy, p.source.vertex_areas(), p.target.vertex_areas(), exact);
    const auto b = bayes_denoise(nn, dx, dy, p.source.vertex_areas(), p.target.vertex_areas(), cut);
    // Both assignments scored with the untruncated kernel.
    const ScoreDomain dom = detail::whole_domain(nn, p.source.vertex_areas());
    const MatrixXd s_exact =
        score_matrix(build_score(dom, dx, dy, 0.06 * p.target.total_area(), 1, exact.kernel_cutoff));
    double oa = 0.0, ob = 0.0;
    for (Index i = 0; i < s_exact.rows(); ++i) {
        oa += s_exact(i, a.map[i]);
        ob += s_exact(i, b.map[i]);
    }
    EXPECT_NEAR(oa, a.objectives[0], 1e-9 * oa);
    EXPECT_LT(std::abs(ob - oa) / oa, 1e-3);
}

TEST(Bayes, SweepMatchesSingleRun)
{
    const auto& p = iso_pair();
    const auto& x = p.pair.source;
    const auto& y = p.pair.target;
    const auto rows = sigma_sweep(p.nn, p.dx, p.dy, x.vertex_areas(), y.vertex_areas(), {}, {0.06},
                                  p.pair.groundtruth, p.dy.diameter());
    ASSERT_EQ(rows.size(), 1u);
    const auto single = bayes_denoise(p.nn, p.dx, p.dy, x.vertex_areas(), y.vertex_areas());
    EXPECT_EQ(rows[0].mean_error, geodesic_error(single.map, p.pair.groundtruth, p.dy, p.dy.diameter()).mean);
}

TEST(Bayes, HugeSigmaDegrades)
{
    const auto& p = iso_pair();
    const auto rows = sigma_sweep(p.nn, p.dx, p.dy, p.pair.source.vertex_areas(), p.pair.target.vertex_areas(), {},
                                  {1e9}, p.pair.groundtruth, p.dy.diameter());
    EXPECT_GE(rows[0].mean_error, geodesic_error(p.nn, p.pair.groundtruth, p.dy, p.dy.diameter()).mean);
}

TEST(Bayes, IterationsAreRecorded)
{
    const auto& p = iso_pair();
    BayesConfig cfg;
    cfg.iterations = 3;
    const auto r = bayes_denoise(p.nn, p.dx, p.dy, p.pair.source.vertex_areas(), p.pair.target.vertex_areas(), cfg);
    ASSERT_EQ(r.iterates.size(), 3u);
    EXPECT_EQ(r.iterates.back().image(), r.map.image());
    for (const auto& m : r.iterates)
        EXPECT_TRUE(m.bijective());
    EXPECT_EQ(r.objectives.size(), 3u);
}

TEST(Bayes, CompressedDistancesAreAccepted)
{
    SynthSpec s;
    s.kind = ShapeKind::sphere;
    s.resolution = 300;
    s.deform = Deformation::rigid;
    s.permute_seed = 2;
    const SynthPair p = synth_pair(s);
    auto bx = std::make_shared<SpectralBasis>(eigenbasis(p.source, 60));
    auto by = std::make_shared<SpectralBasis>(eigenbasis(p.target, 60));
    const DistanceField fx = all_pairs(p.source), fy = all_pairs(p.target);
    const CompressedDistances cx = compress_distances(bx, fx), cy = compress_distances(by, fy);
    const auto r = bayes_denoise(p.groundtruth, cx, cy, p.source.vertex_areas(), p.target.vertex_areas());
    EXPECT_TRUE(r.map.bijective());
    EXPECT_LT(geodesic_error(r.map, p.groundtruth, fy, fy.diameter()).mean, 0.02);
}

TEST(Bayes, ConfigValidationListsEveryProblem)
{
    BayesConfig c;
    c.p = 3;
    c.sigma2_frac = -1.0;
    c.iterations = 0;
    try {
        c.validate();
        FAIL();
    } catch (const InvalidInput& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("p must"), std::string::npos);
        EXPECT_NE(msg.find("sigma2_frac"), std::string::npos);
        EXPECT_NE(msg.find("iterations"), std::string::npos);
    }
}

TEST(Bayes, RejectsMismatchedInputs)
{
    const DistanceField d = path3();
    const VectorXd a = VectorXd::Ones(3);
    EXPECT_THROW(bayes_denoise(PointMap::identity(4), d, d, a, a), InvalidInput);
    EXPECT_THROW(bayes_denoise(PointMap::identity(3), d, d, VectorXd::Ones(2), a), InvalidInput);
}
