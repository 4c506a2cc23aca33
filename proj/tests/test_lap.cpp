#include "bayesmap/lap.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace bayesmap;

namespace {

bool is_permutation(const std::vector<Index>& a)
{
    std::vector<Index> s(a);
    std::sort(s.begin(), s.end());
    for (std::size_t i = 0; i < s.size(); ++i)
        if (s[i] != static_cast<Index>(i))
            return false;
    return true;
}

// Independent exhaustive minimum over all permutations, +inf entries skipped.
double enumerate_min(const MatrixXd& c)
{
    const Index n = c.rows();
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    double best = std::numeric_limits<double>::infinity();
    do {
        double t = 0.0;
        for (Index i = 0; i < n; ++i)
            t += c(i, perm[static_cast<std::size_t>(i)]);
        best = std::min(best, t);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

} // namespace

TEST(Lap, TwoByTwo)
{
    MatrixXd c(2, 2);
    c << 1, 2, 2, 1;
    const auto r = solve_auction(AssignmentProblem::dense(c));
    EXPECT_EQ(r.assignment, (std::vector<Index>{0, 1}));
    EXPECT_NEAR(r.objective, 2.0, 1e-9);
}

TEST(Lap, RecoversPermutationMatrix)
{
    const auto perm = testutil::random_perm(12, 3);
    MatrixXd c = MatrixXd::Ones(12, 12);
    for (Index i = 0; i < 12; ++i)
        c(i, perm[static_cast<std::size_t>(i)]) = 0.0;
    const auto r = solve_auction(AssignmentProblem::dense(c));
    EXPECT_EQ(r.assignment, perm);
    EXPECT_NEAR(r.objective, 0.0, 1e-9);
}

TEST(Lap, DenseMatchesBruteForce)
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    std::uniform_int_distribution<int> size(1, 8);
    for (int t = 0; t < 500; ++t) {
        const Index n = size(rng);
        MatrixXd c(n, n);
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < n; ++j)
                c(i, j) = u(rng);
        const auto r = solve_auction(AssignmentProblem::dense(c));
        ASSERT_TRUE(is_permutation(r.assignment));
        const double best = enumerate_min(c);
        ASSERT_LE(r.objective - best, static_cast<double>(n) * r.eps_final + 1e-12) << "trial " << t;
        ASSERT_GE(r.objective, best - 1e-9);
    }
}

TEST(Lap, MaskedSparseMatchesBruteForce)
{
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    std::bernoulli_distribution keep(0.4);
    for (int t = 0; t < 500; ++t) {
        const Index n = 2 + t % 7;
        const auto hidden = testutil::random_perm(n, static_cast<std::uint64_t>(t));
        MatrixXd dense = MatrixXd::Constant(n, n, std::numeric_limits<double>::infinity());
        std::vector<std::vector<Candidate>> rows(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i)
            for (Index j = 0; j < n; ++j)
                if (j == hidden[static_cast<std::size_t>(i)] || keep(rng)) {
                    dense(i, j) = u(rng);
                    rows[static_cast<std::size_t>(i)].push_back({j, dense(i, j)});
                }
        const auto r = solve_auction(AssignmentProblem::sparse(rows));
        ASSERT_TRUE(is_permutation(r.assignment));
        for (Index i = 0; i < n; ++i)
            ASSERT_TRUE(std::isfinite(dense(i, r.assignment[static_cast<std::size_t>(i)])));
        const double best = enumerate_min(dense);
        ASSERT_LE(r.objective - best, static_cast<double>(n) * r.eps_final + 1e-12) << "trial " << t;
    }
}

TEST(Lap, MaximizeSense)
{
    MatrixXd b(3, 3);
    b << 1, 9, 2, 8, 1, 1, 2, 2, 7;
    const auto r = solve_auction(AssignmentProblem::dense(b, Sense::maximize));
    EXPECT_EQ(r.assignment, (std::vector<Index>{1, 0, 2}));
    EXPECT_NEAR(r.objective, 24.0, 1e-9);
}

TEST(Lap, OracleMatchesDense)
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    MatrixXd c(30, 30);
    for (Index i = 0; i < 30; ++i)
        for (Index j = 0; j < 30; ++j)
            c(i, j) = u(rng);
    const auto dense = solve_auction(AssignmentProblem::dense(c));
    const auto oracle = solve_auction(
        AssignmentProblem::oracle(30, [&](Index i, Eigen::Ref<VectorXd> out) { out = c.row(i).transpose(); }));
    EXPECT_NEAR(dense.objective, oracle.objective, 30 * dense.eps_final + 1e-12);
}

TEST(Lap, EpsilonComplementarySlackness)
{
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    MatrixXd c(40, 40);
    for (Index i = 0; i < 40; ++i)
        for (Index j = 0; j < 40; ++j)
            c(i, j) = u(rng);
    const auto p = AssignmentProblem::dense(c);
    const auto r = solve_auction(p);
    // Prices are accumulated in floating point; allow rounding on top of eps.
    EXPECT_LE(eps_cs_violation(p, r.assignment, r.prices), r.eps_final + 1e-14);
    EXPECT_NEAR(r.gap_bound, 40 * r.eps_final, 1e-15);
}

TEST(Lap, InfeasibleSparseThrows)
{
    // Rows 0 and 1 both only accept column 0.
    std::vector<std::vector<Candidate>> rows{{{0, 1.0}}, {{0, 2.0}}, {{1, 0.0}, {2, 0.0}}};
    EXPECT_THROW(solve_auction(AssignmentProblem::sparse(rows)), InfeasibleAssignment);
}

TEST(Lap, EmptyRowIsRejected)
{
    std::vector<std::vector<Candidate>> rows{{{0, 1.0}}, {}};
    EXPECT_THROW(solve_auction(AssignmentProblem::sparse(rows)), Error);
}

TEST(Lap, BruteForceSmallCases)
{
    MatrixXd one(1, 1);
    one << 4.0;
    EXPECT_EQ(solve_bruteforce(AssignmentProblem::dense(one)).assignment, (std::vector<Index>{0}));
    MatrixXd two(2, 2);
    two << 0, 1, 1, 0;
    const auto r2 = solve_bruteforce(AssignmentProblem::dense(two));
    EXPECT_EQ(r2.assignment, (std::vector<Index>{0, 1}));
    EXPECT_EQ(r2.objective, 0.0);
    MatrixXd three(3, 3);
    three << 4, 1, 3, 2, 0, 5, 3, 2, 2;
    // Hand enumeration: 012:6 021:11 102:5 120:9 201:7 210:6.
    const auto r3 = solve_bruteforce(AssignmentProblem::dense(three));
    EXPECT_EQ(r3.assignment, (std::vector<Index>{1, 0, 2}));
    EXPECT_EQ(r3.objective, 5.0);
}

TEST(Lap, HopcroftKarp)
{
    std::vector<std::vector<Index>> ok{{0, 1}, {0}, {1, 2}};
    EXPECT_TRUE(has_perfect_matching(ok, 3));
    std::vector<std::vector<Index>> bad{{0}, {0}, {1, 2}};
    EXPECT_FALSE(has_perfect_matching(bad, 3));
    const auto m = maximum_matching(ok, 3);
    EXPECT_EQ(m[1], 0);
    EXPECT_EQ(m[0], 1);
}
