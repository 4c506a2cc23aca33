#pragma once

// Bayesian denoising of a vertex map. Given a noisy map pi0 : X -> Y, the
// estimate is the permutation minimising the expected geodesic loss
// d_X^p under a Gaussian noise model on Y and a uniform prior on X.
//
// Assigning source i to target j costs
//
//   S_ij = sum_l  a_i a_l d_X(i, l)^p  exp(-d_Y(pi0(l), j)^2 / 2 sigma^2)
//        = (Gamma P)_ij,
//
// i.e. x_i is the estimated preimage of y_j. sigma^2 is a fraction of the
// target area so the result does not depend on the global scale.

#include "bayesmap/eval.hpp"
#include "bayesmap/geodesics.hpp"
#include "bayesmap/lap.hpp"
#include "bayesmap/pointmap.hpp"

namespace bayesmap {

struct BayesConfig {
    /// 1: median-like estimate, 2: centroid-like estimate.
    int p = 1;
    /// sigma^2 as a fraction of the target surface area.
    double sigma2_frac = 0.06;
    int iterations = 1;
    /// Kernel entries below exp(-cutoff^2 / 2) are dropped; infinity keeps all.
    double kernel_cutoff = 3.0;
    /// Rows per score block handed to a worker.
    Index block_size = 256;
    AuctionOptions lap;

    void validate() const
    {
        std::vector<std::string> problems;
        if (p != 1 && p != 2)
            problems.push_back("p must be 1 or 2");
        if (!(sigma2_frac > 0.0) || !std::isfinite(sigma2_frac))
            problems.push_back("sigma2_frac must be positive and finite");
        if (iterations < 1)
            problems.push_back("iterations must be at least 1");
        if (!(kernel_cutoff > 0.0))
            problems.push_back("kernel_cutoff must be positive");
        if (block_size < 1)
            problems.push_back("block_size must be positive");
        if (!problems.empty()) {
            std::string msg = "invalid Bayes configuration:";
            for (const auto& s : problems)
                msg += "\n  - " + s;
            throw InvalidInput(msg);
        }
    }
};

/// The two factors of the score on an m x m (sub)problem.
struct BayesScore {
    /// Gamma(i, l) = a_i a_l d_X(i, l)^p.
    MatrixXd gamma;
    /// kernel(l, j) = exp(-d_Y(pi0(l), j)^2 / 2 sigma^2), truncated.
    MatrixXd kernel;
    /// Columns that fell back to the untruncated kernel.
    Index guarded_columns = 0;

    Index size() const { return gamma.rows(); }
};

/// Subproblem on sampled vertices. Positions index the sample lists.
struct ScoreDomain {
    /// Source and target vertices taking part, in problem order.
    std::vector<Index> source_vertices;
    std::vector<Index> target_vertices;
    /// Noisy image of each source position, as a target position.
    std::vector<Index> pi0;
    /// Area carried by each source position.
    VectorXd source_areas;
};

namespace detail {

/// Gathers a full distance row at the given vertices (or copies it when
/// the domain is the whole shape).
inline void gather_row(const VectorXd& full, const std::vector<Index>& vertices, bool whole,
                       Eigen::Ref<VectorXd> out)
{
    if (whole) {
        out = full;
        return;
    }
    for (std::size_t b = 0; b < vertices.size(); ++b)
        out[static_cast<Index>(b)] = full[vertices[b]];
}

inline bool is_whole(const std::vector<Index>& vertices, Index n)
{
    if (static_cast<Index>(vertices.size()) != n)
        return false;
    for (Index i = 0; i < n; ++i)
        if (vertices[static_cast<std::size_t>(i)] != i)
            return false;
    return true;
}

} // namespace detail

/// Builds Gamma and the truncated kernel for a domain. sigma2 is absolute.
inline BayesScore build_score(const ScoreDomain& dom, const DistanceRows& dist_x, const DistanceRows& dist_y,
                              double sigma2, int p, double cutoff)
{
    const auto m = static_cast<Index>(dom.source_vertices.size());
    if (static_cast<Index>(dom.target_vertices.size()) != m || static_cast<Index>(dom.pi0.size()) != m ||
        dom.source_areas.size() != m)
        throw InvalidInput("build_score: domain sizes disagree");
    for (Index t : dom.pi0)
        if (t < 0 || t >= m)
            throw InvalidInput("build_score: pi0 position out of range");
    const bool whole_x = detail::is_whole(dom.source_vertices, dist_x.size());
    const bool whole_y = detail::is_whole(dom.target_vertices, dist_y.size());

    BayesScore s;
    s.gamma.resize(m, m);
    parallel_for(0, m, [&](Index i) {
        const VectorXd full = dist_x.row(dom.source_vertices[static_cast<std::size_t>(i)]);
        VectorXd d(m);
        detail::gather_row(full, dom.source_vertices, whole_x, d);
        d[i] = 0.0;
        if (p == 2)
            d = d.cwiseAbs2();
        s.gamma.col(i) = dom.source_areas[i] * dom.source_areas.cwiseProduct(d);
    });
    s.gamma = (0.5 * (s.gamma + s.gamma.transpose())).eval();

    // Rows of the kernel only depend on pi0(l); compute each distinct one once.
    std::vector<Index> distinct(dom.pi0);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    std::vector<Index> slot(static_cast<std::size_t>(m), -1);
    for (std::size_t u = 0; u < distinct.size(); ++u)
        slot[static_cast<std::size_t>(distinct[u])] = static_cast<Index>(u);
    MatrixXd sqdist(m, static_cast<Index>(distinct.size()));
    parallel_for(0, static_cast<Index>(distinct.size()), [&](Index u) {
        const Index t = distinct[static_cast<std::size_t>(u)];
        const VectorXd full = dist_y.row(dom.target_vertices[static_cast<std::size_t>(t)]);
        VectorXd d(m);
        detail::gather_row(full, dom.target_vertices, whole_y, d);
        d[t] = 0.0;
        sqdist.col(u) = d.cwiseAbs2();
    });

    const double floor = std::isinf(cutoff) ? 0.0 : std::exp(-0.5 * cutoff * cutoff);
    const double inv = 1.0 / (2.0 * sigma2);
    s.kernel.resize(m, m);
    for (Index j = 0; j < m; ++j) {
        bool any = false;
        for (Index l = 0; l < m; ++l) {
            const double w = std::exp(-sqdist(j, slot[static_cast<std::size_t>(dom.pi0[static_cast<std::size_t>(l)])]) * inv);
            const double kept = w < floor ? 0.0 : w;
            s.kernel(l, j) = kept;
            any = any || kept > 0.0;
        }
        if (any)
            continue;
        // Column j would carry no information: use the exact exponent, and
        // if that underflows too, measure it relative to its closest source.
        ++s.guarded_columns;
        double nearest = std::numeric_limits<double>::infinity();
        for (Index l = 0; l < m; ++l) {
            const double q = sqdist(j, slot[static_cast<std::size_t>(dom.pi0[static_cast<std::size_t>(l)])]);
            s.kernel(l, j) = std::exp(-q * inv);
            nearest = std::min(nearest, q);
        }
        if (s.kernel.col(j).maxCoeff() > 0.0)
            continue;
        for (Index l = 0; l < m; ++l) {
            const double q = sqdist(j, slot[static_cast<std::size_t>(dom.pi0[static_cast<std::size_t>(l)])]);
            s.kernel(l, j) = std::exp(-(q - nearest) * inv);
        }
    }
    return s;
}

/// Rows [begin, end) of S = Gamma * kernel.
inline MatrixXd score_rows(const BayesScore& s, Index begin, Index end)
{
    if (begin < 0 || end > s.size() || begin > end)
        throw InvalidInput("score_rows: row range out of bounds");
    return s.gamma.middleRows(begin, end - begin) * s.kernel;
}

/// Full score matrix, computed in row blocks by parallel workers.
inline MatrixXd score_matrix(const BayesScore& s, Index block_size = 256)
{
    const Index m = s.size();
    MatrixXd out(m, m);
    const Index blocks = (m + block_size - 1) / block_size;
    parallel_for(0, blocks, [&](Index b) {
        const Index begin = b * block_size, end = std::min(m, begin + block_size);
        out.middleRows(begin, end - begin).noalias() = s.gamma.middleRows(begin, end - begin) * s.kernel;
    });
    return out;
}

/// Score entries on per-row allowed columns only.
inline std::vector<std::vector<Candidate>> score_rows(const BayesScore& s,
                                                      const std::vector<std::vector<Index>>& allowed)
{
    const Index m = s.size();
    if (static_cast<Index>(allowed.size()) != m)
        throw InvalidInput("score_rows: one allowed list per row required");
    std::vector<std::vector<Candidate>> rows(static_cast<std::size_t>(m));
    parallel_for(0, m, [&](Index i) {
        const auto& cols = allowed[static_cast<std::size_t>(i)];
        auto& out = rows[static_cast<std::size_t>(i)];
        out.reserve(cols.size());
        const VectorXd g = s.gamma.row(i).transpose();
        for (Index j : cols) {
            if (j < 0 || j >= m)
                throw InvalidInput("score_rows: allowed column out of range");
            out.push_back({j, g.dot(s.kernel.col(j))});
        }
    });
    return rows;
}

struct BayesResult {
    PointMap map;
    /// Output of every iteration; the last one equals map.
    std::vector<PointMap> iterates;
    /// LAP objective of every iteration.
    std::vector<double> objectives;
    std::vector<double> gap_bounds;
};

namespace detail {

inline void check_denoise_inputs(const PointMap& pi0, const DistanceRows& dist_x, const DistanceRows& dist_y,
                                 const VectorXd& areas_x, const VectorXd& areas_y)
{
    const Index n = pi0.num_source();
    if (pi0.num_target() != n)
        throw InvalidInput("bayes_denoise: source and target must have the same vertex count");
    if (dist_x.size() != n || dist_y.size() != n)
        throw InvalidInput("bayes_denoise: distance sizes do not match the map");
    if (areas_x.size() != n || areas_y.size() != n)
        throw InvalidInput("bayes_denoise: area vectors do not match the map");
}

inline ScoreDomain whole_domain(const PointMap& pi0, const VectorXd& areas_x)
{
    const Index n = pi0.num_source();
    ScoreDomain dom;
    dom.source_vertices.resize(static_cast<std::size_t>(n));
    std::iota(dom.source_vertices.begin(), dom.source_vertices.end(), Index{0});
    dom.target_vertices = dom.source_vertices;
    dom.pi0 = pi0.image();
    dom.source_areas = areas_x;
    return dom;
}

/// Dense solve on a domain; returns (assignment in positions, result).
inline AssignmentResult solve_dense_domain(const ScoreDomain& dom, const DistanceRows& dist_x,
                                           const DistanceRows& dist_y, double sigma2, const BayesConfig& cfg)
{
    const BayesScore s = build_score(dom, dist_x, dist_y, sigma2, cfg.p, cfg.kernel_cutoff);
    return solve_auction(AssignmentProblem::dense(score_matrix(s, cfg.block_size), Sense::minimize), cfg.lap);
}

} // namespace detail

/// Denoises pi0 (any map, bijective or not) into a permutation. With
/// several iterations each output becomes the next noisy input; sigma is
/// kept fixed.
inline BayesResult bayes_denoise(const PointMap& pi0, const DistanceRows& dist_x, const DistanceRows& dist_y,
                                 const VectorXd& areas_x, const VectorXd& areas_y, const BayesConfig& cfg = {})
{
    cfg.validate();
    detail::check_denoise_inputs(pi0, dist_x, dist_y, areas_x, areas_y);
    const Index n = pi0.num_source();
    const double sigma2 = cfg.sigma2_frac * areas_y.sum();
    BayesResult out;
    PointMap current = pi0;
    for (int it = 0; it < cfg.iterations; ++it) {
        const auto res = detail::solve_dense_domain(detail::whole_domain(current, areas_x), dist_x, dist_y,
                                                    sigma2, cfg);
        current = PointMap(res.assignment, n);
        out.iterates.push_back(current);
        out.objectives.push_back(res.objective);
        out.gap_bounds.push_back(res.gap_bound);
    }
    out.map = current;
    return out;
}

struct SweepRow {
    double sigma2_frac;
    double mean_error;
};

/// One denoising run per sigma fraction, scored against the groundtruth.
inline std::vector<SweepRow> sigma_sweep(const PointMap& pi0, const DistanceRows& dist_x,
                                         const DistanceRows& dist_y, const VectorXd& areas_x,
                                         const VectorXd& areas_y, const BayesConfig& cfg,
                                         const std::vector<double>& fracs, const PointMap& groundtruth,
                                         double diameter_y)
{
    std::vector<SweepRow> rows;
    for (double f : fracs) {
        BayesConfig c = cfg;
        c.sigma2_frac = f;
        const auto res = bayes_denoise(pi0, dist_x, dist_y, areas_x, areas_y, c);
        rows.push_back({f, geodesic_error(res.map, groundtruth, dist_y, diameter_y).mean});
    }
    return rows;
}

} // namespace bayesmap
