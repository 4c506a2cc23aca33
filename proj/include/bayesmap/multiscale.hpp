#pragma once

// Coarse-to-fine denoising. The coarsest level is a dense assignment on
// farthest point samples; every finer level restricts each source sample
// to target samples within a radius of its parent's image and solves a
// sparse assignment.

#include "bayesmap/bayes.hpp"
#include "bayesmap/sampling.hpp"

#include <chrono>
#include <iostream>
#include <optional>

namespace bayesmap {

/// Optional per-level replacements of BayesConfig fields.
struct LevelOverride {
    std::optional<int> p;
    std::optional<double> sigma2_frac;
    std::optional<double> kernel_cutoff;
};

struct MultiscaleConfig {
    /// Sample counts, ascending; the last equals the vertex count.
    std::vector<Index> levels;
    /// Candidate radius = radius_mult * covering radius of the coarser level.
    double radius_mult = 2.0;
    std::vector<LevelOverride> overrides;
    int max_retries = 3;

    void validate(Index n) const
    {
        std::vector<std::string> problems;
        if (levels.empty())
            problems.push_back("levels must not be empty");
        for (std::size_t l = 0; l < levels.size(); ++l)
            if (levels[l] < 1 || (l > 0 && levels[l] <= levels[l - 1]))
                problems.push_back("levels must be positive and strictly ascending");
        if (!levels.empty() && levels.back() != n)
            problems.push_back("last level must equal the vertex count (" + std::to_string(n) + ")");
        if (!(radius_mult > 1.0))
            problems.push_back("radius_mult must exceed 1");
        if (overrides.size() > levels.size())
            problems.push_back("more overrides than levels");
        if (max_retries < 0)
            problems.push_back("max_retries must be nonnegative");
        if (!problems.empty()) {
            std::string msg = "invalid multiscale configuration:";
            for (const auto& s : problems)
                msg += "\n  - " + s;
            throw InvalidInput(msg);
        }
    }
};

struct LevelReport {
    Index size = 0;
    /// Allowed pairs / size^2 (1 on the dense level).
    double density = 1.0;
    /// Candidate radius used (0 on the dense level).
    double radius = 0.0;
    int retries = 0;
    double objective = 0.0;
    double seconds = 0.0;
};

struct MultiscaleResult {
    PointMap map;
    std::vector<PointMap> iterates;
    /// Level reports of the last iteration.
    std::vector<LevelReport> levels;
};

namespace detail {

inline BayesConfig level_config(const BayesConfig& cfg, const MultiscaleConfig& mcfg, std::size_t level)
{
    BayesConfig c = cfg;
    if (level < mcfg.overrides.size()) {
        const auto& o = mcfg.overrides[level];
        if (o.p)
            c.p = *o.p;
        if (o.sigma2_frac)
            c.sigma2_frac = *o.sigma2_frac;
        if (o.kernel_cutoff)
            c.kernel_cutoff = *o.kernel_cutoff;
    }
    c.validate();
    return c;
}

inline std::vector<Index> positions_of(const std::vector<Index>& sorted, Index n)
{
    std::vector<Index> pos(static_cast<std::size_t>(n), -1);
    for (std::size_t b = 0; b < sorted.size(); ++b)
        pos[static_cast<std::size_t>(sorted[b])] = static_cast<Index>(b);
    return pos;
}

inline std::vector<Index> sorted_level(const SampleHierarchy& h, std::size_t level)
{
    std::vector<Index> v = h.levels[level];
    std::sort(v.begin(), v.end());
    return v;
}

} // namespace detail

/// Multiscale counterpart of bayes_denoise. The hierarchies must have been
/// sampled with mcfg.levels on both shapes.
inline MultiscaleResult bayes_denoise_multiscale(const PointMap& pi0, const DistanceRows& dist_x,
                                                 const DistanceRows& dist_y, const VectorXd& areas_x,
                                                 const VectorXd& areas_y, const SampleHierarchy& hx,
                                                 const SampleHierarchy& hy, const MultiscaleConfig& mcfg,
                                                 const BayesConfig& cfg = {})
{
    using Clock = std::chrono::steady_clock;
    cfg.validate();
    detail::check_denoise_inputs(pi0, dist_x, dist_y, areas_x, areas_y);
    const Index n = pi0.num_source();
    mcfg.validate(n);
    const std::size_t num_levels = mcfg.levels.size();
    if (hx.num_levels() != num_levels || hy.num_levels() != num_levels)
        throw InvalidInput("bayes_denoise_multiscale: hierarchies do not match the level list");
    for (std::size_t l = 0; l < num_levels; ++l)
        if (static_cast<Index>(hx.levels[l].size()) != mcfg.levels[l] ||
            static_cast<Index>(hy.levels[l].size()) != mcfg.levels[l])
            throw InvalidInput("bayes_denoise_multiscale: hierarchy level sizes differ from the configuration");

    const double area_y = areas_y.sum();
    MultiscaleResult out;
    PointMap noisy = pi0;
    for (int it = 0; it < cfg.iterations; ++it) {
        out.levels.clear();
        // image[x] = y for the sampled x of the level just solved.
        std::vector<Index> image(static_cast<std::size_t>(n), -1);
        for (std::size_t level = 0; level < num_levels; ++level) {
            const auto start = Clock::now();
            const BayesConfig lc = detail::level_config(cfg, mcfg, level);
            const auto sx = detail::sorted_level(hx, level);
            const auto sy = detail::sorted_level(hy, level);
            const auto pos_x = detail::positions_of(sx, n);
            const auto pos_y = detail::positions_of(sy, n);
            const auto m = static_cast<Index>(sx.size());

            // Distances and areas are sub-sampled from the finest scale. The
            // coarsest level snaps the noisy map to its nearest target sample;
            // finer levels take the previous level's solution, interpolated by
            // nearest neighbour, as their noisy input.
            ScoreDomain dom;
            dom.source_vertices = sx;
            dom.target_vertices = sy;
            dom.source_areas.resize(m);
            for (Index i = 0; i < m; ++i)
                dom.source_areas[i] = areas_x[sx[static_cast<std::size_t>(i)]];
            std::vector<Index> guess(static_cast<std::size_t>(m));
            for (Index i = 0; i < m; ++i) {
                const Index x = sx[static_cast<std::size_t>(i)];
                guess[static_cast<std::size_t>(i)] = level == 0
                                                         ? hy.parent_vertex(level, noisy[x])
                                                         : image[static_cast<std::size_t>(hx.parent_vertex(level - 1, x))];
            }
            dom.pi0.resize(static_cast<std::size_t>(m));
            for (Index i = 0; i < m; ++i)
                dom.pi0[static_cast<std::size_t>(i)] = pos_y[static_cast<std::size_t>(guess[static_cast<std::size_t>(i)])];

            const BayesScore score =
                build_score(dom, dist_x, dist_y, lc.sigma2_frac * area_y, lc.p, lc.kernel_cutoff);
            LevelReport rep;
            rep.size = m;
            AssignmentResult res;
            if (level == 0) {
                res = solve_auction(AssignmentProblem::dense(score_matrix(score, lc.block_size), Sense::minimize),
                                    lc.lap);
            } else {
                std::vector<Index> centers(guess);
                std::sort(centers.begin(), centers.end());
                centers.erase(std::unique(centers.begin(), centers.end()), centers.end());
                MatrixXd center_dist(m, static_cast<Index>(centers.size()));
                parallel_for(0, static_cast<Index>(centers.size()), [&](Index c) {
                    const VectorXd full = dist_y.row(centers[static_cast<std::size_t>(c)]);
                    for (Index b = 0; b < m; ++b)
                        center_dist(b, c) = full[sy[static_cast<std::size_t>(b)]];
                    center_dist(pos_y[static_cast<std::size_t>(centers[static_cast<std::size_t>(c)])], c) = 0.0;
                });
                double radius = mcfg.radius_mult * hy.radii[level - 1];
                std::vector<std::vector<Index>> allowed;
                for (int attempt = 0;; ++attempt) {
                    allowed.assign(static_cast<std::size_t>(m), {});
                    parallel_for(0, m, [&](Index i) {
                        const Index c = std::lower_bound(centers.begin(), centers.end(),
                                                         guess[static_cast<std::size_t>(i)]) -
                                        centers.begin();
                        auto& row = allowed[static_cast<std::size_t>(i)];
                        for (Index b = 0; b < m; ++b)
                            if (center_dist(b, c) <= radius)
                                row.push_back(b);
                    });
                    if (has_perfect_matching(allowed, m))
                        break;
                    if (attempt == mcfg.max_retries)
                        throw InfeasibleAssignment("bayes_denoise_multiscale: level " + std::to_string(level) +
                                                   " has no perfect matching within radius " +
                                                   std::to_string(radius));
                    radius *= 2.0;
                    ++rep.retries;
                }
                std::size_t nnz = 0;
                for (const auto& row : allowed)
                    nnz += row.size();
                rep.density = static_cast<double>(nnz) / (static_cast<double>(m) * static_cast<double>(m));
                rep.radius = radius;
                res = solve_auction(AssignmentProblem::sparse(score_rows(score, allowed), Sense::minimize), lc.lap);
            }
            for (Index i = 0; i < m; ++i)
                image[static_cast<std::size_t>(sx[static_cast<std::size_t>(i)])] =
                    sy[static_cast<std::size_t>(res.assignment[static_cast<std::size_t>(i)])];
            rep.objective = res.objective;
            rep.seconds = std::chrono::duration<double>(Clock::now() - start).count();
            out.levels.push_back(rep);
        }
        noisy = PointMap(image, n);
        out.iterates.push_back(noisy);
    }
    out.map = noisy;
    return out;
}

} // namespace bayesmap
