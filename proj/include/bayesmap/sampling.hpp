#pragma once

#include "bayesmap/geodesics.hpp"

namespace bayesmap {

/// Nested farthest point samples, coarse to fine.
struct SampleHierarchy {
    /// levels[l] lists the sampled vertices in selection order; every
    /// level extends the previous one.
    std::vector<std::vector<Index>> levels;
    /// Covering radius of each level: max distance of any vertex to its
    /// nearest sample.
    std::vector<double> radii;
    /// parents[l][v]: position (within levels[l]) of the sample nearest to v.
    std::vector<std::vector<Index>> parents;

    std::size_t num_levels() const { return levels.size(); }

    /// Vertex id of the sample nearest to v at level l.
    Index parent_vertex(std::size_t level, Index v) const
    {
        return levels[level][static_cast<std::size_t>(parents[level][static_cast<std::size_t>(v)])];
    }
};

/// Greedy farthest point sampling. Each new sample maximises the distance
/// to the chosen set; ties go to the lowest vertex index.
inline SampleHierarchy farthest_point_sample(const DistanceRows& dist, const std::vector<Index>& counts,
                                             Index seed_vertex)
{
    const Index n = dist.size();
    if (counts.empty())
        throw InvalidInput("farthest_point_sample: no level sizes given");
    for (std::size_t l = 0; l < counts.size(); ++l) {
        if (counts[l] < 1 || (l > 0 && counts[l] <= counts[l - 1]))
            throw InvalidInput("farthest_point_sample: level sizes must be strictly ascending and positive");
    }
    if (counts.back() > n)
        throw InvalidInput("farthest_point_sample: last level larger than vertex count");
    if (seed_vertex < 0 || seed_vertex >= n)
        throw InvalidInput("farthest_point_sample: seed vertex out of range");

    SampleHierarchy h;
    std::vector<Index> chosen;
    chosen.reserve(static_cast<std::size_t>(counts.back()));
    VectorXd mind = dist.row(seed_vertex);
    mind[seed_vertex] = 0.0;
    std::vector<Index> nearest(static_cast<std::size_t>(n), 0);
    std::vector<char> is_sample(static_cast<std::size_t>(n), 0);
    chosen.push_back(seed_vertex);
    is_sample[static_cast<std::size_t>(seed_vertex)] = 1;
    VectorXd r(n);

    auto close_level = [&] {
        h.levels.push_back(chosen);
        h.radii.push_back(mind.maxCoeff());
        h.parents.push_back(nearest);
    };

    std::size_t level = 0;
    if (counts[0] == 1)
        close_level(), ++level;
    while (level < counts.size()) {
        Index next = 0;
        double best = -1.0;
        for (Index v = 0; v < n; ++v)
            if (!is_sample[static_cast<std::size_t>(v)] && mind[v] > best) {
                best = mind[v];
                next = v;
            }
        const auto slot = static_cast<Index>(chosen.size());
        chosen.push_back(next);
        is_sample[static_cast<std::size_t>(next)] = 1;
        dist.row(next, r);
        r[next] = 0.0;
        for (Index v = 0; v < n; ++v)
            if (r[v] < mind[v]) {
                mind[v] = r[v];
                nearest[static_cast<std::size_t>(v)] = slot;
            }
        if (static_cast<Index>(chosen.size()) == counts[level])
            close_level(), ++level;
    }
    return h;
}

} // namespace bayesmap
