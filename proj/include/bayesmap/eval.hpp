#pragma once

// Geodesic error statistics, target coverage, and stage timing.

#include "bayesmap/geodesics.hpp"
#include "bayesmap/pointmap.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <iomanip>

namespace bayesmap {

/// Thresholds t_m = m / 400, m = 0..100, shared by every curve and histogram.
inline std::vector<double> error_thresholds()
{
    std::vector<double> t(101);
    for (std::size_t m = 0; m < t.size(); ++m)
        t[m] = static_cast<double>(m) / 400.0;
    return t;
}

struct ErrorReport {
    /// Per source vertex, relative to the target diameter.
    VectorXd errors;
    double mean = 0.0;
    double median = 0.0;
    /// Fraction of vertices with error <= threshold, on error_thresholds().
    std::vector<double> curve;
    double exact_hit_frac = 0.0;
};

namespace detail {

inline double median_of(std::vector<double> v)
{
    if (v.empty())
        return 0.0;
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    if (v.size() % 2 == 1)
        return v[mid];
    const double upper = v[mid];
    const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

inline std::vector<double> cumulative_fraction(const VectorXd& values)
{
    const auto grid = error_thresholds();
    std::vector<double> sorted(values.data(), values.data() + values.size());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> curve(grid.size(), 1.0);
    if (sorted.empty())
        return curve;
    for (std::size_t m = 0; m < grid.size(); ++m) {
        const auto below = std::upper_bound(sorted.begin(), sorted.end(), grid[m]) - sorted.begin();
        curve[m] = static_cast<double>(below) / static_cast<double>(sorted.size());
    }
    return curve;
}

} // namespace detail

inline ErrorReport geodesic_error(const PointMap& map, const PointMap& groundtruth, const DistanceRows& dist_y,
                                  double diameter_y)
{
    if (map.num_source() != groundtruth.num_source() || map.num_target() != groundtruth.num_target())
        throw InvalidInput("geodesic_error: map and groundtruth sizes differ");
    if (dist_y.size() != map.num_target())
        throw InvalidInput("geodesic_error: distance field does not match the target");
    if (!(diameter_y > 0.0))
        throw InvalidInput("geodesic_error: diameter must be positive");
    const Index n = map.num_source();
    ErrorReport rep;
    rep.errors.resize(n);
    const auto* field = dynamic_cast<const DistanceField*>(&dist_y);
    if (field) {
        for (Index i = 0; i < n; ++i)
            rep.errors[i] = map[i] == groundtruth[i] ? 0.0 : (*field)(groundtruth[i], map[i]) / diameter_y;
    } else {
        parallel_for(0, n, [&](Index i) {
            rep.errors[i] = map[i] == groundtruth[i] ? 0.0 : dist_y.row(groundtruth[i])[map[i]] / diameter_y;
        });
    }
    if (n == 0) {
        rep.curve = detail::cumulative_fraction(rep.errors);
        return rep;
    }
    rep.mean = rep.errors.mean();
    rep.median = detail::median_of(std::vector<double>(rep.errors.data(), rep.errors.data() + n));
    rep.curve = detail::cumulative_fraction(rep.errors);
    rep.exact_hit_frac = static_cast<double>((rep.errors.array() == 0.0).count()) / static_cast<double>(n);
    return rep;
}

/// True when curve a is >= curve b at every threshold >= from.
inline bool curve_dominates(const std::vector<double>& a, const std::vector<double>& b, double from)
{
    const auto grid = error_thresholds();
    for (std::size_t m = 0; m < grid.size(); ++m)
        if (grid[m] >= from - 1e-12 && a[m] < b[m])
            return false;
    return true;
}

inline void write_curve_csv(std::ostream& os, const std::vector<double>& curve)
{
    const auto grid = error_thresholds();
    os << "threshold,fraction\n";
    os << std::setprecision(10);
    for (std::size_t m = 0; m < grid.size() && m < curve.size(); ++m)
        os << grid[m] << ',' << curve[m] << '\n';
}

struct CoverageReport {
    /// Per target vertex: distance to the nearest vertex of the map's image,
    /// relative to the diameter.
    VectorXd distances;
    /// Fraction of target vertices per bin [t_m, t_m+1); the last bin is open.
    std::vector<double> histogram;
    double coverage = 0.0;
};

inline CoverageReport coverage(const PointMap& map, const DistanceRows& dist_y, double diameter_y)
{
    const Index n = map.num_target();
    if (dist_y.size() != n)
        throw InvalidInput("coverage: distance field does not match the target");
    if (!(diameter_y > 0.0))
        throw InvalidInput("coverage: diameter must be positive");
    CoverageReport rep;
    const auto grid = error_thresholds();
    rep.histogram.assign(grid.size(), 0.0);
    if (n == 0)
        return rep;
    if (map.bijective()) {
        rep.distances = VectorXd::Zero(n);
        rep.histogram[0] = 1.0;
        rep.coverage = 1.0;
        return rep;
    }
    std::vector<char> hit(static_cast<std::size_t>(n), 0);
    for (Index v : map.image())
        hit[static_cast<std::size_t>(v)] = 1;
    rep.distances = VectorXd::Constant(n, std::numeric_limits<double>::infinity());
    VectorXd row(n);
    for (Index y = 0; y < n; ++y) {
        if (!hit[static_cast<std::size_t>(y)])
            continue;
        dist_y.row(y, row);
        row[y] = 0.0;
        rep.distances = rep.distances.cwiseMin(row);
    }
    rep.distances /= diameter_y;
    Index covered = 0;
    for (Index y = 0; y < n; ++y) {
        if (hit[static_cast<std::size_t>(y)]) {
            rep.distances[y] = 0.0;
            ++covered;
        }
        const double d = rep.distances[y];
        auto bin = static_cast<std::size_t>(std::upper_bound(grid.begin(), grid.end(), d) - grid.begin()) - 1;
        rep.histogram[std::min(bin, grid.size() - 1)] += 1.0 / static_cast<double>(n);
    }
    rep.coverage = static_cast<double>(covered) / static_cast<double>(n);
    return rep;
}

/// Wall-clock times of named stages, in the order they ran.
class StageTimer {
public:
    using Clock = std::chrono::steady_clock;

    template <typename Fn>
    decltype(auto) time(const std::string& stage, Fn&& fn)
    {
        const auto start = Clock::now();
        struct Record {
            StageTimer* self;
            const std::string& stage;
            Clock::time_point start;
            ~Record() { self->add(stage, std::chrono::duration<double>(Clock::now() - start).count()); }
        } record{this, stage, start};
        return fn();
    }

    void add(const std::string& stage, double seconds)
    {
        for (auto& [name, total] : stages_)
            if (name == stage) {
                total += seconds;
                return;
            }
        stages_.emplace_back(stage, seconds);
    }

    double seconds(const std::string& stage) const
    {
        for (const auto& [name, total] : stages_)
            if (name == stage)
                return total;
        return 0.0;
    }

    const std::vector<std::pair<std::string, double>>& stages() const { return stages_; }

private:
    std::vector<std::pair<std::string, double>> stages_;
};

/// Stage name -> seconds; empty object for an empty run.
inline nlohmann::ordered_json runtime_report(const StageTimer& timer)
{
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [name, seconds] : timer.stages())
        j[name] = seconds;
    return j;
}

inline nlohmann::ordered_json summary_json(const ErrorReport& err, const CoverageReport& cov,
                                           const StageTimer& timer)
{
    nlohmann::ordered_json j;
    j["mean"] = err.mean;
    j["median"] = err.median;
    j["exact_hit_frac"] = err.exact_hit_frac;
    j["coverage"] = cov.coverage;
    j["stage_times"] = runtime_report(timer);
    return j;
}

} // namespace bayesmap
