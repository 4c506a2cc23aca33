#pragma once

// Functional maps and pointwise recovery: nearest neighbours, bijective
// nearest neighbours (assignment), ICP refinement, and nearest-neighbour
// interpolation of sparse correspondences.

#include "bayesmap/geodesics.hpp"
#include "bayesmap/lap.hpp"
#include "bayesmap/pointmap.hpp"
#include "bayesmap/spectral.hpp"

#include <Eigen/SVD>

#include <iostream>
#include <set>

namespace bayesmap {

/// k x k matrix C = Psi^T Pi Phi in area-weighted bases.
struct FunctionalMap {
    MatrixXd C;
    std::string source_id;
    std::string target_id;

    Index size() const { return C.rows(); }
};

/// FMP1 layout: magic, u32 k, k*k float64 row-major.
inline void write_functional_map(std::ostream& os, const FunctionalMap& fm)
{
    const auto k = static_cast<std::uint32_t>(fm.size());
    io::write_magic(os, "FMP1");
    io::write_pod(os, k);
    const RowMajorMatrix rm = fm.C;
    io::write_array(os, rm.data(), static_cast<std::size_t>(rm.size()));
}

inline FunctionalMap read_functional_map(std::istream& is)
{
    if (!io::read_magic(is, "FMP1"))
        throw ParseError("not a functional map file (bad magic)");
    const auto k = io::read_pod<std::uint32_t>(is);
    RowMajorMatrix rm(k, k);
    io::read_array(is, rm.data(), static_cast<std::size_t>(k) * k);
    return {MatrixXd(rm), {}, {}};
}

/// Builds C from a dense point map; Pi gathers target rows by the map.
inline FunctionalMap build_fmap(const PointMap& map, const SpectralBasis& basis_x, const SpectralBasis& basis_y,
                                Index k)
{
    if (k < 1 || k > basis_x.size() || k > basis_y.size())
        throw InvalidInput("build_fmap: k = " + std::to_string(k) + " exceeds the basis size");
    if (map.num_source() != basis_x.num_vertices() || map.num_target() != basis_y.num_vertices())
        throw InvalidInput("build_fmap: map sizes do not match the bases");
    const Index n = map.num_source();
    MatrixXd gathered(n, k);
    for (Index i = 0; i < n; ++i)
        gathered.row(i) = basis_y.phi_weighted.row(map[i]).head(k);
    return {gathered.transpose() * basis_x.phi_weighted.leftCols(k), {}, {}};
}

/// mean |C_ii| / mean |C_ij| (i != j); above 1 for near-isometries.
inline double diagonal_dominance_ratio(const MatrixXd& c)
{
    const Index k = c.rows();
    if (k < 2)
        return std::numeric_limits<double>::infinity();
    const double diag = c.diagonal().cwiseAbs().mean();
    const double off = (c.cwiseAbs().sum() - c.diagonal().cwiseAbs().sum()) / static_cast<double>(k * (k - 1));
    return diag / off;
}

namespace detail {

inline double squared_distance(const double* a, const double* b, Index dim)
{
    double s = 0.0;
    for (Index d = 0; d < dim; ++d) {
        const double t = a[d] - b[d];
        s += t * t;
    }
    return s;
}

/// Exact nearest neighbour over the rows of a point set; ties resolve to
/// the lowest row index, matching a brute-force scan.
class KdTree {
public:
    explicit KdTree(const RowMajorMatrix& points) : points_(points), dim_(points.cols())
    {
        order_.resize(static_cast<std::size_t>(points.rows()));
        std::iota(order_.begin(), order_.end(), Index{0});
        if (!order_.empty())
            build(0, static_cast<Index>(order_.size()));
    }

    Index nearest(const double* query) const
    {
        Best best;
        if (!nodes_.empty())
            search(0, query, best);
        return best.index;
    }

private:
    static constexpr Index leaf_size = 12;

    struct Node {
        Index begin, end;
        Index axis = -1;
        double split = 0.0;
        Index left = -1, right = -1;
    };

    struct Best {
        double dist = std::numeric_limits<double>::infinity();
        Index index = -1;
    };

    Index build(Index begin, Index end)
    {
        const auto id = static_cast<Index>(nodes_.size());
        nodes_.push_back({begin, end});
        if (end - begin <= leaf_size)
            return id;
        // Split on the widest axis at the median.
        Index axis = 0;
        double widest = -1.0;
        for (Index d = 0; d < dim_; ++d) {
            double lo = std::numeric_limits<double>::infinity(), hi = -lo;
            for (Index e = begin; e < end; ++e) {
                const double v = points_(order_[static_cast<std::size_t>(e)], d);
                lo = std::min(lo, v), hi = std::max(hi, v);
            }
            if (hi - lo > widest)
                widest = hi - lo, axis = d;
        }
        const Index mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                         [&](Index a, Index b) { return points_(a, axis) < points_(b, axis); });
        const double split = points_(order_[static_cast<std::size_t>(mid)], axis);
        const Index left = build(begin, mid);
        const Index right = build(mid, end);
        auto& node = nodes_[static_cast<std::size_t>(id)];
        node.axis = axis;
        node.split = split;
        node.left = left;
        node.right = right;
        return id;
    }

    void search(Index id, const double* q, Best& best) const
    {
        const Node& node = nodes_[static_cast<std::size_t>(id)];
        if (node.axis < 0) {
            for (Index e = node.begin; e < node.end; ++e) {
                const Index idx = order_[static_cast<std::size_t>(e)];
                const double d = squared_distance(q, points_.row(idx).data(), dim_);
                if (d < best.dist || (d == best.dist && idx < best.index))
                    best.dist = d, best.index = idx;
            }
            return;
        }
        const double diff = q[node.axis] - node.split;
        const Index near = diff < 0.0 ? node.left : node.right;
        const Index far = diff < 0.0 ? node.right : node.left;
        search(near, q, best);
        // <= keeps equal-distance candidates with a lower index reachable.
        if (diff * diff <= best.dist)
            search(far, q, best);
    }

    const RowMajorMatrix& points_;
    Index dim_;
    std::vector<Index> order_;
    std::vector<Node> nodes_;
};

inline std::vector<Index> nearest_rows(const RowMajorMatrix& queries, const RowMajorMatrix& points, bool use_tree)
{
    std::vector<Index> out(static_cast<std::size_t>(queries.rows()));
    if (use_tree) {
        const KdTree tree(points);
        parallel_for(0, queries.rows(),
                     [&](Index i) { out[static_cast<std::size_t>(i)] = tree.nearest(queries.row(i).data()); });
    } else {
        parallel_for(0, queries.rows(), [&](Index i) {
            double best = std::numeric_limits<double>::infinity();
            Index arg = 0;
            for (Index j = 0; j < points.rows(); ++j) {
                const double d = squared_distance(queries.row(i).data(), points.row(j).data(), points.cols());
                if (d < best)
                    best = d, arg = j;
            }
            out[static_cast<std::size_t>(i)] = arg;
        });
    }
    return out;
}

} // namespace detail

enum class NnStrategy { automatic, brute_force, kd_tree };

/// Nearest-neighbour recovery: every source vertex takes the target vertex
/// whose spectral embedding is closest to its transported embedding.
inline PointMap recover_nn(const MatrixXd& c, const SpectralBasis& basis_x, const SpectralBasis& basis_y,
                           NnStrategy strategy = NnStrategy::automatic)
{
    const Index k = c.rows();
    if (c.cols() != k || k > basis_x.size() || k > basis_y.size())
        throw InvalidInput("recover_nn: C must be square and fit the bases");
    const RowMajorMatrix transported = basis_x.phi_weighted.leftCols(k) * c.transpose();
    const RowMajorMatrix targets = basis_y.phi_weighted.leftCols(k);
    const bool tree = strategy == NnStrategy::kd_tree || (strategy == NnStrategy::automatic && k <= 64);
    return PointMap(detail::nearest_rows(transported, targets, tree), basis_y.num_vertices());
}

/// ||C Phi^T - Psi^T P||_F^2 for the map's column-stochastic P.
inline double fmap_objective(const MatrixXd& c, const SpectralBasis& basis_x, const SpectralBasis& basis_y,
                             const PointMap& map)
{
    const Index k = c.rows();
    const MatrixXd transported = basis_x.phi_weighted.leftCols(k) * c.transpose();
    double total = 0.0;
    for (Index i = 0; i < map.num_source(); ++i)
        total += (transported.row(i) - basis_y.phi_weighted.row(map[i]).head(k)).squaredNorm();
    return total;
}

/// <Psi C Phi^T, Pi>_F for the map's indicator matrix.
inline double fmap_alignment(const MatrixXd& c, const SpectralBasis& basis_x, const SpectralBasis& basis_y,
                             const PointMap& map)
{
    const Index k = c.rows();
    const MatrixXd transported = basis_x.phi_weighted.leftCols(k) * c.transpose();
    double total = 0.0;
    for (Index i = 0; i < map.num_source(); ++i)
        total += transported.row(i).dot(basis_y.phi_weighted.row(map[i]).head(k));
    return total;
}

/// Bijective recovery: the permutation maximising <Pi, Psi C Phi^T>.
inline PointMap recover_bijective_nn(const MatrixXd& c, const SpectralBasis& basis_x, const SpectralBasis& basis_y,
                                     const AuctionOptions& lap = {})
{
    const Index k = c.rows();
    const Index n = basis_x.num_vertices();
    if (n != basis_y.num_vertices())
        throw InvalidInput("recover_bijective_nn: shapes must have the same vertex count");
    if (c.cols() != k || k > basis_x.size() || k > basis_y.size())
        throw InvalidInput("recover_bijective_nn: C must be square and fit the bases");
    const MatrixXd benefit =
        (basis_x.phi_weighted.leftCols(k) * c.transpose()) * basis_y.phi_weighted.leftCols(k).transpose();
    const auto result = solve_auction(AssignmentProblem::dense(benefit, Sense::maximize), lap);
    return PointMap(result.assignment, n);
}

struct IcpOptions {
    int max_iterations = 50;
    /// Stop when the relative objective decrease falls below this.
    double tolerance = 1e-10;
};

struct IcpResult {
    PointMap map;
    MatrixXd C;
    int iterations = 0;
    /// Objective after each C-step.
    std::vector<double> objectives;
    bool degenerate = false;
};

/// Orthogonal C minimising ||C Phi^T - Psi^T P||_F for a fixed map.
inline MatrixXd procrustes_step(const PointMap& map, const SpectralBasis& basis_x, const SpectralBasis& basis_y,
                                Index k, bool* degenerate = nullptr)
{
    const MatrixXd cross = build_fmap(map, basis_x, basis_y, k).C;
    Eigen::JacobiSVD<MatrixXd> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
    if (degenerate)
        *degenerate = !(svd.singularValues().minCoeff() > 1e-14 * std::max(1.0, svd.singularValues().maxCoeff()));
    return svd.matrixU() * svd.matrixV().transpose();
}

/// Alternates nearest-neighbour P-steps with Procrustes C-steps until the
/// map stops changing, the objective stalls, or max_iterations is reached.
inline IcpResult recover_icp(const MatrixXd& c0, const SpectralBasis& basis_x, const SpectralBasis& basis_y,
                             const IcpOptions& opt = {})
{
    const Index k = c0.rows();
    if (c0.cols() != k)
        throw InvalidInput("recover_icp: C0 must be square");
    IcpResult out{recover_nn(c0, basis_x, basis_y), c0, 0, {}, false};
    double previous = std::numeric_limits<double>::infinity();
    while (out.iterations < opt.max_iterations) {
        bool degenerate = false;
        MatrixXd c = procrustes_step(out.map, basis_x, basis_y, k, &degenerate);
        if (degenerate) {
            std::cerr << "warning: recover_icp: degenerate cross-covariance, returning last iterate\n";
            out.degenerate = true;
            break;
        }
        out.C = std::move(c);
        ++out.iterations;
        const double objective = fmap_objective(out.C, basis_x, basis_y, out.map);
        out.objectives.push_back(objective);
        PointMap next = recover_nn(out.C, basis_x, basis_y);
        const bool unchanged = next == out.map;
        out.map = std::move(next);
        if (unchanged || (std::isfinite(previous) && previous - objective <= opt.tolerance * std::abs(previous)))
            break;
        previous = objective;
    }
    return out;
}

/// Sparse matches (source vertex, target vertex).
struct SparseCorrespondence {
    std::vector<std::pair<Index, Index>> pairs;

    void validate(Index num_source, Index num_target) const
    {
        std::set<Index> seen;
        for (const auto& [s, t] : pairs) {
            if (s < 0 || s >= num_source || t < 0 || t >= num_target)
                throw InvalidInput("sparse correspondence index out of range");
            if (!seen.insert(s).second)
                throw InvalidInput("sparse correspondence has duplicate source " + std::to_string(s));
        }
    }
};

inline SparseCorrespondence read_sparse_correspondence(std::istream& is)
{
    SparseCorrespondence sc;
    std::string line;
    while (std::getline(is, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        std::istringstream ls(line);
        long long s, t;
        if (!(ls >> s >> t))
            throw ParseError("sparse correspondence: expected 'src tgt' per line");
        sc.pairs.emplace_back(s, t);
    }
    return sc;
}

inline void write_sparse_correspondence(std::ostream& os, const SparseCorrespondence& sc)
{
    for (const auto& [s, t] : sc.pairs)
        os << s << ' ' << t << '\n';
}

/// Every source vertex copies the image of its geodesically nearest sparse
/// source (ties: earliest pair).
inline PointMap interpolate_sparse(const SparseCorrespondence& sparse, const DistanceRows& dist_x, Index num_target)
{
    if (sparse.pairs.empty())
        throw InvalidInput("interpolate_sparse: empty sparse correspondence");
    const Index n = dist_x.size();
    sparse.validate(n, num_target);
    VectorXd best = VectorXd::Constant(n, std::numeric_limits<double>::infinity());
    std::vector<Index> image(static_cast<std::size_t>(n), 0);
    VectorXd row(n);
    for (const auto& [s, t] : sparse.pairs) {
        dist_x.row(s, row);
        row[s] = 0.0;
        for (Index v = 0; v < n; ++v)
            if (row[v] < best[v]) {
                best[v] = row[v];
                image[static_cast<std::size_t>(v)] = t;
            }
    }
    return PointMap(std::move(image), num_target);
}

} // namespace bayesmap
