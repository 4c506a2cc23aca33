#pragma once

// Geodesic distances on triangle meshes: single-source fast marching and
// Dijkstra, all-pairs assembly, and the distance cache format.

#include "bayesmap/mesh.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>

namespace bayesmap {

/// Anything that can produce full rows of a symmetric distance matrix.
class DistanceRows {
public:
    virtual ~DistanceRows() = default;
    virtual Index size() const = 0;
    /// Writes distances from vertex i to every vertex into out (length size()).
    virtual void row(Index i, Eigen::Ref<VectorXd> out) const = 0;

    VectorXd row(Index i) const
    {
        VectorXd out(size());
        row(i, out);
        return out;
    }
};

enum class DistanceMethod : std::uint8_t { fast_marching = 0, dijkstra = 1 };

inline const char* to_string(DistanceMethod m)
{
    return m == DistanceMethod::fast_marching ? "fast_marching" : "dijkstra";
}

inline DistanceMethod distance_method_from_string(std::string_view s)
{
    if (s == "fast_marching" || s == "fmm")
        return DistanceMethod::fast_marching;
    if (s == "dijkstra")
        return DistanceMethod::dijkstra;
    throw InvalidInput("unknown distance method '" + std::string(s) + "'");
}

namespace detail {

struct QueueEntry {
    double dist;
    int vertex;
    bool operator>(const QueueEntry& o) const
    {
        return dist > o.dist || (dist == o.dist && vertex > o.vertex);
    }
};

// Planar-wavefront update of vertex v from accepted a and b. Returns +inf
// when the angle at v is obtuse or the characteristic does not enter the
// triangle; the caller then relies on edge updates.
inline double triangle_update(const Vec3& v, const Vec3& a, const Vec3& b, double ta, double tb)
{
    const Vec3 e1 = a - v;
    const Vec3 e2 = b - v;
    const double g11 = e1.squaredNorm(), g22 = e2.squaredNorm(), g12 = e1.dot(e2);
    // Right angles and axis-aligned fronts sit exactly on these boundaries;
    // the slack keeps rounding (e.g. after a rotation) from flipping them.
    constexpr double slack = 1e-10;
    if (g12 < -slack * std::sqrt(g11 * g22))
        return std::numeric_limits<double>::infinity();
    const double det = g11 * g22 - g12 * g12;
    if (det <= 0.0)
        return std::numeric_limits<double>::infinity();
    // Q = (V^T V)^{-1}
    const double q11 = g22 / det, q22 = g11 / det, q12 = -g12 / det;
    const double q1_1 = q11 + q12, q1_2 = q12 + q22; // Q * 1
    const double a2 = q1_1 + q1_2;                   // 1^T Q 1
    const double b1 = q1_1 * ta + q1_2 * tb;         // 1^T Q t
    const double c0 = q11 * ta * ta + 2.0 * q12 * ta * tb + q22 * tb * tb - 1.0;
    const double disc = b1 * b1 - a2 * c0;
    if (disc < 0.0)
        return std::numeric_limits<double>::infinity();
    const double t = (b1 + std::sqrt(disc)) / a2;
    if (t < std::max(ta, tb))
        return std::numeric_limits<double>::infinity();
    // Upwind direction must lie in the wedge spanned by e1, e2.
    const double da = t - ta, db = t - tb;
    const double alpha = q11 * da + q12 * db;
    const double beta = q12 * da + q22 * db;
    const double scale = slack * (std::abs(q11 * da) + std::abs(q12 * db) + std::abs(q22 * db));
    if (alpha < -scale || beta < -scale)
        return std::numeric_limits<double>::infinity();
    return t;
}

} // namespace detail

/// Distances from source to every vertex. fast_marching uses triangle
/// updates with edge updates as fallback; dijkstra uses edge lengths only.
inline VectorXd distance_field(const TriMesh& mesh, Index source, DistanceMethod method)
{
    const Index n = mesh.num_vertices();
    if (source < 0 || source >= n)
        throw InvalidInput("distance_field: source out of range");
    constexpr double inf = std::numeric_limits<double>::infinity();
    VectorXd dist = VectorXd::Constant(n, inf);
    std::vector<char> accepted(static_cast<std::size_t>(n), 0);
    std::vector<detail::QueueEntry> heap;
    auto push = [&heap](double d, int v) {
        heap.push_back({d, v});
        std::push_heap(heap.begin(), heap.end(), std::greater<>());
    };
    auto relax = [&](int v, double d) {
        if (d < dist[v]) {
            dist[v] = d;
            push(d, v);
        }
    };

    dist[source] = 0.0;
    push(0.0, static_cast<int>(source));
    Index accepted_count = 0;
    while (!heap.empty()) {
        std::pop_heap(heap.begin(), heap.end(), std::greater<>());
        const auto top = heap.back();
        heap.pop_back();
        const int a = top.vertex;
        if (accepted[static_cast<std::size_t>(a)] || top.dist > dist[a])
            continue;
        accepted[static_cast<std::size_t>(a)] = 1;
        ++accepted_count;
        const Vec3& pa = mesh.vertex(a);

        if (method == DistanceMethod::dijkstra) {
            for (int v : mesh.neighbors(a))
                if (!accepted[static_cast<std::size_t>(v)])
                    relax(v, dist[a] + (mesh.vertex(v) - pa).norm());
            continue;
        }

        for (int f : mesh.incident_faces(a)) {
            const Face& t = mesh.face(f);
            int ca = 0;
            while (t[static_cast<std::size_t>(ca)] != a)
                ++ca;
            const int b = t[static_cast<std::size_t>((ca + 1) % 3)];
            const int c = t[static_cast<std::size_t>((ca + 2) % 3)];
            for (int pass = 0; pass < 2; ++pass) {
                const int v = pass == 0 ? b : c;
                const int w = pass == 0 ? c : b;
                if (accepted[static_cast<std::size_t>(v)])
                    continue;
                double d = dist[a] + (mesh.vertex(v) - pa).norm();
                if (accepted[static_cast<std::size_t>(w)])
                    d = std::min(d, detail::triangle_update(mesh.vertex(v), pa, mesh.vertex(w), dist[a], dist[w]));
                relax(v, d);
            }
        }
    }
    if (accepted_count != n)
        throw Error("distance_field: unreachable vertex on a mesh validated as connected");
    return dist;
}

/// Full symmetric geodesic distance matrix with its method tag and a
/// diameter estimate.
class DistanceField : public DistanceRows {
public:
    static constexpr Index default_cap = 15000;

    DistanceField() = default;

    /// Wraps a precomputed matrix; symmetrised and given a zero diagonal.
    explicit DistanceField(MatrixXd matrix, DistanceMethod method = DistanceMethod::fast_marching)
        : matrix_(std::move(matrix)), method_(method)
    {
        if (matrix_.rows() != matrix_.cols())
            throw InvalidInput("distance matrix must be square");
        matrix_ = (0.5 * (matrix_ + matrix_.transpose())).eval();
        matrix_.diagonal().setZero();
        diameter_ = estimate_diameter();
    }

    Index size() const override { return matrix_.rows(); }
    void row(Index i, Eigen::Ref<VectorXd> out) const override { out = matrix_.col(i); }
    using DistanceRows::row;

    double operator()(Index i, Index j) const { return matrix_(i, j); }
    const MatrixXd& matrix() const { return matrix_; }
    DistanceMethod method() const { return method_; }
    double diameter() const { return diameter_; }

private:
    double estimate_diameter() const
    {
        const Index n = size();
        if (n <= 2000)
            return n == 0 ? 0.0 : matrix_.maxCoeff();
        // Farthest point subset of 200 samples; max over their rows.
        VectorXd mind = matrix_.col(0);
        double best = mind.maxCoeff();
        for (int s = 1; s < 200; ++s) {
            Index next = 0;
            mind.maxCoeff(&next);
            best = std::max(best, matrix_.col(next).maxCoeff());
            mind = mind.cwiseMin(matrix_.col(next));
        }
        return best;
    }

    MatrixXd matrix_;
    DistanceMethod method_ = DistanceMethod::fast_marching;
    double diameter_ = 0.0;
};

/// Rows computed on demand, one sweep each; nothing is stored. The mesh
/// must outlive this object.
class SweepRows : public DistanceRows {
public:
    SweepRows(const TriMesh& mesh, DistanceMethod method) : mesh_(&mesh), method_(method) {}

    Index size() const override { return mesh_->num_vertices(); }
    void row(Index i, Eigen::Ref<VectorXd> out) const override { out = distance_field(*mesh_, i, method_); }
    using DistanceRows::row;

private:
    const TriMesh* mesh_;
    DistanceMethod method_;
};

/// Per-source sweeps over all vertices, averaged into a symmetric matrix.
inline DistanceField all_pairs(const TriMesh& mesh, DistanceMethod method = DistanceMethod::fast_marching,
                               int workers = 0, Index cap = DistanceField::default_cap)
{
    const Index n = mesh.num_vertices();
    if (n > cap)
        throw InvalidInput("all_pairs: " + std::to_string(n) + " vertices exceed the full-matrix cap of " +
                           std::to_string(cap) + "; use compressed distances");
    MatrixXd d(n, n);
    parallel_for(0, n, [&](Index s) { d.col(s) = distance_field(mesh, s, method); }, workers);
    return DistanceField(std::move(d), method);
}

/// Distance cache: "DST1", u32 n, u8 method, n*n float32 row-major.
inline void write_distance_cache(std::ostream& os, const DistanceField& field)
{
    const auto n = static_cast<std::uint32_t>(field.size());
    io::write_magic(os, "DST1");
    io::write_pod(os, n);
    io::write_pod(os, static_cast<std::uint8_t>(field.method()));
    std::vector<float> row(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        for (std::uint32_t j = 0; j < n; ++j)
            row[j] = static_cast<float>(field(i, j));
        io::write_array(os, row.data(), row.size());
    }
}

inline DistanceField read_distance_cache(std::istream& is)
{
    if (!io::read_magic(is, "DST1"))
        throw ParseError("not a distance cache (bad magic)");
    const auto n = io::read_pod<std::uint32_t>(is);
    const auto method = io::read_pod<std::uint8_t>(is);
    if (method > 1)
        throw ParseError("distance cache: unknown method tag");
    MatrixXd d(n, n);
    std::vector<float> row(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        io::read_array(is, row.data(), row.size());
        for (std::uint32_t j = 0; j < n; ++j)
            d(i, j) = row[j];
    }
    return DistanceField(std::move(d), static_cast<DistanceMethod>(method));
}

} // namespace bayesmap
