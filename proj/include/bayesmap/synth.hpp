#pragma once

// Synthetic shape pairs with known groundtruth: a source mesh, a deformed
// and vertex-permuted copy, and the permutation relating them.

#include "bayesmap/mesh.hpp"
#include "bayesmap/pointmap.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <map>
#include <numeric>
#include <numbers>
#include <random>

namespace bayesmap {

enum class ShapeKind { sphere, bumpy_plane, ellipsoid };
enum class Deformation { none, rigid, bend };

struct SynthSpec {
    ShapeKind kind = ShapeKind::bumpy_plane;
    /// Target vertex count; the generator picks the closest grid it can build.
    Index resolution = 1000;
    Deformation deform = Deformation::none;
    /// Bend strength: roll angle / 2*pi for the plane, twist for the sphere,
    /// arc angle / pi for the ellipsoid.
    double amplitude = 0.2;
    /// Seed of the vertex permutation; 0 keeps the identity order.
    std::uint64_t permute_seed = 0;
    /// Seed of the bump layout and of the rigid motion.
    std::uint64_t shape_seed = 0;
};

struct SynthPair {
    TriMesh source;
    TriMesh target;
    PointMap groundtruth;
};

namespace detail {

/// Equalises lumped vertex areas: each vertex moves toward neighbours that
/// hold more area than itself, then is put back on the surface.
template <typename Project>
void relax_vertex_areas(std::vector<Vec3>& verts, const std::vector<Face>& faces, int steps, Project&& project)
{
    const std::size_t n = verts.size();
    std::vector<std::vector<int>> ring(n);
    for (const auto& f : faces)
        for (int c = 0; c < 3; ++c) {
            ring[static_cast<std::size_t>(f[c])].push_back(f[(c + 1) % 3]);
            ring[static_cast<std::size_t>(f[c])].push_back(f[(c + 2) % 3]);
        }
    for (auto& r : ring) {
        std::sort(r.begin(), r.end());
        r.erase(std::unique(r.begin(), r.end()), r.end());
    }
    std::vector<double> area(n);
    std::vector<Vec3> next(n);
    for (int step = 0; step < steps; ++step) {
        std::fill(area.begin(), area.end(), 0.0);
        for (const auto& f : faces) {
            const Vec3& a = verts[static_cast<std::size_t>(f[0])];
            const double third =
                (verts[static_cast<std::size_t>(f[1])] - a).cross(verts[static_cast<std::size_t>(f[2])] - a).norm() / 6.0;
            for (int c : f)
                area[static_cast<std::size_t>(c)] += third;
        }
        const double mean = std::accumulate(area.begin(), area.end(), 0.0) / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            Vec3 push = Vec3::Zero();
            for (int j : ring[i])
                push += (area[static_cast<std::size_t>(j)] - area[i]) / mean * (verts[static_cast<std::size_t>(j)] - verts[i]);
            next[i] = project(Vec3(verts[i] + 0.1 * push));
        }
        verts.swap(next);
    }
}

/// Unit geodesic sphere: every icosahedron face split into q^2 triangles,
/// n = 10 q^2 + 2 vertices, then relaxed so vertex areas are nearly equal.
inline std::pair<std::vector<Vec3>, std::vector<Face>> icosphere(Index target_vertices, int relax_steps = 100)
{
    int q = 1;
    auto count = [](long long f) { return 10 * f * f + 2; };
    while (std::llabs(count(q + 1) - target_vertices) < std::llabs(count(q) - target_vertices))
        ++q;
    const double t = 0.5 * (1.0 + std::sqrt(5.0));
    const std::array<Vec3, 12> corners{Vec3(-1, t, 0), Vec3(1, t, 0),  Vec3(-1, -t, 0), Vec3(1, -t, 0),
                                       Vec3(0, -1, t), Vec3(0, 1, t),  Vec3(0, -1, -t), Vec3(0, 1, -t),
                                       Vec3(t, 0, -1), Vec3(t, 0, 1),  Vec3(-t, 0, -1), Vec3(-t, 0, 1)};
    const std::array<Face, 20> base{{{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                     {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                     {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                     {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}}};
    std::vector<Vec3> verts;
    std::map<std::array<long long, 3>, int> index;
    auto vertex_at = [&](const Vec3& p) {
        const Vec3 u = p.normalized();
        const std::array<long long, 3> key{std::llround(u.x() * 1e9), std::llround(u.y() * 1e9),
                                           std::llround(u.z() * 1e9)};
        auto [it, inserted] = index.emplace(key, static_cast<int>(verts.size()));
        if (inserted)
            verts.push_back(u);
        return it->second;
    };
    std::vector<Face> faces;
    for (const auto& f : base) {
        const Vec3 &a = corners[static_cast<std::size_t>(f[0])], &b = corners[static_cast<std::size_t>(f[1])],
                   &c = corners[static_cast<std::size_t>(f[2])];
        std::vector<std::vector<int>> grid(static_cast<std::size_t>(q + 1));
        for (int i = 0; i <= q; ++i)
            for (int j = 0; j <= q - i; ++j)
                grid[static_cast<std::size_t>(i)].push_back(vertex_at((a * (q - i - j) + b * i + c * j) / q));
        auto at = [&](int i, int j) { return grid[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]; };
        for (int i = 0; i < q; ++i)
            for (int j = 0; j < q - i; ++j) {
                faces.push_back({at(i, j), at(i + 1, j), at(i, j + 1)});
                if (j + 1 < q - i)
                    faces.push_back({at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)});
            }
    }
    relax_vertex_areas(verts, faces, relax_steps, [](const Vec3& p) { return p.normalized(); });
    return {std::move(verts), std::move(faces)};
}

/// Prolate body with semi-axes (0.25, 0.25, 1) carrying six seeded bumps,
/// sampled like icosphere() and relaxed on its own surface.
inline std::pair<std::vector<Vec3>, std::vector<Face>> bumpy_ellipsoid(Index target_vertices, std::uint64_t seed)
{
    auto [verts, faces] = icosphere(target_vertices, 0);
    const Vec3 axes(0.25, 0.25, 1.0);
    auto on_ellipsoid = [&](const Vec3& u) { return Vec3(u / u.cwiseQuotient(axes).norm()); };
    std::mt19937_64 rng(seed * 0xA24BAED4963EE407ULL + 99);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    struct Blob {
        Vec3 center;
        double height, width;
    };
    std::vector<Blob> blobs(6);
    for (auto& b : blobs) {
        const double z = -0.8 + 1.6 * unit(rng), theta = 2.0 * std::numbers::pi * unit(rng);
        b.center = on_ellipsoid(Vec3(std::cos(theta), std::sin(theta), z).normalized());
        b.height = (0.1 + 0.15 * unit(rng)) * (unit(rng) < 0.5 ? -1.0 : 1.0);
        b.width = 0.1 + 0.1 * unit(rng);
    }
    // Star-shaped about the origin: push the ellipsoid point along its ray.
    auto project = [&](const Vec3& p) {
        const Vec3 base = on_ellipsoid(p.normalized());
        double scale = 1.0;
        for (const auto& b : blobs)
            scale += b.height * std::exp(-(base - b.center).squaredNorm() / (2.0 * b.width * b.width));
        return Vec3(scale * base);
    };
    for (auto& p : verts)
        p = project(p);
    relax_vertex_areas(verts, faces, 300, project);
    return {std::move(verts), std::move(faces)};
}

struct Bump {
    double cx, cy, amp, width;
};

inline std::vector<Bump> random_bumps(std::uint64_t seed, double height)
{
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 0x1234567ULL);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Bump> bumps(6);
    for (auto& b : bumps) {
        b.cx = unit(rng);
        b.cy = unit(rng) * height;
        b.amp = (0.04 + 0.06 * unit(rng)) * (unit(rng) < 0.5 ? -1.0 : 1.0);
        b.width = 0.06 + 0.08 * unit(rng);
    }
    return bumps;
}

inline double bump_height(const std::vector<Bump>& bumps, double x, double y)
{
    double h = 0.0;
    for (const auto& b : bumps) {
        const double d2 = (x - b.cx) * (x - b.cx) + (y - b.cy) * (y - b.cy);
        h += b.amp * std::exp(-d2 / (2.0 * b.width * b.width));
    }
    return h;
}

struct PlaneGrid {
    int cols = 0, rows = 0;
    double spacing = 0.0;
};

inline PlaneGrid plane_grid(Index target_vertices)
{
    PlaneGrid g;
    g.cols = std::max(2, static_cast<int>(std::lround(std::sqrt(static_cast<double>(target_vertices)))));
    g.rows = std::max(2, static_cast<int>(std::lround(static_cast<double>(target_vertices) / g.cols)));
    g.spacing = 1.0 / (g.cols - 1);
    return g;
}

} // namespace detail

/// Bumpy unit-width plane patch, unit geodesic sphere, or bumpy prolate
/// ellipsoid, with roughly `resolution` vertices. Bump layouts come from
/// shape_seed.
inline TriMesh synth_shape(ShapeKind kind, Index resolution, std::uint64_t shape_seed = 0)
{
    if (kind == ShapeKind::sphere) {
        auto [v, f] = detail::icosphere(resolution);
        return TriMesh(std::move(v), std::move(f));
    }
    if (kind == ShapeKind::ellipsoid) {
        auto [v, f] = detail::bumpy_ellipsoid(resolution, shape_seed);
        return TriMesh(std::move(v), std::move(f));
    }
    const auto g = detail::plane_grid(resolution);
    const double height = (g.rows - 1) * g.spacing;
    const auto bumps = detail::random_bumps(shape_seed, height);
    std::vector<Vec3> verts;
    verts.reserve(static_cast<std::size_t>(g.cols * g.rows));
    for (int r = 0; r < g.rows; ++r)
        for (int c = 0; c < g.cols; ++c) {
            const double x = c * g.spacing, y = r * g.spacing;
            verts.emplace_back(x, y, detail::bump_height(bumps, x, y));
        }
    std::vector<Face> faces;
    auto id = [&](int r, int c) { return r * g.cols + c; };
    for (int r = 0; r + 1 < g.rows; ++r)
        for (int c = 0; c + 1 < g.cols; ++c) {
            int a = id(r, c), b = id(r, c + 1), cc = id(r + 1, c + 1), d = id(r + 1, c);
            if ((r + c) % 2 == 0) {
                faces.push_back({a, b, cc});
                faces.push_back({a, cc, d});
            } else {
                faces.push_back({a, b, d});
                faces.push_back({b, cc, d});
            }
        }
    return TriMesh(std::move(verts), std::move(faces));
}

/// Applies the deformation to every vertex position of a synthetic shape.
inline std::vector<Vec3> deform_vertices(const std::vector<Vec3>& verts, ShapeKind kind, Deformation deform,
                                         double amplitude, std::uint64_t seed)
{
    std::vector<Vec3> out = verts;
    switch (deform) {
    case Deformation::none:
        break;
    case Deformation::rigid: {
        std::mt19937_64 rng(seed * 0xD1B54A32D192ED03ULL + 77);
        std::normal_distribution<double> normal;
        Eigen::Quaterniond q(normal(rng), normal(rng), normal(rng), normal(rng));
        q.normalize();
        const Eigen::Matrix3d rot = q.toRotationMatrix();
        std::uniform_real_distribution<double> shift(-1.0, 1.0);
        const Vec3 t(shift(rng), shift(rng), shift(rng));
        for (auto& p : out)
            p = rot * p + t;
        break;
    }
    case Deformation::bend: {
        if (kind == ShapeKind::sphere) {
            // Twist about an axis drawn from the seed (z for seed 0).
            Eigen::Matrix3d frame = Eigen::Matrix3d::Identity();
            if (seed != 0) {
                std::mt19937_64 rng(seed * 0x94D049BB133111EBULL + 5);
                std::normal_distribution<double> normal;
                Eigen::Quaterniond q(normal(rng), normal(rng), normal(rng), normal(rng));
                frame = q.normalized().toRotationMatrix();
            }
            for (auto& p : out) {
                const Vec3 local = frame.transpose() * p;
                const double angle = amplitude * std::numbers::pi * local.z();
                const double c = std::cos(angle), s = std::sin(angle);
                p = frame * Vec3(c * local.x() - s * local.y(), s * local.x() + c * local.y(), local.z());
            }
        } else if (kind == ShapeKind::ellipsoid) {
            if (amplitude == 0.0)
                break;
            // Bend the long axis into a circular arc in a seeded plane.
            const double phi = seed == 0 ? 0.0 : 2.0 * std::numbers::pi * (static_cast<double>((seed * 0x9E3779B97F4A7C15ULL) >> 11) * 0x1.0p-53);
            const double c = std::cos(phi), s = std::sin(phi);
            const double radius = 2.0 / (amplitude * std::numbers::pi);
            for (auto& p : out) {
                const double u = c * p.x() + s * p.y(), w = -s * p.x() + c * p.y();
                const double rho = radius - u, theta = p.z() / radius;
                const double u2 = radius - rho * std::cos(theta);
                p = Vec3(c * u2 - s * w, s * u2 + c * w, rho * std::sin(theta));
            }
        } else if (amplitude != 0.0) {
            // Roll the patch onto a cylinder about the y axis; bumps ride the normal.
            const double radius = 1.0 / (2.0 * std::numbers::pi * amplitude);
            for (auto& p : out) {
                const double theta = (p.x() - 0.5) / radius;
                const double h = p.z();
                const Vec3 base(radius * std::sin(theta), p.y(), radius * (1.0 - std::cos(theta)));
                const Vec3 normal(-std::sin(theta), 0.0, std::cos(theta));
                p = base + h * normal;
            }
        }
        break;
    }
    }
    return out;
}

/// Random permutation of [0, n); seed 0 gives the identity.
inline std::vector<Index> random_permutation(Index n, std::uint64_t seed)
{
    std::vector<Index> perm(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i)
        perm[static_cast<std::size_t>(i)] = i;
    if (seed != 0) {
        std::mt19937_64 rng(seed);
        // Fisher-Yates on raw engine output; standard distributions are
        // implementation-defined and would change the order across libraries.
        for (Index i = n - 1; i > 0; --i) {
            const auto j = static_cast<Index>(rng() % static_cast<std::uint64_t>(i + 1));
            std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
        }
    }
    return perm;
}

/// Builds X, Y = permute(deform(X)) and the groundtruth map X -> Y.
inline SynthPair synth_pair(const SynthSpec& spec)
{
    if (spec.resolution < 100 || spec.resolution > 20000)
        throw InvalidInput("synth_pair: resolution must give between 1e2 and 2e4 vertices");
    TriMesh source = synth_shape(spec.kind, spec.resolution, spec.shape_seed);
    const Index n = source.num_vertices();
    auto moved = deform_vertices(source.vertices(), spec.kind, spec.deform, spec.amplitude, spec.shape_seed);
    const auto perm = random_permutation(n, spec.permute_seed);

    std::vector<Vec3> verts(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i)
        verts[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = moved[static_cast<std::size_t>(i)];
    std::vector<Face> faces = source.faces();
    for (auto& f : faces)
        for (auto& idx : f)
            idx = static_cast<int>(perm[static_cast<std::size_t>(idx)]);
    TriMesh target(std::move(verts), std::move(faces));
    return {std::move(source), std::move(target), PointMap(perm, n)};
}

} // namespace bayesmap
