#pragma once

// Triangle meshes: construction with validation, lumped vertex areas,
// edge adjacency, and OFF/OBJ parsing.

#include "bayesmap/common.hpp"

#include <array>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <queue>
#include <sstream>

namespace bayesmap {

using Face = std::array<int, 3>;

/// Immutable triangle mesh. Construction validates indices, rejects
/// degenerate faces and disconnected input, and computes lumped
/// (barycentric) vertex areas.
class TriMesh {
public:
    TriMesh() = default;

    TriMesh(std::vector<Vec3> vertices, std::vector<Face> faces)
        : vertices_(std::move(vertices)), faces_(std::move(faces))
    {
        validate_and_build();
    }

    Index num_vertices() const { return static_cast<Index>(vertices_.size()); }
    Index num_faces() const { return static_cast<Index>(faces_.size()); }

    const std::vector<Vec3>& vertices() const { return vertices_; }
    const std::vector<Face>& faces() const { return faces_; }
    const Vec3& vertex(Index i) const { return vertices_[static_cast<std::size_t>(i)]; }
    const Face& face(Index f) const { return faces_[static_cast<std::size_t>(f)]; }

    const VectorXd& vertex_areas() const { return vertex_areas_; }
    double total_area() const { return total_area_; }
    double face_area(Index f) const { return face_areas_[static_cast<std::size_t>(f)]; }

    /// Sorted one-ring neighbours of vertex i.
    const std::vector<int>& neighbors(Index i) const { return neighbors_[static_cast<std::size_t>(i)]; }

    /// Faces incident to vertex i.
    const std::vector<int>& incident_faces(Index i) const
    {
        return vertex_faces_[static_cast<std::size_t>(i)];
    }

    double mean_edge_length() const { return mean_edge_length_; }

private:
    void validate_and_build()
    {
        const Index n = num_vertices();
        if (n == 0 || faces_.empty())
            throw InvalidInput("mesh has no vertices or no faces");

        for (const auto& v : vertices_)
            if (!v.allFinite())
                throw InvalidInput("mesh has non-finite vertex coordinates");

        face_areas_.resize(faces_.size());
        for (std::size_t f = 0; f < faces_.size(); ++f) {
            const Face& t = faces_[f];
            for (int idx : t)
                if (idx < 0 || idx >= n)
                    throw InvalidInput("face " + std::to_string(f) + ": vertex index out of range");
            if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
                throw InvalidInput("face " + std::to_string(f) + ": degenerate (repeated index)");
            face_areas_[f] = 0.5 * (vertex(t[1]) - vertex(t[0])).cross(vertex(t[2]) - vertex(t[0])).norm();
        }
        const double mean_area =
            std::accumulate(face_areas_.begin(), face_areas_.end(), 0.0) / static_cast<double>(faces_.size());
        for (std::size_t f = 0; f < faces_.size(); ++f)
            if (!(face_areas_[f] > 1e-12 * mean_area))
                throw InvalidInput("face " + std::to_string(f) + ": degenerate (zero area)");

        vertex_areas_ = VectorXd::Zero(n);
        neighbors_.assign(static_cast<std::size_t>(n), {});
        vertex_faces_.assign(static_cast<std::size_t>(n), {});
        for (std::size_t f = 0; f < faces_.size(); ++f) {
            const Face& t = faces_[f];
            for (int c = 0; c < 3; ++c) {
                vertex_areas_[t[c]] += face_areas_[f] / 3.0;
                vertex_faces_[static_cast<std::size_t>(t[c])].push_back(static_cast<int>(f));
                neighbors_[static_cast<std::size_t>(t[c])].push_back(t[(c + 1) % 3]);
                neighbors_[static_cast<std::size_t>(t[c])].push_back(t[(c + 2) % 3]);
            }
        }
        total_area_ = std::accumulate(face_areas_.begin(), face_areas_.end(), 0.0);

        double edge_sum = 0.0;
        std::size_t edge_count = 0;
        for (Index i = 0; i < n; ++i) {
            auto& nb = neighbors_[static_cast<std::size_t>(i)];
            std::sort(nb.begin(), nb.end());
            nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
            if (nb.empty())
                throw InvalidInput("vertex " + std::to_string(i) + " is not referenced by any face");
            for (int j : nb)
                if (j > i) {
                    edge_sum += (vertex(i) - vertex(j)).norm();
                    ++edge_count;
                }
        }
        mean_edge_length_ = edge_sum / static_cast<double>(edge_count);

        // Edge connectivity.
        std::vector<char> seen(static_cast<std::size_t>(n), 0);
        std::queue<int> frontier;
        frontier.push(0);
        seen[0] = 1;
        Index reached = 1;
        while (!frontier.empty()) {
            int v = frontier.front();
            frontier.pop();
            for (int w : neighbors_[static_cast<std::size_t>(v)])
                if (!seen[static_cast<std::size_t>(w)]) {
                    seen[static_cast<std::size_t>(w)] = 1;
                    ++reached;
                    frontier.push(w);
                }
        }
        if (reached != n)
            throw InvalidInput("mesh is disconnected (" + std::to_string(reached) + " of " + std::to_string(n) +
                               " vertices reachable from vertex 0)");
    }

    std::vector<Vec3> vertices_;
    std::vector<Face> faces_;
    std::vector<double> face_areas_;
    VectorXd vertex_areas_;
    double total_area_ = 0.0;
    double mean_edge_length_ = 0.0;
    std::vector<std::vector<int>> neighbors_;
    std::vector<std::vector<int>> vertex_faces_;
};

/// Returns a copy of the mesh with every vertex scaled by s.
inline TriMesh scaled(const TriMesh& mesh, double s)
{
    std::vector<Vec3> v = mesh.vertices();
    for (auto& p : v)
        p *= s;
    return TriMesh(std::move(v), mesh.faces());
}

enum class MeshFormat { off, obj };

namespace detail {

inline std::string next_content_line(std::istream& is)
{
    std::string line;
    while (std::getline(is, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos)
            line.erase(hash);
        if (line.find_first_not_of(" \t\r") != std::string::npos)
            return line;
    }
    throw ParseError("unexpected end of file");
}

inline TriMesh parse_off(std::istream& is)
{
    std::string header = next_content_line(is);
    std::istringstream hs(header);
    std::string tag;
    hs >> tag;
    if (tag != "OFF")
        throw ParseError("missing OFF header");
    long long n = -1, m = -1, e = 0;
    // Counts may follow on the header line.
    if (!(hs >> n >> m)) {
        std::istringstream cs(next_content_line(is));
        if (!(cs >> n >> m))
            throw ParseError("malformed OFF counts line");
        cs >> e;
    }
    if (n <= 0 || m <= 0)
        throw ParseError("malformed OFF counts");

    std::vector<Vec3> vertices(static_cast<std::size_t>(n));
    for (auto& v : vertices) {
        std::istringstream ls(next_content_line(is));
        if (!(ls >> v.x() >> v.y() >> v.z()))
            throw ParseError("malformed OFF vertex line");
    }
    std::vector<Face> faces(static_cast<std::size_t>(m));
    for (auto& f : faces) {
        std::istringstream ls(next_content_line(is));
        long long count = 0;
        if (!(ls >> count))
            throw ParseError("malformed OFF face line");
        if (count != 3)
            throw ParseError("only triangle faces are supported");
        for (int c = 0; c < 3; ++c) {
            long long idx;
            if (!(ls >> idx))
                throw ParseError("malformed OFF face line");
            if (idx < 0 || idx >= n)
                throw ParseError("face vertex index out of range");
            f[static_cast<std::size_t>(c)] = static_cast<int>(idx);
        }
    }
    return TriMesh(std::move(vertices), std::move(faces));
}

inline TriMesh parse_obj(std::istream& is)
{
    std::vector<Vec3> vertices;
    std::vector<std::array<long long, 3>> raw_faces;
    std::string line;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag))
            continue;
        if (tag == "v") {
            Vec3 p;
            if (!(ls >> p.x() >> p.y() >> p.z()))
                throw ParseError("malformed OBJ vertex record");
            vertices.push_back(p);
        } else if (tag == "f") {
            std::vector<long long> idx;
            std::string token;
            while (ls >> token) {
                // "i", "i/t", "i//n", "i/t/n": only the position index matters.
                try {
                    idx.push_back(std::stoll(token.substr(0, token.find('/'))));
                } catch (const std::exception&) {
                    throw ParseError("malformed OBJ face record");
                }
            }
            if (idx.size() != 3)
                throw ParseError("only triangle faces are supported");
            raw_faces.push_back({idx[0], idx[1], idx[2]});
        }
    }
    const auto n = static_cast<long long>(vertices.size());
    std::vector<Face> faces;
    faces.reserve(raw_faces.size());
    for (const auto& rf : raw_faces) {
        Face f{};
        for (int c = 0; c < 3; ++c) {
            long long i = rf[static_cast<std::size_t>(c)];
            if (i < 0)
                i = n + i + 1; // relative index
            if (i < 1 || i > n)
                throw ParseError("face vertex index out of range");
            f[static_cast<std::size_t>(c)] = static_cast<int>(i - 1);
        }
        faces.push_back(f);
    }
    return TriMesh(std::move(vertices), std::move(faces));
}

} // namespace detail

inline TriMesh parse_mesh(std::istream& is, MeshFormat format)
{
    return format == MeshFormat::off ? detail::parse_off(is) : detail::parse_obj(is);
}

inline MeshFormat format_from_path(const std::filesystem::path& path)
{
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".off")
        return MeshFormat::off;
    if (ext == ".obj")
        return MeshFormat::obj;
    throw InvalidInput("unrecognised mesh extension '" + ext + "' (expected .off or .obj)");
}

inline TriMesh load_mesh(const std::filesystem::path& path, MeshFormat format)
{
    std::ifstream in(path);
    if (!in)
        throw InvalidInput("cannot open mesh file " + path.string());
    return parse_mesh(in, format);
}

inline TriMesh load_mesh(const std::filesystem::path& path) { return load_mesh(path, format_from_path(path)); }

inline void write_off(std::ostream& os, const TriMesh& mesh)
{
    os << "OFF\n" << mesh.num_vertices() << ' ' << mesh.num_faces() << " 0\n";
    os.precision(17);
    for (const auto& v : mesh.vertices())
        os << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    for (const auto& f : mesh.faces())
        os << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
}

inline void save_off(const std::filesystem::path& path, const TriMesh& mesh)
{
    std::ofstream out(path);
    if (!out)
        throw InvalidInput("cannot write " + path.string());
    write_off(out, mesh);
}

} // namespace bayesmap
