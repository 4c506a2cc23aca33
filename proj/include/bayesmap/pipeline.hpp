#pragma once

// Commands behind the command-line tool: configuration, content-hashed
// caches of eigenbases and distances, and the experiment driver.

#include "bayesmap/bayes.hpp"
#include "bayesmap/eval.hpp"
#include "bayesmap/fmap.hpp"
#include "bayesmap/multiscale.hpp"
#include "bayesmap/sampling.hpp"
#include "bayesmap/spectral.hpp"
#include "bayesmap/synth.hpp"

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace bayesmap {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

/// A cache entry a command needs does not exist.
class CacheMissing : public Error {
public:
    using Error::Error;
};

enum class Recovery { nn, bijnn, icp };

inline const char* to_string(Recovery r)
{
    switch (r) {
    case Recovery::nn:
        return "nn";
    case Recovery::bijnn:
        return "bijnn";
    case Recovery::icp:
        return "icp";
    }
    return "?";
}

inline Recovery recovery_from_string(std::string_view s)
{
    if (s == "nn")
        return Recovery::nn;
    if (s == "bijnn")
        return Recovery::bijnn;
    if (s == "icp")
        return Recovery::icp;
    throw InvalidInput("unknown recovery method '" + std::string(s) + "' (expected nn, bijnn or icp)");
}

inline const char* to_string(ShapeKind k)
{
    switch (k) {
    case ShapeKind::sphere:
        return "sphere";
    case ShapeKind::bumpy_plane:
        return "bumpy_plane";
    case ShapeKind::ellipsoid:
        return "ellipsoid";
    }
    return "?";
}

inline ShapeKind shape_kind_from_string(std::string_view s)
{
    if (s == "sphere")
        return ShapeKind::sphere;
    if (s == "bumpy_plane")
        return ShapeKind::bumpy_plane;
    if (s == "ellipsoid")
        return ShapeKind::ellipsoid;
    throw InvalidInput("unknown shape kind '" + std::string(s) + "'");
}

inline const char* to_string(Deformation d)
{
    switch (d) {
    case Deformation::none:
        return "none";
    case Deformation::rigid:
        return "rigid";
    case Deformation::bend:
        return "bend";
    }
    return "?";
}

inline Deformation deformation_from_string(std::string_view s)
{
    if (s == "none")
        return Deformation::none;
    if (s == "rigid")
        return Deformation::rigid;
    if (s == "bend")
        return Deformation::bend;
    throw InvalidInput("unknown deformation '" + std::string(s) + "'");
}

// ---- JSON round trips -----------------------------------------------------

inline json to_json(const BayesConfig& c)
{
    json j;
    j["p"] = c.p;
    j["sigma2_frac"] = c.sigma2_frac;
    j["iterations"] = c.iterations;
    if (std::isinf(c.kernel_cutoff))
        j["kernel_cutoff"] = "inf";
    else
        j["kernel_cutoff"] = c.kernel_cutoff;
    j["block_size"] = c.block_size;
    j["eps0"] = c.lap.eps0;
    j["eps_factor"] = c.lap.eps_factor;
    j["eps_final"] = c.lap.eps_final;
    return j;
}

inline BayesConfig bayes_config_from_json(const json& j)
{
    BayesConfig c;
    c.p = j.value("p", c.p);
    c.sigma2_frac = j.value("sigma2_frac", c.sigma2_frac);
    c.iterations = j.value("iterations", c.iterations);
    if (j.contains("kernel_cutoff")) {
        const auto& v = j["kernel_cutoff"];
        c.kernel_cutoff = v.is_string() && v.get<std::string>() == "inf" ? std::numeric_limits<double>::infinity()
                                                                         : v.get<double>();
    }
    c.block_size = j.value("block_size", c.block_size);
    c.lap.eps0 = j.value("eps0", c.lap.eps0);
    c.lap.eps_factor = j.value("eps_factor", c.lap.eps_factor);
    c.lap.eps_final = j.value("eps_final", c.lap.eps_final);
    return c;
}

inline json to_json(const MultiscaleConfig& m)
{
    json j;
    j["levels"] = m.levels;
    j["radius_mult"] = m.radius_mult;
    j["max_retries"] = m.max_retries;
    json over = json::array();
    for (const auto& o : m.overrides) {
        json e = json::object();
        if (o.p)
            e["p"] = *o.p;
        if (o.sigma2_frac)
            e["sigma2_frac"] = *o.sigma2_frac;
        if (o.kernel_cutoff)
            e["kernel_cutoff"] = *o.kernel_cutoff;
        over.push_back(e);
    }
    j["overrides"] = over;
    return j;
}

inline MultiscaleConfig multiscale_config_from_json(const json& j)
{
    MultiscaleConfig m;
    m.levels = j.value("levels", m.levels);
    m.radius_mult = j.value("radius_mult", m.radius_mult);
    m.max_retries = j.value("max_retries", m.max_retries);
    if (j.contains("overrides"))
        for (const auto& e : j["overrides"]) {
            LevelOverride o;
            if (e.contains("p"))
                o.p = e["p"].get<int>();
            if (e.contains("sigma2_frac"))
                o.sigma2_frac = e["sigma2_frac"].get<double>();
            if (e.contains("kernel_cutoff"))
                o.kernel_cutoff = e["kernel_cutoff"].get<double>();
            m.overrides.push_back(o);
        }
    return m;
}

inline json to_json(const SynthSpec& s)
{
    json j;
    j["kind"] = to_string(s.kind);
    j["resolution"] = s.resolution;
    j["deform"] = to_string(s.deform);
    j["amplitude"] = s.amplitude;
    j["permute_seed"] = s.permute_seed;
    j["shape_seed"] = s.shape_seed;
    return j;
}

inline SynthSpec synth_spec_from_json(const json& j)
{
    SynthSpec s;
    if (j.contains("kind"))
        s.kind = shape_kind_from_string(j["kind"].get<std::string>());
    s.resolution = j.value("resolution", s.resolution);
    if (j.contains("deform"))
        s.deform = deformation_from_string(j["deform"].get<std::string>());
    s.amplitude = j.value("amplitude", s.amplitude);
    s.permute_seed = j.value("permute_seed", s.permute_seed);
    s.shape_seed = j.value("shape_seed", s.shape_seed);
    return s;
}

// ---- pipeline configuration -------------------------------------------------

struct PipelineConfig {
    std::string source_mesh;
    std::string target_mesh;
    std::string groundtruth;
    std::string sparse;
    std::string input_map;
    std::string fmap;
    std::string output;
    std::string cache_dir;
    Index k_map = 20;
    Index k_dist = 100;
    Recovery recovery = Recovery::nn;
    DistanceMethod distance_method = DistanceMethod::fast_marching;
    /// Store distances as spectral coefficients instead of a full matrix.
    bool compress = false;
    BayesConfig bayes;
    std::optional<MultiscaleConfig> multiscale;
    std::uint64_t seed = 0;

    json to_json() const
    {
        json j;
        j["source_mesh"] = source_mesh;
        j["target_mesh"] = target_mesh;
        j["groundtruth"] = groundtruth;
        j["sparse"] = sparse;
        j["input_map"] = input_map;
        j["fmap"] = fmap;
        j["output"] = output;
        j["k_map"] = k_map;
        j["k_dist"] = k_dist;
        j["recovery"] = bayesmap::to_string(recovery);
        j["distance_method"] = bayesmap::to_string(distance_method);
        j["compress"] = compress;
        j["bayes"] = bayesmap::to_json(bayes);
        j["multiscale"] = multiscale ? bayesmap::to_json(*multiscale) : json(nullptr);
        j["seed"] = seed;
        return j;
    }

    /// Hash of the serialised configuration (cache location excluded).
    std::string hash() const
    {
        Fnv1a h;
        h.update(to_json().dump());
        return h.hex();
    }

    /// Every problem found, not just the first.
    std::vector<std::string> problems() const
    {
        std::vector<std::string> out;
        if (k_map < 1)
            out.push_back("k_map must be positive");
        if (k_dist < 1)
            out.push_back("k_dist must be positive");
        if (bayes.p != 1 && bayes.p != 2)
            out.push_back("p must be 1 or 2");
        if (!(bayes.sigma2_frac > 0.0) || !std::isfinite(bayes.sigma2_frac))
            out.push_back("sigma2_frac must be positive and finite");
        if (bayes.iterations < 1)
            out.push_back("iterations must be at least 1");
        if (!(bayes.kernel_cutoff > 0.0))
            out.push_back("cutoff must be positive");
        if (bayes.lap.eps0 < 0.0)
            out.push_back("eps0 must be nonnegative (0 selects the default)");
        if (bayes.lap.eps_final < 0.0)
            out.push_back("eps_final must be nonnegative (0 selects the default)");
        if (bayes.lap.eps0 > 0.0 && bayes.lap.eps_final > bayes.lap.eps0)
            out.push_back("eps_final must not exceed eps0");
        if (multiscale) {
            if (multiscale->levels.empty())
                out.push_back("levels must not be empty");
            for (std::size_t l = 0; l < multiscale->levels.size(); ++l)
                if (multiscale->levels[l] < 1 || (l > 0 && multiscale->levels[l] <= multiscale->levels[l - 1]))
                    out.push_back("levels must be positive and strictly ascending");
            if (!(multiscale->radius_mult > 1.0))
                out.push_back("radius_mult must exceed 1");
        }
        return out;
    }

    void validate() const
    {
        const auto list = problems();
        if (list.empty())
            return;
        std::string msg = "invalid configuration:";
        for (const auto& p : list)
            msg += "\n  - " + p;
        throw InvalidInput(msg);
    }
};

/// Explicit directory, else $BAYESMAP_CACHE_DIR, else ./.bayesmap-cache.
inline fs::path resolve_cache_dir(const std::string& explicit_dir)
{
    if (!explicit_dir.empty())
        return explicit_dir;
    if (const char* env = std::getenv("BAYESMAP_CACHE_DIR"); env && *env)
        return env;
    return ".bayesmap-cache";
}

inline std::string mesh_hash(const TriMesh& mesh)
{
    Fnv1a h;
    for (const auto& v : mesh.vertices())
        for (int d = 0; d < 3; ++d)
            h.update_pod(v[d]);
    for (const auto& f : mesh.faces())
        for (int c : f)
            h.update_pod(c);
    return h.hex();
}

inline void write_json_file(const fs::path& path, const json& j)
{
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

inline json read_json_file(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw InvalidInput("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

/// Sidecar manifest next to an artifact: <file>.json.
inline fs::path sidecar(const fs::path& artifact) { return fs::path(artifact.string() + ".json"); }

inline json provenance(const PipelineConfig& cfg, const std::string& command)
{
    json j;
    j["command"] = command;
    j["config_hash"] = cfg.hash();
    j["config"] = cfg.to_json();
    return j;
}

// ---- caches ---------------------------------------------------------------

struct CachePaths {
    fs::path manifest, spectral, distances;
};

inline CachePaths cache_paths(const fs::path& dir, const std::string& hash, DistanceMethod method)
{
    const std::string stem = hash + "-" + to_string(method);
    return {dir / (stem + ".json"), dir / (stem + ".spb"), dir / (stem + ".dst")};
}

/// Eigenbasis, distances and diameter of one shape, from the cache.
struct ShapeData {
    TriMesh mesh;
    std::string id;
    std::shared_ptr<const SpectralBasis> basis;
    std::shared_ptr<const DistanceRows> distances;
    double diameter = 0.0;
};

/// Computes the caches for one mesh unless a compatible entry exists.
/// Returns the manifest.
inline json cmd_precompute(const std::string& mesh_path, Index k_dist, DistanceMethod method,
                           const fs::path& cache_dir, bool compress = false, bool force = false)
{
    if (k_dist < 1)
        throw InvalidInput("k_dist must be positive");
    const TriMesh mesh = load_mesh(mesh_path);
    const std::string hash = mesh_hash(mesh);
    const Index n = mesh.num_vertices();
    const bool need_compressed = compress || n > DistanceField::default_cap;
    const auto paths = cache_paths(cache_dir, hash, method);
    if (!force && fs::exists(paths.manifest)) {
        const json m = read_json_file(paths.manifest);
        if (m.value("mesh_hash", "") == hash && m.value("k", Index{0}) >= std::min(k_dist, n) &&
            (!need_compressed || m.value("compressed", false)) && fs::exists(paths.spectral) &&
            (need_compressed || fs::exists(paths.distances)))
            return m;
    }
    fs::create_directories(cache_dir);
    const Index k = std::min(k_dist, n);
    auto basis = std::make_shared<SpectralBasis>(eigenbasis(mesh, k));
    json manifest;
    manifest["mesh"] = fs::absolute(mesh_path).string();
    manifest["mesh_hash"] = hash;
    manifest["num_vertices"] = n;
    manifest["k"] = k;
    manifest["method"] = to_string(method);
    manifest["compressed"] = need_compressed;
    std::optional<MatrixXd> coeffs;
    double diameter = 0.0;
    if (n <= DistanceField::default_cap) {
        const DistanceField field = all_pairs(mesh, method);
        diameter = field.diameter();
        std::ofstream out(paths.distances, std::ios::binary);
        write_distance_cache(out, field);
        if (!out)
            throw Error("cannot write " + paths.distances.string());
        if (need_compressed)
            coeffs = compress_distances(basis, field).coefficients();
    } else {
        const SweepRows rows(mesh, method);
        coeffs = compress_distances(basis, rows).coefficients();
        // Farthest point subset of 200 rows for the diameter.
        VectorXd mind = rows.row(0);
        diameter = mind.maxCoeff();
        for (int s = 1; s < 200; ++s) {
            Index next = 0;
            mind.maxCoeff(&next);
            const VectorXd r = rows.row(next);
            diameter = std::max(diameter, r.maxCoeff());
            mind = mind.cwiseMin(r);
        }
    }
    {
        std::ofstream out(paths.spectral, std::ios::binary);
        write_spectral_cache(out, *basis, coeffs ? &*coeffs : nullptr);
        if (!out)
            throw Error("cannot write " + paths.spectral.string());
    }
    manifest["diameter"] = diameter;
    write_json_file(paths.manifest, manifest);
    return manifest;
}

/// Loads a shape and its caches; with_distances = false skips the
/// distance data.
inline ShapeData load_shape(const std::string& mesh_path, const fs::path& cache_dir, DistanceMethod method,
                            bool with_distances = true, bool prefer_compressed = false)
{
    ShapeData s;
    s.mesh = load_mesh(mesh_path);
    s.id = mesh_hash(s.mesh);
    const auto paths = cache_paths(cache_dir, s.id, method);
    if (!fs::exists(paths.manifest) || !fs::exists(paths.spectral))
        throw CacheMissing("no cache for " + mesh_path + " in " + cache_dir.string() + "; run precompute first");
    const json manifest = read_json_file(paths.manifest);
    if (manifest.value("mesh_hash", "") != s.id)
        throw CacheMissing("stale cache for " + mesh_path + "; run precompute first");
    s.diameter = manifest.value("diameter", 0.0);
    std::ifstream in(paths.spectral, std::ios::binary);
    auto cache = read_spectral_cache(in, s.mesh.vertex_areas());
    auto basis = std::make_shared<SpectralBasis>(std::move(cache.basis));
    s.basis = basis;
    if (!with_distances)
        return s;
    if (fs::exists(paths.distances) && !(prefer_compressed && cache.coefficients)) {
        std::ifstream din(paths.distances, std::ios::binary);
        s.distances = std::make_shared<DistanceField>(read_distance_cache(din));
    } else if (cache.coefficients) {
        s.distances = std::make_shared<CompressedDistances>(basis, std::move(*cache.coefficients));
    } else {
        throw CacheMissing("no distance cache for " + mesh_path + "; run precompute first");
    }
    return s;
}

inline void require_basis(const ShapeData& s, Index k, const std::string& which)
{
    if (s.basis->size() < k)
        throw InvalidInput(which + " cache holds " + std::to_string(s.basis->size()) + " eigenpairs but k = " +
                           std::to_string(k) + " was requested; rerun precompute with a larger k_dist");
}

// ---- commands ---------------------------------------------------------------

/// Writes source.off, target.off and groundtruth.map into out_dir.
inline json cmd_synth(const SynthSpec& spec, const fs::path& out_dir)
{
    const SynthPair pair = synth_pair(spec);
    fs::create_directories(out_dir);
    save_off(out_dir / "source.off", pair.source);
    save_off(out_dir / "target.off", pair.target);
    save_point_map(out_dir / "groundtruth.map", pair.groundtruth);
    json j;
    j["command"] = "synth";
    j["spec"] = to_json(spec);
    j["num_vertices"] = pair.source.num_vertices();
    j["source_id"] = mesh_hash(pair.source);
    j["target_id"] = mesh_hash(pair.target);
    write_json_file(out_dir / "synth.json", j);
    return j;
}

inline json cmd_fmap(const PipelineConfig& cfg)
{
    cfg.validate();
    if (cfg.groundtruth.empty() == cfg.sparse.empty())
        throw InvalidInput("fmap needs exactly one of a groundtruth map or sparse pairs");
    if (cfg.output.empty())
        throw InvalidInput("fmap needs an output path");
    const fs::path cache = resolve_cache_dir(cfg.cache_dir);
    const ShapeData x = load_shape(cfg.source_mesh, cache, cfg.distance_method, !cfg.sparse.empty());
    const ShapeData y = load_shape(cfg.target_mesh, cache, cfg.distance_method, false);
    require_basis(x, cfg.k_map, "source");
    require_basis(y, cfg.k_map, "target");
    PointMap map;
    if (!cfg.groundtruth.empty()) {
        map = load_point_map(cfg.groundtruth, y.mesh.num_vertices());
    } else {
        std::ifstream in(cfg.sparse);
        if (!in)
            throw InvalidInput("cannot open " + cfg.sparse);
        map = interpolate_sparse(read_sparse_correspondence(in), *x.distances, y.mesh.num_vertices());
    }
    if (map.num_source() != x.mesh.num_vertices())
        throw InvalidInput("map has " + std::to_string(map.num_source()) + " entries but the source has " +
                           std::to_string(x.mesh.num_vertices()) + " vertices");
    FunctionalMap fm = build_fmap(map, *x.basis, *y.basis, cfg.k_map);
    fm.source_id = x.id;
    fm.target_id = y.id;
    const double ratio = diagonal_dominance_ratio(fm.C);
    if (!(ratio > 1.0))
        std::cerr << "warning: functional map is not diagonally dominant (ratio " << ratio << ")\n";
    {
        std::ofstream out(cfg.output, std::ios::binary);
        write_functional_map(out, fm);
        if (!out)
            throw Error("cannot write " + cfg.output);
    }
    json j = provenance(cfg, "fmap");
    j["source_id"] = fm.source_id;
    j["target_id"] = fm.target_id;
    j["k"] = fm.size();
    j["diagonal_dominance"] = ratio;
    write_json_file(sidecar(cfg.output), j);
    return j;
}

inline json cmd_recover(const PipelineConfig& cfg)
{
    cfg.validate();
    if (cfg.fmap.empty() || cfg.output.empty())
        throw InvalidInput("recover needs a functional map and an output path");
    const fs::path cache = resolve_cache_dir(cfg.cache_dir);
    const ShapeData x = load_shape(cfg.source_mesh, cache, cfg.distance_method, false);
    const ShapeData y = load_shape(cfg.target_mesh, cache, cfg.distance_method, false);
    std::ifstream in(cfg.fmap, std::ios::binary);
    if (!in)
        throw InvalidInput("cannot open " + cfg.fmap);
    const FunctionalMap fm = read_functional_map(in);
    require_basis(x, fm.size(), "source");
    require_basis(y, fm.size(), "target");
    StageTimer timer;
    PointMap map;
    int icp_iterations = 0;
    timer.time(to_string(cfg.recovery), [&] {
        switch (cfg.recovery) {
        case Recovery::nn:
            map = recover_nn(fm.C, *x.basis, *y.basis);
            break;
        case Recovery::bijnn:
            map = recover_bijective_nn(fm.C, *x.basis, *y.basis, cfg.bayes.lap);
            break;
        case Recovery::icp: {
            auto r = recover_icp(fm.C, *x.basis, *y.basis);
            map = std::move(r.map);
            icp_iterations = r.iterations;
            break;
        }
        }
    });
    save_point_map(cfg.output, map);
    json j = provenance(cfg, "recover");
    j["method"] = to_string(cfg.recovery);
    j["bijective"] = map.bijective();
    if (cfg.recovery == Recovery::icp)
        j["icp_iterations"] = icp_iterations;
    j["stage_times"] = runtime_report(timer);
    write_json_file(sidecar(cfg.output), j);
    return j;
}

/// Farthest point hierarchies for both shapes, seeded at vertex seed % n.
inline std::pair<SampleHierarchy, SampleHierarchy> build_hierarchies(const DistanceRows& dx, const DistanceRows& dy,
                                                                     const std::vector<Index>& levels,
                                                                     std::uint64_t seed)
{
    const Index n = dx.size();
    const auto start = static_cast<Index>(seed % static_cast<std::uint64_t>(n));
    return {farthest_point_sample(dx, levels, start), farthest_point_sample(dy, levels, start)};
}

inline json cmd_denoise(const PipelineConfig& cfg)
{
    cfg.validate();
    if (cfg.input_map.empty() || cfg.output.empty())
        throw InvalidInput("denoise needs an input map and an output path");
    const fs::path cache = resolve_cache_dir(cfg.cache_dir);
    StageTimer timer;
    const ShapeData x = timer.time("load", [&] { return load_shape(cfg.source_mesh, cache, cfg.distance_method); });
    const ShapeData y = timer.time("load", [&] { return load_shape(cfg.target_mesh, cache, cfg.distance_method); });
    const PointMap pi0 = load_point_map(cfg.input_map, y.mesh.num_vertices());
    std::optional<PointMap> gt;
    if (!cfg.groundtruth.empty())
        gt = load_point_map(cfg.groundtruth, y.mesh.num_vertices());

    json j = provenance(cfg, "denoise");
    std::vector<PointMap> iterates;
    std::vector<double> objectives;
    if (cfg.multiscale) {
        MultiscaleConfig mcfg = *cfg.multiscale;
        // The finest level is always the full mesh.
        while (!mcfg.levels.empty() && mcfg.levels.back() >= x.mesh.num_vertices())
            mcfg.levels.pop_back();
        mcfg.levels.push_back(x.mesh.num_vertices());
        const auto [hx, hy] = timer.time("sampling", [&] {
            return build_hierarchies(*x.distances, *y.distances, mcfg.levels, cfg.seed);
        });
        const auto res = timer.time("bayes", [&] {
            return bayes_denoise_multiscale(pi0, *x.distances, *y.distances, x.mesh.vertex_areas(),
                                            y.mesh.vertex_areas(), hx, hy, mcfg, cfg.bayes);
        });
        iterates = res.iterates;
        json levels = json::array();
        for (const auto& l : res.levels)
            levels.push_back({{"size", l.size},
                              {"density", l.density},
                              {"radius", l.radius},
                              {"retries", l.retries},
                              {"objective", l.objective},
                              {"seconds", l.seconds}});
        j["levels"] = levels;
    } else {
        const auto res = timer.time("bayes", [&] {
            return bayes_denoise(pi0, *x.distances, *y.distances, x.mesh.vertex_areas(), y.mesh.vertex_areas(),
                                 cfg.bayes);
        });
        iterates = res.iterates;
        objectives = res.objectives;
    }
    save_point_map(cfg.output, iterates.back());

    json rows = json::array();
    for (std::size_t t = 0; t < iterates.size(); ++t) {
        json row;
        row["iteration"] = t + 1;
        if (t < objectives.size())
            row["objective"] = objectives[t];
        row["bijective"] = iterates[t].bijective();
        if (gt) {
            const auto e = geodesic_error(iterates[t], *gt, *y.distances, y.diameter);
            row["mean"] = e.mean;
            row["median"] = e.median;
            row["exact_hit_frac"] = e.exact_hit_frac;
        }
        rows.push_back(row);
    }
    j["iterations"] = rows;
    j["stage_times"] = runtime_report(timer);
    write_json_file(sidecar(cfg.output), j);
    return j;
}

/// Writes <output>.csv (error curve) and <output>.json (summary).
inline json cmd_eval(const PipelineConfig& cfg)
{
    cfg.validate();
    if (cfg.input_map.empty() || cfg.groundtruth.empty() || cfg.output.empty())
        throw InvalidInput("eval needs a map, a groundtruth map and an output prefix");
    const fs::path cache = resolve_cache_dir(cfg.cache_dir);
    StageTimer timer;
    const ShapeData y = timer.time("load", [&] { return load_shape(cfg.target_mesh, cache, cfg.distance_method); });
    const PointMap map = load_point_map(cfg.input_map, y.mesh.num_vertices());
    const PointMap gt = load_point_map(cfg.groundtruth, y.mesh.num_vertices());
    const auto err = timer.time("error", [&] { return geodesic_error(map, gt, *y.distances, y.diameter); });
    const auto cov = timer.time("coverage", [&] { return coverage(map, *y.distances, y.diameter); });
    {
        std::ofstream csv(cfg.output + ".csv");
        if (!csv)
            throw Error("cannot write " + cfg.output + ".csv");
        write_curve_csv(csv, err.curve);
    }
    json j = summary_json(err, cov, timer);
    j["config_hash"] = cfg.hash();
    j["config"] = cfg.to_json();
    write_json_file(cfg.output + ".json", j);
    return j;
}

// ---- experiment driver ------------------------------------------------------

struct ExperimentConfig {
    std::vector<SynthSpec> pairs;
    std::vector<Index> k_values{20, 50};
    std::vector<Recovery> methods{Recovery::nn, Recovery::bijnn, Recovery::icp};
    /// Bayes passes; every pass is reported.
    int max_iterations = 5;
    BayesConfig bayes;
    std::optional<MultiscaleConfig> multiscale;
    std::string output_dir = "experiment";

    json to_json() const
    {
        json j;
        json p = json::array();
        for (const auto& s : pairs)
            p.push_back(bayesmap::to_json(s));
        j["pairs"] = p;
        j["k_values"] = k_values;
        json m = json::array();
        for (auto r : methods)
            m.push_back(to_string(r));
        j["methods"] = m;
        j["max_iterations"] = max_iterations;
        j["bayes"] = bayesmap::to_json(bayes);
        j["multiscale"] = multiscale ? bayesmap::to_json(*multiscale) : json(nullptr);
        j["output_dir"] = output_dir;
        return j;
    }

    static ExperimentConfig from_json(const json& j)
    {
        ExperimentConfig c;
        if (j.contains("pairs")) {
            c.pairs.clear();
            for (const auto& p : j["pairs"])
                c.pairs.push_back(synth_spec_from_json(p));
        }
        c.k_values = j.value("k_values", c.k_values);
        if (j.contains("methods")) {
            c.methods.clear();
            for (const auto& m : j["methods"])
                c.methods.push_back(recovery_from_string(m.get<std::string>()));
        }
        c.max_iterations = j.value("max_iterations", c.max_iterations);
        if (j.contains("bayes"))
            c.bayes = bayes_config_from_json(j["bayes"]);
        if (j.contains("multiscale") && !j["multiscale"].is_null())
            c.multiscale = multiscale_config_from_json(j["multiscale"]);
        c.output_dir = j.value("output_dir", c.output_dir);
        return c;
    }

    void validate() const
    {
        std::vector<std::string> problems;
        if (pairs.empty())
            problems.push_back("no synthetic pairs listed");
        for (const auto& p : pairs)
            if (p.resolution < 100 || p.resolution > 20000)
                problems.push_back("pair resolution must lie in [100, 20000]");
        if (k_values.empty())
            problems.push_back("no k values listed");
        for (Index k : k_values)
            if (k < 1)
                problems.push_back("k values must be positive");
        if (methods.empty())
            problems.push_back("no recovery methods listed");
        if (max_iterations < 1)
            problems.push_back("max_iterations must be at least 1");
        try {
            bayes.validate();
        } catch (const InvalidInput& e) {
            problems.push_back(e.what());
        }
        if (multiscale && !(multiscale->radius_mult > 1.0))
            problems.push_back("radius_mult must exceed 1");
        if (!problems.empty()) {
            std::string msg = "invalid experiment configuration:";
            for (const auto& s : problems)
                msg += "\n  - " + s;
            throw InvalidInput(msg);
        }
    }
};

/// One evaluated map of the experiment grid.
struct ExperimentRow {
    std::size_t pair = 0;
    Index k = 0;
    Recovery method = Recovery::nn;
    /// 0 for the recovered map itself, t for the t-th Bayes pass.
    int iteration = 0;
    double mean = 0.0;
    double median = 0.0;
    double exact_hit_frac = 0.0;
    double coverage = 0.0;
    bool bijective = false;
    double seconds = 0.0;
    std::vector<double> curve;
};

/// Runs every pair x k x method, with and without Bayes passes, in a
/// worker pool over pairs.
inline std::vector<ExperimentRow> run_experiment(const ExperimentConfig& cfg)
{
    using Clock = std::chrono::steady_clock;
    cfg.validate();
    std::vector<std::vector<ExperimentRow>> per_pair(cfg.pairs.size());
    // Pairs run concurrently; everything inside a pair runs on one thread.
    const int saved = detail::thread_setting();
    const int outer = thread_count();
    set_thread_count(1);
    try {
        parallel_for(
            0, static_cast<Index>(cfg.pairs.size()),
            [&](Index p) {
                const SynthPair pair = synth_pair(cfg.pairs[static_cast<std::size_t>(p)]);
                const Index n = pair.source.num_vertices();
                const DistanceField dx = all_pairs(pair.source, DistanceMethod::fast_marching, 1);
                const DistanceField dy = all_pairs(pair.target, DistanceMethod::fast_marching, 1);
                const Index kmax = std::min(n, *std::max_element(cfg.k_values.begin(), cfg.k_values.end()));
                const SpectralBasis bx = eigenbasis(pair.source, kmax);
                const SpectralBasis by = eigenbasis(pair.target, kmax);
                std::optional<std::pair<SampleHierarchy, SampleHierarchy>> hier;
                MultiscaleConfig mcfg;
                if (cfg.multiscale) {
                    mcfg = *cfg.multiscale;
                    while (!mcfg.levels.empty() && mcfg.levels.back() >= n)
                        mcfg.levels.pop_back();
                    mcfg.levels.push_back(n);
                    hier = build_hierarchies(dx, dy, mcfg.levels, 0);
                }
                auto& rows = per_pair[static_cast<std::size_t>(p)];
                auto record = [&](Index k, Recovery m, int it, const PointMap& map, double seconds) {
                    const auto e = geodesic_error(map, pair.groundtruth, dy, dy.diameter());
                    const auto c = coverage(map, dy, dy.diameter());
                    rows.push_back({static_cast<std::size_t>(p), k, m, it, e.mean, e.median, e.exact_hit_frac,
                                    c.coverage, map.bijective(), seconds, e.curve});
                };
                for (Index k0 : cfg.k_values) {
                    const Index k = std::min(k0, kmax);
                    const FunctionalMap fm = build_fmap(pair.groundtruth, bx, by, k);
                    for (Recovery m : cfg.methods) {
                        auto start = Clock::now();
                        PointMap map;
                        if (m == Recovery::nn)
                            map = recover_nn(fm.C, bx, by);
                        else if (m == Recovery::bijnn)
                            map = recover_bijective_nn(fm.C, bx, by, cfg.bayes.lap);
                        else
                            map = recover_icp(fm.C, bx, by).map;
                        record(k, m, 0, map, std::chrono::duration<double>(Clock::now() - start).count());
                        BayesConfig bc = cfg.bayes;
                        bc.iterations = 1;
                        PointMap current = map;
                        for (int it = 1; it <= cfg.max_iterations; ++it) {
                            start = Clock::now();
                            if (hier)
                                current = bayes_denoise_multiscale(current, dx, dy, pair.source.vertex_areas(),
                                                                   pair.target.vertex_areas(), hier->first,
                                                                   hier->second, mcfg, bc)
                                              .map;
                            else
                                current = bayes_denoise(current, dx, dy, pair.source.vertex_areas(),
                                                        pair.target.vertex_areas(), bc)
                                              .map;
                            record(k, m, it, current, std::chrono::duration<double>(Clock::now() - start).count());
                        }
                    }
                }
            },
            outer);
    } catch (...) {
        set_thread_count(saved);
        throw;
    }
    set_thread_count(saved);
    std::vector<ExperimentRow> all;
    for (auto& rows : per_pair)
        all.insert(all.end(), rows.begin(), rows.end());
    return all;
}

/// Runs the experiment and writes rows.csv, curves/<row>.csv and
/// summary.json into the output directory.
inline json cmd_experiment(const ExperimentConfig& cfg)
{
    const auto rows = run_experiment(cfg);
    const fs::path dir = cfg.output_dir;
    fs::create_directories(dir / "curves");
    std::ofstream csv(dir / "rows.csv");
    if (!csv)
        throw Error("cannot write " + (dir / "rows.csv").string());
    csv << "row,pair,kind,k,method,bayes,iteration,mean,median,exact_hit_frac,coverage,bijective,seconds\n";
    csv << std::setprecision(10);
    json summary;
    summary["config"] = cfg.to_json();
    Fnv1a h;
    h.update(cfg.to_json().dump());
    summary["config_hash"] = h.hex();
    json list = json::array();
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& row = rows[r];
        const auto& spec = cfg.pairs[row.pair];
        csv << r << ',' << row.pair << ',' << to_string(spec.kind) << ',' << row.k << ',' << to_string(row.method)
            << ',' << (row.iteration > 0 ? 1 : 0) << ',' << row.iteration << ',' << row.mean << ',' << row.median
            << ',' << row.exact_hit_frac << ',' << row.coverage << ',' << (row.bijective ? 1 : 0) << ','
            << row.seconds << '\n';
        std::ofstream curve(dir / "curves" / (std::to_string(r) + ".csv"));
        write_curve_csv(curve, row.curve);
        list.push_back({{"row", r},
                        {"pair", row.pair},
                        {"k", row.k},
                        {"method", to_string(row.method)},
                        {"iteration", row.iteration},
                        {"mean", row.mean},
                        {"median", row.median},
                        {"exact_hit_frac", row.exact_hit_frac},
                        {"coverage", row.coverage},
                        {"bijective", row.bijective}});
    }
    summary["rows"] = list;
    write_json_file(dir / "summary.json", summary);
    return summary;
}

} // namespace bayesmap
