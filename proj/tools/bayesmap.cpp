// bayesmap command-line tool.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include "bayesmap/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace bayesmap;

namespace {

struct Shared {
    int threads = 0;
    std::string cache_dir;
};

void add_shape_flags(CLI::App* cmd, PipelineConfig& cfg, std::string& method)
{
    cmd->add_option("--source", cfg.source_mesh, "Source mesh (.off or .obj)")->required();
    cmd->add_option("--target", cfg.target_mesh, "Target mesh (.off or .obj)")->required();
    cmd->add_option("--distance-method", method, "fast_marching or dijkstra")->capture_default_str();
}

void add_bayes_flags(CLI::App* cmd, BayesConfig& b)
{
    cmd->add_option("--p", b.p, "Loss exponent (1 = MMAE, 2 = MMSE)")
        ->check(CLI::IsMember({1, 2}))
        ->capture_default_str();
    cmd->add_option("--sigma2-frac", b.sigma2_frac, "Kernel variance as a fraction of the target area")
        ->capture_default_str();
    cmd->add_option("--iters", b.iterations, "Number of denoising passes")->capture_default_str();
    cmd->add_option("--cutoff", b.kernel_cutoff, "Kernel truncation in units of sigma (inf disables)")
        ->capture_default_str();
    cmd->add_option("--block-size", b.block_size, "Score rows per block")->capture_default_str();
    cmd->add_option("--eps0", b.lap.eps0, "Initial auction epsilon (0 = automatic)");
    cmd->add_option("--eps-final", b.lap.eps_final, "Final auction epsilon (0 = automatic)");
}

std::vector<Index> parse_levels(const std::string& text)
{
    std::vector<Index> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        try {
            out.push_back(std::stol(item));
        } catch (const std::exception&) {
            throw InvalidInput("bad level size '" + item + "'");
        }
    return out;
}

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Functional map recovery with Bayesian bijective denoising"};
    app.require_subcommand(1);
    Shared shared;
    app.add_option("--threads", shared.threads, "Worker threads (0 = hardware)");
    app.add_option("--cache-dir", shared.cache_dir, "Cache directory (default $BAYESMAP_CACHE_DIR or .bayesmap-cache)");

    PipelineConfig cfg;
    std::string method = "fast_marching";
    std::string recovery = "nn";
    std::string levels;
    double radius_mult = 2.0;

    // synth
    SynthSpec spec;
    std::string kind = "bumpy_plane", deform = "none", synth_out = ".";
    auto* synth = app.add_subcommand("synth", "Generate a synthetic shape pair with its groundtruth map");
    synth->add_option("--kind", kind, "sphere, bumpy_plane or ellipsoid")->capture_default_str();
    synth->add_option("--resolution", spec.resolution, "Approximate vertex count")->capture_default_str();
    synth->add_option("--deform", deform, "none, rigid or bend")->capture_default_str();
    synth->add_option("--amplitude", spec.amplitude, "Bend strength")->capture_default_str();
    synth->add_option("--permute-seed", spec.permute_seed, "Target vertex shuffle (0 = none)");
    synth->add_option("--shape-seed", spec.shape_seed, "Bump layout and motion seed");
    synth->add_option("--out", synth_out, "Output directory")->capture_default_str();

    // precompute
    std::string pre_mesh;
    bool compress = false, force = false;
    auto* pre = app.add_subcommand("precompute", "Cache eigenbasis and geodesic distances of a mesh");
    pre->add_option("mesh", pre_mesh, "Mesh file")->required();
    pre->add_option("--k-dist", cfg.k_dist, "Eigenpairs to store")->capture_default_str();
    pre->add_option("--distance-method", method, "fast_marching or dijkstra")->capture_default_str();
    pre->add_flag("--compress", compress, "Store distances as spectral coefficients");
    pre->add_flag("--force", force, "Recompute even if a cache exists");

    // fmap
    auto* fm = app.add_subcommand("fmap", "Build a functional map from a groundtruth map or sparse pairs");
    add_shape_flags(fm, cfg, method);
    auto* gt_opt = fm->add_option("--groundtruth", cfg.groundtruth, "Dense point map");
    auto* sp_opt = fm->add_option("--sparse", cfg.sparse, "Sparse correspondence file");
    gt_opt->excludes(sp_opt);
    fm->add_option("--k", cfg.k_map, "Basis size")->capture_default_str();
    fm->add_option("-o,--output", cfg.output, "Output functional map")->required();

    // recover
    auto* rec = app.add_subcommand("recover", "Recover a point map from a functional map");
    add_shape_flags(rec, cfg, method);
    rec->add_option("--fmap", cfg.fmap, "Functional map file")->required();
    rec->add_option("--method", recovery, "nn, bijnn or icp")->capture_default_str();
    rec->add_option("--eps0", cfg.bayes.lap.eps0, "Initial auction epsilon for bijnn");
    rec->add_option("--eps-final", cfg.bayes.lap.eps_final, "Final auction epsilon for bijnn");
    rec->add_option("-o,--output", cfg.output, "Output point map")->required();

    // denoise
    auto* den = app.add_subcommand("denoise", "Bayesian bijective denoising of a point map");
    add_shape_flags(den, cfg, method);
    den->add_option("--map", cfg.input_map, "Input point map")->required();
    den->add_option("--groundtruth", cfg.groundtruth, "Optional groundtruth for per-iteration errors");
    add_bayes_flags(den, cfg.bayes);
    den->add_option("--levels", levels, "Comma-separated sample counts, coarse to fine (enables multiscale)");
    den->add_option("--radius-mult", radius_mult, "Candidate radius in coarse covering radii")->capture_default_str();
    den->add_option("--seed", cfg.seed, "Farthest point sampling start vertex (mod n)");
    den->add_flag("--prefer-compressed", cfg.compress, "Use compressed distances when both are cached");
    den->add_option("-o,--output", cfg.output, "Output point map")->required();

    // eval
    auto* ev = app.add_subcommand("eval", "Geodesic error curve and coverage of a point map");
    ev->add_option("--target", cfg.target_mesh, "Target mesh")->required();
    ev->add_option("--distance-method", method, "fast_marching or dijkstra")->capture_default_str();
    ev->add_option("--map", cfg.input_map, "Point map")->required();
    ev->add_option("--groundtruth", cfg.groundtruth, "Groundtruth point map")->required();
    ev->add_option("-o,--output", cfg.output, "Output prefix (.csv and .json are appended)")->required();

    // experiment
    std::string exp_config;
    ExperimentConfig exp;
    std::vector<std::string> kinds{"ellipsoid"};
    std::vector<std::string> methods{"nn", "bijnn", "icp"};
    std::string exp_deform = "bend";
    int num_seeds = 2;
    Index exp_resolution = 1000;
    double exp_amplitude = 0.75;
    auto* ex = app.add_subcommand("experiment", "Sweep synthetic pairs x k x recovery x Bayes passes");
    ex->add_option("--config", exp_config, "Experiment JSON (overrides the flags below)");
    ex->add_option("--kinds", kinds, "Shape kinds")->capture_default_str();
    ex->add_option("--seeds", num_seeds, "Pairs per kind (shape seeds 0..N-1)")->capture_default_str();
    ex->add_option("--resolution", exp_resolution, "Approximate vertex count")->capture_default_str();
    ex->add_option("--deform", exp_deform, "none, rigid or bend")->capture_default_str();
    ex->add_option("--amplitude", exp_amplitude, "Bend strength")->capture_default_str();
    ex->add_option("--k", exp.k_values, "Functional map sizes")->capture_default_str();
    ex->add_option("--methods", methods, "Recovery methods")->capture_default_str();
    ex->add_option("--max-iters", exp.max_iterations, "Bayes passes per row")->capture_default_str();
    ex->add_option("--levels", levels, "Multiscale sample counts (the vertex count is appended)");
    ex->add_option("--radius-mult", radius_mult, "Candidate radius in coarse covering radii")->capture_default_str();
    ex->add_option("--p", exp.bayes.p, "Loss exponent")->check(CLI::IsMember({1, 2}));
    ex->add_option("--sigma2-frac", exp.bayes.sigma2_frac, "Kernel variance fraction");
    ex->add_option("--out", exp.output_dir, "Output directory")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        set_thread_count(shared.threads);
        cfg.cache_dir = shared.cache_dir;
        cfg.distance_method = distance_method_from_string(method);
        cfg.recovery = recovery_from_string(recovery);
        if (!levels.empty()) {
            MultiscaleConfig m;
            m.levels = parse_levels(levels);
            m.radius_mult = radius_mult;
            cfg.multiscale = m;
        }

        if (*synth) {
            spec.kind = shape_kind_from_string(kind);
            spec.deform = deformation_from_string(deform);
            print(cmd_synth(spec, synth_out));
        } else if (*pre) {
            print(cmd_precompute(pre_mesh, cfg.k_dist, cfg.distance_method, resolve_cache_dir(cfg.cache_dir),
                                 compress, force));
        } else if (*fm) {
            print(cmd_fmap(cfg));
        } else if (*rec) {
            print(cmd_recover(cfg));
        } else if (*den) {
            const json report = cmd_denoise(cfg);
            for (const auto& row : report["iterations"])
                std::cout << row.dump() << '\n';
            if (report.contains("levels"))
                for (const auto& l : report["levels"])
                    std::cout << "level " << l.dump() << '\n';
        } else if (*ev) {
            print(cmd_eval(cfg));
        } else if (*ex) {
            if (!exp_config.empty()) {
                exp = ExperimentConfig::from_json(read_json_file(exp_config));
            } else {
                exp.pairs.clear();
                for (const auto& k : kinds)
                    for (int s = 0; s < num_seeds; ++s) {
                        SynthSpec p;
                        p.kind = shape_kind_from_string(k);
                        p.resolution = exp_resolution;
                        p.deform = deformation_from_string(exp_deform);
                        p.amplitude = exp_amplitude;
                        p.shape_seed = static_cast<std::uint64_t>(s);
                        p.permute_seed = static_cast<std::uint64_t>(s) + 1;
                        exp.pairs.push_back(p);
                    }
                exp.methods.clear();
                for (const auto& m : methods)
                    exp.methods.push_back(recovery_from_string(m));
                if (cfg.multiscale)
                    exp.multiscale = cfg.multiscale;
            }
            const json summary = cmd_experiment(exp);
            std::cout << "wrote " << summary["rows"].size() << " rows to " << exp.output_dir << '\n';
        }
    } catch (const InvalidInput& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
