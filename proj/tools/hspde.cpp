// Command-line front end: region arithmetic, simulation, estimation,
// verification and full experiment runs.

#include "hspde/fracpow.hpp"
#include "hspde/gamma_norm.hpp"
#include "hspde/harness.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using hspde::Json;

int exit_code(hspde::ErrorKind kind) {
    switch (kind) {
    case hspde::ErrorKind::verification: return 2;
    case hspde::ErrorKind::hypothesis: return 3;
    case hspde::ErrorKind::numerical: return 4;
    default: return 1;
    }
}

// Writes to `path`, or stdout when it is empty or "-".
void emit(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out) {
        hspde::fail(hspde::ErrorKind::io, "cannot write '", path, "'");
    }
    out << text;
}

Json read_json_file(const std::string& path) {
    if (path.empty()) {
        return Json::object();
    }
    std::ifstream in(path);
    if (!in) {
        hspde::fail(hspde::ErrorKind::io, "cannot open config '", path, "'");
    }
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        hspde::fail(hspde::ErrorKind::invalid_argument, "malformed config '", path, "': ", e.what());
    }
}

struct QueryFlags {
    std::string theorem = "prop32";
    int d = 1;
    double p = 4.0;
    double q = 8.0;
    double alpha = 2.0;
    double theta = -1.0;
    double m = -1.0;

    void add_to(CLI::App* app) {
        app->add_option("--theorem", theorem, "prop32 | remark33 | colored | fractional")->capture_default_str();
        app->add_option("--d", d, "spatial dimension")->capture_default_str();
        app->add_option("--p", p, "spatial integrability exponent")->capture_default_str();
        app->add_option("--q", q, "temporal integrability exponent")->capture_default_str();
        app->add_option("--alpha", alpha, "drift exponent (fractional)")->capture_default_str();
        app->add_option("--theta", theta, "Cameron-Martin smoothness");
        app->add_option("--m", m, "spatial integrability of g");
    }

    hspde::RegularityQuery query() const {
        hspde::RegularityQuery q_;
        q_.theorem = hspde::theorem_from_string(theorem);
        q_.d = d;
        q_.p = p;
        q_.q = q;
        q_.alpha = alpha;
        if (theta >= 0.0) {
            q_.theta = theta;
        }
        if (m > 0.0) {
            q_.m = m;
        }
        return q_;
    }
};

struct RunFlags {
    std::string config;
    std::string preset;
    std::string output_dir;
    long long seed = -1;
    int replicas = 0;
    int steps = 0;
    int threads = 0;
    bool persist = false;

    void add_to(CLI::App* app) {
        app->add_option("--config", config, "JSON experiment configuration");
        app->add_option("--preset", preset, "named preset (see `presets`)");
        app->add_option("--output-dir", output_dir, "output directory");
        app->add_option("--seed", seed, "master seed override");
        app->add_option("--replicas", replicas, "replica count override");
        app->add_option("--steps", steps, "time-step count override");
        app->add_option("--threads", threads, "worker threads (default: logical cores)");
        app->add_flag("--persist-trajectories", persist, "write hspde-traj-1 trajectory files");
    }

    hspde::ExperimentConfig load() const {
        Json over = Json::object();
        if (!preset.empty()) {
            over["preset"] = preset;
        }
        if (!output_dir.empty()) {
            over["output_dir"] = output_dir;
        }
        if (seed >= 0) {
            over["plan"]["seed"] = seed;
        }
        if (replicas > 0) {
            over["plan"]["replicas"] = replicas;
        }
        if (steps > 0) {
            over["plan"]["steps"] = steps;
        }
        if (threads > 0) {
            over["plan"]["threads"] = threads;
        }
        if (persist) {
            over["persist_trajectories"] = true;
        }
        if (config.empty() && preset.empty()) {
            hspde::fail(hspde::ErrorKind::invalid_argument, "give --config or --preset");
        }
        return hspde::load_config(read_json_file(config), over);
    }
};

std::string estimates_table(const hspde::TrajectoryEnsemble& ens) {
    const auto beta = hspde::estimate_temporal_exponent(ens, hspde::TemporalMode::sup_space);
    const auto beta_pt = hspde::estimate_temporal_exponent(ens, hspde::TemporalMode::pointwise);
    const auto gamma = hspde::estimate_spatial_exponent(ens);
    std::ostringstream out;
    out << "quantity,exponent,fit_r2,paths,excluded\n";
    auto row = [&](const char* name, const hspde::ExponentEstimate& e) {
        out << name << ',' << hspde::fmt(e.exponent) << ',' << hspde::fmt(e.fit_r2) << ',' << e.per_path.size() << ','
            << e.excluded << '\n';
    };
    row("beta_sup_space", beta);
    row("beta_pointwise", beta_pt);
    row("gamma", gamma);
    return out.str();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spectral simulator and Hoelder-regularity verification harness for parabolic stochastic equations"};
    app.require_subcommand(1);

    // region
    auto* region = app.add_subcommand("region", "admissible (beta, gamma) region boundary as CSV");
    QueryFlags region_q;
    region_q.add_to(region);
    int region_samples = 21;
    std::string region_out;
    region->add_option("--samples", region_samples, "boundary samples")->capture_default_str();
    region->add_option("--out", region_out, "output CSV (default stdout)");

    // simulate
    auto* sim = app.add_subcommand("simulate", "simulate an ensemble and write hspde-traj-1 files");
    RunFlags sim_flags;
    sim_flags.add_to(sim);

    // estimate
    auto* est = app.add_subcommand("estimate", "estimate Hoelder exponents of a stored ensemble");
    std::string est_traj;
    std::string est_out;
    est->add_option("--traj", est_traj, "trajectory base path (without .json/.bin)")->required();
    est->add_option("--out", est_out, "output CSV (default stdout)");

    // verify
    auto* ver = app.add_subcommand("verify", "confront a stored ensemble with a theorem's region");
    QueryFlags ver_q;
    ver_q.add_to(ver);
    std::string ver_traj;
    std::string ver_out;
    bool ver_no_prov = false;
    double ver_inflate = 0.0;
    ver->add_option("--traj", ver_traj, "trajectory base path")->required();
    ver->add_option("--out", ver_out, "verdict JSON (default stdout)");
    ver->add_flag("--no-provenance", ver_no_prov, "skip the plan provenance check");
    ver->add_option("--inflate-theta", ver_inflate, "raise theta by this amount (adversarial query)");

    // gamma-norm
    auto* gn = app.add_subcommand("gamma-norm", "Monte-Carlo gamma-radonifying norm");
    std::string gn_kind = "identity";
    int gn_n = 16;
    long gn_samples = 100000;
    std::uint64_t gn_seed = 1;
    double gn_p = 2.0;
    double gn_theta = 0.0;
    int gn_grid = 63;
    std::string gn_g = "bump";
    gn->add_option("--kind", gn_kind, "identity | multiplication")->capture_default_str();
    gn->add_option("--n", gn_n, "truncation / dimension")->capture_default_str();
    gn->add_option("--samples", gn_samples, "Monte-Carlo samples")->capture_default_str();
    gn->add_option("--seed", gn_seed, "seed")->capture_default_str();
    gn->add_option("--p", gn_p, "target L^p exponent (multiplication)")->capture_default_str();
    gn->add_option("--theta", gn_theta, "Cameron-Martin smoothness (multiplication)")->capture_default_str();
    gn->add_option("--grid", gn_grid, "grid size (multiplication, d=1)")->capture_default_str();
    gn->add_option("--g", gn_g, "multiplier preset (multiplication)")->capture_default_str();

    // fracpow-check
    auto* fc = app.add_subcommand("fracpow-check", "compare resolvent-quadrature fractional powers with the eigen oracle");
    std::string fc_spectrum;
    int fc_laplacian = 16;
    std::vector<double> fc_z{0.25, 0.5, 0.75};
    int fc_nodes = 200;
    double fc_tol = 1e-7;
    fc->add_option("--spectrum", fc_spectrum, "comma-separated eigenvalues (default: d=1 Laplacian)");
    fc->add_option("--laplacian-modes", fc_laplacian, "modes of the d=1 Laplacian")->capture_default_str();
    fc->add_option("--z", fc_z, "exponents in (0,1)")->capture_default_str();
    fc->add_option("--nodes", fc_nodes, "quadrature nodes")->capture_default_str();
    fc->add_option("--tol", fc_tol, "relative L2 tolerance")->capture_default_str();

    // run
    auto* run = app.add_subcommand("run", "full pipeline: build, simulate, estimate, verify, persist");
    RunFlags run_flags;
    run_flags.add_to(run);

    // presets
    auto* pre = app.add_subcommand("presets", "list shipped presets");
    bool pre_json = false;
    pre->add_flag("--json", pre_json, "print the preset configurations");

    // export
    auto* exp = app.add_subcommand("export", "plot-ready CSV from a run directory");
    std::string exp_run;
    std::string exp_kind = "region";
    std::string exp_out;
    exp->add_option("--run", exp_run, "run directory")->required();
    exp->add_option("--kind", exp_kind, "region | increments | trajectory")->capture_default_str();
    exp->add_option("--out", exp_out, "output CSV (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (region->parsed()) {
            emit(region_out, hspde::region_csv({{"cli", region_q.query()}}, region_samples));
        } else if (sim->parsed()) {
            const auto cfg = sim_flags.load();
            const auto problem = hspde::build_problem(cfg);
            namespace fs = std::filesystem;
            fs::create_directories(fs::path(cfg.output_dir) / "trajectories");
            for (double alpha : cfg.alphas) {
                const auto ens = hspde::run_simulation(cfg, hspde::make_plan(cfg, problem, alpha));
                const std::string label = hspde::run_label(alpha, cfg.alphas.size());
                const auto base = fs::path(cfg.output_dir) / "trajectories" /
                                  (label == "main" ? std::string("main") : "alpha_" + hspde::fmt(alpha));
                hspde::write_trajectories(ens, base);
                std::cout << base.string() << " (" << ens.plan.scheme << ", " << ens.replicas() << " replicas)\n";
            }
        } else if (est->parsed()) {
            emit(est_out, estimates_table(hspde::read_trajectories(est_traj)));
        } else if (ver->parsed()) {
            const auto ens = hspde::read_trajectories(ver_traj);
            hspde::RegularityQuery q = ver_q.query();
            if (ver->count("--d") == 0) {
                q.d = ens.plan.dim;
            }
            if (ver->count("--alpha") == 0) {
                q.alpha = ens.plan.alpha;
            }
            if (!q.theta && (q.theorem == hspde::Theorem::colored || q.theorem == hspde::Theorem::remark33)) {
                q.theta = ens.plan.theta;
            }
            if (!q.m && q.theorem == hspde::Theorem::colored && std::isfinite(ens.plan.m)) {
                q.m = ens.plan.m;
            }
            if (ver->count("--q") == 0 && std::isfinite(ens.plan.q)) {
                q.q = ens.plan.q;
            }
            if (ver_inflate != 0.0) {
                q = q.inflated(ver_inflate);
            }
            hspde::VerifyOptions opt;
            opt.check_provenance = !ver_no_prov && ver_inflate == 0.0;
            const auto verdict = hspde::verify_region(ens, q, opt);
            std::ostringstream s;
            s << std::setw(2) << hspde::to_json(verdict, q) << '\n';
            emit(ver_out, s.str());
            return verdict.pass ? 0 : 2;
        } else if (gn->parsed()) {
            std::ostringstream out;
            out << "kind,estimate,std_error,N,samples,target_p,g_norm,ratio,ratio_2N,stable\n";
            if (gn_kind == "identity") {
                const auto e = hspde::mc_gamma_norm(hspde::FiniteRankOperator::identity(gn_n),
                                                    hspde::TargetSpace::hilbert(), gn_samples, gn_seed);
                out << gn_kind << ',' << hspde::fmt(e.value) << ',' << hspde::fmt(e.value_std_error()) << ',' << gn_n
                    << ',' << e.samples << ",2,,,,\n";
            } else if (gn_kind == "multiplication") {
                const hspde::SpectralDomain dom(1, gn_grid, gn_grid);
                const auto g = hspde::g_preset(gn_g, dom, 1.0, 1, 8.0, 16.0);
                hspde::MultiplicationOperator op{dom, g.row(0), gn_theta, gn_n};
                const auto rep = hspde::check_domination_bound(op, std::nullopt, gn_p, gn_samples, gn_seed);
                const auto e = hspde::mc_gamma_norm(op.materialize(), hspde::TargetSpace::grid_lp(dom, gn_p),
                                                    gn_samples, gn_seed);
                out << gn_kind << ',' << hspde::fmt(e.value) << ',' << hspde::fmt(e.value_std_error()) << ',' << gn_n
                    << ',' << e.samples << ',' << hspde::fmt(gn_p) << ',' << hspde::fmt(rep.g_norm) << ','
                    << hspde::fmt(rep.ratio) << ',' << hspde::fmt(rep.ratio_doubled) << ','
                    << (rep.stable ? "true" : "false") << '\n';
            } else {
                hspde::fail(hspde::ErrorKind::invalid_argument, "unknown operator kind '", gn_kind, "'");
            }
            std::cout << out.str();
        } else if (fc->parsed()) {
            std::vector<double> spectrum;
            if (!fc_spectrum.empty()) {
                std::stringstream ss(fc_spectrum);
                std::string item;
                while (std::getline(ss, item, ',')) {
                    spectrum.push_back(std::stod(item));
                }
            }
            const int K = spectrum.empty() ? fc_laplacian : static_cast<int>(spectrum.size());
            const hspde::SpectralDomain dom(1, std::max(K, 3) + 1, std::max(K, 1));
            const hspde::EigenSystem sys =
                spectrum.empty() ? hspde::build_laplacian_system(dom) : hspde::synthetic_system(dom, spectrum);
            const hspde::GridFunction x = hspde::sample_on_grid(dom, [](const std::vector<double>& xi) {
                return xi[0] * (1.0 - xi[0]) * (1.0 + xi[0]);
            });
            std::cout << "z,method,relative_error,nodes\n";
            bool ok = true;
            for (double z : fc_z) {
                hspde::FracPowerRequest req;
                req.z = z;
                req.quad_nodes = fc_nodes;
                const auto oracle_neg = hspde::frac_power_eigen(sys, -z, x);
                const auto oracle_pos = hspde::frac_power_eigen(sys, z, x);
                const auto neg = hspde::frac_power_quadrature(sys, x, req).real();
                const auto pos = hspde::balakrishnan_forward(sys, x, req).real();
                const double e_neg = (neg - oracle_neg).norm() / oracle_neg.norm();
                const double e_pos = (pos - oracle_pos).norm() / oracle_pos.norm();
                ok = ok && e_neg <= fc_tol && e_pos <= fc_tol;
                std::cout << hspde::fmt(z) << ",resolvent-negative-power," << hspde::fmt(e_neg) << ',' << fc_nodes << '\n'
                          << hspde::fmt(z) << ",balakrishnan-forward," << hspde::fmt(e_pos) << ',' << fc_nodes << '\n';
            }
            return ok ? 0 : 4;
        } else if (run->parsed()) {
            const auto cfg = run_flags.load();
            const auto manifest = hspde::run_experiment(cfg);
            std::cout << "verdict: " << (manifest.pass ? "PASS" : "FAIL") << " (" << manifest.verdict_kind << "), outputs in "
                      << cfg.output_dir << '\n';
            return manifest.pass ? 0 : 2;
        } else if (pre->parsed()) {
            for (const auto& p : hspde::preset_catalogue()) {
                if (pre_json) {
                    std::cout << p.name << ": " << p.config.dump() << '\n';
                } else {
                    std::cout << std::left << std::setw(24) << p.name << p.description << '\n';
                }
            }
        } else if (exp->parsed()) {
            std::ostringstream s;
            hspde::export_plotdata(exp_run, hspde::plot_kind_from_string(exp_kind), s);
            emit(exp_out, s.str());
        }
    } catch (const hspde::Error& e) {
        std::cerr << "hspde: " << hspde::to_string(e.kind()) << " error: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "hspde: error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
