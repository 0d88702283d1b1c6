#pragma once

#include "hspde/convolve.hpp"
#include "hspde/eigensystem.hpp"
#include "hspde/error.hpp"
#include "hspde/noise.hpp"
#include "hspde/operator_spec.hpp"
#include "hspde/regularity.hpp"
#include "hspde/trajectory_io.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace hspde {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kManifestFormat = "hspde-manifest-1";
inline constexpr double kSweepSlack = 0.03;

using Json = nlohmann::json;

struct PresetInfo {
    std::string name;
    std::string description;
    Json config;
};

/// Shipped experiment presets. Every preset carries a seed.
inline std::vector<PresetInfo> preset_catalogue() {
    return {
        {"laplacian-d1", "d=1 Laplacian, constant colored noise (theta=0.4), colored-noise region check (quick)",
         Json::parse(R"({
            "operator": {"preset": "laplacian"},
            "domain": {"dim": 1, "grid_size": 127, "modes": 127},
            "noise": {"theta": 0.4, "truncation": 127, "g": "const", "m": 8, "q": 16},
            "plan": {"T": 1.0, "steps": 1024, "replicas": 16, "seed": 11},
            "query": {"theorem": "colored", "theta": 0.4, "m": 8, "q": 16}
          })")},
        {"laplacian-d2", "d=2 Laplacian on the unit square, constant colored noise (theta=0.9), colored-noise region",
         Json::parse(R"({
            "operator": {"preset": "laplacian"},
            "domain": {"dim": 2, "grid_size": 63, "modes": 31},
            "noise": {"theta": 0.9, "truncation": 961, "g": "const", "m": 8, "q": 16},
            "plan": {"T": 1.0, "steps": 512, "replicas": 8, "time_stride": 2, "space_stride": 1, "seed": 12},
            "query": {"theorem": "colored", "theta": 0.9, "m": 8, "q": 16}
          })")},
        {"varcoef-d1", "d=1 variable-coefficient operator a(x)=1+x/2, bump multiplier, frozen-coefficient scheme",
         Json::parse(R"({
            "operator": {"preset": "affine-a"},
            "domain": {"dim": 1, "grid_size": 127, "modes": 64},
            "noise": {"theta": 0.4, "truncation": 64, "g": "bump", "m": 8, "q": 16},
            "plan": {"T": 1.0, "steps": 2048, "replicas": 16, "space_stride": 1, "seed": 13},
            "query": {"theorem": "colored", "theta": 0.4, "m": 8, "q": 16}
          })")},
        {"heat-white-d1-baseline",
         "d=1 stochastic heat equation with space-time white noise; estimator calibration, outside the theorem hypotheses",
         Json::parse(R"({
            "operator": {"preset": "laplacian"},
            "domain": {"dim": 1, "grid_size": 128, "modes": 128},
            "noise": {"theta": 0.0, "truncation": 128, "g": "identity"},
            "plan": {"T": 1.0, "steps": 8192, "replicas": 64, "space_stride": 1, "seed": 14},
            "calibration": {"beta": [0.17, 0.32], "gamma": [0.40, 0.60],
                            "note": "identity G is not bounded from L2 into L^p for p > 2; calibration baseline only"}
          })")},
        {"colored-d1-thm31", "d=1 colored noise (m=8, q=16, theta=0.4, bump multiplier), colored-noise region verification",
         Json::parse(R"({
            "operator": {"preset": "laplacian"},
            "domain": {"dim": 1, "grid_size": 128, "modes": 128},
            "noise": {"theta": 0.4, "truncation": 128, "g": "bump", "m": 8, "q": 16},
            "plan": {"T": 1.0, "steps": 4096, "replicas": 32, "space_stride": 1, "seed": 15},
            "query": {"theorem": "colored", "theta": 0.4, "m": 8, "q": 16}
          })")},
        {"fractional-alpha-sweep", "d=1 drift A^{alpha/2} for alpha in {1, 1.5, 2} with fixed colored noise (theta=0.25)",
         Json::parse(R"({
            "operator": {"preset": "laplacian"},
            "domain": {"dim": 1, "grid_size": 512, "modes": 512},
            "noise": {"theta": 0.25, "truncation": 512, "g": "bump", "m": 8, "q": 16},
            "plan": {"T": 1.0, "steps": 4096, "replicas": 16, "space_stride": 4, "seed": 16, "alpha": [1.0, 1.5, 2.0]},
            "query": {"theorem": "fractional", "q": 16}
          })")},
    };
}

inline const PresetInfo& find_preset(const std::string& name) {
    static const std::vector<PresetInfo> catalogue = preset_catalogue();
    for (const auto& p : catalogue) {
        if (p.name == name) {
            return p;
        }
    }
    std::string known;
    for (const auto& p : catalogue) {
        known += (known.empty() ? "" : ", ") + p.name;
    }
    fail(ErrorKind::invalid_argument, "unknown preset '", name, "' (known: ", known, ")");
}

struct QueryConfig {
    Theorem theorem = Theorem::prop32;
    std::optional<double> p;
    double q = 8.0;
    std::optional<double> theta;
    std::optional<double> m;
};

struct ExperimentConfig {
    Json raw;   // effective configuration after overlays
    std::string preset;
    std::string operator_preset = "laplacian";
    std::string operator_csv;   // grid-sampled coefficients; overrides the preset
    double shift = 0.0;
    int dim = 1;
    int grid_size = 127;
    int modes = 127;
    double theta = 0.0;
    int noise_modes = 127;
    std::string g = "identity";
    double g_scale = 1.0;
    double m = std::numeric_limits<double>::infinity();
    double q = std::numeric_limits<double>::infinity();
    double T = 1.0;
    int steps = 1024;
    int replicas = 16;
    int time_stride = 1;
    int space_stride = 0;
    std::uint64_t seed = 0;
    int threads = 0;
    std::vector<double> alphas{2.0};
    std::string scheme = "auto";
    std::optional<QueryConfig> query;
    std::optional<std::pair<double, double>> beta_band;
    std::optional<std::pair<double, double>> gamma_band;
    std::string calibration_note;
    std::string output_dir = "hspde-run";
    bool persist_trajectories = false;

    SpectralDomain domain() const { return SpectralDomain(dim, grid_size, modes); }

    /// Regularity query of sweep entry `alpha`; p defaults to the
    /// colored-noise choice 1/p = 1/2 - theta/d + 1/m.
    RegularityQuery regularity_query(double alpha) const {
        require(query.has_value(), "configuration has no query");
        RegularityQuery rq;
        rq.d = dim;
        rq.q = query->q;
        rq.alpha = alpha;
        rq.theorem = query->theorem;
        rq.theta = query->theta;
        rq.m = query->m;
        if (query->p) {
            rq.p = *query->p;
        } else {
            const double inv = 0.5 - theta / dim + 1.0 / m;
            require(inv > 0.0 && std::isfinite(m), "query p is missing and the colored-noise choice is undefined");
            rq.p = 1.0 / inv;
        }
        return rq;
    }
};

namespace detail {

template <typename T>
T json_get(const Json& j, const char* key, T fallback) {
    if (!j.contains(key) || j.at(key).is_null()) {
        return fallback;
    }
    try {
        return j.at(key).get<T>();
    } catch (const Json::exception& e) {
        fail(ErrorKind::invalid_argument, "config key '", key, "': ", e.what());
    }
}

inline double json_exponent(const Json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) {
        return std::numeric_limits<double>::infinity();
    }
    return j.at(key).get<double>();
}

} // namespace detail

/// Effective configuration: preset defaults < file < flag overrides.
inline ExperimentConfig load_config(const Json& file, const Json& overrides = Json::object()) {
    std::string preset_name = detail::json_get<std::string>(overrides, "preset",
                                                            detail::json_get<std::string>(file, "preset", ""));
    Json merged = Json::object();
    if (!preset_name.empty()) {
        merged = find_preset(preset_name).config;
    }
    merged.merge_patch(file);
    merged.merge_patch(overrides);
    if (!preset_name.empty()) {
        merged["preset"] = preset_name;
    }

    ExperimentConfig c;
    c.raw = merged;
    c.preset = preset_name;
    try {
        const Json op = merged.value("operator", Json::object());
        c.operator_preset = detail::json_get<std::string>(op, "preset", c.operator_preset);
        c.shift = detail::json_get<double>(op, "shift", 0.0);
        c.operator_csv = detail::json_get<std::string>(op, "csv", "");

        const Json dom = merged.value("domain", Json::object());
        c.dim = detail::json_get<int>(dom, "dim", c.dim);
        c.grid_size = detail::json_get<int>(dom, "grid_size", c.grid_size);
        c.modes = detail::json_get<int>(dom, "modes", c.grid_size);

        const Json nz = merged.value("noise", Json::object());
        c.theta = detail::json_get<double>(nz, "theta", 0.0);
        c.noise_modes = detail::json_get<int>(nz, "truncation", c.modes);
        c.g = detail::json_get<std::string>(nz, "g", c.g);
        c.g_scale = detail::json_get<double>(nz, "g_scale", 1.0);
        c.m = detail::json_exponent(nz, "m");
        c.q = detail::json_exponent(nz, "q");

        const Json pl = merged.value("plan", Json::object());
        c.T = detail::json_get<double>(pl, "T", c.T);
        c.steps = detail::json_get<int>(pl, "steps", c.steps);
        c.replicas = detail::json_get<int>(pl, "replicas", c.replicas);
        c.time_stride = detail::json_get<int>(pl, "time_stride", 1);
        c.space_stride = detail::json_get<int>(pl, "space_stride", 0);
        c.threads = detail::json_get<int>(pl, "threads", 0);
        c.scheme = detail::json_get<std::string>(pl, "scheme", "auto");
        if (!pl.contains("seed") || pl.at("seed").is_null()) {
            fail(ErrorKind::invalid_argument, "config must set plan.seed (no implicit entropy)");
        }
        c.seed = pl.at("seed").get<std::uint64_t>();
        if (pl.contains("alpha")) {
            c.alphas = pl.at("alpha").is_array() ? pl.at("alpha").get<std::vector<double>>()
                                                 : std::vector<double>{pl.at("alpha").get<double>()};
        }
        require(!c.alphas.empty(), "plan.alpha sweep is empty");

        if (merged.contains("query") && !merged.at("query").is_null()) {
            const Json qj = merged.at("query");
            QueryConfig qc;
            qc.theorem = theorem_from_string(detail::json_get<std::string>(qj, "theorem", "prop32"));
            if (qj.contains("p") && !qj.at("p").is_null()) {
                qc.p = qj.at("p").get<double>();
            }
            qc.q = detail::json_get<double>(qj, "q", std::isfinite(c.q) ? c.q : 8.0);
            if (qj.contains("theta")) {
                qc.theta = qj.at("theta").get<double>();
            }
            if (qj.contains("m")) {
                qc.m = qj.at("m").get<double>();
            }
            c.query = qc;
        }
        if (merged.contains("calibration")) {
            const Json cal = merged.at("calibration");
            if (cal.contains("beta")) {
                const auto b = cal.at("beta").get<std::vector<double>>();
                require(b.size() == 2, "calibration.beta must be [lo, hi]");
                c.beta_band = std::make_pair(b[0], b[1]);
            }
            if (cal.contains("gamma")) {
                const auto g = cal.at("gamma").get<std::vector<double>>();
                require(g.size() == 2, "calibration.gamma must be [lo, hi]");
                c.gamma_band = std::make_pair(g[0], g[1]);
            }
            c.calibration_note = detail::json_get<std::string>(cal, "note", "");
        }
        c.output_dir = detail::json_get<std::string>(merged, "output_dir", c.output_dir);
        c.persist_trajectories = detail::json_get<bool>(merged, "persist_trajectories", false);
    } catch (const Json::exception& e) {
        fail(ErrorKind::invalid_argument, "malformed configuration: ", e.what());
    }
    return c;
}

inline Json to_json(const RegularityQuery& q) {
    Json j = {{"theorem", to_string(q.theorem)}, {"d", q.d}, {"p", q.p}, {"q", q.q}, {"alpha", q.alpha}};
    if (q.theta) {
        j["theta"] = *q.theta;
    }
    if (q.m) {
        j["m"] = *q.m;
    }
    return j;
}

inline RegularityQuery query_from_json(const Json& j) {
    RegularityQuery q;
    q.theorem = theorem_from_string(j.at("theorem").get<std::string>());
    q.d = j.at("d").get<int>();
    q.p = j.at("p").get<double>();
    q.q = j.at("q").get<double>();
    q.alpha = j.at("alpha").get<double>();
    if (j.contains("theta")) {
        q.theta = j.at("theta").get<double>();
    }
    if (j.contains("m")) {
        q.m = j.at("m").get<double>();
    }
    return q;
}

inline Json to_json(const ExponentEstimate& e) {
    return {{"exponent", e.exponent}, {"fit_r2", e.fit_r2}, {"paths", e.per_path.size()},
            {"excluded", e.excluded}, {"lags", e.lags}};
}

inline Json to_json(const Verdict& v, const RegularityQuery& q) {
    Json vertices = Json::array();
    for (const auto& x : v.vertices) {
        Json vj = {{"beta", x.beta}, {"gamma", x.gamma}, {"beta_margin", x.beta_margin},
                   {"gamma_margin", x.gamma_margin}, {"ok", x.ok}};
        if (q.theorem != Theorem::remark33) {
            const auto sel = select_sigma_delta(q, x.beta, x.gamma);
            vj["sigma"] = sel.sigma;
            vj["delta"] = sel.delta;
        }
        vertices.push_back(vj);
    }
    Json j = {{"verdict", v.pass ? "PASS" : "FAIL"},
              {"theorem", to_string(v.theorem)},
              {"query", to_json(q)},
              {"budget", v.budget},
              {"tolerance", v.tolerance},
              {"empty_region", v.empty_region},
              {"note", v.note},
              {"beta_hat", to_json(v.beta_hat)},
              {"gamma_hat", to_json(v.gamma_hat)},
              {"vertices", vertices}};
    if (!v.empty_region) {
        j["min_beta_margin"] = v.min_beta_margin;
        j["min_gamma_margin"] = v.min_gamma_margin;
    }
    return j;
}

inline Json to_json(const NoiseReport& r) {
    Json clauses = Json::array();
    for (const auto& c : r.clauses) {
        clauses.push_back({{"clause", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    }
    return {{"clauses", clauses}, {"p_colored", r.p_colored}, {"all_passed", r.all_passed()}};
}

/// Formats a double for CSV output with round-trip precision.
inline std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::string region_csv(const std::vector<std::pair<std::string, RegularityQuery>>& queries, int samples = 21) {
    std::ostringstream out;
    out << "beta,gamma_max,theorem,d,p,q,alpha,theta,m,run\n";
    for (const auto& [run, q] : queries) {
        const auto region = region_boundary(q, samples);
        for (const auto& pt : region.points) {
            out << fmt(pt.beta) << ',' << fmt(pt.gamma_max) << ',' << to_string(q.theorem) << ',' << q.d << ','
                << fmt(q.p) << ',' << fmt(q.q) << ',' << fmt(q.alpha) << ',' << (q.theta ? fmt(*q.theta) : "") << ','
                << (q.m ? fmt(*q.m) : "") << ',' << run << '\n';
        }
    }
    return out.str();
}

struct BuiltProblem {
    std::shared_ptr<const EigenSystem> sys;
    CameronMartinSpec noise;
    GProcess G;
};

inline BuiltProblem build_problem(const ExperimentConfig& c) {
    const SpectralDomain domain = c.domain();
    EllipticOperatorSpec spec = c.operator_csv.empty() ? EllipticOperatorSpec::preset(c.operator_preset, domain)
                                                       : EllipticOperatorSpec::from_csv(c.operator_csv, domain);
    spec.shift = c.shift;
    spec.validate(domain);
    auto sys = std::make_shared<const EigenSystem>(spec.is_constant_laplacian()
                                                       ? build_laplacian_system(domain, c.shift)
                                                       : build_variable_coefficient_system(domain, spec));
    CameronMartinSpec noise(domain, c.theta, c.noise_modes);
    GProcess G = c.g.rfind("csv:", 0) == 0 ? g_from_csv(c.g.substr(4), domain, c.m, c.q)
                                           : g_preset(c.g, domain, c.T, c.steps, c.m, c.q);
    if (c.g_scale != 1.0) {
        G = G.scaled(c.g_scale, domain.point_count());
    }
    return {std::move(sys), std::move(noise), std::move(G)};
}

inline SimulationPlan make_plan(const ExperimentConfig& c, const BuiltProblem& b, double alpha) {
    SimulationPlan plan(b.sys, b.noise, b.G);
    plan.alpha = alpha;
    plan.T = c.T;
    plan.steps = c.steps;
    plan.replicas = c.replicas;
    plan.record.time_stride = c.time_stride;
    plan.record.space_stride = c.space_stride;
    plan.seed = c.seed;
    plan.threads = c.threads;
    return plan;
}

inline TrajectoryEnsemble run_simulation(const ExperimentConfig& c, const SimulationPlan& plan) {
    if (c.scheme == "exact") {
        return simulate_exact_diagonal(plan);
    }
    if (c.scheme == "frozen") {
        return simulate_frozen_exponential(plan);
    }
    require(c.scheme == "auto", "plan.scheme must be auto, exact or frozen, got '", c.scheme, "'");
    return simulate(plan);
}

struct StageRecord {
    std::string name;
    std::string status = "pending";
    double seconds = 0.0;
    std::string message;
};

struct RunManifest {
    Json json;
    bool pass = true;
    std::string verdict_kind;   // verification, calibration or none
};

struct RunResult {
    std::string label;
    double alpha = 2.0;
    std::string scheme;
    ExponentEstimate beta_hat;
    ExponentEstimate gamma_hat;
    MomentEstimate mq;
    std::optional<Verdict> verdict;
    std::optional<RegularityQuery> query;
};

inline std::string run_label(double alpha, std::size_t sweep_size) {
    if (sweep_size == 1) {
        return "main";
    }
    std::ostringstream s;
    s << "alpha=" << alpha;
    return s.str();
}

/// build -> validate -> simulate -> estimate -> verify -> persist. Writes
/// estimates.csv, region.csv, verdict.json and manifest.json into the
/// output directory; on a stage error the partial manifest is written and
/// the error is rethrown with the stage name.
inline RunManifest run_experiment(const ExperimentConfig& c) {
    namespace fs = std::filesystem;
    const fs::path dir(c.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        fail(ErrorKind::io, "cannot create output directory '", dir.string(), "': ", ec.message());
    }

    RunManifest manifest;
    std::vector<StageRecord> stages;
    Json derived = Json::object();
    std::vector<RunResult> results;

    auto write_manifest = [&]() {
        Json st = Json::array();
        for (const auto& s : stages) {
            st.push_back({{"stage", s.name}, {"status", s.status}, {"seconds", s.seconds}, {"message", s.message}});
        }
        manifest.json = {{"format", kManifestFormat},
                         {"versions", {{"hspde", kVersion}, {"trajectory_format", kTrajectoryFormat},
                                       {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                                     std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                                     std::to_string(EIGEN_MINOR_VERSION)}}},
                         {"config", c.raw},
                         {"derived", derived},
                         {"stages", st},
                         {"verdict_kind", manifest.verdict_kind},
                         {"pass", manifest.pass}};
        std::ofstream out(dir / "manifest.json");
        out << std::setw(2) << manifest.json << '\n';
    };

    auto stage = [&](const std::string& name, auto&& body) {
        StageRecord rec;
        rec.name = name;
        stages.push_back(rec);
        const auto t0 = std::chrono::steady_clock::now();
        try {
            body();
        } catch (const Error& e) {
            stages.back().status = "failed";
            stages.back().message = e.what();
            stages.back().seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            manifest.pass = false;
            write_manifest();
            throw Error(e.kind(), "stage '" + name + "': " + e.what());
        }
        stages.back().status = "ok";
        stages.back().seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    std::optional<BuiltProblem> problem;
    stage("build", [&]() {
        problem = build_problem(c);
        derived["effective_shift"] = problem->sys->effective_shift();
        derived["shift_adjusted"] = problem->sys->diagnostics().shift_adjusted;
        derived["biorthogonality_residual"] = problem->sys->diagnostics().biorthogonality_residual;
        derived["embedding_exponent_r"] = finite_or_null(problem->noise.embedding_exponent());
    });

    stage("validate", [&]() {
        if (!c.query) {
            derived["hypotheses"] = "not checked: no query";
            return;
        }
        const RegularityQuery rq = c.regularity_query(c.alphas.front());
        derived["p"] = rq.p;
        if (rq.theorem == Theorem::colored) {
            const NoiseReport rep = validate_noise_hypotheses(problem->G, problem->noise, rq.p, c.dim);
            derived["hypotheses"] = to_json(rep);
            derived["p_colored"] = rep.p_colored;
            if (!rep.all_passed()) {
                fail(ErrorKind::hypothesis, "colored-noise hypotheses fail: ", rep.failures());
            }
        } else {
            derived["hypotheses"] = "theorem-specific noise clauses apply only to the colored query";
        }
    });

    for (double alpha : c.alphas) {
        RunResult res;
        res.alpha = alpha;
        res.label = run_label(alpha, c.alphas.size());
        std::optional<TrajectoryEnsemble> ens;
        stage("simulate[" + res.label + "]", [&]() {
            ens = run_simulation(c, make_plan(c, *problem, alpha));
            res.scheme = ens->plan.scheme;
        });
        stage("estimate[" + res.label + "]", [&]() {
            res.beta_hat = estimate_temporal_exponent(*ens, TemporalMode::sup_space);
            res.gamma_hat = estimate_spatial_exponent(*ens);
            const double qn = c.query ? c.query->q : 2.0;
            const double pn = c.query ? c.regularity_query(alpha).p : 2.0;
            res.mq = mean_mq_norm(*ens, qn, pn);
        });
        stage("verify[" + res.label + "]", [&]() {
            if (!c.query) {
                return;
            }
            res.query = c.regularity_query(alpha);
            res.verdict = verify_region(*ens, *res.query);
        });
        if (c.persist_trajectories) {
            stage("persist[" + res.label + "]", [&]() {
                fs::create_directories(dir / "trajectories");
                write_trajectories(*ens, dir / "trajectories" / (res.label == "main" ? "main" : "alpha_" + fmt(alpha)));
            });
        }
        results.push_back(std::move(res));
    }

    Json verdict = Json::object();
    stage("report", [&]() {
        std::ostringstream est;
        est << "run,alpha,scheme,beta_hat,beta_r2,beta_excluded,gamma_hat,gamma_r2,gamma_excluded,mq_norm,mq_std_error\n";
        std::vector<std::pair<std::string, RegularityQuery>> queries;
        Json runs = Json::array();
        bool pass = true;
        for (const auto& r : results) {
            est << r.label << ',' << fmt(r.alpha) << ',' << r.scheme << ',' << fmt(r.beta_hat.exponent) << ','
                << fmt(r.beta_hat.fit_r2) << ',' << r.beta_hat.excluded << ',' << fmt(r.gamma_hat.exponent) << ','
                << fmt(r.gamma_hat.fit_r2) << ',' << r.gamma_hat.excluded << ',' << fmt(r.mq.value) << ','
                << fmt(r.mq.std_error) << '\n';
            Json rj = {{"run", r.label}, {"alpha", r.alpha}, {"scheme", r.scheme},
                       {"beta_hat", r.beta_hat.exponent}, {"gamma_hat", r.gamma_hat.exponent}};
            if (r.verdict) {
                queries.emplace_back(r.label, *r.query);
                rj["verification"] = to_json(*r.verdict, *r.query);
                pass = pass && r.verdict->pass;
            }
            if (c.beta_band || c.gamma_band) {
                Json cal = {{"note", c.calibration_note}};
                if (c.beta_band) {
                    const bool ok = r.beta_hat.exponent >= c.beta_band->first && r.beta_hat.exponent <= c.beta_band->second;
                    cal["beta"] = {{"band", {c.beta_band->first, c.beta_band->second}}, {"ok", ok}};
                    pass = pass && ok;
                }
                if (c.gamma_band) {
                    const bool ok =
                        r.gamma_hat.exponent >= c.gamma_band->first && r.gamma_hat.exponent <= c.gamma_band->second;
                    cal["gamma"] = {{"band", {c.gamma_band->first, c.gamma_band->second}}, {"ok", ok}};
                    pass = pass && ok;
                }
                rj["calibration"] = cal;
            }
            runs.push_back(rj);
        }
        if (results.size() > 1) {
            bool monotone = true;
            std::vector<double> betas;
            for (std::size_t i = 0; i < results.size(); ++i) {
                betas.push_back(results[i].beta_hat.exponent);
                if (i > 0 && results[i].alpha > results[i - 1].alpha &&
                    results[i].beta_hat.exponent < results[i - 1].beta_hat.exponent - kSweepSlack) {
                    monotone = false;
                }
            }
            verdict["sweep"] = {{"beta_hats", betas}, {"slack", kSweepSlack}, {"nondecreasing", monotone}};
            pass = pass && monotone;
        }
        manifest.verdict_kind = c.query ? "verification" : (c.beta_band || c.gamma_band ? "calibration" : "none");
        manifest.pass = pass;
        verdict["verdict"] = pass ? "PASS" : "FAIL";
        verdict["kind"] = manifest.verdict_kind;
        verdict["runs"] = runs;
        derived["runs"] = runs;

        std::ofstream(dir / "estimates.csv") << est.str();
        std::ofstream(dir / "region.csv") << region_csv(queries);
        std::ofstream(dir / "verdict.json") << std::setw(2) << verdict << '\n';
    });
    write_manifest();
    return manifest;
}

/// Reads the manifest of a finished run directory.
inline Json read_manifest(const std::filesystem::path& run_dir) {
    const auto path = run_dir / "manifest.json";
    std::ifstream in(path);
    if (!in) {
        fail(ErrorKind::io, "unknown run '", run_dir.string(), "': no manifest.json");
    }
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        fail(ErrorKind::io, "malformed manifest '", path.string(), "': ", e.what());
    }
}

enum class PlotKind { region, increments, trajectory };

inline PlotKind plot_kind_from_string(const std::string& s) {
    if (s == "region") return PlotKind::region;
    if (s == "increments") return PlotKind::increments;
    if (s == "trajectory") return PlotKind::trajectory;
    fail(ErrorKind::invalid_argument, "unknown export kind '", s, "' (known: region, increments, trajectory)");
}

/// Median over paths of the dyadic max-increment curve, for log-log plots.
inline void increments_csv(const TrajectoryEnsemble& ens, std::ostream& out) {
    out << "axis,lag,median_max_increment\n";
    const double dt = ens.times[1] - ens.times[0];
    for (Eigen::Index h = 1; 2 * h <= ens.time_count() - 1; h *= 2) {
        std::vector<double> m;
        for (const auto& v : ens.values) {
            const Eigen::Index n = ens.time_count() - h;
            m.push_back((v.middleRows(h, n) - v.topRows(n)).cwiseAbs().maxCoeff());
        }
        out << "time," << fmt(dt * static_cast<double>(h)) << ',' << fmt(median(m)) << '\n';
    }
    if (ens.dim() == 1) {
        const Eigen::Index t = ens.time_count() - 1;
        const double h0 = ens.points(1, 0) - ens.points(0, 0);
        for (Eigen::Index h = 1; 2 * h <= ens.point_count() - 1; h *= 2) {
            std::vector<double> m;
            for (const auto& v : ens.values) {
                const Eigen::Index n = ens.point_count() - h;
                m.push_back((v.row(t).segment(h, n) - v.row(t).head(n)).cwiseAbs().maxCoeff());
            }
            out << "space," << fmt(h0 * static_cast<double>(h)) << ',' << fmt(median(m)) << '\n';
        }
    }
}

/// Plot-ready CSV for a run directory. Increments and trajectories need
/// persisted trajectories.
inline void export_plotdata(const std::filesystem::path& run_dir, PlotKind kind, std::ostream& out) {
    const Json manifest = read_manifest(run_dir);
    if (kind == PlotKind::region) {
        std::vector<std::pair<std::string, RegularityQuery>> queries;
        const Json& runs = manifest.at("derived").at("runs");
        for (const auto& r : runs) {
            if (r.contains("verification")) {
                queries.emplace_back(r.at("run").get<std::string>(),
                                     query_from_json(r.at("verification").at("query")));
            }
        }
        if (queries.empty()) {
            fail(ErrorKind::invalid_argument, "run '", run_dir.string(), "' has no regularity query");
        }
        out << region_csv(queries);
        return;
    }
    const auto traj_dir = run_dir / "trajectories";
    std::vector<std::filesystem::path> bases;
    if (std::filesystem::exists(traj_dir)) {
        for (const auto& entry : std::filesystem::directory_iterator(traj_dir)) {
            if (entry.path().extension() == ".json") {
                bases.push_back(entry.path().parent_path() / entry.path().stem());
            }
        }
    }
    if (bases.empty()) {
        fail(ErrorKind::io, "run '", run_dir.string(), "' has no persisted trajectories (rerun with persistence on)");
    }
    std::sort(bases.begin(), bases.end());
    const TrajectoryEnsemble ens = read_trajectories(bases.front());
    if (kind == PlotKind::increments) {
        increments_csv(ens, out);
    } else {
        export_trajectory_csv(ens, out, 1);
    }
}

} // namespace hspde
