#include "hspde/harness.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <set>
#include <sstream>

using namespace hspde;
using Json = nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// Small laplacian-d1 run: enough times and points for the estimators.
Json quick_overrides(const std::filesystem::path& dir) {
    return {{"preset", "laplacian-d1"},
            {"plan", {{"steps", 256}, {"replicas", 4}, {"threads", 1}}},
            {"output_dir", dir.string()}};
}

} // namespace

TEST(Presets, CatalogueHasTheRequiredEntries) {
    const auto cat = preset_catalogue();
    EXPECT_GE(cat.size(), 6u);
    std::set<std::string> names;
    for (const auto& p : cat) {
        names.insert(p.name);
        EXPECT_FALSE(p.description.empty());
        // every preset loads on its own
        EXPECT_NO_THROW(load_config(Json{{"preset", p.name}})) << p.name;
    }
    for (const char* n : {"laplacian-d1", "laplacian-d2", "varcoef-d1", "heat-white-d1-baseline", "colored-d1-thm31",
                          "fractional-alpha-sweep"}) {
        EXPECT_EQ(names.count(n), 1u) << n;
    }
    EXPECT_HSPDE_ERROR(find_preset("nope"), ErrorKind::invalid_argument);
}

TEST(Config, PresetFileFlagPrecedence) {
    const Json file = {{"preset", "laplacian-d1"}, {"plan", {{"steps", 300}, {"replicas", 5}}}};
    const Json flags = {{"plan", {{"replicas", 7}}}};
    const auto c = load_config(file, flags);
    EXPECT_EQ(c.preset, "laplacian-d1");
    EXPECT_EQ(c.steps, 300);     // file over preset
    EXPECT_EQ(c.replicas, 7);    // flag over file
    EXPECT_EQ(c.seed, 11u);      // preset default
    EXPECT_DOUBLE_EQ(c.theta, 0.4);
    ASSERT_TRUE(c.query.has_value());
    EXPECT_EQ(c.query->theorem, Theorem::colored);

    const auto flagged = load_config(file, Json{{"preset", "colored-d1-thm31"}});
    EXPECT_EQ(flagged.preset, "colored-d1-thm31");
    EXPECT_EQ(flagged.steps, 300);
}

TEST(Config, SeedIsMandatory) {
    const Json file = {{"domain", {{"dim", 1}, {"grid_size", 63}}}, {"plan", {{"steps", 128}}}};
    EXPECT_HSPDE_ERROR(load_config(file), ErrorKind::invalid_argument);
    EXPECT_HSPDE_ERROR(load_config(Json{{"plan", {{"seed", "x"}}}}), ErrorKind::invalid_argument);
}

TEST(Config, ColoredQueryDerivesP) {
    const auto c = load_config(Json{{"preset", "colored-d1-thm31"}});
    const auto rq = c.regularity_query(2.0);
    // 1/p = 1/2 - 0.4 + 1/8
    EXPECT_NEAR(rq.p, 1.0 / 0.225, 1e-12);
    EXPECT_NEAR(budget(rq), 0.2125, 1e-15);
}

TEST(Config, FractionalSweepHasThreeAlphas) {
    const auto c = load_config(Json{{"preset", "fractional-alpha-sweep"}});
    EXPECT_EQ(c.alphas, (std::vector<double>{1.0, 1.5, 2.0}));
    EXPECT_EQ(c.space_stride, 4);
}

TEST(Run, QuickRunWritesArtifacts) {
    const auto dir = test_support::scratch("harness-quick");
    const auto m = run_experiment(load_config(Json::object(), quick_overrides(dir)));
    for (const char* f : {"manifest.json", "estimates.csv", "region.csv", "verdict.json"}) {
        EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
    }
    EXPECT_EQ(m.json.at("format"), kManifestFormat);
    EXPECT_EQ(m.verdict_kind, "verification");
    for (const auto& s : m.json.at("stages")) {
        EXPECT_EQ(s.at("status"), "ok") << s.dump();
    }
    const Json verdict = Json::parse(slurp(dir / "verdict.json"));
    EXPECT_EQ(verdict.at("verdict"), m.pass ? "PASS" : "FAIL");
    const auto est = slurp(dir / "estimates.csv");
    EXPECT_EQ(est.rfind("run,alpha,scheme,beta_hat", 0), 0u);
    EXPECT_EQ(read_manifest(dir).at("config"), m.json.at("config"));
}

TEST(Run, IdenticalConfigsGiveByteIdenticalEstimates) {
    const auto a = test_support::scratch("harness-rep-a");
    const auto b = test_support::scratch("harness-rep-b");
    Json oa = quick_overrides(a);
    Json ob = quick_overrides(b);
    ob["plan"]["threads"] = 3;
    const auto ma = run_experiment(load_config(Json::object(), oa));
    const auto mb = run_experiment(load_config(Json::object(), ob));
    EXPECT_EQ(slurp(a / "estimates.csv"), slurp(b / "estimates.csv"));
    EXPECT_EQ(slurp(a / "verdict.json"), slurp(b / "verdict.json"));
    EXPECT_EQ(ma.json.at("derived"), mb.json.at("derived"));
}

TEST(Run, PersistedTrajectoriesExport) {
    const auto dir = test_support::scratch("harness-persist");
    Json o = quick_overrides(dir);
    o["persist_trajectories"] = true;
    run_experiment(load_config(Json::object(), o));
    const auto ens = read_trajectories(dir / "trajectories" / "main");
    EXPECT_EQ(ens.replicas(), 4);
    EXPECT_EQ(ens.time_count(), 257);
    std::ostringstream inc, traj, reg;
    export_plotdata(dir, PlotKind::increments, inc);
    export_plotdata(dir, PlotKind::trajectory, traj);
    export_plotdata(dir, PlotKind::region, reg);
    EXPECT_EQ(inc.str().rfind("axis,lag,median_max_increment\ntime,", 0), 0u);
    EXPECT_EQ(traj.str().rfind("replica,time_index,t,point_index,xi_0,u\n", 0), 0u);
    EXPECT_EQ(reg.str().rfind("beta,gamma_max,theorem", 0), 0u);
}

TEST(Export, RegionCsvStartsAtTheOrigin) {
    RegularityQuery qy;
    qy.d = 1;
    qy.p = 4;
    qy.q = 8;
    const std::string csv = region_csv({{"cli", qy}});
    std::istringstream in(csv);
    std::string header, first;
    std::getline(in, header);
    std::getline(in, first);
    EXPECT_EQ(header, "beta,gamma_max,theorem,d,p,q,alpha,theta,m,run");
    EXPECT_EQ(first.rfind("0,0.25,prop32,1,4,8,2,,,cli", 0), 0u) << first;
}

TEST(Export, MissingRunIsAnIoError) {
    std::ostringstream out;
    EXPECT_HSPDE_ERROR(export_plotdata(test_support::scratch("harness-none") / "absent", PlotKind::region, out),
                       ErrorKind::io);
    EXPECT_HSPDE_ERROR(plot_kind_from_string("bars"), ErrorKind::invalid_argument);
}

TEST(Run, StageFailureLeavesAPartialManifest) {
    const auto dir = test_support::scratch("harness-partial");
    Json o = quick_overrides(dir);
    // m = 2 violates m > max{2,d}
    o["noise"] = {{"m", 2}};
    o["query"] = {{"m", 2}, {"p", 4}};
    try {
        run_experiment(load_config(Json::object(), o));
        ADD_FAILURE() << "expected a hypothesis error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::hypothesis) << e.what();
    }
    const Json m = read_manifest(dir);
    EXPECT_FALSE(m.at("pass").get<bool>());
    const auto& stages = m.at("stages");
    ASSERT_EQ(stages.size(), 2u);
    EXPECT_EQ(stages[0].at("status"), "ok");
    EXPECT_EQ(stages[1].at("stage"), "validate");
    EXPECT_EQ(stages[1].at("status"), "failed");
    EXPECT_NE(stages[1].at("message").get<std::string>().find("m > max{2,d}"), std::string::npos);
}

TEST(Run, OperatorCsvOverridesThePreset) {
    const auto dir = test_support::scratch("harness-csv");
    const auto csv = dir / "op.csv";
    {
        std::ofstream out(csv);
        out << "xi,a,b,c\n";
        for (int j = 0; j < 63; ++j) {
            out << fmt((j + 1.0) / 64.0) << ",1.5,0,0\n";
        }
    }
    Json o = {{"domain", {{"dim", 1}, {"grid_size", 63}, {"modes", 63}}},
              {"operator", {{"csv", csv.string()}}},
              {"plan", {{"seed", 1}}}};
    const auto c = load_config(o);
    const auto b = build_problem(c);
    // a = 1.5 scales the finite-difference Laplacian
    const double h = 1.0 / 64.0;
    EXPECT_NEAR(b.sys->eigenvalues()[0].real(), 1.5 * 4.0 / (h * h) * std::pow(std::sin(std::numbers::pi * h / 2.0), 2),
                1e-8);
}
