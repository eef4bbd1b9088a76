#include "habitretire/config.hpp"
#include "habitretire/csv.hpp"
#include "habitretire/products.hpp"

#include <gtest/gtest.h>

#include "json.hpp"

#include <cstdlib>
#include <random>
#include <sstream>

using namespace habitretire;
using nlohmann::json;

namespace {

std::vector<std::string> problems_of(const json& j, const std::string& override_preset = {}) {
    try {
        parse_config(j, override_preset);
    } catch (const ConfigError& e) {
        return e.problems();
    }
    return {};
}

bool mentions(const std::vector<std::string>& probs, const std::string& needle) {
    for (const auto& p : probs)
        if (p.find(needle) != std::string::npos) return true;
    return false;
}

ScenarioConfig tiny(const std::string& preset_name) {
    json j = {{"preset", preset_name}, {"grids", {{"n_steps", 10}, {"refine", 4}, {"nz", 800}, {"substeps", 4}}}};
    return parse_config(j);
}

ProductRequest request(const std::string& text) {
    std::vector<std::string> errs;
    auto r = parse_product(text, errs);
    EXPECT_TRUE(errs.empty()) << text;
    return *r;
}

std::size_t column(const Table& t, const std::string& name) {
    for (std::size_t i = 0; i < t.columns.size(); ++i)
        if (t.columns[i] == name) return i;
    ADD_FAILURE() << "missing column " << name;
    return 0;
}

double num(const Cell& c) { return std::get<double>(c); }

}  // namespace

TEST(FormatDouble, RoundTripsAndSpecials) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> U(-30.0, 30.0);
    for (int i = 0; i < 2000; ++i) {
        const double v = std::exp(U(rng)) * (i % 2 ? -1.0 : 1.0);
        EXPECT_EQ(std::strtod(format_double(v).c_str(), nullptr), v);
    }
    EXPECT_EQ(format_double(0.5), "0.5");
    EXPECT_EQ(format_double(8.0), "8");
    EXPECT_EQ(format_double(std::nan("")), "nan");
    EXPECT_EQ(format_double(-INFINITY), "-inf");
}

TEST(Fnv1a, KnownVectors) {
    EXPECT_EQ(hex64(fnv1a64("")), "cbf29ce484222325");
    EXPECT_EQ(hex64(fnv1a64("a")), "af63dc4c8601ec8c");
    EXPECT_EQ(hex64(fnv1a64("foobar")), "85944171f73967e8");
}

TEST(Csv, WritesProvenanceHeaderAndRows) {
    Table t{{"a", "b", "c"}, {}};
    t.add({1.5, 2L, std::string("retire")});
    EXPECT_THROW(t.add({1.0}), Error);
    std::ostringstream with, without;
    write_csv(with, t, "habitretire v product=x");
    write_csv(without, t);
    EXPECT_EQ(with.str(), "# habitretire v product=x\na,b,c\n1.5,2,retire\n");
    EXPECT_EQ(without.str(), "a,b,c\n1.5,2,retire\n");
}

TEST(Config, DefaultsFromEmptyObject) {
    const ScenarioConfig c = parse_config(json::object());
    EXPECT_EQ(c.preset, "gamma15");
    EXPECT_EQ(c.model.gamma, 1.5);
    EXPECT_EQ(c.grids.n_steps, 50);
    EXPECT_EQ(c.grids.refine, 20);
    EXPECT_EQ(c.grids.nz, 6400);
    EXPECT_EQ(c.grids.substeps, 20);
    EXPECT_FALSE(c.has_sim);
    EXPECT_TRUE(c.provenance);
    EXPECT_TRUE(c.outputs.empty());
    EXPECT_EQ(c.sim.initial.x, 34.0);
    EXPECT_EQ(parse_config(json::object(), "gamma05").sim.initial.x, 10.0);
}

TEST(Config, OverridesApply) {
    const json j = {
        {"preset", "gamma15"},
        {"model", {{"alpha", 0.25}, {"leisure", {{"type", "exponential"}, {"epsilon0", 0.05}}}}},
        {"grids", {{"nz", 1200}}},
        {"sim", {{"n_paths", 77}, {"dt", 0.02}, {"seed", 5}, {"initial", {{"x", 40.0}}}, {"threads", 2}}},
        {"outputs", {"dual_boundary", "c_surface@t=8"}},
        {"provenance", false}};
    const ScenarioConfig c = parse_config(j, "gamma05");
    EXPECT_EQ(c.preset, "gamma05");
    EXPECT_EQ(c.model.gamma, 0.5);
    EXPECT_EQ(c.model.alpha, 0.25);
    EXPECT_EQ(std::get<ExponentialLeisure>(c.model.leisure).epsilon0, 0.05);
    EXPECT_EQ(c.grids.nz, 1200);
    EXPECT_EQ(c.grids.n_steps, 50);
    EXPECT_TRUE(c.has_sim);
    EXPECT_EQ(c.sim.n_paths, 77u);
    EXPECT_EQ(c.sim.dt, 0.02);
    EXPECT_EQ(c.sim.seed, 5u);
    EXPECT_EQ(c.sim.initial.x, 40.0);
    EXPECT_EQ(c.sim.initial.h, 0.5);
    EXPECT_EQ(c.sim.threads, 2u);
    ASSERT_EQ(c.outputs.size(), 2u);
    EXPECT_EQ(c.outputs[1].arg("t", 0.0), 8.0);
    EXPECT_FALSE(c.provenance);
}

TEST(Config, ConstantLeisure) {
    const ScenarioConfig c = parse_config({{"model", {{"leisure", {{"type", "constant"}, {"level", 1.2}}}}}});
    EXPECT_EQ(std::get<ConstantLeisure>(c.model.leisure).level, 1.2);
}

TEST(Config, CollectsEveryProblem) {
    const json j = {
        {"preset", "gamma99"},
        {"colour", "red"},
        {"model", {{"gamma", "high"}, {"leisure", {{"type", "step"}}}}},
        {"grids", {{"nz", 10}, {"refine", 1.5}}},
        {"sim", {{"dt", -1.0}, {"through_T", 3}}},
        {"outputs", {"c_surface@t=x", "nonsense", "h_curve@q=1", 4}}};
    const auto probs = problems_of(j);
    EXPECT_TRUE(mentions(probs, "unknown preset 'gamma99'"));
    EXPECT_TRUE(mentions(probs, "unknown key 'colour'"));
    EXPECT_TRUE(mentions(probs, "model.gamma: expected a number"));
    EXPECT_TRUE(mentions(probs, "model.leisure.type"));
    EXPECT_TRUE(mentions(probs, "grids.nz: must be at least 100"));
    EXPECT_TRUE(mentions(probs, "grids.refine: expected an integer"));
    EXPECT_TRUE(mentions(probs, "sim.dt: must be positive"));
    EXPECT_TRUE(mentions(probs, "sim.through_T: expected true or false"));
    EXPECT_TRUE(mentions(probs, "is not a number"));
    EXPECT_TRUE(mentions(probs, "unknown product 'nonsense'"));
    EXPECT_TRUE(mentions(probs, "takes no argument 'q'"));
    EXPECT_TRUE(mentions(probs, "every entry must be a string"));
    EXPECT_GE(probs.size(), 12u);
}

TEST(Config, RangeProblemsReported) {
    EXPECT_TRUE(mentions(problems_of({{"model", {{"gamma", 1.0}}}}), "gamma = 1"));
    EXPECT_TRUE(mentions(problems_of({{"model", {{"T1", 30.0}}}}), "T1 must be smaller than T"));
    EXPECT_TRUE(mentions(problems_of(json::array()), "expected an object"));
}

TEST(Config, LoadFromMissingFile) {
    try {
        load_config("/nonexistent/habitretire.json");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_STREQ(e.kind(), "config_error");
        EXPECT_TRUE(mentions(e.problems(), "cannot open"));
    }
}

TEST(Products, ParseAndStem) {
    const ProductRequest r = request("h_curve@x=80,w=1,alpha=0.1;0.2;0.3");
    EXPECT_EQ(r.kind, "h_curve");
    EXPECT_EQ(r.list("alpha", {}), (std::vector<double>{0.1, 0.2, 0.3}));
    EXPECT_EQ(r.stem(), "h_curve_alpha0.1-0.2-0.3_w1_x80");
    EXPECT_EQ(request("xhw_plane@t=0;5;8").stem(), "xhw_plane_t0-5-8");
    EXPECT_EQ(request("dual_boundary").stem(), "dual_boundary");
    EXPECT_EQ(request("c_surface").arg("t", 8.0), 8.0);
    std::vector<std::string> errs;
    EXPECT_FALSE(parse_product("c_surface@t", errs));
    EXPECT_FALSE(parse_product("c_surface@t=", errs));
    EXPECT_EQ(errs.size(), 2u);
}

TEST(Products, NeedsAndLinspace) {
    EXPECT_FALSE(needs_of("dual_boundary").obstacle);
    EXPECT_TRUE(needs_of("dual_boundary").boundary);
    EXPECT_FALSE(needs_of("h_curve").boundary);
    EXPECT_TRUE(needs_of("c_surface").obstacle);
    const auto v = linspace(0.5, 2.0, 16);
    EXPECT_EQ(v.front(), 0.5);
    EXPECT_EQ(v.back(), 2.0);
    EXPECT_DOUBLE_EQ(v[1] - v[0], 0.1);
}

TEST(ParameterHash, StableAndSensitive) {
    const ModelParams p = preset("gamma15");
    const GridSettings g;
    EXPECT_EQ(parameter_hash(p, g), parameter_hash(preset("gamma15"), GridSettings{}));
    EXPECT_EQ(parameter_hash(p, g), hex64(fnv1a64(canonical_parameters(p, g))));
    ModelParams q = p;
    q.alpha = 0.31;
    EXPECT_NE(parameter_hash(q, g), parameter_hash(p, g));
    GridSettings h;
    h.nz = 3200;
    EXPECT_NE(parameter_hash(p, h), parameter_hash(p, g));
    EXPECT_NE(canonical_parameters(p, g).find("epsilon0=0.06;"), std::string::npos);
}

TEST(Scenario, BoundaryTables) {
    Scenario sc(tiny("gamma05"));
    sc.prepare(std::vector<ProductRequest>{request("dual_boundary")});
    const BoundaryCurve& zs = sc.boundary();
    const double g = sc.model().params().gamma;

    const Table db = sc.build(request("dual_boundary"))[0].table;
    EXPECT_EQ(db.columns, (std::vector<std::string>{"t", "z_star", "running_bound"}));
    EXPECT_EQ(db.rows.size(), 11u);
    for (const auto& row : db.rows) EXPECT_LE(num(row[1]), num(row[2]) * (1 + 1e-12));

    const Table yw = sc.build(request("yw_boundary@w=0.5;2"))[0].table;
    EXPECT_EQ(yw.rows.size(), 22u);
    for (const auto& row : yw.rows) {
        const double z = std::pow(num(row[2]), 1.0 / (1.0 - g)) * std::pow(num(row[1]), g / (1.0 - g));
        EXPECT_NEAR(z, zs.at(num(row[0])), 1e-12 * z);
    }

    const Table pl = sc.build(request("xhw_plane@t=0;5;8"))[0].table;
    ASSERT_EQ(pl.rows.size(), 3u);
    for (const auto& row : pl.rows) {
        const double t = num(row[0]);
        EXPECT_DOUBLE_EQ(num(row[1]), sc.model().habit_cost(t));
        EXPECT_DOUBLE_EQ(num(row[2]), retirement_multiple(sc.model(), zs, t));
        EXPECT_DOUBLE_EQ(num(row[3]), sc.model().wage_annuity(t));
    }

    const Table xs = sc.build(request("xh_slice@w=1.5,t=5"))[0].table;
    EXPECT_EQ(xs.rows.size(), 21u);
    const double G5 = retirement_multiple(sc.model(), zs, 5.0), p5 = sc.model().habit_cost(5.0);
    for (const auto& row : xs.rows) EXPECT_DOUBLE_EQ(num(row[3]), p5 * num(row[2]) + G5 * 1.5);

    EXPECT_THROW(sc.build(request("xhw_plane@t=25")), DomainError);
    EXPECT_THROW(sc.engine(), Error);
}

TEST(Scenario, PolicySurfacesMatchEngine) {
    Scenario sc(tiny("gamma15"));
    sc.prepare(std::vector<ProductRequest>{request("c_surface")});
    const PolicyEngine& pe = sc.engine();
    const Table cs = sc.build(request("c_surface@t=8"))[0].table;
    EXPECT_EQ(cs.columns, (std::vector<std::string>{"defacto_wealth", "w", "c_star", "region"}));
    ASSERT_GT(cs.rows.size(), 500u);
    const TimeCoefficients c8 = pe.coefficients(8.0);
    std::size_t retire = 0, cont = 0;
    for (const auto& row : cs.rows) {
        const double d = num(row[0]), w = num(row[1]);
        const std::string region = std::get<std::string>(row[3]);
        EXPECT_EQ(region, to_string(pe.classify(c8, d + c8.pT, 1.0, w)));
        EXPECT_GT(num(row[2]), 0.0);
        (region == "retire" ? retire : cont)++;
    }
    EXPECT_GT(retire, 0u);
    EXPECT_GT(cont, 0u);

    const Table ps = sc.build(request("pi_surface@t=8,h=2"))[0].table;
    const std::size_t ix = column(ps, "x"), ip = column(ps, "pi_star"), ir = column(ps, "pi_ratio");
    for (const auto& row : ps.rows) EXPECT_DOUBLE_EQ(num(row[ir]), num(row[ip]) / num(row[ix]));

    const Table wz = sc.build(request("wz_slice@t=8"))[0].table;
    EXPECT_EQ(wz.rows.size(), 301u);
    const double zs = sc.boundary().at(8.0);
    for (const auto& row : wz.rows) {
        const double z = num(row[0]);
        if (z > zs * 1.05) {
            EXPECT_NEAR(num(row[1]), num(row[2]), 1e-9 * std::abs(num(row[2])));
        }
    }
}

TEST(Scenario, DeterministicRebuildAndProvenance) {
    const ScenarioConfig cfg = tiny("gamma05");
    Scenario a(cfg), b(cfg);
    const ProductRequest r = request("c_surface@t=0");
    a.prepare(std::vector<ProductRequest>{r});
    b.prepare(std::vector<ProductRequest>{r});
    std::ostringstream sa, sb;
    write_csv(sa, a.build(r)[0].table, a.provenance(r, "v1"));
    write_csv(sb, b.build(r)[0].table, b.provenance(r, "v1"));
    EXPECT_EQ(sa.str(), sb.str());
    const std::string prov = a.provenance(r, "v1");
    EXPECT_EQ(prov, "habitretire v1 product=c_surface@t=0 preset=gamma05 params=" + parameter_hash(cfg.model, cfg.grids));
    EXPECT_NE(a.provenance(request("simulation"), "v1").find(" seed="), std::string::npos);
}

TEST(Scenario, AssumptionViolationPropagates) {
    ScenarioConfig cfg = tiny("gamma15");
    cfg.model.mu_w = 0.2;
    EXPECT_THROW(Scenario{cfg}, AssumptionViolation);
}

TEST(Scenario, AlphaCurves) {
    ScenarioConfig cfg = tiny("gamma15_benchmark");
    Scenario sc(cfg);
    const Table h = sc.build(request("h_curve@x=80,w=1,alpha=0.1;0.3"))[0].table;
    EXPECT_EQ(h.rows.size(), 22u);
    for (std::size_t i = 0; i < 11; ++i) EXPECT_GT(num(h.rows[i][2]), num(h.rows[11 + i][2])) << i;
    const Table x = sc.build(request("x_curve@h=6,w=1,alpha=0.2"))[0].table;
    EXPECT_EQ(x.columns, (std::vector<std::string>{"alpha", "t", "x_star"}));
    EXPECT_EQ(x.rows.size(), 11u);
}
