#include "habitretire/simulator.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <memory>

using namespace habitretire;

namespace {

const PolicyEngine& engine(const std::string& name) {
    static std::map<std::string, std::unique_ptr<PolicyEngine>> cache;
    auto& slot = cache[name];
    if (!slot) {
        const Model m(preset(name));
        const TimeGrid tg = TimeGrid::uniform(0.0, m.params().T1, 20);
        BoundarySolverOptions bo;
        bo.refine = 10;
        FbpOptions fo;
        fo.substeps = 10;
        slot = std::make_unique<PolicyEngine>(m, solve_boundary(m, tg, bo), solve_lcp(m, Grid2D::for_model(m, tg, 1600), fo));
    }
    return *slot;
}

SimConfig small_config(const std::string& name, std::size_t n_paths = 400) {
    SimConfig c;
    c.n_paths = n_paths;
    c.dt = 0.05;
    c.seed = 7;
    c.initial = PrimalState{0.0, name == "gamma15" ? 34.0 : 10.0, 0.5, 1.0};
    return c;
}

class BothPresets : public ::testing::TestWithParam<const char*> {
protected:
    const PolicyEngine& pe() const { return engine(GetParam()); }
};

/// Classical RK4 for dh/ds = alpha (chat + h) - beta h.
double habit_rk4(double h, double chat, double alpha, double beta, double dt, int n) {
    auto f = [&](double v) { return alpha * (chat + v) - beta * v; };
    const double s = dt / n;
    for (int i = 0; i < n; ++i) {
        const double k1 = f(h), k2 = f(h + 0.5 * s * k1), k3 = f(h + 0.5 * s * k2), k4 = f(h + s * k3);
        h += s / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    return h;
}

}  // namespace

INSTANTIATE_TEST_SUITE_P(Presets, BothPresets, ::testing::Values("gamma05", "gamma15"));

TEST(HabitUpdate, NoSurplusGivesPureExponential) {
    for (double dt : {0.01, 0.5, 3.0}) EXPECT_DOUBLE_EQ(habit_update(2.0, 0.0, 0.3, 0.5, dt), 2.0 * std::exp(-0.2 * dt));
}

TEST(HabitUpdate, MatchesOdeIntegration) {
    for (double chat : {0.1, 1.0, 7.5}) {
        for (double dt : {0.01, 0.25, 2.0}) {
            const double ref = habit_rk4(1.3, chat, 0.3, 0.5, dt, 2000);
            EXPECT_NEAR(habit_update(1.3, chat, 0.3, 0.5, dt), ref, 1e-12 * ref) << chat << " " << dt;
        }
    }
    EXPECT_NEAR(habit_update(1.0, 2.0, 0.4, 0.4, 1.5), habit_rk4(1.0, 2.0, 0.4, 0.4, 1.5, 2000), 1e-12);
}

TEST(PathRng, SplitmixSeparatesPaths) {
    auto a = detail::path_rng(1, 0), b = detail::path_rng(1, 1), c = detail::path_rng(1, 0);
    EXPECT_NE(a(), b());
    auto a2 = detail::path_rng(1, 0);
    EXPECT_EQ(c(), a2());
}

TEST_P(BothPresets, DeterministicAndThreadInvariant) {
    SimConfig c = small_config(GetParam(), 200);
    const SimReport r1 = simulate(pe(), c);
    const SimReport r2 = simulate(pe(), c);
    c.threads = 3;
    const SimReport r3 = simulate(pe(), c);
    for (const SimReport* r : {&r2, &r3}) {
        EXPECT_EQ(r->habit_lhs.mean, r1.habit_lhs.mean);
        EXPECT_EQ(r->budget_gap.mean, r1.budget_gap.mean);
        EXPECT_EQ(r->tau.mean, r1.tau.mean);
        EXPECT_EQ(r->tau_histogram.counts, r1.tau_histogram.counts);
        EXPECT_EQ(r->stop_time_mismatch, r1.stop_time_mismatch);
    }
    c.seed = 8;
    EXPECT_NE(simulate(pe(), c).habit_lhs.mean, r1.habit_lhs.mean);
}

TEST_P(BothPresets, RetiredAtStartStopsImmediately) {
    SimConfig c = small_config(GetParam(), 100);
    const TimeCoefficients c0 = pe().coefficients(0.0);
    c.initial.x = c0.pT * c.initial.h + 2.0 * c0.G_star * c.initial.w;
    const SimReport r = simulate(pe(), c);
    EXPECT_EQ(r.tau.mean, 0.0);
    EXPECT_EQ(r.tau_histogram.counts[0], 100u);
    EXPECT_EQ(r.stop_time_mismatch, 0.0);
    EXPECT_EQ(r.violations.total(), 0u);
}

TEST_P(BothPresets, NoViolationsAndBudgetHolds) {
    const SimReport r = simulate(pe(), small_config(GetParam(), 2000));
    EXPECT_EQ(r.violations.total(), 0u);
    EXPECT_EQ(r.violations.stopped, 0u);
    EXPECT_LT(std::abs(r.budget_gap.mean), 3.0 * r.budget_gap.se + 1e-9 * (1.0 + std::abs(r.habit_lhs.mean)))
        << "z=" << r.budget_gap.z_score();
}

TEST_P(BothPresets, DumpedPathsRespectHabitFloor) {
    SimConfig c = small_config(GetParam(), 50);
    c.dump_paths = 5;
    const SimReport r = simulate(pe(), c);
    ASSERT_FALSE(r.paths.empty());
    std::size_t ids = 0;
    for (const PathRow& row : r.paths) {
        EXPECT_GT(row.h, 0.0);
        if (row.t < pe().model().params().T) {
            EXPECT_GE(row.c, row.h);
        }
        ids = std::max(ids, row.path_id + 1);
    }
    EXPECT_EQ(ids, 5u);
}

TEST_P(BothPresets, RetirementMassAtDeadlineGrowsAsWealthFalls) {
    const TimeCoefficients c0 = pe().coefficients(0.0);
    std::vector<double> frac;
    for (double share : {0.97, 0.9, 0.8}) {
        SimConfig c = small_config(GetParam(), 1000);
        c.initial.x = c0.pT * c.initial.h - c0.q * c.initial.w + share * (c0.G_star + c0.q) * c.initial.w;
        const SimReport r = simulate(pe(), c);
        frac.push_back(double(r.tau_histogram.at_T1) / c.n_paths);
    }
    EXPECT_LT(frac[0], frac[1]);
    EXPECT_LT(frac[1], frac[2]);
}

TEST_P(BothPresets, HabitReductionIdentity) {
    const HabitIdentityStats st = check_habit_reduction(pe(), small_config(GetParam(), 2000));
    EXPECT_TRUE(st.within(3.0)) << "gap=" << st.gap.mean << " se=" << st.gap.se;
    EXPECT_GT(st.lhs.mean, 0.0);
}

TEST(Simulator, RejectsBadConfigs) {
    const PolicyEngine& pe = engine("gamma15");
    SimConfig c = small_config("gamma15", 10);
    c.dt = 0.3;
    EXPECT_THROW(simulate(pe, c), DomainError);
    c.dt = 0.0;
    EXPECT_THROW(simulate(pe, c), DomainError);
    c = small_config("gamma15", 0);
    EXPECT_THROW(simulate(pe, c), DomainError);
    c = small_config("gamma15", 10);
    c.initial.t = 20.0;
    EXPECT_THROW(simulate(pe, c), DomainError);
    c = small_config("gamma15", 10);
    c.initial.w = 0.0;
    EXPECT_THROW(simulate(pe, c), DomainError);
    c = small_config("gamma15", 10);
    c.initial.x = -100.0;
    EXPECT_THROW(simulate(pe, c), InfeasibleState);
}

TEST(MeanSE, MatchesDirectFormula) {
    const MeanSE s = detail::mean_se({1.0, 2.0, 3.0, 4.0});
    EXPECT_DOUBLE_EQ(s.mean, 2.5);
    EXPECT_NEAR(s.se, std::sqrt(5.0 / 3.0 / 4.0), 1e-15);
    EXPECT_EQ(s.n, 4u);
}
