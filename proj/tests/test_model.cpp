#include "habitretire/model.hpp"

#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <cmath>
#include <random>

using namespace habitretire;

namespace {

/// Composite Simpson rule with n (even) panels.
template <class F>
double simpson(F f, double a, double b, int n) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
    return s * h / 3.0;
}

double kappa_of(const ModelParams& p) { return (p.mu - p.r) / p.sigma; }

}  // namespace

TEST(WageAnnuity, VanishesAtRetirement) {
    const Model m(preset("gamma15"));
    EXPECT_EQ(m.wage_annuity(m.params().T1), 0.0);
}

TEST(WageAnnuity, ZeroRateGivesRemainingTime) {
    ModelParams p = preset("gamma15");
    p.mu_w = p.r + kappa_of(p) * p.sigma_w;  // vartheta = 0
    const Model m(p, Validation::skip);
    EXPECT_NEAR(m.wage_annuity(0.0), p.T1, 1e-12);
    EXPECT_NEAR(m.wage_annuity(5.0), p.T1 - 5.0, 1e-12);
}

TEST(WageAnnuity, MatchesQuadratureOfDefinition) {
    const Model m(preset("gamma05"));
    const auto& p = m.params();
    const double th = -p.r + p.mu_w - kappa_of(p) * p.sigma_w;
    for (double t : {0.0, 3.5, 12.0, 19.9}) {
        const double ref = simpson([&](double u) { return std::exp(th * (u - t)); }, t, p.T1, 2000);
        EXPECT_NEAR(m.wage_annuity(t), ref, 1e-12 * std::max(1.0, ref));
    }
}

TEST(WageAnnuity, DecreasingAndDomainChecked) {
    const Model m(preset("gamma15"));
    double prev = m.wage_annuity(0.0);
    for (int i = 1; i <= 100; ++i) {
        const double q = m.wage_annuity(0.2 * i);
        EXPECT_LT(q, prev);
        prev = q;
    }
    EXPECT_THROW(m.wage_annuity(-0.1), DomainError);
    EXPECT_THROW(m.wage_annuity(m.params().T1 + 0.1), DomainError);
}

TEST(HabitCost, VanishesAtHorizonAndDecreases) {
    const Model m(preset("gamma15"));
    EXPECT_EQ(m.habit_cost(m.params().T), 0.0);
    EXPECT_GT(m.habit_cost(0.0), m.habit_cost(10.0));
    EXPECT_THROW(m.habit_cost(m.params().T + 1.0), DomainError);
}

TEST(HabitCost, ZeroExponentGivesHorizon) {
    ModelParams p = preset("gamma15");
    p.alpha = 0.3;
    p.beta = 0.29;
    p.r = 0.01;  // alpha - beta - r = 0
    const Model m(p, Validation::skip);
    EXPECT_NEAR(m.habit_cost(0.0), p.T, 1e-10);
}

TEST(HabitCost, MatchesMonteCarloOfDefiningExpectation) {
    // pT(0) = E[int_0^T (m(u)/m(0)) xi(u) du] with m(u) = e^{(alpha - beta) u}.
    const Model m(preset("gamma15"));
    const auto& p = m.params();
    const double kappa = kappa_of(p);
    const int steps = 420, paths = 20000;
    const double dt = p.T / steps;
    std::mt19937_64 rng(11);
    std::normal_distribution<double> N(0.0, 1.0);
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < paths; ++i) {
        double B = 0.0, acc = 0.0, prev = 1.0;
        for (int k = 1; k <= steps; ++k) {
            B += std::sqrt(dt) * N(rng);
            const double u = k * dt;
            const double v = std::exp((p.alpha - p.beta) * u) * std::exp(-(p.r + 0.5 * kappa * kappa) * u - kappa * B);
            acc += 0.5 * (prev + v) * dt;
            prev = v;
        }
        sum += acc;
        sum2 += acc * acc;
    }
    const double mean = sum / paths;
    const double se = std::sqrt((sum2 / paths - mean * mean) / (paths - 1));
    EXPECT_LT(std::abs(mean - m.habit_cost(0.0)), 3.0 * se + 1e-4);
}

TEST(MuT, EqualsOneWithoutAccumulationOrAtHorizon) {
    ModelParams p = preset("gamma15");
    const Model m(p);
    EXPECT_EQ(m.mu_T(p.T), 1.0);
    EXPECT_GT(m.mu_T(0.0), 1.0);
    EXPECT_DOUBLE_EQ(m.mu_T(3.0), 1.0 + p.alpha * m.habit_cost(3.0));
    p.alpha = 0.0;
    const Model m0(p);
    for (double t : {0.0, 7.0, 21.0}) EXPECT_EQ(m0.mu_T(t), 1.0);
}

TEST(Leisure, DeltaMatchesHighPrecision) {
    using Big = boost::multiprecision::cpp_bin_float_50;
    const Model m(preset("gamma15"));
    const Big g = 1.5, gt = (Big(1) - g) / g;
    const Big K = exp(Big(0.06) * gt * Big(21));
    const Big ref = (Big(1) - pow(K, Big(1) / g)) / gt;
    EXPECT_NEAR(m.leisure_Delta(0.0), static_cast<double>(ref), 1e-14 * std::abs(static_cast<double>(ref)));
}

TEST(Leisure, DeltaNegativeForBothRegimes) {
    for (const char* name : {"gamma05", "gamma15"}) {
        const Model m(preset(name));
        for (int i = 0; i <= 40; ++i) EXPECT_LT(m.leisure_Delta(0.5 * i), 0.0) << name;
        EXPECT_NEAR(m.leisure_K(m.params().T), 1.0, 0.0);
    }
}

TEST(Leisure, UnitConstantLeisureViolatesDeltaBound) {
    ModelParams p = preset("gamma15");
    p.leisure = ConstantLeisure{1.0};
    const Model m(p, Validation::skip);
    EXPECT_EQ(m.leisure_Delta(3.0), 0.0);
    EXPECT_THROW(Model{p}, AssumptionViolation);
}

TEST(PostValueH, VanishesAtHorizonAndHasSignOfGammaTilde) {
    for (const char* name : {"gamma05", "gamma15"}) {
        const Model m(preset(name));
        EXPECT_EQ(m.post_value_H(m.params().T), 0.0);
        for (double t : {0.0, 10.0, 20.5}) EXPECT_GT(m.post_value_H(t) * m.derived().gamma_tilde, 0.0) << name;
    }
}

TEST(PostValueH, QuadratureConverged) {
    for (const char* name : {"gamma05", "gamma15"}) {
        const Model m(preset(name));
        for (double t : {0.0, 8.0, 20.0}) {
            const double ref = simpson([&](double u) { return m.H_integrand(t, u); }, t, m.params().T, 20000);
            EXPECT_NEAR(m.post_value_H(t), ref, 1e-8 * std::abs(ref)) << name << " t=" << t;
        }
    }
}

TEST(PostValueH, MatchesMonteCarloOfDualValue) {
    // V~(0, y) = E int_0^T e^{-rho u} K(u)^{1/gamma}/gt (mu_T(u) y e^{rho u} xi(u))^{-gt} du = H(0) y^{-gt}.
    const Model m(preset("gamma15"));
    const auto& p = m.params();
    const double kappa = kappa_of(p), gt = m.derived().gamma_tilde;
    const int steps = 420, paths = 20000;
    const double dt = p.T / steps;
    std::vector<double> det(steps + 1);
    for (int k = 0; k <= steps; ++k) {
        const double u = k * dt;
        det[k] = std::pow(m.leisure_K(u), 1.0 / p.gamma) / gt * std::pow(m.mu_T(u), -gt)
               * std::exp(-p.rho * u - gt * p.rho * u);
    }
    std::mt19937_64 rng(5);
    std::normal_distribution<double> N(0.0, 1.0);
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < paths; ++i) {
        double B = 0.0, acc = 0.5 * det[0];
        for (int k = 1; k <= steps; ++k) {
            B += std::sqrt(dt) * N(rng);
            const double u = k * dt;
            const double xi = std::exp(-(p.r + 0.5 * kappa * kappa) * u - kappa * B);
            acc += (k == steps ? 0.5 : 1.0) * det[k] * std::pow(xi, -gt);
        }
        acc *= dt;
        sum += acc;
        sum2 += acc * acc;
    }
    const double mean = sum / paths;
    const double se = std::sqrt((sum2 / paths - mean * mean) / (paths - 1));
    EXPECT_LT(std::abs(mean - m.post_value_H(0.0)), 3.0 * se + 1e-4 * std::abs(mean));
}

TEST(PostValueH, MertonCaseHasClosedForm) {
    ModelParams p = preset("gamma05");
    p.alpha = 0.0;
    p.leisure = ConstantLeisure{1.0};
    const Model m(p, Validation::skip);
    const double gt = m.derived().gamma_tilde, k = kappa_of(p);
    const double rate = -p.rho * (1 + gt) + gt * (0.5 * k * k + p.r) + 0.5 * gt * gt * k * k;
    for (double t : {0.0, 10.0}) EXPECT_NEAR(m.post_value_H(t), std::expm1(rate * (p.T - t)) / rate / gt, 1e-12);
}

TEST(ZCoefficients, MatchesGirsanovWeightedMonteCarlo) {
    for (const char* name : {"gamma05", "gamma15"}) {
        const ModelParams p = preset(name);
        const ZCoefficients zc = compute_z_coeffs(p);
        const double k = kappa_of(p), a = 1.0 / (1.0 - p.gamma), b = p.gamma / (1.0 - p.gamma);
        const double shift = p.sigma_w - k;
        std::mt19937_64 rng(3);
        std::normal_distribution<double> N(0.0, 1.0);
        const int n = 1000000;
        double sw = 0, s1 = 0, s2 = 0, sw2 = 0;
        std::vector<double> L(n), E(n);
        for (int i = 0; i < n; ++i) {
            const double B = N(rng);  // horizon 1
            L[i] = a * ((p.rho - p.r - 0.5 * k * k) - k * B) + b * ((p.mu_w - 0.5 * p.sigma_w * p.sigma_w) + p.sigma_w * B);
            E[i] = std::exp(shift * B - 0.5 * shift * shift);
            sw += E[i];
        }
        for (int i = 0; i < n; ++i) s1 += E[i] * L[i];
        const double mean = s1 / sw;
        for (int i = 0; i < n; ++i) {
            s2 += E[i] * (L[i] - mean) * (L[i] - mean);
            sw2 += E[i] * E[i] * (L[i] - mean) * (L[i] - mean);
        }
        const double var = s2 / sw;
        const double se_mean = std::sqrt(sw2) / sw;
        EXPECT_LT(std::abs(mean - (zc.mu_z - 0.5 * zc.sigma_z * zc.sigma_z)), 3.0 * se_mean) << name;
        EXPECT_NEAR(var, zc.sigma_z * zc.sigma_z, 0.01 * zc.sigma_z * zc.sigma_z) << name;
    }
}

TEST(ZCoefficients, WageRiskOffAndDegenerateCase) {
    ModelParams p = preset("gamma15");
    p.sigma_w = 0.0;
    EXPECT_DOUBLE_EQ(compute_z_coeffs(p).sigma_z, -kappa_of(p) / (1.0 - p.gamma));
    p = preset("gamma15");
    p.gamma = 2.0;
    p.sigma_w = kappa_of(p) / 2.0;
    const ZCoefficients zc = compute_z_coeffs(p);
    EXPECT_EQ(zc.sigma_z, 0.0);
    EXPECT_TRUE(zc.degenerate);
}

TEST(ModelParams, RejectsUnsupportedValues) {
    ModelParams p = preset("gamma15");
    p.gamma = 1.0;
    EXPECT_THROW(Model{p}, UnsupportedParameter);
    p = preset("gamma15");
    p.T1 = 22.0;
    EXPECT_THROW(Model{p}, UnsupportedParameter);
    p = preset("gamma15");
    p.sigma = 0.0;
    EXPECT_THROW(Model{p}, UnsupportedParameter);
    EXPECT_THROW(preset("gamma99"), UnsupportedParameter);
}

TEST(ModelParams, NonNegativeVarthetaReportsValue) {
    ModelParams p = preset("gamma05");
    p.mu_w = 0.2;
    try {
        Model m(p);
        FAIL() << "expected AssumptionViolation";
    } catch (const AssumptionViolation& e) {
        EXPECT_GT(e.value(), 0.0);
    }
}

TEST(ModelParams, PresetsCarrySwappedHorizons) {
    for (const auto& name : preset_names()) {
        const ModelParams p = preset(name);
        EXPECT_EQ(p.T, 21.0);
        EXPECT_EQ(p.T1, 20.0);
        EXPECT_NO_THROW(Model{p});
    }
    EXPECT_EQ(preset("gamma15_benchmark").alpha, 0.2);
    EXPECT_EQ(preset("gamma05").beta, 0.5);
}
