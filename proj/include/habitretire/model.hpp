#pragma once

#include "habitretire/error.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace habitretire {

/// Leisure multiplier K(t) = exp(epsilon0 * gamma_tilde * (T - t)).
struct ExponentialLeisure {
    double epsilon0 = 0.06;
};

/// Constant leisure multiplier K(t) = level.
struct ConstantLeisure {
    double level = 1.0;
};

using LeisureSpec = std::variant<ExponentialLeisure, ConstantLeisure>;

/// Market, preference, habit and wage constants.
struct ModelParams {
    double r = 0.01;         ///< risk-free rate
    double mu = 0.05;        ///< stock drift
    double sigma = 0.22;     ///< stock volatility
    double rho = 0.01;       ///< subjective discount rate
    double gamma = 1.5;      ///< relative risk aversion
    double alpha = 0.3;      ///< habit accumulation weight
    double beta = 0.5;       ///< habit decay rate
    double mu_w = 0.01;      ///< wage drift
    double sigma_w = 0.1;    ///< wage volatility
    double T = 21.0;         ///< planning horizon
    double T1 = 20.0;        ///< mandatory retirement time
    LeisureSpec leisure = ExponentialLeisure{};

    /// Basic range checks that hold for every usable parameter set.
    void check_ranges() const {
        auto fail = [](const std::string& msg, double v) {
            std::ostringstream os;
            os << msg << " (got " << v << ")";
            throw UnsupportedParameter(os.str());
        };
        if (!(sigma > 0.0)) fail("sigma must be positive", sigma);
        if (!(gamma > 0.0)) fail("gamma must be positive", gamma);
        if (gamma == 1.0) fail("gamma = 1 (log utility) is not supported", gamma);
        if (!(alpha >= 0.0)) fail("alpha must be non-negative", alpha);
        if (!(beta > 0.0)) fail("beta must be positive", beta);
        if (!(sigma_w >= 0.0)) fail("sigma_w must be non-negative", sigma_w);
        if (!(T1 > 0.0)) fail("T1 must be positive", T1);
        if (!(T1 < T)) fail("T1 must be smaller than T", T1);
        if (const auto* c = std::get_if<ConstantLeisure>(&leisure); c && !(c->level > 0.0))
            fail("constant leisure level must be positive", c->level);
    }
};

enum class Regime { gamma_above_1, gamma_below_1 };

inline const char* to_string(Regime r) {
    return r == Regime::gamma_above_1 ? "gamma_above_1" : "gamma_below_1";
}

/// Drift and diffusion of the reduced dual state Z under the tilted measure.
struct ZCoefficients {
    double mu_z = 0.0;
    double sigma_z = 0.0;
    bool degenerate = false;  ///< sigma_z == 0
};

/// Constants derived from ModelParams.
struct DerivedParams {
    double kappa = 0.0;        ///< market price of risk
    double vartheta = 0.0;     ///< -r + mu_w - kappa * sigma_w
    double gamma_tilde = 0.0;  ///< (1 - gamma) / gamma
    double sigma_z = 0.0;
    double mu_z = 0.0;
    double h_rate = 0.0;       ///< exponent rate inside the H integral
};

/// Computes (mu_z, sigma_z) for Z = Y^{1/(1-gamma)} W^{gamma/(1-gamma)}.
///
/// With dY/Y = (rho - r) dt - kappa dB and dW/W = mu_w dt + sigma_w dB,
/// Ito on ln Z gives diffusion sigma_z = (gamma sigma_w - kappa)/(1 - gamma).
/// Under the tilt dB~ = dB - (sigma_w - kappa) dt the drift gains
/// sigma_z (sigma_w - kappa), and the ln Z drift is converted to a Z drift
/// by adding sigma_z^2 / 2.
inline ZCoefficients compute_z_coeffs(const ModelParams& p) {
    if (p.gamma == 1.0) throw UnsupportedParameter("z_coeffs: gamma = 1 is not supported");
    const double kappa = (p.mu - p.r) / p.sigma;
    const double a = 1.0 / (1.0 - p.gamma);
    const double sigma_z = (p.gamma * p.sigma_w - kappa) * a;
    const double log_drift = a * ((p.rho - p.r - 0.5 * kappa * kappa)
                                  + p.gamma * (p.mu_w - 0.5 * p.sigma_w * p.sigma_w));
    ZCoefficients zc;
    zc.sigma_z = sigma_z;
    zc.mu_z = log_drift + sigma_z * (p.sigma_w - kappa) + 0.5 * sigma_z * sigma_z;
    zc.degenerate = (sigma_z == 0.0);
    return zc;
}

/// (exp(rate * len) - 1) / rate with a Taylor branch for tiny rate * len.
inline double exp_integral(double rate, double len) {
    const double x = rate * len;
    if (std::abs(x) < 1e-8) return len * (1.0 + 0.5 * x + x * x / 6.0);
    return std::expm1(x) / rate;
}

/// Whether assumption gates run when a Model is constructed.
enum class Validation { enforce, skip };

/// Immutable model: parameters, derived constants and deterministic time functions.
class Model {
public:
    explicit Model(ModelParams p, Validation v = Validation::enforce) : p_(std::move(p)) {
        p_.check_ranges();
        d_.kappa = (p_.mu - p_.r) / p_.sigma;
        d_.vartheta = -p_.r + p_.mu_w - d_.kappa * p_.sigma_w;
        d_.gamma_tilde = (1.0 - p_.gamma) / p_.gamma;
        const ZCoefficients zc = compute_z_coeffs(p_);
        d_.sigma_z = zc.sigma_z;
        d_.mu_z = zc.mu_z;
        const double gt = d_.gamma_tilde;
        const double k2 = d_.kappa * d_.kappa;
        d_.h_rate = -p_.rho * (1.0 + gt) + gt * (0.5 * k2 + p_.r) + 0.5 * gt * gt * k2;
        if (v == Validation::enforce) check_assumptions();
    }

    const ModelParams& params() const noexcept { return p_; }
    const DerivedParams& derived() const noexcept { return d_; }

    Regime regime() const noexcept {
        return p_.gamma > 1.0 ? Regime::gamma_above_1 : Regime::gamma_below_1;
    }

    ZCoefficients z_coeffs() const {
        return ZCoefficients{d_.mu_z, d_.sigma_z, d_.sigma_z == 0.0};
    }

    /// q(t): present value per unit wage of working until T1.
    double wage_annuity(double t) const {
        t = clamp_domain(t, 0.0, p_.T1, "wage_annuity");
        return exp_integral(d_.vartheta, p_.T1 - t);
    }

    /// pT(t): cost of sustaining one unit of habit until T.
    double habit_cost(double t) const {
        t = clamp_domain(t, 0.0, p_.T, "habit_cost");
        return exp_integral(p_.alpha - p_.beta - p_.r, p_.T - t);
    }

    /// 1 + alpha * pT(t).
    double mu_T(double t) const { return 1.0 + p_.alpha * habit_cost(t); }

    /// Leisure multiplier K(t); defined on [0, T] because H integrates it past T1.
    double leisure_K(double t) const {
        t = clamp_domain(t, 0.0, p_.T, "leisure_K");
        return K_unchecked(t);
    }

    /// Delta(t) = (1 - K(t)^{1/gamma}) / gamma_tilde on [0, T1].
    double leisure_Delta(double t) const {
        t = clamp_domain(t, 0.0, p_.T1, "leisure_Delta");
        return (1.0 - std::pow(K_unchecked(t), 1.0 / p_.gamma)) / d_.gamma_tilde;
    }

    /// Integrand of H at u for a start time t.
    double H_integrand(double t, double u) const {
        const double gt = d_.gamma_tilde;
        return std::pow(K_unchecked(u), 1.0 / p_.gamma) / gt
             * std::pow(1.0 + p_.alpha * exp_integral(p_.alpha - p_.beta - p_.r, p_.T - u), -gt)
             * std::exp(d_.h_rate * (u - t));
    }

    /// H(t) with post-retirement dual value V~(t, z) = H(t) z^{-gamma_tilde}.
    double post_value_H(double t) const {
        t = clamp_domain(t, 0.0, p_.T, "post_value_H");
        if (t >= p_.T) return 0.0;
        auto f = [this, t](double u) { return H_integrand(t, u); };
        return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, t, p_.T, 15, 1e-14);
    }

    /// Lower (gamma > 1) or upper (gamma < 1) bound (-Delta(t))^{1/gamma_tilde} / mu_T(t).
    double running_bound(double t) const {
        const double delta = leisure_Delta(t);
        if (!(delta < 0.0)) throw AssumptionViolation("running_bound: Delta(t) must be negative", delta);
        return std::pow(-delta, 1.0 / d_.gamma_tilde) / mu_T(t);
    }

    /// Throws AssumptionViolation when vartheta >= 0 or Delta is not negative on [0, T1].
    void check_assumptions() const {
        if (!(d_.vartheta < 0.0))
            throw AssumptionViolation("vartheta = -r + mu_w - kappa*sigma_w must be negative", d_.vartheta);
        constexpr int n = 2000;
        double sup = -std::numeric_limits<double>::infinity();
        for (int i = 0; i <= n; ++i) {
            const double t = p_.T1 * i / n;
            const double d = leisure_Delta(t);
            if (!std::isfinite(d)) throw AssumptionViolation("Delta(t) is not finite", d);
            sup = std::max(sup, d);
        }
        if (!(sup < 0.0))
            throw AssumptionViolation("Delta(t) must stay strictly negative on [0, T1]; sup", sup);
    }

private:
    double K_unchecked(double t) const {
        if (const auto* e = std::get_if<ExponentialLeisure>(&p_.leisure))
            return std::exp(e->epsilon0 * d_.gamma_tilde * (p_.T - t));
        return std::get<ConstantLeisure>(p_.leisure).level;
    }

    static double clamp_domain(double t, double lo, double hi, const char* what) {
        const double slack = 1e-12 * std::max(1.0, std::abs(hi));
        if (!(t >= lo - slack && t <= hi + slack)) {
            std::ostringstream os;
            os << what << ": t = " << t << " outside [" << lo << ", " << hi << "]";
            throw DomainError(os.str());
        }
        return std::min(std::max(t, lo), hi);
    }

    ModelParams p_;
    DerivedParams d_;
};

/// Named parameter presets.
///
/// `gamma05` / `gamma15` carry the basic parameter table with (alpha, beta) =
/// (0.3, 0.5); the `_benchmark` variants use (0.2, 0.4).
inline ModelParams preset(std::string_view name) {
    ModelParams p;
    if (name == "gamma15") {
        p.gamma = 1.5;
    } else if (name == "gamma05") {
        p.gamma = 0.5;
    } else if (name == "gamma15_benchmark") {
        p.gamma = 1.5;
        p.alpha = 0.2;
        p.beta = 0.4;
    } else if (name == "gamma05_benchmark") {
        p.gamma = 0.5;
        p.alpha = 0.2;
        p.beta = 0.4;
    } else {
        throw UnsupportedParameter("unknown preset '" + std::string(name) + "'");
    }
    return p;
}

inline std::vector<std::string> preset_names() {
    return {"gamma05", "gamma15", "gamma05_benchmark", "gamma15_benchmark"};
}

}  // namespace habitretire
