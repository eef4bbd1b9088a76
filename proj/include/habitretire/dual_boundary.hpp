#pragma once

#include "habitretire/error.hpp"
#include "habitretire/lognormal.hpp"
#include "habitretire/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

namespace habitretire {

/// Uniform time grid t0 = t_0 < ... < t_n = t_end.
struct TimeGrid {
    double t0 = 0.0;
    double t_end = 0.0;
    int n_steps = 0;
    std::vector<double> nodes;

    static TimeGrid uniform(double t0, double t_end, int n_steps) {
        if (n_steps < 1) throw DomainError("TimeGrid: n_steps must be at least 1");
        if (!(t_end > t0)) throw DomainError("TimeGrid: t_end must exceed t0");
        TimeGrid g{t0, t_end, n_steps, {}};
        g.nodes.resize(static_cast<std::size_t>(n_steps) + 1);
        for (int i = 0; i <= n_steps; ++i) g.nodes[i] = t0 + (t_end - t0) * i / n_steps;
        g.nodes.back() = t_end;
        return g;
    }

    double dt() const noexcept { return (t_end - t0) / n_steps; }
    std::size_t size() const noexcept { return nodes.size(); }
};

/// Boundary values on a time grid: z*(t_i) or G*(t_i).
struct BoundaryCurve {
    TimeGrid grid;
    std::vector<double> values;
    Regime regime = Regime::gamma_above_1;

    /// Interpolates linearly in ln(value) between nodes.
    double at(double t) const {
        const auto& nd = grid.nodes;
        if (t <= nd.front()) return values.front();
        if (t >= nd.back()) return values.back();
        const double pos = (t - grid.t0) / grid.dt();
        auto i = static_cast<std::size_t>(pos);
        if (i >= nd.size() - 1) i = nd.size() - 2;
        const double lam = (t - nd[i]) / (nd[i + 1] - nd[i]);
        return std::exp((1.0 - lam) * std::log(values[i]) + lam * std::log(values[i + 1]));
    }

    /// max_i |v_{i+1} - v_i| / dt.
    double lipschitz_witness() const {
        double best = 0.0;
        for (std::size_t i = 0; i + 1 < values.size(); ++i)
            best = std::max(best, std::abs(values[i + 1] - values[i]) / (grid.nodes[i + 1] - grid.nodes[i]));
        return best;
    }
};

/// z*(T1) = (-Delta(T1))^{1/gamma_tilde} / mu_T(T1).
inline double terminal_boundary(const Model& m) {
    const double T1 = m.params().T1;
    const double delta = m.leisure_Delta(T1);
    if (!(delta < 0.0)) throw AssumptionViolation("terminal_boundary: Delta(T1) must be negative", delta);
    return std::pow(-delta, 1.0 / m.derived().gamma_tilde) / m.mu_T(T1);
}

/// Side of z*(u) the integral-equation kernel integrates over (the continuation side).
inline Side continuation_side(Regime r) { return r == Regime::gamma_above_1 ? Side::below : Side::above; }

/// Side of z*(t) on which stopping is optimal.
inline Side exercise_side(Regime r) { return r == Regime::gamma_above_1 ? Side::above : Side::below; }

/// Integrand of the boundary integral equation at lag u - t.
inline double ie_kernel(const Model& m, double t, double z, double u, double zstar_u) {
    if (u < t || u > m.params().T1) throw DomainError("ie_kernel: need t <= u <= T1");
    const ReducedProcess proc = ReducedProcess::of(m);
    const double gt = m.derived().gamma_tilde;
    const Side side = continuation_side(m.regime());
    const double prob = proc.partial_moment(z, t, u, zstar_u, 0.0, side);
    const double moment = proc.partial_moment(z, t, u, zstar_u, -gt, side);
    return std::exp(m.derived().vartheta * (u - t))
         * (prob + m.leisure_Delta(u) * std::pow(m.mu_T(u), -gt) * moment);
}

struct BoundarySolverOptions {
    double tol = 1e-10;     ///< relative bracket width at which bisection stops
    int max_expansions = 60;
    int refine = 1;         ///< recursion runs on a grid `refine` times finer, sampled back on the nodes
};

namespace detail {

/// Discretized integral equation for one node, with lag tables shared across nodes.
class IntegralEquation {
public:
    IntegralEquation(const Model& m, const TimeGrid& grid) : grid_(grid) {
        const auto& d = m.derived();
        if (d.sigma_z == 0.0) throw DegenerateProcess("solve_boundary: sigma_z = 0");
        gt_ = d.gamma_tilde;
        side_ = continuation_side(m.regime());
        const std::size_t n = grid.size();
        const double dt = grid.dt();
        const double s2 = d.sigma_z * d.sigma_z;
        const double p = -gt_;
        lag_m_.resize(n);
        lag_s_.resize(n);
        lag_disc_.resize(n);
        lag_scale_.resize(n);
        for (std::size_t l = 0; l < n; ++l) {
            const double lag = dt * static_cast<double>(l);
            lag_m_[l] = (d.mu_z - 0.5 * s2) * lag;
            lag_s_[l] = std::abs(d.sigma_z) * std::sqrt(lag);
            lag_disc_[l] = std::exp(d.vartheta * lag);
            lag_scale_[l] = std::exp(p * lag_m_[l] + 0.5 * p * p * lag_s_[l] * lag_s_[l]);
        }
        coef_.resize(n);
        for (std::size_t j = 0; j < n; ++j)
            coef_[j] = m.leisure_Delta(grid.nodes[j]) * std::pow(m.mu_T(grid.nodes[j]), -gt_);
        log_zstar_.assign(n, 0.0);
    }

    void set_node(std::size_t j, double zstar) { log_zstar_[j] = std::log(zstar); }

    /// G(z) at node i using solved values at nodes j > i.
    ///
    /// The zero-lag term uses the right limit of the kernel, in which the
    /// probability of ending below the boundary started on it is one half.
    double operator()(std::size_t i, double z) const {
        const std::size_t n = grid_.size() - 1;
        const double dt = grid_.dt();
        const double lz = std::log(z);
        const double zp = std::pow(z, -gt_);
        double sum = 0.5 * dt * 0.5 * (1.0 + coef_[i] * zp);
        for (std::size_t j = i + 1; j <= n; ++j) {
            const std::size_t l = j - i;
            const double d0 = (log_zstar_[j] - lz - lag_m_[l]) / lag_s_[l];
            const double d1 = d0 + gt_ * lag_s_[l];
            const double sgn = side_ == Side::below ? 1.0 : -1.0;
            const double prob = normal_cdf(sgn * d0);
            const double mom = zp * lag_scale_[l] * normal_cdf(sgn * d1);
            const double w = (j == n) ? 0.5 * dt : dt;
            sum += w * lag_disc_[l] * (prob + coef_[j] * mom);
        }
        return sum;
    }

private:
    const TimeGrid& grid_;
    double gt_ = 0.0;
    Side side_ = Side::below;
    std::vector<double> lag_m_, lag_s_, lag_disc_, lag_scale_, coef_, log_zstar_;
};

}  // namespace detail

/// Discretized integral-equation residual G(z) at node i of a solved curve.
///
/// Uses the curve's values at later nodes and the trial z at node i.
inline double boundary_residual(const Model& m, const BoundaryCurve& curve, std::size_t i, double z) {
    detail::IntegralEquation ie(m, curve.grid);
    for (std::size_t j = i + 1; j < curve.grid.size(); ++j) ie.set_node(j, curve.values[j]);
    return ie(i, z);
}

/// Backward recursion on the integral equation; bisection in ln z at each node.
inline BoundaryCurve solve_boundary(const Model& m, const TimeGrid& grid,
                                    const BoundarySolverOptions& opt = {}) {
    if (opt.refine > 1) {
        BoundarySolverOptions inner = opt;
        inner.refine = 1;
        const BoundaryCurve fine = solve_boundary(
            m, TimeGrid::uniform(grid.t0, grid.t_end, grid.n_steps * opt.refine), inner);
        BoundaryCurve out{grid, std::vector<double>(grid.size()), fine.regime};
        for (std::size_t i = 0; i < grid.size(); ++i)
            out.values[i] = fine.values[i * static_cast<std::size_t>(opt.refine)];
        return out;
    }
    if (std::abs(grid.t_end - m.params().T1) > 1e-12 * std::max(1.0, m.params().T1))
        throw DomainError("solve_boundary: grid must end at T1");
    const Regime regime = m.regime();
    BoundaryCurve curve{grid, std::vector<double>(grid.size()), regime};
    detail::IntegralEquation ie(m, grid);
    const std::size_t n = grid.size() - 1;
    curve.values[n] = terminal_boundary(m);
    ie.set_node(n, curve.values[n]);

    // Moving by `into_cont` goes deeper into the continuation region.
    const double into_cont = regime == Regime::gamma_above_1 ? 0.5 : 2.0;
    for (std::size_t step = 0; step < n; ++step) {
        const std::size_t i = n - 1 - step;
        const double t = grid.nodes[i];
        const double rb = m.running_bound(t);

        double cont = rb;
        double g_cont = ie(i, cont);
        int k = 0;
        for (; g_cont <= 0.0 && k < opt.max_expansions; ++k) {
            cont *= into_cont;
            g_cont = ie(i, cont);
        }
        double stop = curve.values[i + 1];
        const bool stop_on_cont_side = regime == Regime::gamma_above_1 ? stop <= cont : stop >= cont;
        if (stop_on_cont_side) stop = cont / into_cont;
        double g_stop = ie(i, stop);
        int k2 = 0;
        for (; g_stop > 0.0 && k2 < opt.max_expansions; ++k2) {
            stop /= into_cont;
            g_stop = ie(i, stop);
        }
        if (g_cont <= 0.0 || g_stop > 0.0) {
            std::ostringstream os;
            os << "solve_boundary: no sign change at node " << i << " (t = " << t << "): G(" << cont
               << ") = " << g_cont << ", G(" << stop << ") = " << g_stop << ", running bound " << rb;
            throw SolverFailure(os.str());
        }
        double lo = std::log(std::min(cont, stop));
        double hi = std::log(std::max(cont, stop));
        const bool lo_is_cont = cont < stop;
        while (hi - lo > opt.tol) {
            const double mid = 0.5 * (lo + hi);
            const bool mid_cont = ie(i, std::exp(mid)) > 0.0;
            if (mid_cont == lo_is_cont) lo = mid; else hi = mid;
        }
        curve.values[i] = std::exp(0.5 * (lo + hi));
        ie.set_node(i, curve.values[i]);
    }
    return curve;
}

/// Constants of the auxiliary bound function
/// F^(z) = -1/vartheta - A z^{-g} + B z^{lambda_+} on (0, z_inf), 0 beyond.
///
/// For gamma < 1 the constants describe F(t, 1/z): g = -gamma_tilde and the
/// drift is sigma_z^2 - mu_z.
struct FhatConstants {
    double g = 0.0;            ///< exponent in the -A z^{-g} term
    double mu = 0.0;           ///< drift of the (possibly inverted) process
    double sigma = 0.0;        ///< |sigma_z|
    double vartheta = 0.0;
    double delta = 0.0;        ///< min over t of -Delta(t) mu_T(t)^{-gamma_tilde}
    double lambda_plus = 0.0;
    double A = 0.0;
    double B = 0.0;
    double z_inf = 0.0;
    bool inverted = false;
    bool condition_holds = false;

    double Q(double lam) const {
        return 0.5 * sigma * sigma * lam * lam + (mu - 0.5 * sigma * sigma) * lam + vartheta;
    }
    double value(double z) const {
        if (z >= z_inf) return 0.0;
        return -1.0 / vartheta - A * std::pow(z, -g) + B * std::pow(z, lambda_plus);
    }
    /// First and second z-derivatives of F^ on (0, z_inf).
    double d1(double z) const {
        if (z >= z_inf) return 0.0;
        return A * g * std::pow(z, -g - 1.0) + B * lambda_plus * std::pow(z, lambda_plus - 1.0);
    }
    double d2(double z) const {
        if (z >= z_inf) return 0.0;
        return -A * g * (g + 1.0) * std::pow(z, -g - 2.0)
             + B * lambda_plus * (lambda_plus - 1.0) * std::pow(z, lambda_plus - 2.0);
    }
};

inline FhatConstants fhat_constants(const Model& m) {
    const auto& d = m.derived();
    FhatConstants c;
    c.inverted = m.regime() == Regime::gamma_below_1;
    c.sigma = std::abs(d.sigma_z);
    c.vartheta = d.vartheta;
    c.g = c.inverted ? -d.gamma_tilde : d.gamma_tilde;
    c.mu = c.inverted ? d.sigma_z * d.sigma_z - d.mu_z : d.mu_z;
    constexpr int n = 2000;
    double delta = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= n; ++i) {
        const double t = m.params().T1 * i / n;
        delta = std::min(delta, -m.leisure_Delta(t) * std::pow(m.mu_T(t), -d.gamma_tilde));
    }
    c.delta = delta;
    const double s2 = c.sigma * c.sigma;
    const double b = 0.5 * s2 - c.mu;
    c.lambda_plus = (b + std::sqrt(b * b - 2.0 * s2 * c.vartheta)) / s2;
    const double qg = c.Q(-c.g);
    c.condition_holds = delta > 0.0 && qg < 0.0 && c.lambda_plus + c.g > 0.0
                     && c.lambda_plus * c.g + 2.0 * c.vartheta / s2 <= c.vartheta;
    if (!c.condition_holds) return c;
    c.A = -delta / (2.0 * qg);
    c.z_inf = std::pow(c.lambda_plus / (-c.vartheta * c.A * (c.lambda_plus + c.g)), -1.0 / c.g);
    c.B = -c.g * c.A / c.lambda_plus * std::pow(c.z_inf, -c.g - c.lambda_plus);
    return c;
}

struct StructuralBounds {
    double running_bound = 0.0;       ///< lower bound (gamma > 1) or upper bound (gamma < 1)
    std::optional<double> z_inf;      ///< opposite bound when the sufficient condition holds
};

inline StructuralBounds structural_bounds(const Model& m, double t) {
    StructuralBounds sb;
    sb.running_bound = m.running_bound(t);
    const FhatConstants c = fhat_constants(m);
    if (c.condition_holds) sb.z_inf = c.inverted ? 1.0 / c.z_inf : c.z_inf;
    return sb;
}

}  // namespace habitretire
