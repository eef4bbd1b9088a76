#pragma once

#include "habitretire/csv.hpp"
#include "habitretire/dual_boundary.hpp"
#include "habitretire/fbp_solver.hpp"
#include "habitretire/model.hpp"
#include "habitretire/primal_map.hpp"
#include "habitretire/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace habitretire {

/// Outcome of one named check.
struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

namespace detail {

inline std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

}  // namespace detail

/// Solved artifacts for one parameter set.
struct SolvedModel {
    Model model;
    BoundaryCurve zstar;
    ObstacleSolution sol;
    PolicyEngine engine;
};

inline SolvedModel solve_all(const ModelParams& p, int n_steps, int refine, int nz, int substeps) {
    Model m(p);
    const TimeGrid tg = TimeGrid::uniform(0.0, p.T1, n_steps);
    BoundarySolverOptions bo;
    bo.refine = refine;
    BoundaryCurve zs = solve_boundary(m, tg, bo);
    FbpOptions fo;
    fo.substeps = substeps;
    ObstacleSolution sol = solve_lcp(m, Grid2D::for_model(m, tg, nz), fo);
    PolicyEngine pe(m, zs, sol);
    return SolvedModel{m, std::move(zs), std::move(sol), std::move(pe)};
}

/// The solved curve ends at the closed-form terminal value.
///
/// The tolerance is relative to max(1, z*(T1)): for gamma = 1.5 the terminal value is ~1e4,
/// where an absolute 1e-12 is below one unit in the last place.
inline CheckResult check_terminal_boundary(const Model& m, const BoundaryCurve& zs, double tol = 1e-12) {
    const double closed = terminal_boundary(m);
    const double diff = std::abs(zs.values.back() - closed);
    CheckResult r{"terminal_boundary", diff <= tol * std::max(1.0, std::abs(closed)), {}};
    r.detail = "z*(T1)=" + format_double(zs.values.back()) + " |diff|=" + detail::fmt(diff);
    return r;
}

struct CrossMethodGap {
    double worst_cells = 0.0;  ///< max over nodes of |ln z_ie - ln z_pde| / dx
    double worst_t = 0.0;
    bool any_edge = false;     ///< PDE boundary pinned to a grid edge somewhere
};

inline CrossMethodGap cross_method_gap(const Model& m, int n_steps, int nz, int refine) {
    const TimeGrid tg = TimeGrid::uniform(0.0, m.params().T1, n_steps);
    BoundarySolverOptions bo;
    bo.refine = refine;
    const BoundaryCurve ie = solve_boundary(m, tg, bo);
    FbpOptions fo;
    fo.substeps = refine;
    const Grid2D g = Grid2D::for_model(m, tg, nz);
    const ObstacleSolution sol = solve_lcp(m, g, fo);
    const ExtractedBoundary eb = extract_boundary(m, sol);
    CrossMethodGap out;
    for (std::size_t i = 0; i < tg.size(); ++i) {
        const double cells = std::abs(std::log(ie.values[i]) - std::log(eb.curve.values[i])) / g.dx();
        if (cells > out.worst_cells) {
            out.worst_cells = cells;
            out.worst_t = tg.nodes[i];
        }
        out.any_edge = out.any_edge || (eb.at_edge[i] && !eb.terminal[i]);
    }
    return out;
}

/// Integral-equation and obstacle boundaries agree within `max_cells` z-cells at every node.
inline CheckResult check_cross_method(const Model& m, int n_steps = 50, int nz = 400, int refine = 20,
                                      double max_cells = 2.0) {
    const CrossMethodGap g = cross_method_gap(m, n_steps, nz, refine);
    CheckResult r{"cross_method", g.worst_cells <= max_cells && !g.any_edge, {}};
    r.detail = "worst=" + detail::fmt(g.worst_cells) + " cells at t=" + detail::fmt(g.worst_t);
    if (g.any_edge) r.detail += " (boundary at grid edge)";
    return r;
}

/// z* lies on the proven side of the running bound (and of z_inf when available) at every node.
inline CheckResult check_structural_bounds(const Model& m, const BoundaryCurve& zs) {
    const bool above = m.regime() == Regime::gamma_above_1;
    double worst = std::numeric_limits<double>::infinity();  // smallest relative margin on the proven side
    double worst_inf = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < zs.grid.size(); ++i) {
        const double t = zs.grid.nodes[i];
        const StructuralBounds sb = structural_bounds(m, t);
        const double z = zs.values[i];
        worst = std::min(worst, (above ? z - sb.running_bound : sb.running_bound - z) / sb.running_bound);
        if (sb.z_inf)
            worst_inf = std::min(worst_inf, (above ? *sb.z_inf - z : z - *sb.z_inf) / *sb.z_inf);
    }
    const double slack = -1e-12;
    CheckResult r{"structural_bounds", worst >= slack && worst_inf >= slack, {}};
    r.detail = "min relative margin to running bound " + detail::fmt(worst);
    if (std::isfinite(worst_inf)) r.detail += ", to z_inf " + detail::fmt(worst_inf);
    return r;
}

/// Obstacle dominance, terminal equality, convexity and F-monotonicity of one solution.
inline CheckResult check_obstacle_invariants(const ObstacleSolution& sol, double tol = 1e-8) {
    const ObstacleDiagnostics d = diagnose(sol);
    const bool ok = d.min_gap >= 0.0 && d.terminal_max_diff == 0.0 && d.worst_convexity >= -tol
                 && d.worst_monotonicity <= tol;
    CheckResult r{"obstacle_invariants", ok, {}};
    r.detail = "min_gap=" + detail::fmt(d.min_gap) + " terminal=" + detail::fmt(d.terminal_max_diff)
             + " convexity=" + detail::fmt(d.worst_convexity) + " monotonicity=" + detail::fmt(d.worst_monotonicity)
             + " complementarity=" + detail::fmt(d.complementarity_residual);
    return r;
}

struct PastingStudy {
    std::vector<int> nz;
    std::vector<double> jump;
    double order = 0.0;  ///< least-squares slope of -log2(jump) against log2(nz / nz_0)
};

inline PastingStudy smooth_pasting_study(const Model& m, const std::vector<int>& nzs, int n_steps = 50,
                                         int substeps = 20) {
    const TimeGrid tg = TimeGrid::uniform(0.0, m.params().T1, n_steps);
    FbpOptions fo;
    fo.substeps = substeps;
    PastingStudy st;
    for (int nz : nzs) {
        const ObstacleSolution sol = solve_lcp(m, Grid2D::for_model(m, tg, nz), fo);
        st.nz.push_back(nz);
        st.jump.push_back(smooth_pasting_check(sol, extract_boundary(m, sol)));
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(nzs.size());
    for (std::size_t i = 0; i < nzs.size(); ++i) {
        const double x = std::log2(static_cast<double>(st.nz[i]) / st.nz[0]);
        const double y = -std::log2(st.jump[i]);
        sx += x; sy += y; sxx += x * x; sxy += x * y;
    }
    st.order = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return st;
}

/// The smooth-pasting jump shrinks at least linearly under dz-halving (fitted order >= min_order).
inline CheckResult check_smooth_pasting(const Model& m, const std::vector<int>& nzs = {12800, 25600, 51200},
                                        double min_order = 0.9) {
    const PastingStudy st = smooth_pasting_study(m, nzs);
    CheckResult r{"smooth_pasting", st.order >= min_order, {}};
    r.detail = "order=" + detail::fmt(st.order) + " jumps:";
    for (std::size_t i = 0; i < st.nz.size(); ++i)
        r.detail += " " + std::to_string(st.nz[i]) + "->" + detail::fmt(st.jump[i]);
    return r;
}

struct DerivativeErrors {
    double W_y = 0.0, W_yy = 0.0, W_yw = 0.0;  ///< worst scaled errors
    std::size_t nonpositive_W_yy = 0;
    std::size_t samples = 0;
};

/// Chain-rule derivatives against central differences of W_value at random continuation points.
///
/// W_yy errors are scaled by max(|W_yy|, |W_y|/y) and W_yw errors by max(|W_yw|, |W_y|/w).
inline DerivativeErrors derivative_errors(const PolicyEngine& pe, std::size_t n, std::uint64_t seed) {
    const DualValueSurface& S = pe.surface();
    const Model& m = pe.model();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const double into = m.regime() == Regime::gamma_above_1 ? -1.0 : 1.0;
    DerivativeErrors e;
    for (std::size_t k = 0; k < n; ++k) {
        const double t = U(rng) * 0.999 * m.params().T1;
        const double w = 0.5 + 2.0 * U(rng);
        const double lz = std::log(pe.boundary().at(t)) + into * (0.1 + 2.0 * U(rng));
        const double y = S.y_of(std::exp(lz), w);
        const WDerivs d = S.W_derivs(t, y, w);
        const double hy = 1e-4 * y, hw = 1e-4 * w;
        auto W = [&](double yy, double ww) { return S.W_value(t, yy, ww); };
        const double fy = (W(y + hy, w) - W(y - hy, w)) / (2 * hy);
        const double fyy = (W(y + hy, w) - 2 * W(y, w) + W(y - hy, w)) / (hy * hy);
        const double fyw = (W(y + hy, w + hw) - W(y + hy, w - hw) - W(y - hy, w + hw) + W(y - hy, w - hw))
                         / (4 * hy * hw);
        e.W_y = std::max(e.W_y, std::abs(fy / d.W_y - 1.0));
        e.W_yy = std::max(e.W_yy, std::abs(fyy - d.W_yy) / std::max(std::abs(d.W_yy), std::abs(d.W_y) / y));
        e.W_yw = std::max(e.W_yw, std::abs(fyw - d.W_yw) / std::max(std::abs(d.W_yw), std::abs(d.W_y) / w));
        if (!(d.W_yy > 0.0)) ++e.nonpositive_W_yy;
        ++e.samples;
    }
    return e;
}

inline CheckResult check_derivatives(const PolicyEngine& pe, std::size_t n = 100, std::uint64_t seed = 7,
                                     double tol = 1e-4) {
    const DerivativeErrors e = derivative_errors(pe, n, seed);
    CheckResult r{"derivative_oracle", e.W_y < tol && e.W_yy < tol && e.W_yw < tol && e.nonpositive_W_yy == 0, {}};
    r.detail = "W_y " + detail::fmt(e.W_y) + ", W_yy " + detail::fmt(e.W_yy) + ", W_yw " + detail::fmt(e.W_yw)
             + ", W_yy<=0 at " + std::to_string(e.nonpositive_W_yy) + "/" + std::to_string(e.samples);
    return r;
}

inline CheckResult check_habit_identity(const PolicyEngine& pe, const SimConfig& cfg) {
    const HabitIdentityStats st = check_habit_reduction(pe, cfg);
    CheckResult r{"habit_identity", st.within(3.0), {}};
    r.detail = "gap=" + detail::fmt(st.gap.mean) + " se=" + detail::fmt(st.gap.se) + " z=" + detail::fmt(st.z_score())
             + " rounding_bound=" + detail::fmt(st.rounding_bound) + " lhs=" + detail::fmt(st.lhs.mean);
    return r;
}

inline CheckResult check_stopping(const PolicyEngine& pe, const SimConfig& cfg, double max_fraction = 0.01) {
    const StoppingStats st = check_stopping_equivalence(pe, cfg);
    CheckResult r{"stopping_equivalence", st.mismatch_fraction < max_fraction, {}};
    r.detail = "mismatch=" + detail::fmt(st.mismatch_fraction) + " over " + std::to_string(st.compared)
             + " paths, mean|dtau|=" + detail::fmt(st.abs_diff.mean) + " yr";
    return r;
}

/// One-sided policy limits where a ray in x crosses the retirement plane.
struct BoundaryJump {
    double t = 0.0, h = 0.0, w = 0.0, x_star = 0.0;
    double c_cont = 0.0, c_ret = 0.0, pi_cont = 0.0, pi_ret = 0.0;
};

/// Rays at t = k T1 / n (k = 0..n-1) with h and w cycling through a few levels.
///
/// The retirement-side limit is the retirement policy on the plane itself. The
/// continuation-side limit is extrapolated linearly from the points two and four
/// obstacle-grid cells inside the continuation region along the same ray.
inline std::vector<BoundaryJump> boundary_jumps(const PolicyEngine& pe, int n_rays = 20) {
    const Model& m = pe.model();
    const DualValueSurface& S = pe.surface();
    const double cell = S.dx();
    const double into = m.regime() == Regime::gamma_above_1 ? -1.0 : 1.0;
    std::vector<BoundaryJump> out;
    for (int k = 0; k < n_rays; ++k) {
        BoundaryJump j;
        j.t = m.params().T1 * k / n_rays;
        j.h = 0.5 + 0.25 * (k % 4);
        j.w = 0.75 + 0.25 * (k % 3);
        const TimeCoefficients c = pe.coefficients(j.t);
        j.x_star = c.pT * j.h + c.G_star * j.w;
        const PolicyOutput ret = pe.retirement_policy(c, j.x_star, j.h);
        j.c_ret = ret.c;
        j.pi_ret = ret.pi;
        double cv[2], pv[2];
        for (int s = 0; s < 2; ++s) {
            const double z = pe.boundary().at(j.t) * std::exp(into * cell * (2.0 + 2.0 * s));
            const double y = S.y_of(z, j.w);
            const double x = S.primal_of_dual(j.t, j.w, y) - c.q * j.w + c.pT * j.h;
            const PolicyOutput po = pe.continuation_policy(c, x, j.h, j.w);
            cv[s] = po.c;
            pv[s] = po.pi;
        }
        j.c_cont = 2.0 * cv[0] - cv[1];
        j.pi_cont = 2.0 * pv[0] - pv[1];
        out.push_back(j);
    }
    return out;
}

inline CheckResult check_jump_signs(const PolicyEngine& pe, int n_rays = 20) {
    const bool above = pe.model().regime() == Regime::gamma_above_1;
    int c_ok = 0, pi_ok = 0;
    double c_min = std::numeric_limits<double>::infinity(), pi_min = c_min;
    const auto jumps = boundary_jumps(pe, n_rays);
    for (const BoundaryJump& j : jumps) {
        // Relative size of the expected drop at retirement (positive when the sign is right).
        const double dc = (above ? j.c_cont - j.c_ret : j.c_ret - j.c_cont) / j.c_ret;
        const double dp = (j.pi_cont - j.pi_ret) / j.pi_ret;
        c_ok += dc > 0.0;
        pi_ok += dp > 0.0;
        c_min = std::min(c_min, dc);
        pi_min = std::min(pi_min, dp);
    }
    const int n = static_cast<int>(jumps.size());
    CheckResult r{"jump_signs", c_ok == n && pi_ok == n, {}};
    r.detail = std::string("consumption jump-") + (above ? "down" : "up") + " on " + std::to_string(c_ok) + "/"
             + std::to_string(n) + " rays (min rel " + detail::fmt(c_min) + "), investment jump-down on "
             + std::to_string(pi_ok) + "/" + std::to_string(n) + " (min rel " + detail::fmt(pi_min) + ")";
    return r;
}

/// Parameters with no habit accumulation and a constant unit leisure multiplier.
inline ModelParams merton_params(ModelParams p) {
    p.alpha = 0.0;
    p.leisure = ConstantLeisure{1.0};
    return p;
}

/// Retirement policy against the Merton rules c = nu x / (1 - e^{-nu (T - t)}), pi / x = kappa / (sigma gamma).
inline CheckResult check_merton(const ModelParams& base, double tol_pi = 1e-10, double tol_c = 1e-8) {
    const ModelParams p = merton_params(base);
    const Model m(p, Validation::skip);
    const PolicyEngine pe(m);
    const double kappa = (p.mu - p.r) / p.sigma;
    const double nu = (p.rho - (1.0 - p.gamma) * (p.r + kappa * kappa / (2.0 * p.gamma))) / p.gamma;
    double worst_pi = 0.0, worst_c = 0.0;
    for (double t : {0.0, 5.0, 10.0, 15.0, 20.0}) {
        for (double x : {1.0, 10.0, 100.0}) {
            const PolicyOutput o = pe.retirement_policy(t, x, 0.0);
            const double c_ref = nu * x / -std::expm1(-nu * (p.T - t));
            worst_pi = std::max(worst_pi, std::abs(o.pi / x - kappa / (p.sigma * p.gamma)));
            worst_c = std::max(worst_c, std::abs(o.c - c_ref) / c_ref);
        }
    }
    CheckResult r{"merton_limit", worst_pi < tol_pi && worst_c < tol_c, {}};
    r.detail = "max|pi/x - kappa/(sigma gamma)|=" + detail::fmt(worst_pi) + " max rel c error=" + detail::fmt(worst_c);
    return r;
}

/// Critical habit h*(t) = (x - G*(t) w) / pT(t) for each alpha, on the nodes of a boundary solve.
struct AlphaSweep {
    std::vector<double> alphas;
    std::vector<double> times;
    std::vector<std::vector<double>> h_star;  ///< [alpha][node]
    std::vector<std::vector<double>> x_star;  ///< pT(t) h + G*(t) w at the given h
};

inline AlphaSweep alpha_sweep(const ModelParams& base, const std::vector<double>& alphas, double x, double h,
                              double w, int n_steps = 50, int refine = 20) {
    AlphaSweep s;
    s.alphas = alphas;
    const TimeGrid tg = TimeGrid::uniform(0.0, base.T1, n_steps);
    s.times = tg.nodes;
    for (double a : alphas) {
        ModelParams p = base;
        p.alpha = a;
        const Model m(p);
        BoundarySolverOptions bo;
        bo.refine = refine;
        const BoundaryCurve zs = solve_boundary(m, tg, bo);
        std::vector<double> hs, xs;
        for (double t : tg.nodes) {
            const double G = retirement_multiple(m, zs, t);
            const double pT = m.habit_cost(t);
            hs.push_back((x - G * w) / pT);
            xs.push_back(pT * h + G * w);
        }
        s.h_star.push_back(std::move(hs));
        s.x_star.push_back(std::move(xs));
    }
    return s;
}

/// A larger alpha lowers the critical habit level at fixed (x, w, t).
inline CheckResult check_alpha_monotone(const ModelParams& base, const std::vector<double>& alphas = {0.1, 0.2, 0.3},
                                        double x = 80.0, double w = 1.0) {
    const AlphaSweep s = alpha_sweep(base, alphas, x, 1.0, w);
    double min_drop = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a + 1 < alphas.size(); ++a)
        for (std::size_t i = 0; i < s.times.size(); ++i)
            min_drop = std::min(min_drop, s.h_star[a][i] - s.h_star[a + 1][i]);
    CheckResult r{"alpha_comparative_static", min_drop > 0.0, {}};
    r.detail = "min over nodes of h*(alpha_k) - h*(alpha_k+1) = " + detail::fmt(min_drop) + "; h*(0) =";
    for (std::size_t a = 0; a < alphas.size(); ++a) r.detail += " " + detail::fmt(s.h_star[a].front());
    return r;
}

}  // namespace habitretire
