#pragma once

#include "habitretire/dual_boundary.hpp"
#include "habitretire/error.hpp"
#include "habitretire/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <vector>

namespace habitretire {

/// Dual obstacle V~(t,z) - q(t) = H(t) z^{-gamma_tilde} - q(t).
inline double obstacle(const Model& m, double t, double z) {
    return m.post_value_H(t) * std::pow(z, -m.derived().gamma_tilde) - m.wage_annuity(t);
}

/// Running reward V^_1(t,z) = (mu_T(t) z)^{-gamma_tilde} / gamma_tilde.
inline double source(const Model& m, double t, double z) {
    const double gt = m.derived().gamma_tilde;
    return std::pow(m.mu_T(t) * z, -gt) / gt;
}

/// Space-time grid: TimeGrid in t, uniform grid in x = ln z.
struct Grid2D {
    TimeGrid times;
    std::vector<double> logz_nodes;
    int n_z = 0;

    double x_min() const { return logz_nodes.front(); }
    double x_max() const { return logz_nodes.back(); }
    double dx() const { return (x_max() - x_min()) / (n_z - 1); }
    double z(std::size_t j) const { return std::exp(logz_nodes[j]); }

    static Grid2D uniform(const TimeGrid& times, double x_min, double x_max, int n_z) {
        if (n_z < 100) throw DomainError("Grid2D: n_z must be at least 100");
        if (!(x_max > x_min)) throw DomainError("Grid2D: empty ln z range");
        Grid2D g{times, std::vector<double>(static_cast<std::size_t>(n_z)), n_z};
        for (int j = 0; j < n_z; ++j) g.logz_nodes[j] = x_min + (x_max - x_min) * j / (n_z - 1);
        g.logz_nodes.back() = x_max;
        return g;
    }

    /// Range covering the structural bounds on `times` with a factor 4 margin,
    /// widened by three standard deviations of ln Z over the horizon.
    static Grid2D for_model(const Model& m, const TimeGrid& times, int n_z) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = 0.0;
        for (double t : times.nodes) {
            const double rb = m.running_bound(t);
            lo = std::min(lo, rb);
            hi = std::max(hi, rb);
        }
        if (const auto zi = structural_bounds(m, times.t0).z_inf) {
            lo = std::min(lo, *zi);
            hi = std::max(hi, *zi);
        }
        const double pad = std::log(4.0)
                         + 3.0 * std::abs(m.derived().sigma_z) * std::sqrt(times.t_end - times.t0);
        return uniform(times, std::log(lo) - pad, std::log(hi) + pad, n_z);
    }
};

struct FbpOptions {
    double theta = 0.5;        ///< 0.5 Crank-Nicolson, 1 implicit Euler
    int rannacher_steps = 2;   ///< implicit-Euler steps replacing the first sub-step
    int substeps = 1;          ///< sub-steps per grid time step (values are stored on grid nodes only)
    double omega = 0.0;        ///< PSOR relaxation factor in (0,2); 0 picks the SOR optimum of the linear system
    double tol = 1e-10;        ///< PSOR stopping tolerance, scaled by 1 + |w|
    int max_iter = 200000;
};

/// Reduced dual value w~ on a Grid2D, row-major [time][z].
struct ObstacleSolution {
    Grid2D grid;
    Regime regime = Regime::gamma_above_1;
    double gamma_tilde = 0.0;
    std::vector<double> H;      ///< H(t_n) per slice
    std::vector<double> q;      ///< q(t_n) per slice
    std::vector<double> w_tilde;
    std::vector<std::uint8_t> exercise;
    std::vector<double> w_x;    ///< d w~ / d ln z
    std::vector<double> w_z;
    std::vector<double> w_zz;
    double complementarity_residual = 0.0;  ///< max over solves of |min(Mw - b, w - g)|
    long psor_iterations = 0;

    std::size_t n_times() const { return grid.times.size(); }
    std::size_t n_z() const { return static_cast<std::size_t>(grid.n_z); }
    std::size_t idx(std::size_t n, std::size_t j) const { return n * n_z() + j; }
    double value(std::size_t n, std::size_t j) const { return w_tilde[idx(n, j)]; }
    double obstacle_at(std::size_t n, std::size_t j) const {
        return H[n] * std::exp(-gamma_tilde * grid.logz_nodes[j]) - q[n];
    }
    /// Exercise region lies at large z for gamma > 1 and small z for gamma < 1.
    bool exercise_at_top() const { return regime == Regime::gamma_above_1; }
};

namespace detail {

struct SliceCoefficients {
    double H = 0.0, q = 0.0, src = 0.0;  ///< src = mu_T^{-gamma_tilde} / gamma_tilde
};

inline SliceCoefficients slice_coefficients(const Model& m, double t) {
    const double gt = m.derived().gamma_tilde;
    return {m.post_value_H(t), m.wage_annuity(t), std::pow(m.mu_T(t), -gt) / gt};
}

}  // namespace detail

/// Backward theta-scheme with projected SOR for the obstacle problem in ln z.
///
/// Each PSOR solve starts from a Brennan-Schwartz sweep; PSOR then iterates to
/// the stopping tolerance and certifies complementarity.
inline ObstacleSolution solve_lcp(const Model& m, const Grid2D& grid, const FbpOptions& opt = {}) {
    const auto& d = m.derived();
    if (d.sigma_z == 0.0) throw DegenerateProcess("solve_lcp: sigma_z = 0");
    if (!(opt.theta >= 0.5 && opt.theta <= 1.0)) throw DomainError("solve_lcp: theta must lie in [0.5, 1]");
    if (!(opt.omega == 0.0 || (opt.omega > 0.0 && opt.omega < 2.0)))
        throw DomainError("solve_lcp: omega must lie in (0, 2)");
    if (std::abs(grid.times.t_end - m.params().T1) > 1e-12 * m.params().T1)
        throw DomainError("solve_lcp: time grid must end at T1");

    ObstacleSolution sol;
    sol.grid = grid;
    sol.regime = m.regime();
    sol.gamma_tilde = d.gamma_tilde;
    const std::size_t N = sol.n_z();
    const std::size_t NT = sol.n_times();
    const double dx = grid.dx();
    const double gt = d.gamma_tilde;

    std::vector<double> zpow(N);
    for (std::size_t j = 0; j < N; ++j) zpow[j] = std::exp(-gt * grid.logz_nodes[j]);

    const double s2 = d.sigma_z * d.sigma_z;
    const double nu = d.mu_z - 0.5 * s2;
    const double lo_c = 0.5 * s2 / (dx * dx) - 0.5 * nu / dx;
    const double up_c = 0.5 * s2 / (dx * dx) + 0.5 * nu / dx;
    const double di_c = -s2 / (dx * dx) + d.vartheta;

    sol.H.resize(NT);
    sol.q.resize(NT);
    sol.w_tilde.assign(NT * N, 0.0);
    sol.exercise.assign(NT * N, 0);
    std::vector<detail::SliceCoefficients> coef(NT);
    for (std::size_t n = 0; n < NT; ++n) {
        coef[n] = detail::slice_coefficients(m, grid.times.nodes[n]);
        sol.H[n] = coef[n].H;
        sol.q[n] = coef[n].q;
    }

    const bool ex_top = sol.exercise_at_top();
    const std::size_t c = ex_top ? 0 : N - 1;              // continuation-side edge
    const std::size_t c1 = ex_top ? 1 : N - 2;
    const std::size_t c2 = ex_top ? 2 : N - 3;

    std::vector<double> w_old(N), w(N), g(N), rhs(N), cp(N), rp(N);
    for (std::size_t j = 0; j < N; ++j) w_old[j] = coef[NT - 1].H * zpow[j] - coef[NT - 1].q;
    std::copy(w_old.begin(), w_old.end(), sol.w_tilde.begin() + static_cast<long>(sol.idx(NT - 1, 0)));

    auto sub_step = [&](const detail::SliceCoefficients& hi, const detail::SliceCoefficients& lo,
                        double dt, double theta, double t_lo) {
        for (std::size_t j = 0; j < N; ++j) g[j] = lo.H * zpow[j] - lo.q;
        const double ex = (1.0 - theta) * dt;
        for (std::size_t j = 1; j + 1 < N; ++j) {
            const double Lw = lo_c * w_old[j - 1] + di_c * w_old[j] + up_c * w_old[j + 1];
            const double f = ((1.0 - theta) * hi.src + theta * lo.src) * zpow[j];
            rhs[j] = w_old[j] + ex * Lw + dt * f;
        }
        const double ml = -theta * dt * lo_c;
        const double mu = -theta * dt * up_c;
        const double md = 1.0 - theta * dt * di_c;
        double omega = opt.omega;
        if (omega == 0.0) {
            const double pi = 3.14159265358979323846;
            const double rho_j = 2.0 * std::sqrt(std::max(0.0, ml * mu)) / md * std::cos(pi / static_cast<double>(N));
            omega = 2.0 / (1.0 + std::sqrt(std::max(0.0, 1.0 - rho_j * rho_j)));
        }
        // Brennan-Schwartz sweep as the starting iterate: eliminate from the
        // continuation edge, back-substitute with projection from the exercise edge.
        // Index k runs from the continuation edge (k = 0) to the exercise edge.
        {
            auto at = [&](std::size_t k) -> std::size_t { return ex_top ? k : N - 1 - k; };
            const double a = ex_top ? ml : mu;
            const double cc = ex_top ? mu : ml;
            double b1 = md + 2.0 * a;
            double c1v = cc - a;
            double r1 = rhs[at(1)] - a * (g[at(0)] - 2.0 * g[at(1)] + g[at(2)]);
            cp[1] = c1v / b1;
            rp[1] = r1 / b1;
            for (std::size_t k = 2; k + 1 < N; ++k) {
                const double den = md - a * cp[k - 1];
                cp[k] = cc / den;
                rp[k] = (rhs[at(k)] - a * rp[k - 1]) / den;
            }
            w[at(N - 1)] = g[at(N - 1)];
            for (std::size_t k = N - 2; k >= 1; --k)
                w[at(k)] = std::max(g[at(k)], rp[k] - cp[k] * w[at(k + 1)]);
            w[at(0)] = std::max(g[at(0)], g[at(0)] + 2.0 * (w[at(1)] - g[at(1)]) - (w[at(2)] - g[at(2)]));
        }
        int it = 0;
        for (; it < opt.max_iter; ++it) {
            double change = 0.0;
            const double wc = std::max(g[c], g[c] + 2.0 * (w[c1] - g[c1]) - (w[c2] - g[c2]));
            change = std::max(change, std::abs(wc - w[c]) / (1.0 + std::abs(wc)));
            w[c] = wc;
            for (std::size_t j = 1; j + 1 < N; ++j) {
                const double res = rhs[j] - (ml * w[j - 1] + md * w[j] + mu * w[j + 1]);
                const double nw = std::max(g[j], w[j] + omega * res / md);
                change = std::max(change, std::abs(nw - w[j]) / (1.0 + std::abs(nw)));
                w[j] = nw;
            }
            if (change < opt.tol) break;
        }
        double resid = 0.0;
        for (std::size_t j = 1; j + 1 < N; ++j) {
            const double r = (ml * w[j - 1] + md * w[j] + mu * w[j + 1]) - rhs[j];
            resid = std::max(resid, std::abs(std::min(r, w[j] - g[j])) / (1.0 + std::abs(w[j])));
        }
        sol.psor_iterations += it + 1;
        if (it == opt.max_iter) {
            std::ostringstream os;
            os << "solve_lcp: PSOR did not converge at t = " << t_lo << " after " << it
               << " iterations (complementarity residual " << resid << ")";
            throw SolverFailure(os.str());
        }
        sol.complementarity_residual = std::max(sol.complementarity_residual, resid);
        std::swap(w_old, w);
    };

    const double dt = grid.times.dt();
    for (std::size_t step = 0; step + 1 < NT; ++step) {
        const std::size_t n = NT - 2 - step;
        const double t_hi = grid.times.nodes[n + 1];
        const int k = std::max(1, opt.substeps);
        const double h = dt / k;
        detail::SliceCoefficients hi = coef[n + 1];
        double t_cur = t_hi;
        for (int s = 1; s <= k; ++s) {
            const double t_lo = (s == k) ? grid.times.nodes[n] : t_hi - h * s;
            if (step == 0 && s == 1 && opt.rannacher_steps > 0) {
                for (int r = 1; r <= opt.rannacher_steps; ++r) {
                    const double t_r = (r == opt.rannacher_steps) ? t_lo
                                     : t_cur - h * r / opt.rannacher_steps;
                    const detail::SliceCoefficients lo = (s == k && r == opt.rannacher_steps)
                        ? coef[n] : detail::slice_coefficients(m, t_r);
                    sub_step(hi, lo, h / opt.rannacher_steps, 1.0, t_r);
                    hi = lo;
                }
            } else {
                const detail::SliceCoefficients lo = (s == k) ? coef[n] : detail::slice_coefficients(m, t_lo);
                sub_step(hi, lo, h, opt.theta, t_lo);
                hi = lo;
            }
            t_cur = t_lo;
        }
        std::copy(w_old.begin(), w_old.end(), sol.w_tilde.begin() + static_cast<long>(sol.idx(n, 0)));
    }

    sol.w_x.assign(NT * N, 0.0);
    sol.w_z.assign(NT * N, 0.0);
    sol.w_zz.assign(NT * N, 0.0);
    for (std::size_t n = 0; n < NT; ++n) {
        const double* v = &sol.w_tilde[sol.idx(n, 0)];
        for (std::size_t j = 0; j < N; ++j) {
            const double gj = coef[n].H * zpow[j] - coef[n].q;
            sol.exercise[sol.idx(n, j)] = (v[j] - gj < 1e-9 * (1.0 + std::abs(gj))) ? 1 : 0;
        }
        double* wx = &sol.w_x[sol.idx(n, 0)];
        for (std::size_t j = 1; j + 1 < N; ++j) wx[j] = (v[j + 1] - v[j - 1]) / (2.0 * dx);
        wx[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dx);
        wx[N - 1] = (3.0 * v[N - 1] - 4.0 * v[N - 2] + v[N - 3]) / (2.0 * dx);
        for (std::size_t j = 0; j < N; ++j) {
            const double z = grid.z(j);
            const std::size_t jj = std::clamp<std::size_t>(j, 1, N - 2);
            const double wxx = (v[jj + 1] - 2.0 * v[jj] + v[jj - 1]) / (dx * dx);
            sol.w_z[sol.idx(n, j)] = wx[j] / z;
            sol.w_zz[sol.idx(n, j)] = (wxx - wx[j]) / (z * z);
        }
    }
    return sol;
}

/// Boundary read from the exercise mask.
struct ExtractedBoundary {
    BoundaryCurve curve;
    std::vector<long> contact_index;   ///< exercise node adjacent to continuation; -1 if none
    std::vector<bool> at_edge;         ///< boundary pinned to a grid edge
    std::vector<bool> terminal;        ///< value taken from the closed-form terminal boundary
};

/// Per slice: geometric midpoint between the last continuation node and the first exercise node.
inline ExtractedBoundary extract_boundary(const Model& m, const ObstacleSolution& sol) {
    const std::size_t NT = sol.n_times();
    const std::size_t N = sol.n_z();
    ExtractedBoundary out;
    out.curve = BoundaryCurve{sol.grid.times, std::vector<double>(NT), sol.regime};
    out.contact_index.assign(NT, -1);
    out.at_edge.assign(NT, false);
    out.terminal.assign(NT, false);
    const bool top = sol.exercise_at_top();
    const auto& x = sol.grid.logz_nodes;
    for (std::size_t n = 0; n < NT; ++n) {
        // Walk from the continuation edge to the first exercise node, then require exercise thereafter.
        std::size_t count_cont = 0;
        for (std::size_t k = 0; k < N; ++k) {
            const std::size_t j = top ? k : N - 1 - k;
            if (sol.exercise[sol.idx(n, j)]) break;
            ++count_cont;
        }
        for (std::size_t k = count_cont; k < N; ++k) {
            const std::size_t j = top ? k : N - 1 - k;
            if (!sol.exercise[sol.idx(n, j)]) {
                std::ostringstream os;
                os << "extract_boundary: exercise set is not connected at t = " << sol.grid.times.nodes[n];
                throw StructureViolation(os.str());
            }
        }
        if (n + 1 == NT) {
            out.curve.values[n] = terminal_boundary(m);
            out.terminal[n] = true;
            out.at_edge[n] = count_cont == 0;
            continue;
        }
        if (count_cont == 0) {
            out.at_edge[n] = true;
            out.curve.values[n] = std::exp(top ? x.front() : x.back());
            out.contact_index[n] = static_cast<long>(top ? 0 : N - 1);
            continue;
        }
        const std::size_t first_ex = top ? count_cont : N - 1 - count_cont;
        const std::size_t last_cont = top ? first_ex - 1 : first_ex + 1;
        out.contact_index[n] = static_cast<long>(first_ex);
        out.at_edge[n] = count_cont >= N - 1;
        out.curve.values[n] = std::exp(0.5 * (x[first_ex] + x[last_cont]));
    }
    return out;
}

/// Largest jump in the z-derivative of F = w~ - obstacle across the contact node.
///
/// F vanishes on the exercise side, so the jump equals the one-sided
/// continuation-side slope of F; zero when the obstacle binds everywhere.
inline double smooth_pasting_check(const ObstacleSolution& sol, const ExtractedBoundary& eb) {
    const std::size_t N = sol.n_z();
    double worst = 0.0;
    for (std::size_t n = 0; n + 1 < sol.n_times(); ++n) {
        const long b = eb.contact_index[n];
        if (b < 0 || eb.at_edge[n]) continue;
        const auto jb = static_cast<std::size_t>(b);
        const std::size_t jc = sol.exercise_at_top() ? jb - 1 : jb + 1;
        if (jc >= N) continue;
        const double Fb = sol.value(n, jb) - sol.obstacle_at(n, jb);
        const double Fc = sol.value(n, jc) - sol.obstacle_at(n, jc);
        const double dz = sol.grid.z(jb) - sol.grid.z(jc);
        worst = std::max(worst, std::abs((Fb - Fc) / dz));
    }
    return worst;
}

/// Numbers behind the obstacle-solution invariants.
struct ObstacleDiagnostics {
    double min_gap = 0.0;              ///< min over nodes of w~ - obstacle
    double terminal_max_diff = 0.0;    ///< max |w~ - obstacle| on the terminal slice
    double worst_convexity = 0.0;      ///< most negative slope increment / max slope magnitude, per slice
    double worst_monotonicity = 0.0;   ///< largest increase of F against the regime direction, relative
    double min_F = 0.0;
    double complementarity_residual = 0.0;
};

inline ObstacleDiagnostics diagnose(const ObstacleSolution& sol) {
    ObstacleDiagnostics dg;
    const std::size_t N = sol.n_z();
    const std::size_t NT = sol.n_times();
    dg.min_gap = std::numeric_limits<double>::infinity();
    dg.min_F = dg.min_gap;
    std::vector<double> slope(N - 1), F(N);
    for (std::size_t n = 0; n < NT; ++n) {
        double smax = 0.0, fscale = 0.0;
        for (std::size_t j = 0; j < N; ++j) {
            F[j] = sol.value(n, j) - sol.obstacle_at(n, j);
            dg.min_gap = std::min(dg.min_gap, F[j]);
            dg.min_F = std::min(dg.min_F, F[j]);
            fscale = std::max(fscale, std::abs(F[j]));
            if (n + 1 == NT) dg.terminal_max_diff = std::max(dg.terminal_max_diff, std::abs(F[j]));
        }
        for (std::size_t j = 0; j + 1 < N; ++j) {
            slope[j] = (sol.value(n, j + 1) - sol.value(n, j)) / (sol.grid.z(j + 1) - sol.grid.z(j));
            smax = std::max(smax, std::abs(slope[j]));
        }
        for (std::size_t j = 0; j + 2 < N; ++j)
            dg.worst_convexity = std::min(dg.worst_convexity, (slope[j + 1] - slope[j]) / smax);
        const double dir = sol.exercise_at_top() ? 1.0 : -1.0;  // F should fall toward the exercise side
        for (std::size_t j = 0; j + 1 < N; ++j) {
            const double rise = dir * (F[j + 1] - F[j]);
            if (fscale > 0.0) dg.worst_monotonicity = std::max(dg.worst_monotonicity, rise / fscale);
        }
    }
    dg.complementarity_residual = sol.complementarity_residual;
    return dg;
}

}  // namespace habitretire
