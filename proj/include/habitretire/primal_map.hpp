#pragma once

#include "habitretire/dual_boundary.hpp"
#include "habitretire/error.hpp"
#include "habitretire/fbp_solver.hpp"
#include "habitretire/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <vector>

namespace habitretire {

/// Reduced value phi = w~ and its ln z-derivatives at one point.
struct ReducedDerivs {
    double phi = 0.0;
    double phi_x = 0.0;
    double phi_xx = 0.0;
};

/// Dual value W(t, y, w) and its derivatives.
struct WDerivs {
    double W = 0.0;
    double W_y = 0.0;
    double W_yy = 0.0;
    double W_yw = 0.0;
};

/// Warm start for repeated z solves along a path: the previous root and the slope of R there.
struct ZHint {
    double x = std::numeric_limits<double>::quiet_NaN();  ///< ln z of the previous root
    double ratio = 0.0;                                   ///< target it solved
    double dR = 0.0;                                      ///< dR/d ln z at that root
};

/// Time-dependent part of a surface query, computed once per time.
struct SurfaceSlot {
    double t = 0.0;
    std::size_t n = 0;      ///< left slice
    double lam = 0.0;       ///< weight of slice n + 1
    double H = 0.0, q = 0.0;
    double log_zstar = 0.0;  ///< boundary in ln z (aligned surfaces only)
    double shift0 = 0.0, shift1 = 0.0;  ///< ln z offsets at which slices n and n + 1 are read
};

/// Interpolated w~(t, z) = obstacle + F: F is a cubic spline in ln z per slice, blended linearly in t.
///
/// On each slice the spline of F covers the continuation nodes up to the contact
/// node, where it meets zero with zero slope. Next to the contact node F follows
/// a quadratic contact model and beyond it F vanishes, so the second derivative
/// keeps its jump at the free boundary instead of being smeared over neighbouring cells.
///
/// With a boundary curve attached, the time blend follows the boundary: F of each
/// slice is read at the same distance from that slice's contact point as the query
/// is from z*(t), and the obstacle is used exactly on the exercise side of z*(t).
class DualValueSurface {
public:
    DualValueSurface() = default;

    DualValueSurface(const Model& m, const ObstacleSolution& sol, const BoundaryCurve& zstar)
        : DualValueSurface(m, sol) {
        aligned_ = true;
        zstar_ = zstar;
        offset_.assign(times_.size(), std::numeric_limits<double>::quiet_NaN());
        for (std::size_t n = 0; n < times_.size(); ++n) {
            const Contact& ct = contact_[n];
            const bool interior = ct.quadratic || (ct.jc > 0 && ct.jc < static_cast<long>(N_) - 1);
            if (interior) offset_[n] = contact_logz(n);
        }
    }

    DualValueSurface(const Model& m, const ObstacleSolution& sol)
        : times_(sol.grid.times), x_(sol.grid.logz_nodes), N_(sol.n_z()),
          dx_(sol.grid.dx()), gt_(sol.gamma_tilde), regime_(sol.regime), H_(sol.H), q_(sol.q) {
        a_ = 1.0 / (1.0 - m.params().gamma);
        b_ = m.params().gamma / (1.0 - m.params().gamma);
        const std::size_t NT = times_.size();
        const bool ex_top = regime_ == Regime::gamma_above_1;
        F_.assign(NT * N_, 0.0);
        Fs_.assign(NT * N_, 0.0);
        contact_.assign(NT, Contact{});
        for (std::size_t n = 0; n < NT; ++n) {
            double* F = &F_[n * N_];
            double* Fs = &Fs_[n * N_];
            const std::uint8_t* ex = &sol.exercise[n * N_];
            for (std::size_t j = 0; j < N_; ++j) {
                const ReducedDerivs g = obstacle_at(n, x_[j]);
                F[j] = sol.w_tilde[n * N_ + j] - g.phi;
                Fs[j] = sol.w_x[n * N_ + j] - g.phi_x;
            }
            Contact& ct = contact_[n];
            // First exercise node met when walking in from the continuation edge.
            if (ex_top) {
                for (std::size_t j = 0; j < N_; ++j) if (ex[j]) { ct.jc = static_cast<long>(j); break; }
            } else {
                for (std::size_t j = N_; j-- > 0;) if (ex[j]) { ct.jc = static_cast<long>(j); break; }
            }
            if (ct.jc < 0) {
                spline_slopes(F, Fs, 0, N_ - 1);
                continue;
            }
            const std::size_t lo = ex_top ? static_cast<std::size_t>(ct.jc) : 0;
            const std::size_t hi = ex_top ? N_ - 1 : static_cast<std::size_t>(ct.jc);
            for (std::size_t j = lo; j <= hi; ++j) F[j] = Fs[j] = 0.0;
            // Near the free boundary F ~ c (x_b - x)^2, so sqrt(F) is linear in x.
            const long inward = ex_top ? -1 : 1;
            const long j1 = ct.jc + inward, j2 = ct.jc + 2 * inward;
            long seg_end = ct.jc;
            if (j2 >= 0 && j2 < static_cast<long>(N_)) {
                const double F1 = F[j1], F2 = F[j2];
                if (F1 > 0.0 && F2 > F1) {
                    const double s1 = std::sqrt(F1), s2 = std::sqrt(F2);
                    const double db = std::min(dx_, s1 * dx_ / (s2 - s1));
                    ct.quadratic = true;
                    ct.j1 = j1;
                    ct.c = F1 / (db * db);
                    ct.xb = x_[j1] - inward * db;
                    Fs[j1] = inward * 2.0 * ct.c * db;
                    seg_end = j1;
                }
            }
            const std::size_t e = static_cast<std::size_t>(seg_end);
            if (ex_top) spline_slopes(F, Fs, 0, e); else spline_slopes(F, Fs, e, N_ - 1);
        }
    }

    double a() const { return a_; }
    double b() const { return b_; }
    const TimeGrid& times() const { return times_; }
    double x_min() const { return x_.front(); }
    double x_max() const { return x_.back(); }
    double dx() const { return dx_; }  ///< ln z spacing of the underlying grid
    bool aligned() const { return aligned_; }

    /// Time weights, obstacle coefficients and boundary offsets at t.
    SurfaceSlot slot(double t) const {
        const double slack = 1e-12 * std::max(1.0, std::abs(times_.t_end));
        if (!(t >= times_.t0 - slack && t <= times_.t_end + slack)) {
            std::ostringstream os;
            os << "time " << t << " outside solved range [" << times_.t0 << ", " << times_.t_end << "]";
            throw DomainError(os.str());
        }
        SurfaceSlot s;
        s.t = t;
        const double pos = (t - times_.t0) / times_.dt();
        const std::size_t last = times_.size() - 1;
        const double fl = std::max(0.0, std::floor(pos));
        s.n = static_cast<std::size_t>(fl);
        if (s.n >= last) {
            s.n = last;
        } else {
            s.lam = pos - fl;
            if (s.lam < 1e-9) s.lam = 0.0;
            if (s.lam > 1.0 - 1e-9) { s.n += 1; s.lam = 0.0; }
        }
        const std::size_t n1 = std::min(s.n + 1, last);
        s.H = (1.0 - s.lam) * H_[s.n] + s.lam * H_[n1];
        s.q = (1.0 - s.lam) * q_[s.n] + s.lam * q_[n1];
        if (aligned_) {
            s.log_zstar = std::log(zstar_.at(t));
            if (!std::isnan(offset_[s.n])) s.shift0 = offset_[s.n] - s.log_zstar;
            if (!std::isnan(offset_[n1])) s.shift1 = offset_[n1] - s.log_zstar;
        }
        return s;
    }

    /// w~ and its ln z-derivatives at (t, z).
    ReducedDerivs reduced(double t, double z) const { return eval(slot(t), std::log(z)); }
    ReducedDerivs reduced(const SurfaceSlot& s, double z) const { return eval(s, std::log(z)); }

    double z_of(double y, double w) const { return std::pow(y, a_) * std::pow(w, b_); }

    double W_value(double t, double y, double w) const {
        check_positive(y, w);
        return y * w * reduced(t, z_of(y, w)).phi;
    }

    WDerivs W_derivs(double t, double y, double w) const {
        check_positive(y, w);
        const ReducedDerivs d = reduced(t, z_of(y, w));
        return from_reduced(d, y, w);
    }

    WDerivs from_reduced(const ReducedDerivs& d, double y, double w) const {
        WDerivs o;
        o.W = y * w * d.phi;
        o.W_y = w * (d.phi + a_ * d.phi_x);
        o.W_yy = w / y * a_ * (d.phi_x + a_ * d.phi_xx);
        o.W_yw = d.phi + a_ * d.phi_x + b_ * (d.phi_x + a_ * d.phi_xx);
        return o;
    }

    /// Total de facto resources -W_y(t, y, w) = x - pT h + q w.
    double primal_of_dual(double t, double w, double y) const { return -W_derivs(t, y, w).W_y; }

    double solve_z(double t, double ratio, ZHint* hint = nullptr) const { return solve_z(slot(t), ratio, hint); }

    /// z solving -(phi + a phi_x)(t, z) = ratio; `hint` carries the previous root between calls.
    /// When `at_root` is given it receives w~ and its derivatives at the returned z.
    double solve_z(const SurfaceSlot& s, double ratio, ZHint* hint = nullptr,
                   ReducedDerivs* at_root = nullptr) const {
        // The two most recent node evaluations; the final bracket is usually among them.
        struct Probe {
            long j = -1;
            ReducedDerivs d;
        };
        Probe recent[2];
        int next = 0;
        auto node = [&](std::size_t j) -> ReducedDerivs {
            for (const Probe& p : recent) if (p.j == static_cast<long>(j)) return p.d;
            Probe& p = recent[next];
            next ^= 1;
            p.j = static_cast<long>(j);
            p.d = eval(s, x_[j]);
            return p.d;
        };
        auto Rnode = [&](std::size_t j) {
            const ReducedDerivs d = node(j);
            return -(d.phi + a_ * d.phi_x);
        };
        // R increases with z when a < 0 (gamma > 1) and decreases when a > 0, so `above` is
        // false below the root and true above it.
        const double dir = a_ < 0.0 ? 1.0 : -1.0;
        auto above = [&](std::size_t j) { return dir * (Rnode(j) - ratio) >= 0.0; };
        const bool ex_top = regime_ == Regime::gamma_above_1;
        std::size_t lo = 0, hi = N_ - 1;
        bool bracketed = false;
        if (hint && std::isfinite(hint->x)) {
            // Gallop outwards from the cell predicted by one Newton step from the previous root.
            double xp = hint->x;
            if (hint->dR != 0.0) xp += (ratio - hint->ratio) / hint->dR;
            const double pos = std::floor((xp - x_.front()) / dx_);
            const std::size_t j = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(N_ - 2)));
            const bool aj = above(j), aj1 = above(j + 1);
            if (!aj && aj1) {
                lo = j;
                hi = j + 1;
                bracketed = true;
            } else if (!aj1) {
                std::size_t step = 1, last = j + 1;
                while (last < N_ - 1) {
                    const std::size_t cand = std::min(N_ - 1, last + step);
                    if (above(cand)) { lo = last; hi = cand; bracketed = true; break; }
                    last = cand;
                    step *= 2;
                }
            } else {
                std::size_t step = 1, last = j;
                while (last > 0) {
                    const std::size_t cand = last >= step ? last - step : 0;
                    if (!above(cand)) { lo = cand; hi = last; bracketed = true; break; }
                    last = cand;
                    step *= 2;
                }
            }
        }
        if (!bracketed) {
            const bool lo_in = above(0), hi_in = above(N_ - 1);
            if (lo_in == hi_in) {
                // Target outside the grid: closed form on the exercise side, error otherwise.
                const bool beyond_top = !hi_in;
                if (beyond_top == ex_top) {
                    const double z = exercise_z(s, ratio);
                    if (at_root) *at_root = eval(s, std::log(z));
                    if (hint) *hint = ZHint{};
                    return z;
                }
                std::ostringstream os;
                os << "dual_of_primal: de facto resources ratio " << ratio << " at t = " << s.t
                   << " needs z beyond the continuation-side grid edge";
                throw ExtrapolationError(os.str());
            }
        }
        while (hi - lo > 1) {
            const std::size_t mid = (lo + hi) / 2;
            if (above(mid)) hi = mid; else lo = mid;
        }
        // Safeguarded Newton inside [x_lo, x_hi], started from the secant point.
        ReducedDerivs last;
        double last_x = std::numeric_limits<double>::quiet_NaN();
        auto residual = [&](const ReducedDerivs& d, double* dR) {
            *dR = -(d.phi_x + a_ * d.phi_xx);
            return -(d.phi + a_ * d.phi_x) - ratio;
        };
        auto Rval = [&](double x, double* dR) {
            last = eval(s, x);
            last_x = x;
            return residual(last, dR);
        };
        double xl = x_[lo], xh = x_[hi];
        double dR = 0.0;
        double fl = residual(node(lo), &dR);
        const double fh = residual(node(hi), &dR);
        double x = (fl != fh) ? xl + (xh - xl) * fl / (fl - fh) : 0.5 * (xl + xh);
        if (!(x > xl && x < xh)) x = 0.5 * (xl + xh);
        const double ftol = 1e-13 * std::max(1.0, std::abs(ratio));
        for (int it = 0; it < 100; ++it) {
            const double f = Rval(x, &dR);
            if (std::abs(f) <= ftol) break;
            if ((f < 0.0) == (fl < 0.0)) { xl = x; fl = f; } else { xh = x; }
            double xn = (dR != 0.0) ? x - f / dR : 0.5 * (xl + xh);
            if (!(xn > xl && xn < xh)) xn = 0.5 * (xl + xh);
            if (xh - xl < 1e-15 * std::max(1.0, std::abs(x))) { x = 0.5 * (xl + xh); break; }
            x = xn;
        }
        if (at_root || hint) {
            const ReducedDerivs d = x == last_x ? last : eval(s, x);
            if (at_root) *at_root = d;
            if (hint) *hint = {x, ratio, -(d.phi_x + a_ * d.phi_xx)};
        }
        return std::exp(x);
    }

    /// Inverse of primal_of_dual in y.
    double dual_of_primal(double t, double w, double target, ZHint* hint = nullptr) const {
        if (!(target > 0.0)) {
            std::ostringstream os;
            os << "dual_of_primal: de facto total wealth " << target << " is not positive";
            throw InfeasibleState(os.str());
        }
        if (!(w > 0.0)) throw DomainError("dual_of_primal: w must be positive");
        const double z = solve_z(t, target / w, hint);
        return y_of(z, w);
    }

    double y_of(double z, double w) const { return std::pow(z * std::pow(w, -b_), 1.0 / a_); }

    /// Free-boundary location in ln z on slice n as seen by the interpolant; NaN without exercise nodes.
    double contact_logz(std::size_t n) const {
        const Contact& ct = contact_.at(n);
        if (ct.quadratic) return ct.xb;
        if (ct.jc >= 0) return x_[static_cast<std::size_t>(ct.jc)];
        return std::numeric_limits<double>::quiet_NaN();
    }

private:
    static void check_positive(double y, double w) {
        if (!(y > 0.0) || !(w > 0.0)) throw DomainError("W: y and w must be positive");
    }

    ReducedDerivs eval(const SurfaceSlot& s, double x) const {
        const bool ex_top = regime_ == Regime::gamma_above_1;
        const double g = s.H * std::exp(-gt_ * x);
        ReducedDerivs d{g - s.q, -gt_ * g, gt_ * gt_ * g};
        if (aligned_ && (ex_top ? x >= s.log_zstar : x <= s.log_zstar)) return d;
        if (ex_top ? x < x_.front() : x > x_.back()) {
            std::ostringstream os;
            os << "z = " << std::exp(x) << " beyond the continuation-side grid edge";
            throw ExtrapolationError(os.str());
        }
        ReducedDerivs f = gap(s.n, x + s.shift0);
        if (s.lam != 0.0) {
            const ReducedDerivs f1 = gap(s.n + 1, x + s.shift1);
            f.phi = (1.0 - s.lam) * f.phi + s.lam * f1.phi;
            f.phi_x = (1.0 - s.lam) * f.phi_x + s.lam * f1.phi_x;
            f.phi_xx = (1.0 - s.lam) * f.phi_xx + s.lam * f1.phi_xx;
        }
        d.phi += f.phi;
        d.phi_x += f.phi_x;
        d.phi_xx += f.phi_xx;
        return d;
    }

    /// F = w~ - obstacle on slice n at ln z = x.
    ReducedDerivs gap(std::size_t n, double x) const {
        const bool ex_top = regime_ == Regime::gamma_above_1;
        const Contact& ct = contact_[n];
        if (ct.quadratic) {
            const double dist = ex_top ? ct.xb - x : x - ct.xb;
            if (dist <= 0.0) return {};
            if (ex_top ? x > x_[ct.j1] : x < x_[ct.j1])
                return {ct.c * dist * dist, (ex_top ? -2.0 : 2.0) * ct.c * dist, 2.0 * ct.c};
        } else if (ct.jc >= 0 && (ex_top ? x >= x_[ct.jc] : x <= x_[ct.jc])) {
            return {};
        }
        if (x < x_.front() || x > x_.back()) {
            if ((x > x_.back()) == ex_top) return {};
            // F is linear beyond the continuation edge.
            const std::size_t je = ex_top ? 0 : N_ - 1;
            const double F = F_[n * N_ + je], Fs = Fs_[n * N_ + je];
            return {F + Fs * (x - x_[je]), Fs, 0.0};
        }
        auto j = static_cast<std::size_t>(std::max(0.0, std::floor((x - x_.front()) / dx_)));
        if (j >= N_ - 1) j = N_ - 2;
        if (ct.quadratic && ex_top && static_cast<long>(j) >= ct.j1) j = static_cast<std::size_t>(ct.j1 - 1);
        return cell(n, j, x);
    }

    ReducedDerivs obstacle_at(std::size_t n, double x) const {
        const double g = H_[n] * std::exp(-gt_ * x);
        return {g - q_[n], -gt_ * g, gt_ * gt_ * g};
    }

    ReducedDerivs cell(std::size_t n, std::size_t j, double x) const {
        const double* p = &F_[n * N_];
        const double* m = &Fs_[n * N_];
        const double s = (x - x_[j]) / dx_;
        const double s2 = s * s, s3 = s2 * s;
        const double dp = p[j] - p[j + 1];
        ReducedDerivs d;
        d.phi = (2 * s3 - 3 * s2 + 1) * p[j] + (s3 - 2 * s2 + s) * dx_ * m[j]
              + (-2 * s3 + 3 * s2) * p[j + 1] + (s3 - s2) * dx_ * m[j + 1];
        d.phi_x = (6 * s2 - 6 * s) * dp / dx_ + (3 * s2 - 4 * s + 1) * m[j] + (3 * s2 - 2 * s) * m[j + 1];
        d.phi_xx = ((12 * s - 6) * dp / dx_ + (6 * s - 4) * m[j] + (6 * s - 2) * m[j + 1]) / dx_;
        return d;
    }

    double exercise_z(const SurfaceSlot& s, double ratio) const {
        const double base = (ratio - s.q) / (gt_ * s.H);
        if (!(base > 0.0)) throw ExtrapolationError("dual_of_primal: target outside the exercise-side closed form");
        return std::pow(base, -1.0 / gt_);
    }

    /// Clamped cubic spline slopes on nodes [j0, j1] (Thomas algorithm); m[j0] and m[j1] are kept.
    void spline_slopes(const double* p, double* m, std::size_t j0, std::size_t j1) const {
        if (j1 < j0 + 2) return;
        const std::size_t n = j1 - j0 - 1;
        std::vector<double> cp(n), dp(n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = j0 + 1 + i;
            double rhs = 3.0 * (p[j + 1] - p[j - 1]) / dx_;
            if (i == 0) rhs -= m[j0];
            if (i == n - 1) rhs -= m[j1];
            const double denom = 4.0 - (i ? cp[i - 1] : 0.0);
            cp[i] = 1.0 / denom;
            dp[i] = (rhs - (i ? dp[i - 1] : 0.0)) / denom;
        }
        m[j0 + n] = dp[n - 1];
        for (std::size_t i = n - 1; i-- > 0;) m[j0 + 1 + i] = dp[i] - cp[i] * m[j0 + 2 + i];
    }

    TimeGrid times_;
    std::vector<double> x_;
    std::size_t N_ = 0;
    double dx_ = 0.0, gt_ = 0.0, a_ = 0.0, b_ = 0.0;
    Regime regime_ = Regime::gamma_above_1;
    std::vector<double> H_, q_, F_, Fs_;
    /// Free-boundary treatment of one slice.
    struct Contact {
        long jc = -1;            ///< first exercise node, -1 if none
        bool quadratic = false;  ///< last continuation cell uses the contact model
        long j1 = -1;            ///< last continuation node
        double xb = 0.0;         ///< boundary location in ln z
        double c = 0.0;          ///< curvature of F next to the boundary
    };
    std::vector<Contact> contact_;
    bool aligned_ = false;
    BoundaryCurve zstar_;
    std::vector<double> offset_;  ///< contact point of each slice in ln z, NaN if it has none
};

enum class Region { continue_working, retire, infeasible };

inline const char* to_string(Region r) {
    switch (r) {
        case Region::continue_working: return "continue";
        case Region::retire: return "retire";
        default: return "infeasible";
    }
}

struct PrimalState {
    double t = 0.0;
    double x = 0.0;  ///< wealth
    double h = 0.0;  ///< habit level
    double w = 0.0;  ///< wage rate
};

struct PolicyOutput {
    double c = 0.0;    ///< consumption rate
    double pi = 0.0;   ///< amount in the risky asset
    Region region = Region::continue_working;
    double y = 0.0;    ///< dual multiplier
};

/// Deterministic coefficients at one time, cached by callers that step through time.
struct TimeCoefficients {
    double t = 0.0;
    double pT = 0.0, q = 0.0, muT = 1.0, K = 1.0, H = 0.0;
    double G_star = 0.0;  ///< 0 when no boundary is attached
    bool has_slot = false;
    SurfaceSlot slot;     ///< surface weights at t, filled when a dual value is attached
};

/// Retirement multiple G*(t) = gamma_tilde H(t) z*(t)^{-gamma_tilde}: retire once x - pT h >= G* w.
inline double retirement_multiple(const Model& m, const BoundaryCurve& zstar, double t) {
    const double gt = m.derived().gamma_tilde;
    return gt * m.post_value_H(t) * std::pow(zstar.at(t), -gt);
}

/// Primal boundaries and feedback policies from the dual boundary and the dual value.
class PolicyEngine {
public:
    /// Retirement-region policy only (no boundary or dual value needed).
    explicit PolicyEngine(Model m) : m_(std::move(m)) {}

    PolicyEngine(Model m, BoundaryCurve zstar, const ObstacleSolution& sol)
        : m_(std::move(m)), zstar_(std::move(zstar)), surface_(m_, sol, zstar_), has_dual_(true) {}

    const Model& model() const { return m_; }
    const BoundaryCurve& boundary() const { return zstar_; }
    const DualValueSurface& surface() const { return surface_; }

    /// G*(t) = gamma_tilde H(t) z*(t)^{-gamma_tilde}.
    double G_star(double t) const { return G_star(t, m_.post_value_H(t)); }

    TimeCoefficients coefficients(double t) const {
        TimeCoefficients c;
        c.t = t;
        c.pT = m_.habit_cost(t);
        c.muT = 1.0 + m_.params().alpha * c.pT;
        c.K = m_.leisure_K(t);
        c.H = m_.post_value_H(t);
        c.q = t <= m_.params().T1 ? m_.wage_annuity(t) : 0.0;
        if (has_dual_ && t <= m_.params().T1 + 1e-12) {
            c.G_star = G_star(t, c.H);
            c.slot = surface_.slot(t);
            c.has_slot = true;
        }
        return c;
    }

    Region classify(const TimeCoefficients& c, double x, double h, double w) const {
        const double d = x - c.pT * h;
        if (!(d + c.q * w > 0.0)) return Region::infeasible;
        return d >= c.G_star * w ? Region::retire : Region::continue_working;
    }

    Region classify(double t, double x, double h, double w) const {
        require_dual("classify");
        return classify(coefficients(t), x, h, w);
    }

    /// Post-retirement policy: y from -V~_y(t, y) = x - pT h, no wage income.
    PolicyOutput retirement_policy(const TimeCoefficients& c, double x, double h) const {
        const double d = x - c.pT * h;
        if (!(d > 0.0)) {
            std::ostringstream os;
            os << "retirement policy needs positive de facto wealth (got " << d << " at t = " << c.t << ")";
            throw InfeasibleState(os.str());
        }
        const double g = m_.params().gamma;
        const double gt = m_.derived().gamma_tilde;
        PolicyOutput out;
        out.region = Region::retire;
        out.y = std::pow(d / (gt * c.H), -g);
        out.c = std::pow(out.y * c.muT / c.K, -1.0 / g) + h;
        out.pi = m_.derived().kappa / (m_.params().sigma * g) * d;
        return out;
    }

    PolicyOutput retirement_policy(double t, double x, double h) const {
        return retirement_policy(coefficients(t), x, h);
    }

    /// Pre-retirement policy at a continuation state.
    PolicyOutput continuation_policy(const TimeCoefficients& c, double x, double h, double w,
                                     ZHint* hint = nullptr) const {
        require_dual("continuation_policy");
        const double target = x - c.pT * h + c.q * w;
        const double g = m_.params().gamma;
        const auto& d = m_.derived();
        const SurfaceSlot sl = c.has_slot ? c.slot : surface_.slot(c.t);
        ReducedDerivs rd;
        const double z = surface_.solve_z(sl, target / w, hint, &rd);
        const double y = surface_.y_of(z, w);
        const WDerivs wd = surface_.from_reduced(rd, y, w);
        PolicyOutput out;
        out.region = Region::continue_working;
        out.y = y;
        out.c = std::pow(y * c.muT, -1.0 / g) + h;
        const double sw = m_.params().sigma_w;
        out.pi = (-sw * c.q * w - sw * w * wd.W_yw + d.kappa * y * wd.W_yy) / m_.params().sigma;
        return out;
    }

    PolicyOutput policy(const TimeCoefficients& c, double x, double h, double w, ZHint* hint = nullptr) const {
        switch (classify(c, x, h, w)) {
            case Region::infeasible: {
                std::ostringstream os;
                os << "policy: state (t=" << c.t << ", x=" << x << ", h=" << h << ", w=" << w
                   << ") is outside the allowed region";
                throw InfeasibleState(os.str());
            }
            case Region::retire: return retirement_policy(c, x, h);
            default: return continuation_policy(c, x, h, w, hint);
        }
    }

    PolicyOutput policy(double t, double x, double h, double w) const {
        require_dual("policy");
        return policy(coefficients(t), x, h, w);
    }

private:
    double G_star(double t, double H) const {
        require_dual("G_star");
        const double gt = m_.derived().gamma_tilde;
        return gt * H * std::pow(zstar_.at(t), -gt);
    }

    void require_dual(const char* what) const {
        if (!has_dual_) throw DomainError(std::string(what) + ": no dual boundary attached");
    }

    Model m_;
    BoundaryCurve zstar_;
    DualValueSurface surface_;
    bool has_dual_ = false;
};

}  // namespace habitretire
