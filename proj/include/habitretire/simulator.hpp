#pragma once

#include "habitretire/dual_boundary.hpp"
#include "habitretire/error.hpp"
#include "habitretire/model.hpp"
#include "habitretire/primal_map.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <thread>
#include <vector>

namespace habitretire {

struct SimConfig {
    std::size_t n_paths = 1000;
    double dt = 0.01;
    std::uint64_t seed = 20240601;
    PrimalState initial{0.0, 10.0, 0.5, 1.0};
    bool through_T = true;          ///< keep simulating the retired agent until T
    bool stop_at_tau = false;       ///< end each path at retirement (overrides through_T)
    std::size_t dump_paths = 0;     ///< number of leading paths recorded step by step
    std::size_t tau_bins = 20;      ///< histogram bins over [t0, T1)
    unsigned threads = 1;           ///< worker threads; results do not depend on it
    bool track_dual = true;         ///< follow the dual z on each path for the stopping comparison
};

/// Sample mean and its standard error.
struct MeanSE {
    double mean = 0.0;
    double se = 0.0;
    std::size_t n = 0;

    /// |mean| in units of se (infinite if se = 0 and mean != 0).
    double z_score() const {
        if (se > 0.0) return std::abs(mean) / se;
        return mean == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    }
};

/// Paths on which a constraint failed at least once.
struct ViolationCounts {
    std::size_t wealth_floor = 0;       ///< X + q W 1{s < tau} < 0
    std::size_t consumption_floor = 0;  ///< c < h
    std::size_t defacto_at_tau = 0;     ///< X(tau) - pT(tau) h(tau) <= 0
    std::size_t habit_positive = 0;     ///< h <= 0
    std::size_t stopped = 0;            ///< paths ended early because the state left the domain of the policy

    std::size_t total() const { return wealth_floor + consumption_floor + defacto_at_tau + habit_positive; }
};

struct TauHistogram {
    double t0 = 0.0;
    double bin_width = 1.0;
    std::vector<std::size_t> counts;  ///< retirements strictly before T1
    std::size_t at_T1 = 0;            ///< mandatory retirements
};

struct PathRow {
    std::size_t path_id = 0;
    double t = 0.0, X = 0.0, h = 0.0, W = 0.0, c = 0.0, pi = 0.0;
    bool retired = false;
};

struct SimReport {
    MeanSE habit_lhs;                 ///< E int_t^tau c xi
    MeanSE habit_rhs;                 ///< E int_t^tau c^ xi^ + h p^tau(t)
    MeanSE habit_identity_residual;   ///< paired difference of the two sides
    MeanSE budget_gap;                ///< E[xi(tau)(X(tau) + b(tau)) + int c xi] - (x + b(t))
    ViolationCounts violations;
    TauHistogram tau_histogram;
    MeanSE tau;
    double stop_time_mismatch = 0.0;  ///< fraction of paths with |tau_primal - tau_dual| > one step
    std::size_t stop_time_compared = 0;
    MeanSE stop_time_abs_diff;        ///< |tau_primal - tau_dual| in years over compared paths
    MeanSE terminal_abs_X;            ///< |X(T)|, only when simulated through T
    double terminal_abs_X_max = 0.0;
    std::vector<PathRow> paths;
};

/// Exact habit update over dt with c - h = chat held fixed: dh = (alpha c - beta h) dt.
inline double habit_update(double h, double chat, double alpha, double beta, double dt) {
    const double g = alpha - beta;
    return h * std::exp(g * dt) + alpha * chat * exp_integral(g, dt);
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent stream per path: the seed and the path index are mixed before seeding.
inline std::mt19937_64 path_rng(std::uint64_t seed, std::size_t path) {
    return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(0x5851f42d4c957f2dULL + path)));
}

/// int_0^len u e^{rate u} du.
inline double exp_moment1(double rate, double len) {
    const double x = rate * len;
    if (std::abs(x) < 1e-5) return len * len * (0.5 + x / 3.0 + x * x / 8.0);
    return (std::exp(x) * (x - 1.0) + 1.0) / (rate * rate);
}

inline MeanSE mean_se(const std::vector<double>& v) {
    MeanSE s;
    s.n = v.size();
    if (v.empty()) return s;
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean = sum / v.size();
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.se = std::sqrt(ss / (v.size() - 1) / v.size());
    }
    return s;
}

struct PathResult {
    double lhs = 0.0, rhs = 0.0, budget = 0.0;
    long tau_step = 0, tau_dual_step = -1;
    double XT = 0.0;
    bool v_wealth = false, v_cons = false, v_defacto = false, v_habit = false, stopped = false;
};

}  // namespace detail

/// Monte Carlo engine for the primal state under the feedback policy.
class Simulator {
public:
    Simulator(const PolicyEngine& engine, SimConfig cfg) : pe_(engine), cfg_(std::move(cfg)) {
        const Model& m = pe_.model();
        const auto& p = m.params();
        const double t0 = cfg_.initial.t;
        if (cfg_.n_paths < 1) throw DomainError("SimConfig: n_paths must be at least 1");
        if (!(cfg_.dt > 0.0)) throw DomainError("SimConfig: dt must be positive");
        if (!(t0 >= 0.0 && t0 < p.T1)) throw DomainError("SimConfig: initial time must lie in [0, T1)");
        const double steps = (p.T1 - t0) / cfg_.dt;
        k1_ = static_cast<long>(std::llround(steps));
        if (k1_ < 1 || std::abs(steps - k1_) > 1e-9 * std::max(1.0, steps)) {
            std::ostringstream os;
            os << "SimConfig: dt = " << cfg_.dt << " does not divide T1 - t0 = " << p.T1 - t0;
            throw DomainError(os.str());
        }
        if (!(cfg_.initial.w > 0.0)) throw DomainError("SimConfig: initial wage must be positive");
        // Post-retirement steps up to T; the last one may be shorter.
        const double rest = (p.T - p.T1) / cfg_.dt;
        long kr = static_cast<long>(std::ceil(rest - 1e-9));
        kT_ = cfg_.through_T && !cfg_.stop_at_tau ? k1_ + kr : k1_;
        times_.resize(static_cast<std::size_t>(kT_) + 1);
        for (long k = 0; k <= kT_; ++k) times_[k] = k <= k1_ ? t0 + k * cfg_.dt : std::min(p.T, p.T1 + (k - k1_) * cfg_.dt);
        times_[k1_] = p.T1;
        coef_.resize(times_.size());
        for (std::size_t k = 0; k < times_.size(); ++k)
            if (times_[k] < p.T) coef_[k] = pe_.coefficients(times_[k]);
        const double g = p.alpha - p.beta;
        w_.e_r = exp_integral(-p.r, cfg_.dt);
        w_.e_gr = exp_integral(g - p.r, cfg_.dt);
        w_.e_g = exp_integral(g, cfg_.dt);
        w_.J = inner_weight(g, p.r, cfg_.dt);
        w_.grow = std::exp(g * cfg_.dt);
        zstar_.resize(static_cast<std::size_t>(k1_) + 1);
        for (long k = 0; k <= k1_; ++k) zstar_[k] = pe_.boundary().at(times_[k]);
        if (!pe_.boundary().values.empty()) {
            const auto& bg = pe_.boundary().grid;
            if (bg.t0 > t0 + 1e-12 || bg.t_end < p.T1 - 1e-12)
                throw DomainError("Simulator: boundary does not cover [t0, T1]");
        }
    }

    const std::vector<double>& times() const { return times_; }
    bool through_T() const { return cfg_.through_T && !cfg_.stop_at_tau; }
    long retirement_step() const { return k1_; }

    SimReport run() const {
        const PrimalState& s0 = cfg_.initial;
        const TimeCoefficients& c0 = coef_[0];
        if (!(s0.x - c0.pT * s0.h + c0.q * s0.w > 0.0)) {
            std::ostringstream os;
            os << "simulate: initial state (x=" << s0.x << ", h=" << s0.h << ", w=" << s0.w
               << ") is outside the allowed region";
            throw InfeasibleState(os.str());
        }
        initial_region_ = pe_.classify(c0, s0.x, s0.h, s0.w);
        y0_ = initial_region_ == Region::continue_working
                  ? pe_.surface().dual_of_primal(s0.t, s0.w, s0.x - c0.pT * s0.h + c0.q * s0.w)
                  : 0.0;

        std::vector<detail::PathResult> res(cfg_.n_paths);
        std::vector<std::vector<PathRow>> dumps(std::min(cfg_.dump_paths, cfg_.n_paths));
        const unsigned nt = std::max(1u, std::min<unsigned>(cfg_.threads, static_cast<unsigned>(cfg_.n_paths)));
        if (nt == 1) {
            run_range(0, cfg_.n_paths, res, dumps);
        } else {
            std::vector<std::thread> pool;
            std::vector<std::exception_ptr> errs(nt);
            const std::size_t chunk = (cfg_.n_paths + nt - 1) / nt;
            for (unsigned w = 0; w < nt; ++w) {
                const std::size_t lo = w * chunk, hi = std::min(cfg_.n_paths, lo + chunk);
                pool.emplace_back([&, w, lo, hi] {
                    try { run_range(lo, hi, res, dumps); } catch (...) { errs[w] = std::current_exception(); }
                });
            }
            for (auto& th : pool) th.join();
            for (auto& e : errs) if (e) std::rethrow_exception(e);
        }
        return reduce(res, dumps);
    }

private:
    void run_range(std::size_t lo, std::size_t hi, std::vector<detail::PathResult>& res,
                   std::vector<std::vector<PathRow>>& dumps) const {
        std::vector<double> chat_buf, xi_buf;
        chat_buf.reserve(static_cast<std::size_t>(k1_) + 1);
        xi_buf.reserve(static_cast<std::size_t>(k1_) + 1);
        for (std::size_t i = lo; i < hi; ++i)
            res[i] = run_path(i, chat_buf, xi_buf, i < dumps.size() ? &dumps[i] : nullptr);
    }

    detail::PathResult run_path(std::size_t path, std::vector<double>& chat_buf, std::vector<double>& xi_buf,
                                std::vector<PathRow>* dump) const {
        const Model& m = pe_.model();
        const auto& p = m.params();
        const auto& d = m.derived();
        const double a = 1.0 / (1.0 - p.gamma), b = p.gamma / (1.0 - p.gamma);
        const Side stop_side = exercise_side(m.regime());
        auto rng = detail::path_rng(cfg_.seed, path);
        std::normal_distribution<double> normal(0.0, 1.0);

        double X = cfg_.initial.x, h = cfg_.initial.h, W = cfg_.initial.w, xi = 1.0;
        const double h0 = h;
        bool retired = false;
        ZHint hint;
        detail::PathResult out;
        out.tau_step = k1_;
        chat_buf.clear();
        xi_buf.clear();
        double lhs = 0.0;
        const bool track_dual = cfg_.track_dual && !cfg_.stop_at_tau && initial_region_ == Region::continue_working;
        if (!track_dual) out.tau_dual_step = initial_region_ == Region::continue_working ? -2 : 0;

        for (long k = 0; k < kT_; ++k) {
            const double t = times_[k];
            const double dt = times_[k + 1] - t;
            const TimeCoefficients& C = coef_[k];

            // Dual z-crossing on the same Brownian path.
            if (track_dual && out.tau_dual_step < 0 && k <= k1_) {
                const double Y = y0_ * std::exp(p.rho * (t - cfg_.initial.t)) * xi;
                const double z = std::pow(Y, a) * std::pow(W, b);
                const bool stop = stop_side == Side::below ? z <= zstar_[k] : z >= zstar_[k];
                if (stop || k == k1_) out.tau_dual_step = k;
            }

            if (!retired) {
                const Region reg = pe_.classify(C, X, h, W);
                if (reg == Region::infeasible) {
                    // Counted and ended here; the path's contributions up to now are kept.
                    out.v_wealth = true;
                    out.stopped = true;
                    out.tau_step = k;
                    out.budget = xi * (X + C.q * W) + lhs;
                    break;
                }
                if (k == k1_ || reg == Region::retire) {
                    retired = true;
                    out.tau_step = k;
                    if (!(X - C.pT * h > 0.0)) out.v_defacto = true;
                    out.budget = xi * (X + C.q * W) + lhs;
                    if (cfg_.stop_at_tau) break;
                }
            } else if (!(X - C.pT * h > 0.0)) {
                out.v_wealth = X < 0.0 || out.v_wealth;
                out.stopped = true;
                break;
            }

            PolicyOutput pol;
            try {
                pol = retired ? pe_.retirement_policy(C, X, h) : pe_.continuation_policy(C, X, h, W, &hint);
            } catch (const Error& e) {
                std::ostringstream os;
                os << "path " << path << ", step " << k << " (t = " << t << "): " << e.what();
                rethrow_with(e, os.str());
            }
            const double chat = pol.c - h;
            if (chat < 0.0) out.v_cons = true;
            if (X + (retired ? 0.0 : C.q * W) < 0.0) out.v_wealth = true;
            if (dump) dump->push_back({path, t, X, h, W, pol.c, pol.pi, retired});

            if (!retired) {
                // Both sides of the habit identity with xi replaced by its conditional mean inside the step.
                lhs += xi * (chat * w_.e_r + h * w_.e_gr + p.alpha * chat * w_.J);
                chat_buf.push_back(chat);
                xi_buf.push_back(xi);
            }

            const double dB = std::sqrt(dt) * normal(rng);
            const double income = retired ? 0.0 : W;
            X += (p.r * X + pol.pi * (p.mu - p.r) - pol.c + income) * dt + pol.pi * p.sigma * dB;
            const bool full = dt == cfg_.dt;
            h = full ? h * w_.grow + p.alpha * chat * w_.e_g : habit_update(h, chat, p.alpha, p.beta, dt);
            if (!(h > 0.0)) out.v_habit = true;
            W *= std::exp((p.mu_w - 0.5 * p.sigma_w * p.sigma_w) * dt + p.sigma_w * dB);
            xi *= std::exp(-(p.r + 0.5 * d.kappa * d.kappa) * dt - d.kappa * dB);
        }
        if (!retired && !out.stopped) {
            // The loop stops at T1 when the retired phase is not simulated.
            out.tau_step = k1_;
            out.budget = xi * X + lhs;
        }
        if (out.tau_dual_step == -1) out.tau_dual_step = k1_;
        if (through_T()) out.XT = X;

        // Right-hand side: backward recursion for S_k = int_{t_k}^{tau} e^{g (v - t_k)} xi(v) dv.
        const double e_gr = w_.e_gr, e_g = w_.e_g, e_r = w_.e_r, J = w_.J, grow = w_.grow;
        double S = 0.0, rhs = 0.0;
        for (std::size_t k = chat_buf.size(); k-- > 0;) {
            const double c = chat_buf[k], x = xi_buf[k];
            rhs += c * x * e_r + p.alpha * c * (x * J + S * e_g);
            S = x * e_gr + grow * S;
        }
        rhs += h0 * S;
        out.lhs = lhs;
        out.rhs = rhs;
        return out;
    }

    /// int_0^dt e^{-r u} int_0^u e^{g (u - s)} ds du.
    static double inner_weight(double g, double r, double dt) {
        if (std::abs(g * dt) < 1e-6) return detail::exp_moment1(-r, dt);
        return (exp_integral(g - r, dt) - exp_integral(-r, dt)) / g;
    }

    [[noreturn]] static void rethrow_with(const Error& e, const std::string& msg) {
        if (dynamic_cast<const InfeasibleState*>(&e)) throw InfeasibleState(msg);
        if (dynamic_cast<const ExtrapolationError*>(&e)) throw ExtrapolationError(msg);
        if (dynamic_cast<const DomainError*>(&e)) throw DomainError(msg);
        if (dynamic_cast<const SolverFailure*>(&e)) throw SolverFailure(msg);
        throw Error(msg);
    }

    SimReport reduce(const std::vector<detail::PathResult>& res, std::vector<std::vector<PathRow>>& dumps) const {
        const Model& m = pe_.model();
        const auto& s0 = cfg_.initial;
        const TimeCoefficients& c0 = coef_[0];
        const std::size_t n = res.size();
        SimReport rep;
        std::vector<double> lhs(n), rhs(n), gap(n), budget(n), tau, xt;
        const double wealth0 = s0.x + c0.q * s0.w;
        std::size_t mismatch = 0;
        std::vector<double> tau_diff;
        rep.tau_histogram.t0 = s0.t;
        rep.tau_histogram.bin_width = (m.params().T1 - s0.t) / std::max<std::size_t>(1, cfg_.tau_bins);
        rep.tau_histogram.counts.assign(std::max<std::size_t>(1, cfg_.tau_bins), 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& r = res[i];
            lhs[i] = r.lhs;
            rhs[i] = r.rhs;
            gap[i] = r.lhs - r.rhs;
            budget[i] = r.budget - wealth0;
            if (!r.stopped) {
                tau.push_back(times_[r.tau_step]);
                if (r.tau_step == k1_) {
                    ++rep.tau_histogram.at_T1;
                } else {
                    auto bin = static_cast<std::size_t>((tau.back() - s0.t) / rep.tau_histogram.bin_width);
                    ++rep.tau_histogram.counts[std::min(bin, rep.tau_histogram.counts.size() - 1)];
                }
                if (r.tau_dual_step >= 0) {
                    ++rep.stop_time_compared;
                    tau_diff.push_back(std::abs(times_[r.tau_dual_step] - times_[r.tau_step]));
                    if (std::abs(r.tau_dual_step - r.tau_step) > 1) ++mismatch;
                }
            }
            if (through_T() && !r.stopped) {
                xt.push_back(std::abs(r.XT));
                rep.terminal_abs_X_max = std::max(rep.terminal_abs_X_max, std::abs(r.XT));
            }
            rep.violations.wealth_floor += r.v_wealth;
            rep.violations.consumption_floor += r.v_cons;
            rep.violations.defacto_at_tau += r.v_defacto;
            rep.violations.habit_positive += r.v_habit;
            rep.violations.stopped += r.stopped;
        }
        rep.habit_lhs = detail::mean_se(lhs);
        rep.habit_rhs = detail::mean_se(rhs);
        rep.habit_identity_residual = detail::mean_se(gap);
        rep.budget_gap = detail::mean_se(budget);
        rep.tau = detail::mean_se(tau);
        rep.terminal_abs_X = detail::mean_se(xt);
        rep.stop_time_abs_diff = detail::mean_se(tau_diff);
        rep.stop_time_mismatch = rep.stop_time_compared ? double(mismatch) / rep.stop_time_compared : 0.0;
        for (auto& d : dumps) rep.paths.insert(rep.paths.end(), d.begin(), d.end());
        return rep;
    }

    const PolicyEngine& pe_;
    SimConfig cfg_;
    long k1_ = 0, kT_ = 0;
    std::vector<double> times_, zstar_;
    std::vector<TimeCoefficients> coef_;
    struct StepWeights {
        double e_r = 0.0, e_gr = 0.0, e_g = 0.0, J = 0.0, grow = 1.0;
    } w_;
    mutable Region initial_region_ = Region::continue_working;
    mutable double y0_ = 0.0;
};

inline SimReport simulate(const PolicyEngine& engine, const SimConfig& cfg) {
    return Simulator(engine, cfg).run();
}

/// Paired gap of the habit-reduction identity at s = t.
struct HabitIdentityStats {
    MeanSE lhs, rhs, gap;
    double rounding_bound = 0.0;  ///< first-order bound on accumulated rounding in the per-path sums
    double z_score() const { return gap.z_score(); }
    bool within(double n_se = 3.0) const { return std::abs(gap.mean) <= n_se * gap.se + rounding_bound; }
};

inline HabitIdentityStats check_habit_reduction(const PolicyEngine& engine, SimConfig cfg) {
    cfg.stop_at_tau = true;
    cfg.track_dual = false;
    cfg.dump_paths = 0;
    const Simulator sim(engine, cfg);
    const SimReport r = sim.run();
    HabitIdentityStats st{r.habit_lhs, r.habit_rhs, r.habit_identity_residual, 0.0};
    const double u = std::ldexp(1.0, -53);
    st.rounding_bound = static_cast<double>(sim.retirement_step()) * u * (std::abs(r.habit_lhs.mean) + std::abs(r.habit_rhs.mean));
    return st;
}

struct StoppingStats {
    double mismatch_fraction = 0.0;  ///< paths whose primal and dual stopping steps differ by more than one
    std::size_t compared = 0;
    MeanSE abs_diff;                 ///< |tau_primal - tau_dual| in years
};

inline StoppingStats check_stopping_equivalence(const PolicyEngine& engine, SimConfig cfg) {
    cfg.through_T = false;
    cfg.stop_at_tau = false;
    cfg.track_dual = true;
    cfg.dump_paths = 0;
    const SimReport r = simulate(engine, cfg);
    return {r.stop_time_mismatch, r.stop_time_compared, r.stop_time_abs_diff};
}

}  // namespace habitretire
